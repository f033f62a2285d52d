#include "mentor/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#include <json.hpp>

namespace mentor {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void require_range(const std::string& field, double value, double lo, double hi) {
    if (!std::isfinite(value) || value < lo || value > hi)
        throw OutOfRangeFieldError(field, value);
}

// Parses "key=value;key=value" text into (key, value) pairs.
std::vector<std::pair<std::string, std::string>> parse_kv(const std::string& data) {
    std::vector<std::pair<std::string, std::string>> out;
    size_t pos = 0;
    while (pos < data.size()) {
        size_t end = data.find(';', pos);
        if (end == std::string::npos) end = data.size();
        std::string item = data.substr(pos, end - pos);
        size_t eq = item.find('=');
        if (eq != std::string::npos)
            out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
        pos = end + 1;
    }
    return out;
}

std::optional<std::string> kv_get(const std::vector<std::pair<std::string, std::string>>& kv,
                                  const std::string& key) {
    for (const auto& [k, v] : kv)
        if (k == key) return v;
    return std::nullopt;
}

std::optional<long> parse_long(const std::string& text) {
    if (text.empty()) return std::nullopt;
    char* end = nullptr;
    long v = std::strtol(text.c_str(), &end, 10);
    if (end != text.c_str() + text.size()) return std::nullopt;
    return v;
}

std::optional<double> parse_double(const std::string& text) {
    if (text.empty()) return std::nullopt;
    char* end = nullptr;
    double v = std::strtod(text.c_str(), &end);
    if (end != text.c_str() + text.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace

std::string to_string(EventSource source) {
    switch (source) {
        case EventSource::GridlockRow: return "gridlock_row";
        case EventSource::SparcEvent: return "sparc_event";
        case EventSource::ConceptTransition: return "concept_transition";
    }
    return "unknown";
}

std::optional<EventSource> source_from_string(std::string_view text) {
    if (text == "gridlock_row") return EventSource::GridlockRow;
    if (text == "sparc_event") return EventSource::SparcEvent;
    if (text == "concept_transition") return EventSource::ConceptTransition;
    return std::nullopt;
}

RawEvent parse_event_line(const std::string& line) {
    json doc;
    try {
        doc = json::parse(line);
    } catch (const json::exception& e) {
        throw WireFormatError(std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw WireFormatError("event line is not a JSON object");
    for (const char* key : {"session", "source", "timestamp_ms", "payload"})
        if (!doc.contains(key)) throw WireFormatError(std::string("missing field: ") + key);
    if (!doc["session"].is_string() || !doc["source"].is_string())
        throw WireFormatError("session and source must be strings");
    if (!doc["timestamp_ms"].is_number_integer())
        throw WireFormatError("timestamp_ms must be an integer");
    if (!doc["payload"].is_object()) throw WireFormatError("payload must be an object");

    RawEvent ev;
    ev.session = doc["session"].get<std::string>();
    ev.timestamp_ms = doc["timestamp_ms"].get<int64_t>();
    if (ev.timestamp_ms < 0) throw WireFormatError("timestamp_ms must be >= 0");
    auto source = source_from_string(doc["source"].get<std::string>());
    if (!source) throw UnknownSourceError(doc["source"].get<std::string>());
    ev.source = *source;

    const json& p = doc["payload"];
    switch (ev.source) {
        case EventSource::GridlockRow: {
            GridlockPayload g;
            for (const char* key : {"score", "time_seconds", "attempts", "confidence",
                                    "frustration", "evaluation_optional"})
                if (!p.contains(key))
                    throw WireFormatError(std::string("gridlock payload missing: ") + key);
            if (!p["score"].is_number() || !p["time_seconds"].is_number() ||
                !p["confidence"].is_number() || !p["frustration"].is_number() ||
                !p["attempts"].is_number_integer() || !p["evaluation_optional"].is_boolean())
                throw WireFormatError("gridlock payload field has wrong type");
            g.score = p["score"].get<double>();
            g.time_seconds = p["time_seconds"].get<double>();
            g.attempts = p["attempts"].get<int>();
            g.confidence = p["confidence"].get<double>();
            g.frustration = p["frustration"].get<double>();
            g.evaluation_optional = p["evaluation_optional"].get<bool>();
            require_range("score", g.score, 0.0, 1.0);
            require_range("time_seconds", g.time_seconds, 0.0,
                          std::numeric_limits<double>::max());
            if (g.attempts < 0) throw OutOfRangeFieldError("attempts", g.attempts);
            require_range("confidence", g.confidence, 0.0, 1.0);
            require_range("frustration", g.frustration, 0.0, 1.0);
            ev.payload = g;
            break;
        }
        case EventSource::SparcEvent: {
            if (!p.contains("eventType") || !p["eventType"].is_string())
                throw WireFormatError("sparc payload missing eventType");
            SparcPayload s;
            s.event_type = p["eventType"].get<std::string>();
            if (p.contains("eventData")) {
                if (!p["eventData"].is_string())
                    throw WireFormatError("sparc eventData must be a string");
                s.event_data = p["eventData"].get<std::string>();
            }
            ev.payload = s;
            break;
        }
        case EventSource::ConceptTransition: {
            if (!p.contains("concept_id") || !p["concept_id"].is_string())
                throw WireFormatError("concept_transition payload missing concept_id");
            ConceptTransitionPayload c;
            c.concept_id = p["concept_id"].get<std::string>();
            if (c.concept_id.empty()) throw WireFormatError("concept_id must be non-empty");
            ev.payload = c;
            break;
        }
    }
    return ev;
}

std::string serialize_event(const RawEvent& event) {
    ordered_json doc;
    doc["session"] = event.session;
    doc["source"] = to_string(event.source);
    doc["timestamp_ms"] = event.timestamp_ms;
    ordered_json p;
    if (const auto* g = std::get_if<GridlockPayload>(&event.payload)) {
        p["score"] = g->score;
        p["time_seconds"] = g->time_seconds;
        p["attempts"] = g->attempts;
        p["confidence"] = g->confidence;
        p["frustration"] = g->frustration;
        p["evaluation_optional"] = g->evaluation_optional;
    } else if (const auto* s = std::get_if<SparcPayload>(&event.payload)) {
        p["eventType"] = s->event_type;
        p["eventData"] = s->event_data;
    } else if (const auto* c = std::get_if<ConceptTransitionPayload>(&event.payload)) {
        p["concept_id"] = c->concept_id;
    }
    doc["payload"] = p;
    return doc.dump();
}

void merge_metrics(StateVector& state, const PartialMetrics& partial) {
    if (partial.proficiency) state.proficiency = *partial.proficiency;
    if (partial.frustration) state.frustration = *partial.frustration;
    if (partial.engagement) state.engagement = *partial.engagement;
    if (partial.effort) state.effort = *partial.effort;
    if (partial.confidence) state.confidence = *partial.confidence;
    if (partial.exploration) state.exploration = *partial.exploration;
}

PartialMetrics map_gridlock_row(const GridlockPayload& row, const StateVector& prior,
                                const PipelineConfig& cfg) {
    require_range("score", row.score, 0.0, 1.0);
    require_range("time_seconds", row.time_seconds, 0.0, std::numeric_limits<double>::max());
    if (row.attempts < 0) throw OutOfRangeFieldError("attempts", row.attempts);
    require_range("confidence", row.confidence, 0.0, 1.0);
    require_range("frustration", row.frustration, 0.0, 1.0);

    PartialMetrics m;
    m.proficiency = row.score;
    m.frustration = row.frustration;
    m.confidence = row.confidence;
    m.effort = std::min(row.attempts / cfg.effort_attempts_divisor, 1.0);
    double instant = clamp01(1.0 - row.time_seconds / cfg.full_engagement_seconds);
    m.engagement = cfg.engagement_ema_alpha * instant +
                   (1.0 - cfg.engagement_ema_alpha) * prior.engagement;
    m.exploration = clamp01(prior.exploration +
                            (row.evaluation_optional ? cfg.exploration_increment : 0.0));
    return m;
}

SparcAdapter::Outcome SparcAdapter::map_event(const SparcPayload& event, int64_t timestamp_ms,
                                              const StateVector& prior,
                                              const PipelineConfig& cfg, size_t event_index) {
    Outcome out;

    // Frustration: bump on closely repeated bad word games, decay with time.
    double frustration = prior.frustration;
    bool bumped = false;
    if (event.event_type == "WordGameEnd") {
        auto kv = parse_kv(event.event_data);
        auto correct_text = kv_get(kv, "correct");
        auto incorrect_text = kv_get(kv, "incorrect");
        if (!correct_text || !incorrect_text)
            throw UnparseableEventDataError(event_index,
                                            "WordGameEnd needs correct=<n>;incorrect=<m>");
        auto correct = parse_long(*correct_text);
        auto incorrect = parse_long(*incorrect_text);
        if (!correct || !incorrect || *correct < 0 || *incorrect < 0)
            throw UnparseableEventDataError(event_index, "WordGameEnd counts must be integers");
        out.word_game = {static_cast<int>(*correct), static_cast<int>(*incorrect)};
        long total = *correct + *incorrect;
        if (total > 0) out.metrics.proficiency = static_cast<double>(*correct) / total;
        if (*incorrect >= cfg.sparc_incorrect_threshold && last_word_game_ms_ &&
            timestamp_ms - *last_word_game_ms_ <= cfg.sparc_short_period_seconds * 1000.0) {
            frustration += cfg.sparc_frustration_increment;
            bumped = true;
        }
        last_word_game_ms_ = timestamp_ms;
    }
    if (!bumped && last_event_ms_) {
        double minutes = (timestamp_ms - *last_event_ms_) / 60000.0;
        frustration -= cfg.sparc_frustration_decay_per_minute * minutes;
    }
    out.metrics.frustration = clamp01(frustration);

    if (event.event_type == "ConversationStep") {
        ++dialogue_steps_;
        auto kv = parse_kv(event.event_data);
        if (auto partner = kv_get(kv, "partner"); partner && *partner == cfg.sparc_helper_partner)
            out.help_seeking = true;
    } else {
        dialogue_steps_ = 0;  // any other event ends the dialogue run
    }
    out.metrics.effort = std::min(dialogue_steps_ / cfg.sparc_effort_steps_divisor, 1.0);

    if (event.event_type == "DrivingPlayer") {
        auto kv = parse_kv(event.event_data);
        auto x_text = kv_get(kv, "x");
        auto y_text = kv_get(kv, "y");
        if (!x_text || !y_text)
            throw UnparseableEventDataError(event_index, "DrivingPlayer needs x=<f>;y=<f>");
        auto x = parse_double(*x_text);
        auto y = parse_double(*y_text);
        if (!x || !y)
            throw UnparseableEventDataError(event_index, "DrivingPlayer coordinates must be numbers");
        visited_cells_.insert({static_cast<long>(std::floor(*x)),
                               static_cast<long>(std::floor(*y))});
    }
    out.metrics.exploration =
        std::min(visited_cells_.size() / cfg.sparc_exploration_cells_divisor, 1.0);

    window_.push_back(timestamp_ms);
    int64_t horizon =
        timestamp_ms - static_cast<int64_t>(cfg.sparc_engagement_window_seconds * 1000.0);
    window_.erase(std::remove_if(window_.begin(), window_.end(),
                                 [&](int64_t t) { return t < horizon; }),
                  window_.end());
    out.metrics.engagement =
        clamp01(window_.size() / cfg.sparc_engagement_events_divisor);

    last_event_ms_ = timestamp_ms;
    return out;
}

PartialMetrics map_sparc_events(const std::vector<std::pair<int64_t, SparcPayload>>& window,
                                const StateVector& prior, const PipelineConfig& cfg) {
    SparcAdapter adapter;
    StateVector rolling = prior;
    PartialMetrics merged;
    for (size_t i = 0; i < window.size(); ++i) {
        auto outcome = adapter.map_event(window[i].second, window[i].first, rolling, cfg, i);
        merge_metrics(rolling, outcome.metrics);
        if (outcome.metrics.proficiency) merged.proficiency = outcome.metrics.proficiency;
        if (outcome.metrics.frustration) merged.frustration = outcome.metrics.frustration;
        if (outcome.metrics.engagement) merged.engagement = outcome.metrics.engagement;
        if (outcome.metrics.effort) merged.effort = outcome.metrics.effort;
        if (outcome.metrics.exploration) merged.exploration = outcome.metrics.exploration;
    }
    return merged;
}

void ingest_event(SessionTrace& trace, const RawEvent& event) {
    if (!trace.events.empty() && event.timestamp_ms < trace.events.back().timestamp_ms)
        throw TimestampRegressionError(event.timestamp_ms, trace.events.back().timestamp_ms);
    trace.events.push_back(event);
}

SessionPipeline::SessionPipeline(PipelineConfig cfg, std::string session_id,
                                 std::string student_id, std::string starting_concept)
    : cfg_(std::move(cfg)) {
    trace_.session_id = std::move(session_id);
    trace_.student_id = std::move(student_id);
    trace_.current_concept = std::move(starting_concept);
    ctx_.state = cfg_.initial_state;
}

double SessionPipeline::reference_proficiency(size_t history_index) const {
    if (history_index == 0) return cfg_.prior_proficiency;
    return trace_.state_history[history_index - 1].second.proficiency;
}

void SessionPipeline::process_one(const RawEvent& event, size_t index) {
    ctx_.seconds_since_last_event =
        last_event_ms_ ? (event.timestamp_ms - *last_event_ms_) / 1000.0 : 0.0;
    last_event_ms_ = event.timestamp_ms;

    if (const auto* c = std::get_if<ConceptTransitionPayload>(&event.payload)) {
        trace_.current_concept = c->concept_id;
        ctx_.errors = 0;
        ctx_.attempts = 0;
        return;  // transitions carry no metric signal
    }

    PartialMetrics partial;
    bool help_seeking = false;
    if (const auto* g = std::get_if<GridlockPayload>(&event.payload)) {
        partial = map_gridlock_row(*g, ctx_.state, cfg_);
        ctx_.attempts = g->attempts;
        if (g->score < cfg_.error_score_threshold) ++ctx_.errors;
        if (g->evaluation_optional) help_seeking = true;
    } else if (const auto* s = std::get_if<SparcPayload>(&event.payload)) {
        auto outcome = sparc_.map_event(*s, event.timestamp_ms, ctx_.state, cfg_, index);
        partial = outcome.metrics;
        if (outcome.word_game) {
            ctx_.attempts += 1;
            ctx_.errors += outcome.word_game->second;
        }
        help_seeking = outcome.help_seeking;
    }
    if (help_seeking) ++help_seeking_count_;

    StateVector next = ctx_.state;
    merge_metrics(next, partial);
    next.metacognition = std::min(help_seeking_count_ / cfg_.help_seeking_divisor, 1.0);

    auto& history = trace_.state_history;
    bool coalesce = !history.empty() && history.back().first == event.timestamp_ms;
    size_t entry_index = coalesce ? history.size() - 1 : history.size();
    double ref = reference_proficiency(entry_index);
    next.learning_rate = std::clamp(next.proficiency - ref, -1.0, 1.0);
    next.clamp_all();

    if (coalesce)
        history.back().second = next;
    else
        history.emplace_back(event.timestamp_ms, next);
    ctx_.state = next;
}

const StateVector& SessionPipeline::compute_state() {
    if (trace_.events.empty()) throw NoEventsError();
    for (; processed_ < trace_.events.size(); ++processed_)
        process_one(trace_.events[processed_], processed_);
    return ctx_.state;
}

void SessionPipeline::absorb_rule_state(const StateVector& updated, bool learning_rate_updated) {
    StateVector next = updated;
    if (!trace_.state_history.empty()) {
        if (!learning_rate_updated) {
            double ref = reference_proficiency(trace_.state_history.size() - 1);
            next.learning_rate = std::clamp(next.proficiency - ref, -1.0, 1.0);
        }
        next.clamp_all();
        trace_.state_history.back().second = next;
    } else {
        next.clamp_all();
    }
    ctx_.state = next;
}

}  // namespace mentor
