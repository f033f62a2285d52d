#pragma once
// Event-stream standardization: ingest raw per-environment events and
// maintain the standardized state vector for a session. Adapters for the
// Gridlock puzzle game (CSV-row shaped events) and the SPARC conversational
// game (typed event stream) both emit the same 8-metric vector.

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "mentor/state.hpp"

namespace mentor {

struct GridlockPayload {
    double score = 0.0;         // [0,1]
    double time_seconds = 0.0;  // >= 0
    int attempts = 0;           // >= 0 (0 allowed for a fresh section)
    double confidence = 0.0;    // [0,1]
    double frustration = 0.0;   // [0,1]
    bool evaluation_optional = false;
};

struct SparcPayload {
    std::string event_type;  // e.g. WordGameEnd, ConversationStep, DrivingPlayer
    std::string event_data;  // opaque "key=value;key=value" text
};

struct ConceptTransitionPayload {
    std::string concept_id;
};

enum class EventSource { GridlockRow, SparcEvent, ConceptTransition };

std::string to_string(EventSource source);
std::optional<EventSource> source_from_string(std::string_view text);

struct RawEvent {
    std::string session;
    EventSource source = EventSource::GridlockRow;
    int64_t timestamp_ms = 0;  // since session start, non-decreasing
    std::variant<GridlockPayload, SparcPayload, ConceptTransitionPayload> payload;
};

class PipelineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TimestampRegressionError : public PipelineError {
public:
    TimestampRegressionError(int64_t event_ms, int64_t last_ms)
        : PipelineError("event timestamp " + std::to_string(event_ms) +
                        "ms precedes previous " + std::to_string(last_ms) + "ms") {}
};

class UnknownSourceError : public PipelineError {
public:
    explicit UnknownSourceError(const std::string& source)
        : PipelineError("unknown event source: " + source) {}
};

class OutOfRangeFieldError : public PipelineError {
public:
    OutOfRangeFieldError(const std::string& field, double value)
        : PipelineError("field '" + field + "' out of range: " + std::to_string(value)),
          field(field) {}
    std::string field;
};

class UnparseableEventDataError : public PipelineError {
public:
    UnparseableEventDataError(size_t event_index, const std::string& detail)
        : PipelineError("unparseable event data at event " + std::to_string(event_index) +
                        ": " + detail),
          event_index(event_index) {}
    size_t event_index;
};

class NoEventsError : public PipelineError {
public:
    NoEventsError() : PipelineError("trace has no events") {}
};

class WireFormatError : public PipelineError {
public:
    using PipelineError::PipelineError;
};

// Wire format: one JSON object per line,
// {"session":..., "source":..., "timestamp_ms":..., "payload":{...}}.
RawEvent parse_event_line(const std::string& line);
std::string serialize_event(const RawEvent& event);  // single line, no newline

struct PipelineConfig {
    double prior_proficiency = 0.4;  // reference before the first vector
    StateVector initial_state;       // session-start defaults
    // Gridlock adapter
    double effort_attempts_divisor = 5.0;
    double engagement_ema_alpha = 0.3;
    double full_engagement_seconds = 60.0;
    double exploration_increment = 0.1;
    // SPARC adapter
    double sparc_frustration_increment = 0.25;
    double sparc_frustration_decay_per_minute = 0.05;
    double sparc_short_period_seconds = 60.0;
    int sparc_incorrect_threshold = 2;
    double sparc_effort_steps_divisor = 10.0;
    double sparc_exploration_cells_divisor = 20.0;
    double sparc_engagement_window_seconds = 120.0;
    double sparc_engagement_events_divisor = 10.0;
    std::string sparc_helper_partner = "mentor";  // help-seeking dialogue partner
    // Shared
    double help_seeking_divisor = 5.0;
    double error_score_threshold = 0.5;  // gridlock score below this counts an error

    PipelineConfig() {
        initial_state.proficiency = 0.4;
        initial_state.engagement = 0.5;
        initial_state.confidence = 0.5;
    }
};

// Metrics an adapter chose to update; unset metrics persist from the prior
// state. learning_rate and metacognition are computed by the pipeline itself.
struct PartialMetrics {
    std::optional<double> proficiency;
    std::optional<double> frustration;
    std::optional<double> engagement;
    std::optional<double> effort;
    std::optional<double> confidence;
    std::optional<double> exploration;
};

void merge_metrics(StateVector& state, const PartialMetrics& partial);

PartialMetrics map_gridlock_row(const GridlockPayload& row, const StateVector& prior,
                                const PipelineConfig& cfg);

// Stateful SPARC mapper: tracks word-game cadence, dialogue runs, visited
// grid cells, and the recent-event window.
class SparcAdapter {
public:
    struct Outcome {
        PartialMetrics metrics;
        std::optional<std::pair<int, int>> word_game;  // (correct, incorrect)
        bool help_seeking = false;
    };

    Outcome map_event(const SparcPayload& event, int64_t timestamp_ms, const StateVector& prior,
                      const PipelineConfig& cfg, size_t event_index);

private:
    std::optional<int64_t> last_word_game_ms_;
    std::optional<int64_t> last_event_ms_;
    std::set<std::pair<long, long>> visited_cells_;
    int dialogue_steps_ = 0;
    std::vector<int64_t> window_;  // recent sparc event timestamps
};

// Convenience for a standalone window of SPARC events starting from `prior`.
PartialMetrics map_sparc_events(const std::vector<std::pair<int64_t, SparcPayload>>& window,
                                const StateVector& prior, const PipelineConfig& cfg);

struct SessionTrace {
    std::string session_id;
    std::string student_id;
    std::string current_concept;
    std::vector<RawEvent> events;  // append-only
    std::vector<std::pair<int64_t, StateVector>> state_history;
};

// Appends after validating source membership and timestamp monotonicity.
// State recomputation is deferred to compute_state.
void ingest_event(SessionTrace& trace, const RawEvent& event);

// Per-session incremental pipeline. process-pending semantics: compute_state
// folds every not-yet-processed event into the state, appending one history
// entry per state-bearing event (entries at an equal timestamp coalesce).
class SessionPipeline {
public:
    SessionPipeline(PipelineConfig cfg, std::string session_id, std::string student_id,
                    std::string starting_concept);

    const SessionTrace& trace() const { return trace_; }
    const EvaluationContext& context() const { return ctx_; }
    const PipelineConfig& config() const { return cfg_; }

    void ingest(const RawEvent& event) { ingest_event(trace_, event); }

    // Processes pending events; returns the current state. Throws NoEvents
    // if the trace is empty.
    const StateVector& compute_state();

    bool has_pending() const { return processed_ < trace_.events.size(); }

    // Replaces the current state (and the latest history entry) with a
    // rule-updated vector. learning_rate is recomputed from the history
    // unless the rule set it explicitly.
    void absorb_rule_state(const StateVector& updated, bool learning_rate_updated);

private:
    void process_one(const RawEvent& event, size_t index);
    double reference_proficiency(size_t history_index) const;

    PipelineConfig cfg_;
    SessionTrace trace_;
    EvaluationContext ctx_;
    SparcAdapter sparc_;
    size_t processed_ = 0;
    int help_seeking_count_ = 0;
    std::optional<int64_t> last_event_ms_;
};

}  // namespace mentor
