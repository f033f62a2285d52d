#include "mentor/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

#include <json.hpp>

namespace mentor {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

double get_number(const json& obj, const char* key, double fallback, double lo, double hi) {
    if (!obj.contains(key)) return fallback;
    require(obj[key].is_number(), std::string(key) + " must be a number");
    double v = obj[key].get<double>();
    require(std::isfinite(v) && v >= lo && v <= hi,
            std::string(key) + " out of range [" + std::to_string(lo) + ", " +
                std::to_string(hi) + "]");
    return v;
}

std::string get_string(const json& obj, const char* key, const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    require(obj[key].is_string(), std::string(key) + " must be a string");
    return obj[key].get<std::string>();
}

void note_unknown_keys(const json& obj, const std::set<std::string>& known,
                       const std::string& prefix, std::vector<std::string>* warnings) {
    if (!warnings) return;
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!known.count(it.key()))
            warnings->push_back("unknown config key: " + prefix + it.key());
}

}  // namespace

EngineConfig parse_engine_config(const std::string& text, std::vector<std::string>* warnings) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    require(doc.is_object(), "config must be a JSON object");

    EngineConfig cfg;
    note_unknown_keys(doc,
                      {"ontology_dir", "persistence_dir", "default_concept", "pipeline",
                       "rules", "tutor", "peer", "service_seed"},
                      "", warnings);

    cfg.ontology_dir = get_string(doc, "ontology_dir", "");
    cfg.persistence_dir = get_string(doc, "persistence_dir", cfg.persistence_dir);
    cfg.default_concept = get_string(doc, "default_concept", "");
    if (doc.contains("service_seed")) {
        require(doc["service_seed"].is_number_unsigned(), "service_seed must be unsigned");
        cfg.service_seed = doc["service_seed"].get<uint32_t>();
    }

    if (doc.contains("pipeline")) {
        const json& p = doc["pipeline"];
        require(p.is_object(), "pipeline must be an object");
        note_unknown_keys(p,
                          {"prior_proficiency", "initial_state", "effort_attempts_divisor",
                           "engagement_ema_alpha", "full_engagement_seconds",
                           "exploration_increment", "sparc_frustration_increment",
                           "sparc_frustration_decay_per_minute", "sparc_short_period_seconds",
                           "sparc_incorrect_threshold", "sparc_effort_steps_divisor",
                           "sparc_exploration_cells_divisor", "sparc_engagement_window_seconds",
                           "sparc_engagement_events_divisor", "sparc_helper_partner",
                           "help_seeking_divisor", "error_score_threshold"},
                          "pipeline.", warnings);
        PipelineConfig& pc = cfg.pipeline;
        pc.prior_proficiency = get_number(p, "prior_proficiency", pc.prior_proficiency, 0, 1);
        pc.effort_attempts_divisor =
            get_number(p, "effort_attempts_divisor", pc.effort_attempts_divisor, 1e-9, 1e6);
        pc.engagement_ema_alpha =
            get_number(p, "engagement_ema_alpha", pc.engagement_ema_alpha, 0, 1);
        pc.full_engagement_seconds =
            get_number(p, "full_engagement_seconds", pc.full_engagement_seconds, 1e-9, 1e9);
        pc.exploration_increment =
            get_number(p, "exploration_increment", pc.exploration_increment, 0, 1);
        pc.sparc_frustration_increment =
            get_number(p, "sparc_frustration_increment", pc.sparc_frustration_increment, 0, 1);
        pc.sparc_frustration_decay_per_minute = get_number(
            p, "sparc_frustration_decay_per_minute", pc.sparc_frustration_decay_per_minute, 0, 1);
        pc.sparc_short_period_seconds =
            get_number(p, "sparc_short_period_seconds", pc.sparc_short_period_seconds, 0, 1e9);
        pc.sparc_incorrect_threshold = static_cast<int>(get_number(
            p, "sparc_incorrect_threshold", pc.sparc_incorrect_threshold, 0, 1e6));
        pc.sparc_effort_steps_divisor =
            get_number(p, "sparc_effort_steps_divisor", pc.sparc_effort_steps_divisor, 1e-9, 1e6);
        pc.sparc_exploration_cells_divisor = get_number(
            p, "sparc_exploration_cells_divisor", pc.sparc_exploration_cells_divisor, 1e-9, 1e6);
        pc.sparc_engagement_window_seconds = get_number(
            p, "sparc_engagement_window_seconds", pc.sparc_engagement_window_seconds, 0, 1e9);
        pc.sparc_engagement_events_divisor = get_number(
            p, "sparc_engagement_events_divisor", pc.sparc_engagement_events_divisor, 1e-9, 1e6);
        pc.sparc_helper_partner = get_string(p, "sparc_helper_partner", pc.sparc_helper_partner);
        pc.help_seeking_divisor =
            get_number(p, "help_seeking_divisor", pc.help_seeking_divisor, 1e-9, 1e6);
        pc.error_score_threshold =
            get_number(p, "error_score_threshold", pc.error_score_threshold, 0, 1);
        if (p.contains("initial_state")) {
            require(p["initial_state"].is_object(), "initial_state must be an object");
            for (auto it = p["initial_state"].begin(); it != p["initial_state"].end(); ++it) {
                require(is_metric(it.key()), "initial_state key must be a metric: " + it.key());
                require(it.value().is_number(), "initial_state values must be numbers");
                double v = it.value().get<double>();
                auto [lo, hi] = metric_range(it.key());
                require(v >= lo && v <= hi, "initial_state." + it.key() + " out of range");
                pc.initial_state.set(it.key(), v);
            }
        }
    }

    if (doc.contains("rules")) {
        const json& r = doc["rules"];
        require(r.is_object(), "rules must be an object");
        note_unknown_keys(r, {"cooldown_ms"}, "rules.", warnings);
        cfg.rules.cooldown_ms = static_cast<int64_t>(
            get_number(r, "cooldown_ms", static_cast<double>(cfg.rules.cooldown_ms), 0, 1e12));
    }

    if (doc.contains("tutor")) {
        const json& t = doc["tutor"];
        require(t.is_object(), "tutor must be an object");
        note_unknown_keys(t,
                          {"alpha", "gamma", "epsilon_online", "weight_proficiency",
                           "weight_engagement", "weight_frustration", "share_discount",
                           "checkpoint_path", "experience_path"},
                          "tutor.", warnings);
        TutorConfig& tc = cfg.tutor;
        tc.alpha = get_number(t, "alpha", tc.alpha, 1e-9, 1.0);
        tc.gamma = get_number(t, "gamma", tc.gamma, 0.0, 1.0 - 1e-9);
        tc.epsilon_online = get_number(t, "epsilon_online", tc.epsilon_online, 0.0, 1.0);
        tc.weights.proficiency =
            get_number(t, "weight_proficiency", tc.weights.proficiency, 0, 100);
        tc.weights.engagement = get_number(t, "weight_engagement", tc.weights.engagement, 0, 100);
        tc.weights.frustration =
            get_number(t, "weight_frustration", tc.weights.frustration, 0, 100);
        tc.share_discount = get_number(t, "share_discount", tc.share_discount, 0, 1);
        tc.checkpoint_path = get_string(t, "checkpoint_path", "");
        tc.experience_path = get_string(t, "experience_path", "");
    }

    if (doc.contains("peer")) {
        const json& p = doc["peer"];
        require(p.is_object(), "peer must be an object");
        note_unknown_keys(p, {"kind", "url", "api_key", "timeout_seconds", "strategies_file"},
                          "peer.", warnings);
        PeerBackendConfig& pb = cfg.peer;
        pb.kind = get_string(p, "kind", pb.kind);
        require(pb.kind == "stub" || pb.kind == "http", "peer.kind must be stub or http");
        pb.url = get_string(p, "url", "");
        pb.api_key = get_string(p, "api_key", "");
        pb.timeout_seconds = get_number(p, "timeout_seconds", pb.timeout_seconds, 0.1, 600);
        pb.strategies_file = get_string(p, "strategies_file", "");
    }

    // Environment overrides for the remote backend.
    if (const char* url = std::getenv("PEER_BACKEND_URL"); url && *url) cfg.peer.url = url;
    if (const char* key = std::getenv("PEER_BACKEND_KEY"); key && *key) cfg.peer.api_key = key;
    return cfg;
}

EngineConfig load_engine_config(const std::string& path, std::vector<std::string>* warnings) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_engine_config(text, warnings);
}

std::string serialize_engine_config(const EngineConfig& cfg) {
    ordered_json doc;
    doc["ontology_dir"] = cfg.ontology_dir;
    doc["persistence_dir"] = cfg.persistence_dir;
    doc["default_concept"] = cfg.default_concept;
    doc["service_seed"] = cfg.service_seed;
    ordered_json p;
    p["prior_proficiency"] = cfg.pipeline.prior_proficiency;
    ordered_json init;
    for (auto name : StateVector::metric_names())
        init[std::string(name)] = cfg.pipeline.initial_state.get(name);
    p["initial_state"] = init;
    p["effort_attempts_divisor"] = cfg.pipeline.effort_attempts_divisor;
    p["engagement_ema_alpha"] = cfg.pipeline.engagement_ema_alpha;
    p["full_engagement_seconds"] = cfg.pipeline.full_engagement_seconds;
    p["exploration_increment"] = cfg.pipeline.exploration_increment;
    p["sparc_frustration_increment"] = cfg.pipeline.sparc_frustration_increment;
    p["sparc_frustration_decay_per_minute"] = cfg.pipeline.sparc_frustration_decay_per_minute;
    p["sparc_short_period_seconds"] = cfg.pipeline.sparc_short_period_seconds;
    p["sparc_incorrect_threshold"] = cfg.pipeline.sparc_incorrect_threshold;
    p["sparc_effort_steps_divisor"] = cfg.pipeline.sparc_effort_steps_divisor;
    p["sparc_exploration_cells_divisor"] = cfg.pipeline.sparc_exploration_cells_divisor;
    p["sparc_engagement_window_seconds"] = cfg.pipeline.sparc_engagement_window_seconds;
    p["sparc_engagement_events_divisor"] = cfg.pipeline.sparc_engagement_events_divisor;
    p["sparc_helper_partner"] = cfg.pipeline.sparc_helper_partner;
    p["help_seeking_divisor"] = cfg.pipeline.help_seeking_divisor;
    p["error_score_threshold"] = cfg.pipeline.error_score_threshold;
    doc["pipeline"] = p;
    ordered_json r;
    r["cooldown_ms"] = cfg.rules.cooldown_ms;
    doc["rules"] = r;
    ordered_json t;
    t["alpha"] = cfg.tutor.alpha;
    t["gamma"] = cfg.tutor.gamma;
    t["epsilon_online"] = cfg.tutor.epsilon_online;
    t["weight_proficiency"] = cfg.tutor.weights.proficiency;
    t["weight_engagement"] = cfg.tutor.weights.engagement;
    t["weight_frustration"] = cfg.tutor.weights.frustration;
    t["share_discount"] = cfg.tutor.share_discount;
    t["checkpoint_path"] = cfg.tutor.checkpoint_path;
    t["experience_path"] = cfg.tutor.experience_path;
    doc["tutor"] = t;
    ordered_json pb;
    pb["kind"] = cfg.peer.kind;
    pb["url"] = cfg.peer.url;
    pb["api_key"] = cfg.peer.api_key;
    pb["timeout_seconds"] = cfg.peer.timeout_seconds;
    pb["strategies_file"] = cfg.peer.strategies_file;
    doc["peer"] = pb;
    return doc.dump(2);
}

}  // namespace mentor
