#pragma once
// Session-oriented facade tying ontology, pipeline, rule engine, tutor, and
// peer agent together, with file-backed durability and an HTTP surface for
// external learning environments.

#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "mentor/config.hpp"
#include "mentor/ontology.hpp"
#include "mentor/peer.hpp"
#include "mentor/pipeline.hpp"
#include "mentor/rules.hpp"
#include "mentor/tutor.hpp"

namespace mentor {

class UnknownSessionError : public std::runtime_error {
public:
    explicit UnknownSessionError(const std::string& id)
        : std::runtime_error("unknown session: " + id) {}
};

class UnknownDomainError : public std::runtime_error {
public:
    explicit UnknownDomainError(const std::string& domain)
        : std::runtime_error("unknown domain: " + domain) {}
};

class CorruptLogError : public std::runtime_error {
public:
    CorruptLogError(size_t line, const std::string& detail)
        : std::runtime_error("corrupt log at line " + std::to_string(line) + ": " + detail),
          line(line) {}
    size_t line;
};

// The deterministic per-session core shared by the live path and replay:
// pipeline + rule engine driven one event at a time.
class SessionCore {
public:
    SessionCore(const PipelineConfig& pipeline_cfg, const RuleConfig& rule_cfg,
                const Ontology& ontology, std::string session_id, std::string student_id,
                std::string starting_concept);

    // Ingest + state recompute + rule evaluation for one event. Dispatches
    // are returned for the caller to route (live) or drop (replay).
    std::vector<TriggerDispatch> process_event(const RawEvent& event);

    const SessionTrace& trace() const { return pipeline_.trace(); }
    const EvaluationContext& context() const { return pipeline_.context(); }

private:
    const Ontology& ontology_;
    RuleConfig rule_cfg_;
    SessionPipeline pipeline_;
    CooldownTracker cooldowns_;
};

struct SessionAck {
    StateVector state;
    int actions_ready = 0;
    int dialogue_ready = 0;
};

struct ReplayResult {
    SessionTrace trace;
};

// Replays an append-only event log through the same per-event path as the
// live engine; the reconstruction equals the live run. A `<id>.meta.json`
// sidecar next to the log supplies student/concept when present.
ReplayResult replay_log(const std::filesystem::path& log_path, const EngineConfig& cfg,
                        const Ontology& ontology);

class Engine {
public:
    explicit Engine(EngineConfig cfg);  // throws ConfigError and ontology errors

    std::string create_session(const std::string& student_id, const std::string& domain,
                               const std::string& starting_concept);
    SessionAck post_events(const std::string& session_id, const std::vector<RawEvent>& events);
    SessionAck post_event_lines(const std::string& session_id,
                                const std::vector<std::string>& lines);
    std::optional<Action> poll_action(const std::string& session_id);
    std::optional<PeerResponse> poll_dialogue(const std::string& session_id);
    StateVector session_state(const std::string& session_id) const;
    std::string session_concept(const std::string& session_id) const;

    const Ontology& ontology() const { return ontology_; }
    const EngineConfig& config() const { return cfg_; }
    const StrategyRegistry& strategies() const { return strategies_; }
    ValidationReport validate_ontology_text(const std::string& text) const;

    QTable snapshot_qtable() const;
    std::filesystem::path session_log_path(const std::string& session_id) const;

private:
    struct Session {
        std::unique_ptr<SessionCore> core;
        std::deque<Action> pending_actions;
        std::deque<PeerResponse> pending_dialogue;
        std::ofstream log;
        std::string student_id;
        int64_t created_at_ms = 0;
        int64_t last_event_at_ms = 0;
        std::optional<std::pair<int, int>> last_action;  // (state index, action index)
        std::unique_ptr<std::mutex> mutex;
    };

    Session& locate(const std::string& session_id);
    const Session& locate(const std::string& session_id) const;

    EngineConfig cfg_;
    Ontology ontology_;
    StrategyRegistry strategies_;
    std::unique_ptr<GenerationBackend> backend_;
    PeerAgentConfig peer_cfg_;

    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, Session> sessions_;
    uint64_t session_counter_ = 0;

    mutable std::mutex q_mutex_;
    QTable q_;
    std::mt19937 action_rng_;
    mutable std::mutex rng_mutex_;
};

// HTTP surface. Endpoints:
//   POST /v1/sessions                    {student_id, domain?, starting_concept?}
//   POST /v1/sessions/{id}/events        newline-delimited JSON events
//   GET  /v1/sessions/{id}/state
//   GET  /v1/sessions/{id}/action
//   GET  /v1/sessions/{id}/dialogue
//   POST /v1/ontology/validate           concept file body -> validation report
class HttpService {
public:
    explicit HttpService(Engine& engine);
    ~HttpService();

    // Binds host:port (port 0 picks an ephemeral port) and serves on a
    // background thread. Returns the bound port.
    int start(const std::string& host, int port);
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace mentor
