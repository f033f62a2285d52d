#include "mentor/service.hpp"

#include <chrono>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace mentor {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

int64_t wall_clock_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::filesystem::path meta_path_for(const std::filesystem::path& log_path) {
    std::string name = log_path.filename().string();
    const std::string suffix = ".events.ndjson";
    if (name.size() > suffix.size() && name.ends_with(suffix))
        name = name.substr(0, name.size() - suffix.size());
    else
        name = log_path.stem().string();
    return log_path.parent_path() / (name + ".meta.json");
}

}  // namespace

SessionCore::SessionCore(const PipelineConfig& pipeline_cfg, const RuleConfig& rule_cfg,
                         const Ontology& ontology, std::string session_id,
                         std::string student_id, std::string starting_concept)
    : ontology_(ontology),
      rule_cfg_(rule_cfg),
      pipeline_(pipeline_cfg, std::move(session_id), std::move(student_id),
                std::move(starting_concept)) {}

std::vector<TriggerDispatch> SessionCore::process_event(const RawEvent& event) {
    if (const auto* t = std::get_if<ConceptTransitionPayload>(&event.payload))
        if (!ontology_.contains(t->concept_id)) throw UnknownConceptError(t->concept_id);

    pipeline_.ingest(event);
    pipeline_.compute_state();

    const std::string& concept_id = pipeline_.trace().current_concept;
    if (!ontology_.contains(concept_id)) return {};  // no rules to run

    RuleOutcome outcome =
        evaluate_rules(ontology_, concept_id, pipeline_.context(),
                       pipeline_.trace().session_id, event.timestamp_ms, cooldowns_, rule_cfg_);
    if (outcome.state_changed || outcome.learning_rate_updated)
        pipeline_.absorb_rule_state(outcome.state, outcome.learning_rate_updated);
    return outcome.dispatches;
}

ReplayResult replay_log(const std::filesystem::path& log_path, const EngineConfig& cfg,
                        const Ontology& ontology) {
    std::ifstream in(log_path);
    if (!in) throw CorruptLogError(0, "cannot open " + log_path.string());

    std::string session_id = log_path.stem().stem().string();
    std::string student_id = "unknown";
    std::string starting_concept = cfg.default_concept;
    std::filesystem::path meta_path = meta_path_for(log_path);
    if (std::filesystem::exists(meta_path)) {
        std::ifstream meta_in(meta_path);
        json meta;
        try {
            meta_in >> meta;
            session_id = meta.value("session_id", session_id);
            student_id = meta.value("student_id", student_id);
            starting_concept = meta.value("starting_concept", starting_concept);
        } catch (const json::exception&) {
            // Sidecar is advisory; a broken one falls back to defaults.
        }
    }

    SessionCore core(cfg.pipeline, cfg.rules, ontology, session_id, student_id,
                     starting_concept);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        RawEvent event;
        try {
            event = parse_event_line(line);
        } catch (const PipelineError& e) {
            throw CorruptLogError(line_no, e.what());
        }
        try {
            core.process_event(event);  // dispatches dropped: replay is offline
        } catch (const PipelineError& e) {
            throw CorruptLogError(line_no, e.what());
        } catch (const UnknownConceptError& e) {
            throw CorruptLogError(line_no, e.what());
        }
    }
    return {core.trace()};
}

Engine::Engine(EngineConfig cfg) : cfg_(std::move(cfg)), action_rng_(cfg_.service_seed) {
    if (cfg_.ontology_dir.empty()) throw ConfigError("ontology_dir is required");
    LoadedOntology loaded = load_ontology_dir(cfg_.ontology_dir);
    ontology_ = std::move(loaded.ontology);

    strategies_ = StrategyRegistry::builtin();
    if (!cfg_.peer.strategies_file.empty()) strategies_.load_file(cfg_.peer.strategies_file);

    ValidationReport report = validate_ontology(ontology_, strategies_.ids());
    if (!report.ok()) {
        std::ostringstream msg;
        msg << "ontology failed validation with " << report.error_count() << " error(s): ";
        for (const Finding& f : report.findings)
            if (f.severity == Finding::Severity::Error) {
                msg << f.message;
                break;
            }
        throw ConfigError(msg.str());
    }

    if (cfg_.peer.kind == "http")
        backend_ = std::make_unique<HttpBackend>(cfg_.peer.url, cfg_.peer.api_key,
                                                 cfg_.peer.timeout_seconds);
    else
        backend_ = std::make_unique<StubBackend>();

    if (!cfg_.tutor.checkpoint_path.empty() &&
        std::filesystem::exists(cfg_.tutor.checkpoint_path))
        q_ = QTable::load(cfg_.tutor.checkpoint_path);
    if (!cfg_.tutor.experience_path.empty() &&
        std::filesystem::exists(cfg_.tutor.experience_path)) {
        // Cold-start mitigation: warm the table from donor experiences.
        auto donor = load_experiences(cfg_.tutor.experience_path);
        q_.share_experience(donor, cfg_.tutor.alpha, cfg_.tutor.gamma,
                            cfg_.tutor.share_discount);
    }

    std::filesystem::create_directories(cfg_.persistence_dir);
}

std::string Engine::create_session(const std::string& student_id, const std::string& domain,
                                   const std::string& starting_concept) {
    if (!domain.empty() && domain != ontology_.domain_name) throw UnknownDomainError(domain);
    std::string concept_id = starting_concept.empty() ? cfg_.default_concept : starting_concept;
    if (!ontology_.contains(concept_id)) throw UnknownConceptError(concept_id);

    std::unique_lock lock(sessions_mutex_);
    std::string session_id = "s" + std::to_string(++session_counter_) + "-" +
                             std::to_string(wall_clock_ms() % 1000000);
    while (sessions_.count(session_id))
        session_id = "s" + std::to_string(++session_counter_) + "-" +
                     std::to_string(wall_clock_ms() % 1000000);

    Session session;
    session.core = std::make_unique<SessionCore>(cfg_.pipeline, cfg_.rules, ontology_,
                                                 session_id, student_id, concept_id);
    session.student_id = student_id;
    session.created_at_ms = wall_clock_ms();
    session.mutex = std::make_unique<std::mutex>();

    std::filesystem::path log_path =
        std::filesystem::path(cfg_.persistence_dir) / (session_id + ".events.ndjson");
    session.log.open(log_path, std::ios::app);
    if (!session.log) throw ConfigError("cannot open session log " + log_path.string());

    ordered_json meta;
    meta["session_id"] = session_id;
    meta["student_id"] = student_id;
    meta["domain"] = ontology_.domain_name;
    meta["starting_concept"] = concept_id;
    meta["created_at_ms"] = session.created_at_ms;
    std::ofstream meta_out(meta_path_for(log_path));
    meta_out << meta.dump(2) << "\n";

    sessions_.emplace(session_id, std::move(session));
    return session_id;
}

Engine::Session& Engine::locate(const std::string& session_id) {
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw UnknownSessionError(session_id);
    return it->second;
}

const Engine::Session& Engine::locate(const std::string& session_id) const {
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw UnknownSessionError(session_id);
    return it->second;
}

SessionAck Engine::post_events(const std::string& session_id,
                               const std::vector<RawEvent>& events) {
    std::shared_lock registry_lock(sessions_mutex_);
    Session& session = locate(session_id);
    std::lock_guard session_lock(*session.mutex);

    StateVector before = session.core->context().state;
    std::vector<TriggerDispatch> dispatches;
    for (RawEvent event : events) {
        event.session = session_id;  // the path parameter is authoritative
        auto fired = session.core->process_event(event);
        session.log << serialize_event(event) << "\n";
        session.log.flush();  // durable before ack
        session.last_event_at_ms = wall_clock_ms();
        for (auto& d : fired) dispatches.push_back(std::move(d));
    }

    for (const TriggerDispatch& dispatch : dispatches) {
        PeerResponse response = handle_trigger(dispatch, ontology_, strategies_, *backend_,
                                               peer_cfg_);
        session.pending_dialogue.push_back(std::move(response));
    }

    if (!events.empty()) {
        StateVector after = session.core->context().state;
        int s_now = discretize(after).index;
        double reward = compute_reward(before, after, cfg_.tutor.weights);
        std::lock_guard q_lock(q_mutex_);
        if (session.last_action) {
            Experience e{session.last_action->first, session.last_action->second, reward, s_now};
            q_.update(e, cfg_.tutor.alpha, cfg_.tutor.gamma);
        }
        Action action;
        {
            std::lock_guard rng_lock(rng_mutex_);
            action = select_action(q_, {s_now}, cfg_.tutor.epsilon_online, action_rng_);
        }
        session.last_action = {{s_now, action_index(action)}};
        session.pending_actions.push_back(action);
    }

    SessionAck ack;
    ack.state = session.core->context().state;
    ack.actions_ready = static_cast<int>(session.pending_actions.size());
    ack.dialogue_ready = static_cast<int>(session.pending_dialogue.size());
    return ack;
}

SessionAck Engine::post_event_lines(const std::string& session_id,
                                    const std::vector<std::string>& lines) {
    std::vector<RawEvent> events;
    events.reserve(lines.size());
    for (const std::string& line : lines) {
        if (line.empty()) continue;
        events.push_back(parse_event_line(line));
    }
    return post_events(session_id, events);
}

std::optional<Action> Engine::poll_action(const std::string& session_id) {
    std::shared_lock registry_lock(sessions_mutex_);
    Session& session = locate(session_id);
    std::lock_guard session_lock(*session.mutex);
    if (session.pending_actions.empty()) return std::nullopt;
    Action a = session.pending_actions.front();
    session.pending_actions.pop_front();
    return a;
}

std::optional<PeerResponse> Engine::poll_dialogue(const std::string& session_id) {
    std::shared_lock registry_lock(sessions_mutex_);
    Session& session = locate(session_id);
    std::lock_guard session_lock(*session.mutex);
    if (session.pending_dialogue.empty()) return std::nullopt;
    PeerResponse r = session.pending_dialogue.front();
    session.pending_dialogue.pop_front();
    return r;
}

StateVector Engine::session_state(const std::string& session_id) const {
    std::shared_lock registry_lock(sessions_mutex_);
    const Session& session = locate(session_id);
    std::lock_guard session_lock(*session.mutex);
    return session.core->context().state;
}

std::string Engine::session_concept(const std::string& session_id) const {
    std::shared_lock registry_lock(sessions_mutex_);
    const Session& session = locate(session_id);
    std::lock_guard session_lock(*session.mutex);
    return session.core->trace().current_concept;
}

ValidationReport Engine::validate_ontology_text(const std::string& text) const {
    ParsedFile parsed = parse_concept_file(text);
    Ontology candidate;
    candidate.domain_name = ontology_.domain_name;
    for (Concept& c : parsed.concepts) candidate.add_concept(std::move(c));
    return validate_ontology(candidate, strategies_.ids());
}

QTable Engine::snapshot_qtable() const {
    std::lock_guard q_lock(q_mutex_);
    return q_;
}

std::filesystem::path Engine::session_log_path(const std::string& session_id) const {
    return std::filesystem::path(cfg_.persistence_dir) / (session_id + ".events.ndjson");
}

// ---------------------------------------------------------------------------
// HTTP surface

struct HttpService::Impl {
    Engine& engine;
    httplib::Server server;
    std::thread thread;
    bool started = false;

    explicit Impl(Engine& e) : engine(e) { register_routes(); }

    static void reply_json(httplib::Response& res, int status, const ordered_json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static ordered_json error_body(const std::string& message) {
        ordered_json body;
        body["error"] = message;
        return body;
    }

    static ordered_json action_json(const Action& a) {
        ordered_json body;
        body["difficulty_delta"] = a.difficulty_delta;
        body["hint_level"] = a.hint_level;
        body["unlock_tool"] = a.unlock_tool;
        return body;
    }

    void register_routes() {
        server.Post("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            json body;
            try {
                body = json::parse(req.body.empty() ? "{}" : req.body);
            } catch (const json::exception&) {
                reply_json(res, 400, error_body("request body must be JSON"));
                return;
            }
            if (!body.is_object() || !body.contains("student_id") ||
                !body["student_id"].is_string()) {
                reply_json(res, 400, error_body("student_id is required"));
                return;
            }
            try {
                std::string id = engine.create_session(
                    body["student_id"].get<std::string>(), body.value("domain", ""),
                    body.value("starting_concept", ""));
                ordered_json out;
                out["session_id"] = id;
                reply_json(res, 201, out);
            } catch (const UnknownDomainError& e) {
                reply_json(res, 404, error_body(e.what()));
            } catch (const UnknownConceptError& e) {
                reply_json(res, 404, error_body(e.what()));
            }
        });

        server.Post(R"(/v1/sessions/([^/]+)/events)",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        std::vector<std::string> lines;
                        std::istringstream body(req.body);
                        std::string line;
                        while (std::getline(body, line))
                            if (!line.empty()) lines.push_back(line);
                        try {
                            SessionAck ack = engine.post_event_lines(req.matches[1], lines);
                            ordered_json out;
                            out["state"] = ack.state.to_json();
                            out["actions_ready"] = ack.actions_ready;
                            out["dialogue_ready"] = ack.dialogue_ready;
                            reply_json(res, 200, out);
                        } catch (const UnknownSessionError& e) {
                            reply_json(res, 404, error_body(e.what()));
                        } catch (const UnknownConceptError& e) {
                            reply_json(res, 400, error_body(e.what()));
                        } catch (const PipelineError& e) {
                            reply_json(res, 400, error_body(e.what()));
                        }
                    });

        server.Get(R"(/v1/sessions/([^/]+)/state)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       try {
                           ordered_json out;
                           out["session_id"] = std::string(req.matches[1]);
                           out["concept_id"] = engine.session_concept(req.matches[1]);
                           out["state"] = engine.session_state(req.matches[1]).to_json();
                           reply_json(res, 200, out);
                       } catch (const UnknownSessionError& e) {
                           reply_json(res, 404, error_body(e.what()));
                       }
                   });

        server.Get(R"(/v1/sessions/([^/]+)/action)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       try {
                           auto action = engine.poll_action(req.matches[1]);
                           ordered_json out;
                           out["action"] = action ? action_json(*action) : ordered_json(nullptr);
                           reply_json(res, 200, out);
                       } catch (const UnknownSessionError& e) {
                           reply_json(res, 404, error_body(e.what()));
                       }
                   });

        server.Get(R"(/v1/sessions/([^/]+)/dialogue)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       try {
                           auto dialogue = engine.poll_dialogue(req.matches[1]);
                           ordered_json out;
                           if (dialogue) {
                               ordered_json d;
                               d["text"] = dialogue->text;
                               d["strategy_id"] = dialogue->strategy_id;
                               d["validated"] = dialogue->validated;
                               d["fallback_used"] = dialogue->fallback_used;
                               out["dialogue"] = d;
                           } else {
                               out["dialogue"] = nullptr;
                           }
                           reply_json(res, 200, out);
                       } catch (const UnknownSessionError& e) {
                           reply_json(res, 404, error_body(e.what()));
                       }
                   });

        server.Post("/v1/ontology/validate",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        try {
                            ValidationReport report = engine.validate_ontology_text(req.body);
                            reply_json(res, 200, report.to_json());
                        } catch (const ParseError& e) {
                            reply_json(res, 400, error_body(e.what()));
                        } catch (const ConditionParseError& e) {
                            reply_json(res, 400, error_body(e.what()));
                        }
                    });
    }
};

HttpService::HttpService(Engine& engine) : impl_(std::make_unique<Impl>(engine)) {}

HttpService::~HttpService() { stop(); }

int HttpService::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
        if (bound <= 0) return -1;
    } else {
        if (!impl_->server.bind_to_port(host, port)) return -1;
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    impl_->started = true;
    return bound;
}

void HttpService::stop() {
    if (!impl_ || !impl_->started) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
    impl_->started = false;
}

bool HttpService::running() const { return impl_ && impl_->started; }

}  // namespace mentor
