#include "mentor/service.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

using namespace mentor;
using nlohmann::json;

namespace {

RawEvent grid_event(int64_t ms, double score, double time_seconds, int attempts,
                    double confidence, double frustration, bool optional_eval = false) {
    RawEvent e;
    e.session = "client-supplied";
    e.source = EventSource::GridlockRow;
    e.timestamp_ms = ms;
    e.payload = GridlockPayload{score, time_seconds, attempts, confidence, frustration,
                                optional_eval};
    return e;
}

RawEvent sparc_event(int64_t ms, std::string type, std::string data = "") {
    RawEvent e;
    e.session = "client-supplied";
    e.source = EventSource::SparcEvent;
    e.timestamp_ms = ms;
    e.payload = SparcPayload{std::move(type), std::move(data)};
    return e;
}

RawEvent transition_event(int64_t ms, std::string concept_id) {
    RawEvent e;
    e.session = "client-supplied";
    e.source = EventSource::ConceptTransition;
    e.timestamp_ms = ms;
    e.payload = ConceptTransitionPayload{std::move(concept_id)};
    return e;
}

std::vector<RawEvent> frustration_spike(int64_t start_ms = 0) {
    std::vector<RawEvent> events;
    for (int i = 0; i < 4; ++i)
        events.push_back(grid_event(start_ms + i * 10000, 0.2, 12.0, i + 1, 0.4, 0.85));
    return events;
}

// Deterministic mixed-source workload touching both adapters and a concept
// switch.
std::vector<RawEvent> mixed_workload(int n_events) {
    std::vector<RawEvent> events;
    int64_t ts = 0;
    for (int i = 0; i < n_events; ++i) {
        ts += 3000 + (i % 7) * 1000;
        switch (i % 5) {
            case 0:
                events.push_back(grid_event(ts, (i % 10) / 10.0, 10.0 + i % 30, i % 4,
                                            0.5, (i % 8) / 10.0, i % 3 == 0));
                break;
            case 1:
                events.push_back(sparc_event(ts, "WordGameEnd",
                                             "correct=" + std::to_string(i % 4) +
                                                 ";incorrect=" + std::to_string((i + 1) % 3)));
                break;
            case 2:
                events.push_back(sparc_event(ts, "ConversationStep",
                                             i % 2 ? "partner=mentor" : "partner=peer"));
                break;
            case 3:
                events.push_back(sparc_event(ts, "DrivingPlayer",
                                             "x=" + std::to_string(i % 13) +
                                                 ".5;y=" + std::to_string(i % 9) + ".5"));
                break;
            default:
                events.push_back(transition_event(
                    ts, i % 2 ? "heart_anatomy" : "pulmonary_artery"));
                break;
        }
    }
    return events;
}

}  // namespace

class ServiceTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = std::filesystem::path(::testing::TempDir()) /
               (std::string("svc_") + info->test_suite_name() + "_" + info->name());
        std::filesystem::remove_all(dir_);
        std::filesystem::create_directories(dir_);
        cfg_.ontology_dir = std::string(MENTOR_DATA_DIR) + "/ontology/biology";
        cfg_.persistence_dir = (dir_ / "sessions").string();
        cfg_.default_concept = "pulmonary_artery";
    }

    void TearDown() override { std::filesystem::remove_all(dir_); }

    std::filesystem::path dir_;
    EngineConfig cfg_;
};

TEST_F(ServiceTest, CreateSessionStartsClean) {
    Engine engine(cfg_);
    std::string id = engine.create_session("student-1", "biology", "");
    EXPECT_EQ(id.rfind("s", 0), 0u);
    EXPECT_EQ(engine.session_concept(id), "pulmonary_artery");
    EXPECT_EQ(engine.session_state(id).to_json(), cfg_.pipeline.initial_state.to_json());
    EXPECT_FALSE(engine.poll_action(id).has_value());
    EXPECT_FALSE(engine.poll_dialogue(id).has_value());
    EXPECT_TRUE(std::filesystem::exists(engine.session_log_path(id)));
}

TEST_F(ServiceTest, SessionIdsAreDistinct) {
    Engine engine(cfg_);
    std::string a = engine.create_session("student-1", "", "");
    std::string b = engine.create_session("student-1", "", "");
    EXPECT_NE(a, b);
}

TEST_F(ServiceTest, UnknownInputsAreRejected) {
    Engine engine(cfg_);
    EXPECT_THROW(engine.create_session("student-1", "chemistry", ""), UnknownDomainError);
    EXPECT_THROW(engine.create_session("student-1", "", "phlogiston"), UnknownConceptError);
    EXPECT_THROW(engine.post_events("s999-0", {grid_event(0, 0.5, 10, 1, 0.5, 0.5)}),
                 UnknownSessionError);
    EXPECT_THROW(engine.poll_action("s999-0"), UnknownSessionError);
    EXPECT_THROW(engine.poll_dialogue("s999-0"), UnknownSessionError);
    EXPECT_THROW(engine.session_state("s999-0"), UnknownSessionError);
    EngineConfig bad = cfg_;
    bad.ontology_dir = "";
    EXPECT_THROW(Engine{bad}, ConfigError);
}

TEST_F(ServiceTest, ReferenceRowAcksMappedState) {
    Engine engine(cfg_);
    std::string id = engine.create_session("student-1", "", "");
    SessionAck ack = engine.post_events(id, {grid_event(0, 0.5, 10.05, 3, 0.5, 0.5)});
    EXPECT_NEAR(ack.state.proficiency, 0.5, 1e-9);
    EXPECT_NEAR(ack.state.learning_rate, 0.1, 1e-9);
    EXPECT_EQ(ack.actions_ready, 1);
}

TEST_F(ServiceTest, FrustrationSpikeQueuesDialogue) {
    Engine engine(cfg_);
    std::string id = engine.create_session("student-1", "", "");
    SessionAck ack = engine.post_events(id, frustration_spike());
    EXPECT_GE(ack.dialogue_ready, 1);
    auto dialogue = engine.poll_dialogue(id);
    ASSERT_TRUE(dialogue.has_value());
    EXPECT_EQ(dialogue->strategy_id, "encourage_and_reframe");
    EXPECT_TRUE(dialogue->validated || dialogue->fallback_used);
    EXPECT_FALSE(dialogue->text.empty());
    EXPECT_FALSE(engine.poll_dialogue(id).has_value());

    // Within the cooldown window the same rule stays quiet.
    SessionAck again = engine.post_events(id, {grid_event(40000, 0.2, 12.0, 5, 0.4, 0.85)});
    EXPECT_EQ(again.dialogue_ready, 0);
}

TEST_F(ServiceTest, EmptyBatchChangesNothing) {
    Engine engine(cfg_);
    std::string id = engine.create_session("student-1", "", "");
    engine.post_events(id, {grid_event(0, 0.5, 10, 1, 0.5, 0.5)});
    engine.poll_action(id);
    auto before = engine.session_state(id).to_json();
    SessionAck ack = engine.post_events(id, {});
    EXPECT_EQ(ack.state.to_json(), before);
    EXPECT_EQ(ack.actions_ready, 0);
    EXPECT_EQ(ack.dialogue_ready, 0);
    EXPECT_FALSE(engine.poll_action(id).has_value());
}

TEST_F(ServiceTest, OneActionPerNonEmptyBatch) {
    Engine engine(cfg_);
    std::string id = engine.create_session("student-1", "", "");
    SessionAck first = engine.post_events(
        id, {grid_event(0, 0.5, 10, 1, 0.5, 0.5), grid_event(5000, 0.6, 11, 2, 0.5, 0.5),
             grid_event(9000, 0.7, 12, 3, 0.5, 0.5)});
    EXPECT_EQ(first.actions_ready, 1);
    EXPECT_TRUE(engine.poll_action(id).has_value());
    EXPECT_FALSE(engine.poll_action(id).has_value());
    SessionAck second = engine.post_events(id, {grid_event(15000, 0.5, 10, 1, 0.5, 0.5)});
    EXPECT_EQ(second.actions_ready, 1);
}

TEST_F(ServiceTest, TutorLearnsAcrossBatches) {
    Engine engine(cfg_);
    std::string id = engine.create_session("student-1", "", "");
    auto total_visits = [&engine] {
        QTable q = engine.snapshot_qtable();
        int64_t total = 0;
        for (int s = 0; s < kNumStates; ++s)
            for (int a = 0; a < kNumActions; ++a) total += q.visits(s, a);
        return total;
    };
    engine.post_events(id, {grid_event(0, 0.5, 10, 1, 0.5, 0.5)});
    EXPECT_EQ(total_visits(), 0);  // nothing to pair yet
    engine.post_events(id, {grid_event(10000, 0.8, 10, 1, 0.6, 0.4)});
    EXPECT_EQ(total_visits(), 1);  // first action paired with observed delta
    engine.post_events(id, {grid_event(20000, 0.9, 10, 1, 0.7, 0.3)});
    EXPECT_EQ(total_visits(), 2);
}

TEST_F(ServiceTest, EventLinesParseBeforeAnyStateChange) {
    Engine engine(cfg_);
    std::string id = engine.create_session("student-1", "", "");
    auto before = engine.session_state(id).to_json();
    std::string good = serialize_event(grid_event(0, 0.5, 10, 1, 0.5, 0.5));
    EXPECT_THROW(engine.post_event_lines(id, {good, "{broken"}), PipelineError);
    EXPECT_EQ(engine.session_state(id).to_json(), before);
    SessionAck ack = engine.post_event_lines(id, {good, ""});
    EXPECT_EQ(ack.actions_ready, 1);
}

TEST_F(ServiceTest, LogRewritesSessionFieldAndReplays) {
    Engine engine(cfg_);
    std::string id = engine.create_session("student-1", "", "");
    engine.post_events(id, {grid_event(0, 0.5, 10, 1, 0.5, 0.5),
                            sparc_event(4000, "WordGameEnd", "correct=3;incorrect=1")});
    std::ifstream log(engine.session_log_path(id));
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
        RawEvent ev = parse_event_line(line);
        EXPECT_EQ(ev.session, id);  // path parameter is authoritative
        ++lines;
    }
    EXPECT_EQ(lines, 2);
}

TEST_F(ServiceTest, ReplayReconstructsLiveStateExactly) {
    Engine engine(cfg_);
    std::string id = engine.create_session("student-7", "", "");
    auto events = mixed_workload(60);
    // Live path: several batches, dispatches routed, tutor acting.
    for (size_t i = 0; i < events.size(); i += 7) {
        std::vector<RawEvent> batch(events.begin() + i,
                                    events.begin() + std::min(i + 7, events.size()));
        engine.post_events(id, batch);
    }
    auto live_state = engine.session_state(id).to_json().dump();
    std::string live_concept = engine.session_concept(id);

    ReplayResult replay = replay_log(engine.session_log_path(id), cfg_, engine.ontology());
    EXPECT_EQ(replay.trace.state_history.back().second.to_json().dump(), live_state);
    EXPECT_EQ(replay.trace.current_concept, live_concept);
    EXPECT_EQ(replay.trace.events.size(), events.size());

    // Replay is itself deterministic.
    ReplayResult again = replay_log(engine.session_log_path(id), cfg_, engine.ontology());
    ASSERT_EQ(again.trace.state_history.size(), replay.trace.state_history.size());
    for (size_t i = 0; i < replay.trace.state_history.size(); ++i) {
        EXPECT_EQ(again.trace.state_history[i].first, replay.trace.state_history[i].first);
        EXPECT_EQ(again.trace.state_history[i].second.to_json().dump(),
                  replay.trace.state_history[i].second.to_json().dump());
    }
}

TEST_F(ServiceTest, ReplaySurvivesEngineRestart) {
    std::string log_path, live_state;
    {
        Engine engine(cfg_);
        std::string id = engine.create_session("student-1", "", "");
        engine.post_events(id, mixed_workload(25));
        log_path = engine.session_log_path(id).string();
        live_state = engine.session_state(id).to_json().dump();
    }
    Engine rebooted(cfg_);
    ReplayResult replay = replay_log(log_path, cfg_, rebooted.ontology());
    EXPECT_EQ(replay.trace.state_history.back().second.to_json().dump(), live_state);
}

TEST_F(ServiceTest, TruncatedLogReportsLineNumber) {
    std::filesystem::path log = dir_ / "manual.events.ndjson";
    {
        std::ofstream out(log);
        out << serialize_event(grid_event(0, 0.5, 10, 1, 0.5, 0.5)) << "\n";
        out << serialize_event(grid_event(10000, 0.6, 10, 2, 0.5, 0.5)) << "\n";
        out << R"({"session":"manual","source":"gridlock_row","timestamp_ms":20000)";
    }
    Engine engine(cfg_);
    try {
        replay_log(log, cfg_, engine.ontology());
        FAIL() << "expected CorruptLogError";
    } catch (const CorruptLogError& e) {
        EXPECT_EQ(e.line, 3u);
    }
}

TEST_F(ServiceTest, EmptyLogYieldsEmptyHistory) {
    std::filesystem::path log = dir_ / "empty.events.ndjson";
    std::ofstream(log).close();
    Engine engine(cfg_);
    ReplayResult replay = replay_log(log, cfg_, engine.ontology());
    EXPECT_TRUE(replay.trace.events.empty());
    EXPECT_TRUE(replay.trace.state_history.empty());
    EXPECT_EQ(replay.trace.current_concept, cfg_.default_concept);
    EXPECT_THROW(replay_log(dir_ / "missing.events.ndjson", cfg_, engine.ontology()),
                 CorruptLogError);
}

TEST_F(ServiceTest, SessionsStayIsolated) {
    Engine engine(cfg_);
    std::string a = engine.create_session("student-a", "", "");
    std::string b = engine.create_session("student-b", "", "");
    engine.post_events(a, frustration_spike());
    engine.post_events(b, {sparc_event(1000, "WordGameEnd", "correct=4;incorrect=0")});

    EXPECT_NEAR(engine.session_state(a).frustration, 0.85, 1e-9);
    EXPECT_NEAR(engine.session_state(b).proficiency, 1.0, 1e-9);
    EXPECT_TRUE(engine.poll_dialogue(a).has_value());
    EXPECT_FALSE(engine.poll_dialogue(b).has_value());

    // Interleaving matches a serial single-session run.
    Engine solo(cfg_);
    std::string only = solo.create_session("student-a", "", "");
    solo.post_events(only, frustration_spike());
    EXPECT_EQ(solo.session_state(only).to_json(), engine.session_state(a).to_json());
}

TEST_F(ServiceTest, IdenticalRunsProduceIdenticalActions) {
    auto run = [this](std::vector<int>* actions) {
        Engine engine(cfg_);
        std::string id = engine.create_session("student-1", "", "");
        auto events = mixed_workload(30);
        for (size_t i = 0; i < events.size(); i += 5) {
            std::vector<RawEvent> batch(events.begin() + i,
                                        events.begin() + std::min(i + 5, events.size()));
            engine.post_events(id, batch);
            while (auto a = engine.poll_action(id)) actions->push_back(action_index(*a));
        }
        return engine.session_state(id).to_json().dump();
    };
    std::vector<int> actions1, actions2;
    std::string state1 = run(&actions1);
    std::string state2 = run(&actions2);
    EXPECT_EQ(actions1, actions2);
    EXPECT_EQ(state1, state2);
    EXPECT_EQ(actions1.size(), 6u);
}

TEST_F(ServiceTest, RejectsTransitionToUnknownConceptWithoutLogging) {
    Engine engine(cfg_);
    std::string id = engine.create_session("student-1", "", "");
    engine.post_events(id, {grid_event(0, 0.5, 10, 1, 0.5, 0.5)});
    EXPECT_THROW(engine.post_events(id, {transition_event(5000, "phlogiston")}),
                 UnknownConceptError);
    // The bad event never reached the log; replay stays clean.
    ReplayResult replay = replay_log(engine.session_log_path(id), cfg_, engine.ontology());
    EXPECT_EQ(replay.trace.events.size(), 1u);
}

TEST_F(ServiceTest, ValidateOntologyTextReportsFindings) {
    Engine engine(cfg_);
    ValidationReport ok = engine.validate_ontology_text(R"([
        {"concept_id": "a", "display_name": "A", "description": "d",
         "prerequisites": [], "difficulty_level": 0.5, "associated_media": ["m.png"],
         "pedagogical_rules": {}, "llm_grounding_info": {"key_facts": ["a real fact"],
         "common_misconceptions": []}}
    ])");
    EXPECT_TRUE(ok.ok());
    ValidationReport bad = engine.validate_ontology_text(R"([
        {"concept_id": "a", "display_name": "A", "description": "d",
         "prerequisites": ["ghost"], "difficulty_level": 0.5, "associated_media": ["m.png"],
         "pedagogical_rules": {}, "llm_grounding_info": {"key_facts": ["a real fact"],
         "common_misconceptions": []}}
    ])");
    EXPECT_FALSE(bad.ok());
    bool found = false;
    for (const Finding& f : bad.findings)
        if (f.code == "dangling_prerequisite") found = true;
    EXPECT_TRUE(found);
}

class HttpServiceTest : public ServiceTest {
protected:
    void SetUp() override {
        ServiceTest::SetUp();
        engine_ = std::make_unique<Engine>(cfg_);
        service_ = std::make_unique<HttpService>(*engine_);
        port_ = service_->start("127.0.0.1", 0);
        ASSERT_GT(port_, 0);
        client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
        client_->set_connection_timeout(5, 0);
    }

    void TearDown() override {
        service_->stop();
        service_.reset();
        engine_.reset();
        ServiceTest::TearDown();
    }

    std::string create_session_http() {
        auto res = client_->Post("/v1/sessions", R"({"student_id": "kid-1"})",
                                 "application/json");
        EXPECT_TRUE(res && res->status == 201);
        return json::parse(res->body)["session_id"].get<std::string>();
    }

    std::unique_ptr<Engine> engine_;
    std::unique_ptr<HttpService> service_;
    std::unique_ptr<httplib::Client> client_;
    int port_ = 0;
};

TEST_F(HttpServiceTest, SessionLifecycleOverHttp) {
    EXPECT_TRUE(service_->running());
    std::string id = create_session_http();

    std::string body = serialize_event(grid_event(0, 0.5, 10.05, 3, 0.5, 0.5)) + "\n" +
                       serialize_event(grid_event(8000, 0.6, 9.0, 1, 0.6, 0.4)) + "\n";
    auto posted = client_->Post("/v1/sessions/" + id + "/events", body, "application/x-ndjson");
    ASSERT_TRUE(posted);
    EXPECT_EQ(posted->status, 200);
    json ack = json::parse(posted->body);
    EXPECT_EQ(ack["actions_ready"], 1);
    EXPECT_EQ(ack["state"].size(), 8u);

    auto state = client_->Get("/v1/sessions/" + id + "/state");
    ASSERT_TRUE(state);
    EXPECT_EQ(state->status, 200);
    json s = json::parse(state->body);
    EXPECT_EQ(s["session_id"], id);
    EXPECT_EQ(s["concept_id"], "pulmonary_artery");
    EXPECT_NEAR(s["state"]["proficiency"].get<double>(), 0.6, 1e-9);

    auto action = client_->Get("/v1/sessions/" + id + "/action");
    ASSERT_TRUE(action);
    json a = json::parse(action->body);
    ASSERT_FALSE(a["action"].is_null());
    EXPECT_TRUE(a["action"].contains("difficulty_delta"));
    EXPECT_TRUE(a["action"].contains("hint_level"));
    EXPECT_TRUE(a["action"].contains("unlock_tool"));
    auto drained = client_->Get("/v1/sessions/" + id + "/action");
    EXPECT_TRUE(json::parse(drained->body)["action"].is_null());

    auto quiet = client_->Get("/v1/sessions/" + id + "/dialogue");
    EXPECT_TRUE(json::parse(quiet->body)["dialogue"].is_null());
}

TEST_F(HttpServiceTest, DialogueDeliveredOverHttp) {
    std::string id = create_session_http();
    std::string body;
    for (const RawEvent& ev : frustration_spike()) body += serialize_event(ev) + "\n";
    auto posted = client_->Post("/v1/sessions/" + id + "/events", body, "application/x-ndjson");
    ASSERT_TRUE(posted);
    json ack = json::parse(posted->body);
    EXPECT_GE(ack["dialogue_ready"].get<int>(), 1);
    auto res = client_->Get("/v1/sessions/" + id + "/dialogue");
    json d = json::parse(res->body);
    ASSERT_FALSE(d["dialogue"].is_null());
    EXPECT_EQ(d["dialogue"]["strategy_id"], "encourage_and_reframe");
    EXPECT_FALSE(d["dialogue"]["text"].get<std::string>().empty());
}

TEST_F(HttpServiceTest, ErrorStatusesAreMeaningful) {
    auto no_student = client_->Post("/v1/sessions", "{}", "application/json");
    EXPECT_EQ(no_student->status, 400);
    auto bad_json = client_->Post("/v1/sessions", "{oops", "application/json");
    EXPECT_EQ(bad_json->status, 400);
    auto bad_domain = client_->Post(
        "/v1/sessions", R"({"student_id": "kid", "domain": "chemistry"})", "application/json");
    EXPECT_EQ(bad_domain->status, 404);
    auto bad_concept = client_->Post(
        "/v1/sessions", R"({"student_id": "kid", "starting_concept": "phlogiston"})",
        "application/json");
    EXPECT_EQ(bad_concept->status, 404);

    auto ghost_post = client_->Post("/v1/sessions/s999-0/events", "", "application/x-ndjson");
    EXPECT_EQ(ghost_post->status, 404);
    auto ghost_state = client_->Get("/v1/sessions/s999-0/state");
    EXPECT_EQ(ghost_state->status, 404);
    auto ghost_action = client_->Get("/v1/sessions/s999-0/action");
    EXPECT_EQ(ghost_action->status, 404);
    auto ghost_dialogue = client_->Get("/v1/sessions/s999-0/dialogue");
    EXPECT_EQ(ghost_dialogue->status, 404);

    std::string id = create_session_http();
    auto malformed = client_->Post("/v1/sessions/" + id + "/events", "{broken\n",
                                   "application/x-ndjson");
    EXPECT_EQ(malformed->status, 400);
}

TEST_F(HttpServiceTest, OntologyValidateEndpoint) {
    auto bad_syntax = client_->Post("/v1/ontology/validate", "[{", "application/json");
    EXPECT_EQ(bad_syntax->status, 400);

    std::string dangling = R"([
        {"concept_id": "a", "display_name": "A", "description": "d",
         "prerequisites": ["ghost"], "difficulty_level": 0.5, "associated_media": ["m.png"],
         "pedagogical_rules": {}, "llm_grounding_info": {"key_facts": ["a real fact"],
         "common_misconceptions": []}}
    ])";
    auto report = client_->Post("/v1/ontology/validate", dangling, "application/json");
    ASSERT_TRUE(report);
    EXPECT_EQ(report->status, 200);
    json doc = json::parse(report->body);
    EXPECT_GE(doc["errors"].get<int>(), 1);
}

TEST_F(HttpServiceTest, StopIsIdempotent) {
    EXPECT_TRUE(service_->running());
    service_->stop();
    EXPECT_FALSE(service_->running());
    service_->stop();
    EXPECT_FALSE(service_->running());
}
