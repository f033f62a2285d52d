#include "mentor/pipeline.hpp"

#include <gtest/gtest.h>

#include <random>
#include <string>
#include <vector>

using namespace mentor;

namespace {

RawEvent grid_event(int64_t ms, double score, double time_seconds, int attempts,
                    double confidence, double frustration, bool optional_eval = false) {
    RawEvent e;
    e.session = "s1";
    e.source = EventSource::GridlockRow;
    e.timestamp_ms = ms;
    e.payload = GridlockPayload{score, time_seconds, attempts, confidence, frustration,
                                optional_eval};
    return e;
}

RawEvent sparc_event(int64_t ms, std::string type, std::string data = "") {
    RawEvent e;
    e.session = "s1";
    e.source = EventSource::SparcEvent;
    e.timestamp_ms = ms;
    e.payload = SparcPayload{std::move(type), std::move(data)};
    return e;
}

RawEvent transition_event(int64_t ms, std::string concept_id) {
    RawEvent e;
    e.session = "s1";
    e.source = EventSource::ConceptTransition;
    e.timestamp_ms = ms;
    e.payload = ConceptTransitionPayload{std::move(concept_id)};
    return e;
}

}  // namespace

TEST(WireFormat, RoundTripsEverySource) {
    for (const RawEvent& e :
         {grid_event(120, 0.75, 12.5, 2, 0.6, 0.3, true),
          sparc_event(500, "WordGameEnd", "correct=3;incorrect=1"),
          transition_event(900, "pulmonary_artery")}) {
        std::string line = serialize_event(e);
        EXPECT_EQ(line.find('\n'), std::string::npos);
        RawEvent parsed = parse_event_line(line);
        EXPECT_EQ(serialize_event(parsed), line);
        EXPECT_EQ(parsed.session, e.session);
        EXPECT_EQ(parsed.source, e.source);
        EXPECT_EQ(parsed.timestamp_ms, e.timestamp_ms);
    }
}

TEST(WireFormat, RejectsMalformedLines) {
    EXPECT_THROW(parse_event_line("not json"), WireFormatError);
    EXPECT_THROW(parse_event_line("[1,2]"), WireFormatError);
    EXPECT_THROW(parse_event_line(R"({"session":"s","source":"gridlock_row"})"),
                 WireFormatError);
    EXPECT_THROW(parse_event_line(
                     R"({"session":"s","source":"mouselook","timestamp_ms":0,"payload":{}})"),
                 UnknownSourceError);
    EXPECT_THROW(parse_event_line(
                     R"({"session":"s","source":"gridlock_row","timestamp_ms":-5,"payload":{}})"),
                 WireFormatError);
    EXPECT_THROW(
        parse_event_line(
            R"({"session":"s","source":"sparc_event","timestamp_ms":0,"payload":{"eventData":"x"}})"),
        WireFormatError);
}

TEST(WireFormat, RejectsOutOfRangeGridlockFields) {
    const char* line =
        R"({"session":"s","source":"gridlock_row","timestamp_ms":0,"payload":
            {"score":1.5,"time_seconds":1,"attempts":1,"confidence":0.5,
             "frustration":0.5,"evaluation_optional":false}})";
    EXPECT_THROW(parse_event_line(line), OutOfRangeFieldError);
}

TEST(IngestEvent, AppendsToEmptyTrace) {
    SessionTrace trace;
    ingest_event(trace, grid_event(0, 0.5, 10, 1, 0.5, 0.5));
    EXPECT_EQ(trace.events.size(), 1u);
}

TEST(IngestEvent, RejectsTimestampRegression) {
    SessionTrace trace;
    ingest_event(trace, grid_event(1000, 0.5, 10, 1, 0.5, 0.5));
    EXPECT_THROW(ingest_event(trace, grid_event(999, 0.5, 10, 1, 0.5, 0.5)),
                 TimestampRegressionError);
    // Equal timestamps are allowed (non-decreasing contract).
    EXPECT_NO_THROW(ingest_event(trace, grid_event(1000, 0.6, 10, 2, 0.5, 0.5)));
}

TEST(IngestEvent, PreservesOrderOverManyEvents) {
    SessionTrace trace;
    for (int i = 0; i < 100; ++i)
        ingest_event(trace, grid_event(i * 10, 0.5, 10, 1, 0.5, 0.5));
    ASSERT_EQ(trace.events.size(), 100u);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(trace.events[i].timestamp_ms, i * 10);
}

TEST(GridlockAdapter, DirectMappingsFromReferenceRow) {
    PipelineConfig cfg;
    StateVector prior = cfg.initial_state;
    PartialMetrics m = map_gridlock_row({0.5, 10.05, 3, 0.5, 0.5, false}, prior, cfg);
    EXPECT_NEAR(*m.proficiency, 0.5, 1e-9);
    EXPECT_NEAR(*m.frustration, 0.5, 1e-9);
    EXPECT_NEAR(*m.confidence, 0.5, 1e-9);
    EXPECT_NEAR(*m.effort, 0.6, 1e-9);
}

TEST(GridlockAdapter, ZeroAttemptsZeroEffort) {
    PipelineConfig cfg;
    PartialMetrics m = map_gridlock_row({0.5, 10.0, 0, 0.5, 0.5, false}, StateVector{}, cfg);
    EXPECT_DOUBLE_EQ(*m.effort, 0.0);
}

TEST(GridlockAdapter, EngagementEmaMatchesHandValue) {
    PipelineConfig cfg;
    StateVector prior;
    prior.engagement = 0.5;
    PartialMetrics m = map_gridlock_row({0.5, 10.05, 3, 0.5, 0.5, false}, prior, cfg);
    double instant = 1.0 - 10.05 / 60.0;
    EXPECT_NEAR(*m.engagement, 0.3 * instant + 0.7 * 0.5, 1e-12);
    // Slow rows floor at zero engagement signal.
    PartialMetrics slow = map_gridlock_row({0.5, 240.0, 3, 0.5, 0.5, false}, prior, cfg);
    EXPECT_NEAR(*slow.engagement, 0.7 * 0.5, 1e-12);
}

TEST(GridlockAdapter, OptionalEvaluationRaisesExploration) {
    PipelineConfig cfg;
    StateVector prior;
    prior.exploration = 0.95;
    PartialMetrics m = map_gridlock_row({0.5, 10.0, 1, 0.5, 0.5, true}, prior, cfg);
    EXPECT_DOUBLE_EQ(*m.exploration, 1.0);  // clamped from 1.05
    PartialMetrics unchanged = map_gridlock_row({0.5, 10.0, 1, 0.5, 0.5, false}, prior, cfg);
    EXPECT_DOUBLE_EQ(*unchanged.exploration, 0.95);
}

TEST(GridlockAdapter, OutOfRangeRowRejected) {
    PipelineConfig cfg;
    EXPECT_THROW(map_gridlock_row({-0.1, 10, 1, 0.5, 0.5, false}, StateVector{}, cfg),
                 OutOfRangeFieldError);
    EXPECT_THROW(map_gridlock_row({0.5, -1, 1, 0.5, 0.5, false}, StateVector{}, cfg),
                 OutOfRangeFieldError);
    EXPECT_THROW(map_gridlock_row({0.5, 10, -1, 0.5, 0.5, false}, StateVector{}, cfg),
                 OutOfRangeFieldError);
}

TEST(SparcAdapter, WordGameProficiencyRatio) {
    PipelineConfig cfg;
    PartialMetrics m = map_sparc_events(
        {{1000, {"WordGameEnd", "correct=3;incorrect=1"}}}, StateVector{}, cfg);
    ASSERT_TRUE(m.proficiency.has_value());
    EXPECT_NEAR(*m.proficiency, 0.75, 1e-12);
}

TEST(SparcAdapter, NoWordGameLeavesProficiencyUnset) {
    PipelineConfig cfg;
    PartialMetrics m = map_sparc_events(
        {{0, {"ConversationStep", "partner=peer"}}, {5000, {"DrivingPlayer", "x=1.0;y=2.0"}}},
        StateVector{}, cfg);
    EXPECT_FALSE(m.proficiency.has_value());
}

TEST(SparcAdapter, RepeatedBadWordGamesRaiseFrustration) {
    PipelineConfig cfg;
    StateVector prior;
    prior.frustration = 0.4;
    // Second WordGameEnd lands 30 s after the first with incorrect >= 2.
    PartialMetrics m = map_sparc_events({{0, {"WordGameEnd", "correct=1;incorrect=2"}},
                                         {30000, {"WordGameEnd", "correct=1;incorrect=2"}}},
                                        prior, cfg);
    EXPECT_NEAR(*m.frustration, 0.65, 1e-12);
}

TEST(SparcAdapter, WidelySpacedBadWordGamesDecayInstead) {
    PipelineConfig cfg;
    StateVector prior;
    prior.frustration = 0.4;
    // 120 s gap exceeds the 60 s short period: no bump, 2 minutes of decay.
    PartialMetrics m = map_sparc_events({{0, {"WordGameEnd", "correct=1;incorrect=2"}},
                                         {120000, {"WordGameEnd", "correct=1;incorrect=2"}}},
                                        prior, cfg);
    EXPECT_NEAR(*m.frustration, 0.4 - 0.05 * 2.0, 1e-12);
}

TEST(SparcAdapter, FrustrationDecaysPerMinute) {
    PipelineConfig cfg;
    StateVector prior;
    prior.frustration = 0.6;
    PartialMetrics m = map_sparc_events(
        {{0, {"ConversationStep", ""}}, {60000, {"ConversationStep", ""}}}, prior, cfg);
    EXPECT_NEAR(*m.frustration, 0.55, 1e-12);
}

TEST(SparcAdapter, DialogueEffortCountsAndResets) {
    PipelineConfig cfg;
    SparcAdapter adapter;
    StateVector prior;
    auto step = [&](int64_t ms, const char* type, const char* data, size_t idx) {
        auto out = adapter.map_event({type, data}, ms, prior, cfg, idx);
        return *out.metrics.effort;
    };
    EXPECT_NEAR(step(0, "ConversationStep", "", 0), 0.1, 1e-12);
    EXPECT_NEAR(step(1000, "ConversationStep", "", 1), 0.2, 1e-12);
    EXPECT_NEAR(step(2000, "ConversationStep", "", 2), 0.3, 1e-12);
    // Any other SPARC event ends the dialogue run.
    EXPECT_NEAR(step(3000, "WordGameEnd", "correct=1;incorrect=0", 3), 0.0, 1e-12);
    EXPECT_NEAR(step(4000, "ConversationStep", "", 4), 0.1, 1e-12);
}

TEST(SparcAdapter, ExplorationCountsUniqueCells) {
    PipelineConfig cfg;
    SparcAdapter adapter;
    StateVector prior;
    auto drive = [&](int64_t ms, const char* data, size_t idx) {
        return *adapter.map_event({"DrivingPlayer", data}, ms, prior, cfg, idx).metrics.exploration;
    };
    EXPECT_NEAR(drive(0, "x=0.2;y=0.8", 0), 0.05, 1e-12);
    // Same integer cell: no new exploration.
    EXPECT_NEAR(drive(1000, "x=0.9;y=0.1", 1), 0.05, 1e-12);
    EXPECT_NEAR(drive(2000, "x=5.5;y=-2.5", 2), 0.10, 1e-12);
}

TEST(SparcAdapter, EngagementFromEventWindow) {
    PipelineConfig cfg;
    SparcAdapter adapter;
    StateVector prior;
    double last = 0.0;
    for (int i = 0; i < 4; ++i) {
        auto out = adapter.map_event({"ConversationStep", ""}, i * 1000, prior, cfg, i);
        last = *out.metrics.engagement;
    }
    EXPECT_NEAR(last, 0.4, 1e-12);  // 4 events within 120 s
    // 10 minutes later only the new event remains in the window.
    auto out = adapter.map_event({"ConversationStep", ""}, 600000, prior, cfg, 4);
    EXPECT_NEAR(*out.metrics.engagement, 0.1, 1e-12);
}

TEST(SparcAdapter, UnparseableDataCarriesEventIndex) {
    PipelineConfig cfg;
    try {
        map_sparc_events({{0, {"ConversationStep", ""}},
                          {1000, {"ConversationStep", ""}},
                          {2000, {"WordGameEnd", "banana"}}},
                         StateVector{}, cfg);
        FAIL() << "expected UnparseableEventDataError";
    } catch (const UnparseableEventDataError& e) {
        EXPECT_EQ(e.event_index, 2u);
    }
    EXPECT_THROW(map_sparc_events({{0, {"DrivingPlayer", "x=oops;y=1"}}}, StateVector{}, cfg),
                 UnparseableEventDataError);
}

TEST(SessionPipeline, FirstVectorReferenceRowGolden) {
    SessionPipeline p(PipelineConfig{}, "s1", "student-1", "pulmonary_artery");
    p.ingest(grid_event(0, 0.5, 10.05, 3, 0.5, 0.5));
    const StateVector& s = p.compute_state();
    EXPECT_NEAR(s.proficiency, 0.5, 1e-9);
    EXPECT_NEAR(s.learning_rate, 0.1, 1e-9);
    EXPECT_NEAR(s.frustration, 0.5, 1e-9);
    EXPECT_NEAR(s.effort, 0.6, 1e-9);
    EXPECT_NEAR(s.confidence, 0.5, 1e-9);
    ASSERT_EQ(p.trace().state_history.size(), 1u);
}

TEST(SessionPipeline, RepeatedProficiencyZeroesLearningRate) {
    SessionPipeline p(PipelineConfig{}, "s1", "student-1", "c");
    p.ingest(grid_event(0, 0.5, 10, 1, 0.5, 0.5));
    p.compute_state();
    p.ingest(grid_event(10000, 0.5, 10, 2, 0.5, 0.5));
    const StateVector& s = p.compute_state();
    EXPECT_DOUBLE_EQ(s.learning_rate, 0.0);
}

TEST(SessionPipeline, OutgoingVectorHasExactlyTheEightKeys) {
    SessionPipeline p(PipelineConfig{}, "s1", "student-1", "c");
    p.ingest(grid_event(0, 0.5, 10.05, 3, 0.5, 0.5));
    nlohmann::ordered_json j = p.compute_state().to_json();
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    EXPECT_EQ(keys, (std::vector<std::string>{"proficiency", "learning_rate", "frustration",
                                              "engagement", "effort", "confidence",
                                              "exploration", "metacognition"}));
}

TEST(SessionPipeline, MetacognitionTracksHelpSeeking) {
    SessionPipeline p(PipelineConfig{}, "s1", "student-1", "c");
    p.ingest(grid_event(0, 0.5, 10, 1, 0.5, 0.5, true));
    p.ingest(grid_event(10000, 0.5, 10, 2, 0.5, 0.5, true));
    p.ingest(sparc_event(20000, "ConversationStep", "partner=mentor"));
    const StateVector& s = p.compute_state();
    EXPECT_NEAR(s.metacognition, 0.6, 1e-12);  // 3 help-seeking signals / 5
    // Non-helper partners do not count.
    p.ingest(sparc_event(30000, "ConversationStep", "partner=peer"));
    EXPECT_NEAR(p.compute_state().metacognition, 0.6, 1e-12);
}

TEST(SessionPipeline, EmptyTraceThrowsNoEvents) {
    SessionPipeline p(PipelineConfig{}, "s1", "student-1", "c");
    EXPECT_THROW(p.compute_state(), NoEventsError);
}

TEST(SessionPipeline, ConceptTransitionResetsCountersWithoutHistoryEntry) {
    SessionPipeline p(PipelineConfig{}, "s1", "student-1", "first");
    p.ingest(grid_event(0, 0.2, 10, 3, 0.5, 0.5));  // low score counts an error
    p.compute_state();
    EXPECT_EQ(p.context().errors, 1);
    EXPECT_EQ(p.context().attempts, 3);
    p.ingest(transition_event(5000, "second"));
    p.compute_state();
    EXPECT_EQ(p.trace().current_concept, "second");
    EXPECT_EQ(p.context().errors, 0);
    EXPECT_EQ(p.context().attempts, 0);
    EXPECT_EQ(p.trace().state_history.size(), 1u);
}

TEST(SessionPipeline, EqualTimestampsCoalesceHistoryEntries) {
    SessionPipeline p(PipelineConfig{}, "s1", "student-1", "c");
    p.ingest(grid_event(1000, 0.5, 10, 1, 0.5, 0.5));
    p.ingest(sparc_event(1000, "ConversationStep", ""));
    p.compute_state();
    ASSERT_EQ(p.trace().state_history.size(), 1u);
    // History timestamps stay strictly increasing.
    p.ingest(grid_event(2000, 0.6, 10, 2, 0.5, 0.5));
    p.compute_state();
    ASSERT_EQ(p.trace().state_history.size(), 2u);
    EXPECT_LT(p.trace().state_history[0].first, p.trace().state_history[1].first);
    // Coalesced first entry still references the configured prior.
    EXPECT_NEAR(p.trace().state_history[1].second.learning_rate, 0.1, 1e-9);
}

TEST(SessionPipeline, EffortMonotoneWithinAttemptWindow) {
    SessionPipeline p(PipelineConfig{}, "s1", "student-1", "c");
    double prev = -1.0;
    for (int attempts = 1; attempts <= 8; ++attempts) {
        p.ingest(grid_event(attempts * 1000, 0.5, 10, attempts, 0.5, 0.5));
        double effort = p.compute_state().effort;
        EXPECT_GE(effort, prev);
        prev = effort;
    }
    EXPECT_DOUBLE_EQ(prev, 1.0);
}

TEST(SessionPipeline, AbsorbRuleStateRecomputesLearningRate) {
    SessionPipeline p(PipelineConfig{}, "s1", "student-1", "c");
    p.ingest(grid_event(0, 0.5, 10.05, 3, 0.5, 0.5));
    StateVector s = p.compute_state();

    StateVector updated = s;
    updated.engagement = clamp01(updated.engagement - 0.05);
    p.absorb_rule_state(updated, false);
    EXPECT_DOUBLE_EQ(p.trace().state_history.back().second.engagement, updated.engagement);
    EXPECT_NEAR(p.context().state.learning_rate, 0.1, 1e-9);

    StateVector forced = p.context().state;
    forced.learning_rate = 0.5;
    p.absorb_rule_state(forced, true);
    EXPECT_DOUBLE_EQ(p.context().state.learning_rate, 0.5);
}

TEST(SessionPipeline, RandomEventFuzzKeepsMetricsInRange) {
    std::mt19937 rng(4242);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> kind(0, 5);
    std::uniform_int_distribution<int> gap(0, 90000);
    std::uniform_int_distribution<int> small(0, 5);

    int total_events = 0;
    for (int session = 0; session < 20; ++session) {
        SessionPipeline p(PipelineConfig{}, "s" + std::to_string(session), "st", "c");
        int64_t ts = 0;
        for (int i = 0; i < 500; ++i) {
            ts += gap(rng);
            switch (kind(rng)) {
                case 0:
                case 1:
                    p.ingest(grid_event(ts, unit(rng), unit(rng) * 300.0, small(rng), unit(rng),
                                        unit(rng), unit(rng) < 0.2));
                    break;
                case 2:
                    p.ingest(sparc_event(ts, "WordGameEnd",
                                         "correct=" + std::to_string(small(rng)) +
                                             ";incorrect=" + std::to_string(small(rng))));
                    break;
                case 3:
                    p.ingest(sparc_event(ts, "ConversationStep",
                                         unit(rng) < 0.3 ? "partner=mentor" : "partner=peer"));
                    break;
                case 4:
                    p.ingest(sparc_event(ts, "DrivingPlayer",
                                         "x=" + std::to_string(unit(rng) * 40.0 - 20.0) +
                                             ";y=" + std::to_string(unit(rng) * 40.0 - 20.0)));
                    break;
                default:
                    p.ingest(transition_event(ts, "c" + std::to_string(small(rng))));
                    break;
            }
            ++total_events;
        }
        p.compute_state();
        for (const auto& [t, s] : p.trace().state_history) {
            (void)t;
            for (auto name : StateVector::metric_names()) {
                auto [lo, hi] = metric_range(name);
                ASSERT_GE(s.get(name), lo) << name;
                ASSERT_LE(s.get(name), hi) << name;
            }
        }
    }
    EXPECT_EQ(total_events, 10000);
}
