#pragma once
// Evaluates the ontology's pedagogical rules against the live evaluation
// context: applies state updates and emits peer-dialogue dispatches.

#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "mentor/ontology.hpp"
#include "mentor/state.hpp"

namespace mentor {

struct TriggerDispatch {
    std::string strategy_id;
    std::string concept_id;
    std::string session_id;
    StateVector state_snapshot;  // state at the moment the condition held
    std::string fired_rule;      // condition source text
    int64_t at_ms = 0;
    std::string student_query;   // optional; empty on proactive triggers
};

struct RuleConfig {
    int64_t cooldown_ms = 120000;  // per rule per session
};

class UnknownMetricError : public std::runtime_error {
public:
    explicit UnknownMetricError(const std::string& name)
        : std::runtime_error("unknown metric: " + name), metric(name) {}
    std::string metric;
};

class CounterNotUpdatableError : public std::runtime_error {
public:
    explicit CounterNotUpdatableError(const std::string& name)
        : std::runtime_error("counter '" + name + "' is derived and not updatable"),
          counter(name) {}
    std::string counter;
};

// Applies updates left to right, clamping each result to the metric's range.
StateVector apply_updates(StateVector state,
                          const std::vector<std::pair<std::string, UpdateOp>>& updates);

// Tracks last-dispatch times per (session, concept, rule index), in session
// event time.
class CooldownTracker {
public:
    bool ready(const std::string& session_id, const std::string& concept_id, size_t rule_index,
               int64_t now_ms, int64_t cooldown_ms) const;
    void mark(const std::string& session_id, const std::string& concept_id, size_t rule_index,
              int64_t now_ms);
    void clear() { last_fire_.clear(); }

private:
    std::map<std::tuple<std::string, std::string, size_t>, int64_t> last_fire_;
};

struct RuleOutcome {
    StateVector state;
    std::vector<TriggerDispatch> dispatches;
    bool state_changed = false;
    bool learning_rate_updated = false;  // a rule explicitly set learning_rate
};

// Evaluates the current concept's rules in file order. Updates from earlier
// rules are visible to later rules' conditions; a dispatch is recorded only
// when the rule's trigger_peer is outside its cooldown window.
RuleOutcome evaluate_rules(const Ontology& ontology, const std::string& concept_id,
                           const EvaluationContext& ctx, const std::string& session_id,
                           int64_t now_ms, CooldownTracker& cooldowns, const RuleConfig& cfg);

}  // namespace mentor
