#include "mentor/rules.hpp"

#include <algorithm>

#include "mentor/condition.hpp"

namespace mentor {

StateVector apply_updates(StateVector state,
                          const std::vector<std::pair<std::string, UpdateOp>>& updates) {
    for (const auto& [name, op] : updates) {
        if (is_counter(name)) throw CounterNotUpdatableError(name);
        if (!is_metric(name)) throw UnknownMetricError(name);
        double cur = state.get(name);
        double next = cur;
        switch (op.kind) {
            case UpdateOp::Kind::Add: next = cur + op.value; break;
            case UpdateOp::Kind::Sub: next = cur - op.value; break;
            case UpdateOp::Kind::Set: next = op.value; break;
        }
        auto [lo, hi] = metric_range(name);
        state.set(name, std::clamp(next, lo, hi));
    }
    return state;
}

bool CooldownTracker::ready(const std::string& session_id, const std::string& concept_id,
                            size_t rule_index, int64_t now_ms, int64_t cooldown_ms) const {
    auto it = last_fire_.find({session_id, concept_id, rule_index});
    if (it == last_fire_.end()) return true;
    return now_ms - it->second >= cooldown_ms;
}

void CooldownTracker::mark(const std::string& session_id, const std::string& concept_id,
                           size_t rule_index, int64_t now_ms) {
    last_fire_[{session_id, concept_id, rule_index}] = now_ms;
}

RuleOutcome evaluate_rules(const Ontology& ontology, const std::string& concept_id,
                           const EvaluationContext& ctx, const std::string& session_id,
                           int64_t now_ms, CooldownTracker& cooldowns, const RuleConfig& cfg) {
    const Concept* node = ontology.find(concept_id);
    if (!node) throw UnknownConceptError(concept_id);

    RuleOutcome out;
    out.state = ctx.state;
    EvaluationContext rolling = ctx;  // later rules see earlier rules' updates
    for (size_t i = 0; i < node->pedagogical_rules.size(); ++i) {
        const PedagogicalRule& rule = node->pedagogical_rules[i];
        if (!evaluate(rule.condition, rolling)) continue;
        if (rule.trigger_peer && cooldowns.ready(session_id, concept_id, i, now_ms,
                                                 cfg.cooldown_ms)) {
            TriggerDispatch d;
            d.strategy_id = *rule.trigger_peer;
            d.concept_id = concept_id;
            d.session_id = session_id;
            d.state_snapshot = rolling.state;  // pre-update snapshot
            d.fired_rule = rule.condition_source;
            d.at_ms = now_ms;
            out.dispatches.push_back(std::move(d));
            cooldowns.mark(session_id, concept_id, i, now_ms);
        }
        if (!rule.state_updates.empty()) {
            StateVector updated = apply_updates(rolling.state, rule.state_updates);
            if (!(updated == rolling.state)) out.state_changed = true;
            for (const auto& [name, op] : rule.state_updates) {
                if (name == "learning_rate") out.learning_rate_updated = true;
            }
            rolling.state = updated;
        }
    }
    out.state = rolling.state;
    return out;
}

}  // namespace mentor
