#include "mentor/tutor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace mentor {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr const char* kCheckpointVersion = "qtable-v1";
const std::array<const char*, 4> kBinnedMetrics = {"proficiency", "frustration", "engagement",
                                                   "effort"};

int bin4(double x) { return std::min(static_cast<int>(std::floor(x * 4.0)), 3); }

}  // namespace

int action_index(const Action& a) {
    return (a.difficulty_delta + 1) * 6 + a.hint_level * 2 + (a.unlock_tool ? 1 : 0);
}

Action action_from_index(int index) {
    Action a;
    a.difficulty_delta = index / 6 - 1;
    a.hint_level = (index % 6) / 2;
    a.unlock_tool = (index % 2) != 0;
    return a;
}

DiscreteState discretize(const StateVector& state) {
    int index = bin4(state.proficiency) + bin4(state.frustration) * 4 +
                bin4(state.engagement) * 16 + bin4(state.effort) * 64;
    return {index};
}

double compute_reward(const StateVector& prev, const StateVector& next,
                      const RewardWeights& weights) {
    return weights.proficiency * (next.proficiency - prev.proficiency) +
           weights.engagement * (next.engagement - prev.engagement) -
           weights.frustration * (next.frustration - prev.frustration);
}

QTable::QTable()
    : values_(kNumStates * kNumActions, 0.0), visits_(kNumStates * kNumActions, 0) {}

int QTable::greedy_action(int s) const {
    int best = 0;
    double best_value = value(s, 0);
    for (int a = 1; a < kNumActions; ++a) {
        if (value(s, a) > best_value) {
            best_value = value(s, a);
            best = a;
        }
    }
    return best;
}

double QTable::max_value(int s) const { return value(s, greedy_action(s)); }

void QTable::update(const Experience& e, double alpha, double gamma) {
    double target = e.r + gamma * max_value(e.s_next);
    double& q = values_[e.s * kNumActions + e.a];
    q += alpha * (target - q);
    visits_[e.s * kNumActions + e.a] += 1;
}

void QTable::share_experience(const std::vector<Experience>& donor, double alpha, double gamma,
                              double share_discount) {
    for (const Experience& e : donor) update(e, alpha * share_discount, gamma);
}

ordered_json QTable::to_json() const {
    ordered_json doc;
    doc["version"] = kCheckpointVersion;
    doc["n_states"] = kNumStates;
    doc["n_actions"] = kNumActions;
    doc["metric_order"] = kBinnedMetrics;
    doc["bins"] = 4;
    doc["values"] = values_;
    doc["visit_counts"] = visits_;
    return doc;
}

QTable QTable::from_json(const json& doc) {
    if (!doc.is_object() || doc.value("version", "") != kCheckpointVersion)
        throw CheckpointError("not a qtable-v1 checkpoint");
    if (doc.value("n_states", 0) != kNumStates || doc.value("n_actions", 0) != kNumActions)
        throw CheckpointError("checkpoint shape mismatch");
    QTable q;
    try {
        q.values_ = doc.at("values").get<std::vector<double>>();
        q.visits_ = doc.at("visit_counts").get<std::vector<int64_t>>();
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    }
    if (q.values_.size() != kNumStates * kNumActions ||
        q.visits_.size() != kNumStates * kNumActions)
        throw CheckpointError("checkpoint table size mismatch");
    for (double v : q.values_)
        if (!std::isfinite(v)) throw CheckpointError("non-finite Q value in checkpoint");
    return q;
}

void QTable::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw CheckpointError("cannot write " + path);
    out << to_json().dump() << "\n";
}

QTable QTable::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("cannot read " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    }
    return from_json(doc);
}

Action select_action(const QTable& q, DiscreteState s, double epsilon, std::mt19937& rng) {
    if (epsilon > 0.0) {
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        if (coin(rng) < epsilon) {
            std::uniform_int_distribution<int> pick(0, kNumActions - 1);
            return action_from_index(pick(rng));
        }
    }
    return action_from_index(q.greedy_action(s.index));
}

double epsilon_for_episode(int episode) {
    return std::max(0.05, 0.5 * std::pow(0.995, episode));
}

void save_experiences(const std::vector<Experience>& experiences, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw CheckpointError("cannot write " + path);
    for (const Experience& e : experiences) {
        ordered_json line;
        line["s"] = e.s;
        line["a"] = e.a;
        line["r"] = e.r;
        line["s_next"] = e.s_next;
        out << line.dump() << "\n";
    }
}

std::vector<Experience> load_experiences(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("cannot read " + path);
    std::vector<Experience> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::exception&) {
            throw CheckpointError("malformed experience at line " + std::to_string(line_no));
        }
        Experience e;
        if (!doc.contains("s") || !doc.contains("a") || !doc.contains("r") ||
            !doc.contains("s_next"))
            throw CheckpointError("incomplete experience at line " + std::to_string(line_no));
        e.s = doc["s"].get<int>();
        e.a = doc["a"].get<int>();
        e.r = doc["r"].get<double>();
        e.s_next = doc["s_next"].get<int>();
        if (e.s < 0 || e.s >= kNumStates || e.s_next < 0 || e.s_next >= kNumStates ||
            e.a < 0 || e.a >= kNumActions || !std::isfinite(e.r))
            throw CheckpointError("experience out of range at line " + std::to_string(line_no));
        out.push_back(e);
    }
    return out;
}

}  // namespace mentor
