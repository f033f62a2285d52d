#pragma once
// Non-verbal tutor: a tabular Q-learning policy mapping the standardized
// state vector to abstract scaffolding actions (difficulty change, hint
// level, tool unlock). The policy interface stays small so a function
// approximator could replace the table later.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mentor/state.hpp"

namespace mentor {

struct Action {
    int difficulty_delta = 0;  // -1, 0, +1
    int hint_level = 0;        // 0, 1, 2
    bool unlock_tool = false;

    bool operator==(const Action&) const = default;
};

inline constexpr int kNumActions = 18;
inline constexpr int kNumStates = 256;

int action_index(const Action& a);        // (dd+1)*6 + hint*2 + tool
Action action_from_index(int index);

struct DiscreteState {
    int index = 0;  // [0, 255]
};

// 4 equal-width bins over proficiency, frustration, engagement, effort;
// bin(x) = min(floor(x*4), 3); index = sum bin_k * 4^k in that order.
DiscreteState discretize(const StateVector& state);

struct Experience {
    int s = 0;
    int a = 0;
    double r = 0.0;
    int s_next = 0;
};

struct RewardWeights {
    double proficiency = 1.0;
    double engagement = 0.3;
    double frustration = 0.3;
};

double compute_reward(const StateVector& prev, const StateVector& next,
                      const RewardWeights& weights = {});

class QTable {
public:
    QTable();

    double value(int s, int a) const { return values_[s * kNumActions + a]; }
    void set_value(int s, int a, double v) { values_[s * kNumActions + a] = v; }
    int64_t visits(int s, int a) const { return visits_[s * kNumActions + a]; }

    // Greedy action index with ties broken by lowest canonical index.
    int greedy_action(int s) const;
    double max_value(int s) const;

    // One-step Q-learning: Q[s][a] += alpha*(r + gamma*max Q[s'] - Q[s][a]).
    void update(const Experience& e, double alpha, double gamma);

    // Replays donor experiences through update with alpha*share_discount.
    void share_experience(const std::vector<Experience>& donor, double alpha, double gamma,
                          double share_discount = 0.5);

    nlohmann::ordered_json to_json() const;
    static QTable from_json(const nlohmann::json& doc);  // throws CheckpointError
    void save(const std::string& path) const;
    static QTable load(const std::string& path);

private:
    std::vector<double> values_;
    std::vector<int64_t> visits_;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Epsilon-greedy selection from a seeded generator; epsilon=0 is pure greedy.
Action select_action(const QTable& q, DiscreteState s, double epsilon, std::mt19937& rng);

// Training schedule: max(0.05, 0.5 * 0.995^episode).
double epsilon_for_episode(int episode);

// Experience export: newline-delimited JSON of {"s","a","r","s_next"}.
void save_experiences(const std::vector<Experience>& experiences, const std::string& path);
std::vector<Experience> load_experiences(const std::string& path);  // throws CheckpointError

}  // namespace mentor
