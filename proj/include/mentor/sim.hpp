#pragma once
// Parameterized simulated student: emits wire-format raw events and reacts
// to tutor actions, closing the loop for RL training and end-to-end tests.

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mentor/pipeline.hpp"
#include "mentor/tutor.hpp"

namespace mentor {

struct LearnerProfile {
    double ability = 0.3;                // [0,1] starting hidden skill
    double learn_gain = 0.02;            // [0,0.2] skill gained per success
    double frustration_propensity = 0.5; // [0,1]
    double engagement_decay = 0.01;      // [0,0.1]
    uint32_t seed = 1;
};

// Profile batch file: JSON array of LearnerProfile objects.
std::vector<LearnerProfile> load_profiles(const std::string& path);  // throws ProfileFileError
void save_profiles(const std::vector<LearnerProfile>& profiles, const std::string& path);

class ProfileFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// All invented dynamics constants in one block; tests pin them.
struct SimConfig {
    double difficulty_step = 0.15;   // per unit of difficulty_delta
    double hint_boost = 0.1;         // success-probability boost per hint level
    double tool_boost = 0.05;        // success-probability boost when tool unlocked
    double slope = 4.0;              // logistic steepness
    double hint_learn_penalty = 0.3; // learn_gain multiplier loss per hint level
    double fail_frustration_gain = 0.2;
    double success_frustration_drop = 0.1;
    double confidence_noise = 0.05;
    double step_seconds = 10.0;      // event spacing
    double optional_eval_prob = 0.15;
    int success_window = 5;          // recent steps feeding the score column
};

class SimStudent {
public:
    SimStudent(const LearnerProfile& profile, SimConfig cfg = {});

    // Advances one interaction: applies the action, draws an outcome, and
    // emits one gridlock_row event reflecting it.
    std::vector<RawEvent> step(const Action& action);

    double hidden_skill() const { return skill_; }
    double hidden_frustration() const { return frustration_; }
    double current_difficulty() const { return difficulty_; }
    int step_count() const { return steps_; }

    double p_correct(const Action& action) const;

private:
    LearnerProfile profile_;
    SimConfig cfg_;
    std::mt19937 rng_;
    double skill_;
    double frustration_ = 0.0;
    double difficulty_ = 0.5;
    int steps_ = 0;
    int consecutive_failures_ = 0;
    std::deque<int> recent_outcomes_;  // 1 success, 0 failure
};

double logistic(double x);

struct EpisodeMetrics {
    double final_skill = 0.0;
    double mean_frustration = 0.0;
    double total_reward = 0.0;
};

// A policy maps the standardized state to an action. Policies may be
// stateful (the random policy owns its generator), so batch evaluation
// constructs one per episode through a factory.
using Policy = std::function<Action(const StateVector&)>;
using PolicyFactory = std::function<Policy(const LearnerProfile&)>;

Policy random_policy(uint32_t seed);
Policy greedy_policy(const QTable& q);        // epsilon 0
Policy max_hint_policy();                     // always (0, 2, tool)
Policy fixed_policy(const Action& action);

PolicyFactory random_policy_factory();        // seeds from each profile
PolicyFactory greedy_policy_factory(const QTable& q);
PolicyFactory max_hint_policy_factory();

struct EpisodeConfig {
    int length = 50;
    RewardWeights reward_weights;
    PipelineConfig pipeline;
    SimConfig sim;
    // Online Q updates during the episode.
    bool online_updates = false;
    double alpha = 0.2;
    double gamma = 0.9;
    double epsilon = 0.0;   // exploration when q is provided
    uint32_t policy_seed = 7;
};

// Closed loop: sim step -> pipeline -> policy -> sim step. When `q` is given
// it drives action selection (epsilon-greedy) and, with online_updates,
// learns from the stream; experiences are appended to `out_experiences`
// when provided.
EpisodeMetrics run_episode(const LearnerProfile& profile, const Policy& policy,
                           const EpisodeConfig& cfg);
EpisodeMetrics run_episode_q(const LearnerProfile& profile, QTable& q, const EpisodeConfig& cfg,
                             std::vector<Experience>* out_experiences = nullptr);

// Evaluates one policy over a profile batch. `parallel` uses the OpenMP
// path when compiled in; the serial path is the reference implementation
// and both produce identical results.
std::vector<EpisodeMetrics> run_episode_batch(const std::vector<LearnerProfile>& profiles,
                                              const PolicyFactory& make_policy,
                                              const EpisodeConfig& cfg, bool parallel);

struct TrainConfig {
    int episodes = 500;
    EpisodeConfig episode;
};

struct TrainResult {
    QTable q;
    std::vector<Experience> experiences;
    std::vector<double> episode_returns;
};

// Tabular Q-learning against the simulator, cycling through the profile
// batch with the standard epsilon schedule.
TrainResult train_policy(const std::vector<LearnerProfile>& profiles, const TrainConfig& cfg);

// Metrics CSV: header episode,final_skill,mean_frustration,total_reward.
void write_metrics_csv(const std::vector<EpisodeMetrics>& metrics, const std::string& path);

}  // namespace mentor
