#include "mentor/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#ifdef MENTOR_HAS_OPENMP
#include <omp.h>
#endif

namespace mentor {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void check_profile(const LearnerProfile& p) {
    auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
    if (!in(p.ability, 0, 1) || !in(p.learn_gain, 0, 0.2) ||
        !in(p.frustration_propensity, 0, 1) || !in(p.engagement_decay, 0, 0.1))
        throw ProfileFileError("profile field out of range");
}

}  // namespace

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<LearnerProfile> load_profiles(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ProfileFileError("cannot read " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ProfileFileError(std::string("malformed profiles file: ") + e.what());
    }
    if (!doc.is_array()) throw ProfileFileError("profiles file must be a JSON array");
    std::vector<LearnerProfile> out;
    for (const auto& entry : doc) {
        if (!entry.is_object()) throw ProfileFileError("profile entry must be an object");
        LearnerProfile p;
        p.ability = entry.value("ability", 0.3);
        p.learn_gain = entry.value("learn_gain", 0.02);
        p.frustration_propensity = entry.value("frustration_propensity", 0.5);
        p.engagement_decay = entry.value("engagement_decay", 0.01);
        p.seed = entry.value("seed", 1u);
        check_profile(p);
        out.push_back(p);
    }
    return out;
}

void save_profiles(const std::vector<LearnerProfile>& profiles, const std::string& path) {
    ordered_json doc = ordered_json::array();
    for (const LearnerProfile& p : profiles) {
        ordered_json entry;
        entry["ability"] = p.ability;
        entry["learn_gain"] = p.learn_gain;
        entry["frustration_propensity"] = p.frustration_propensity;
        entry["engagement_decay"] = p.engagement_decay;
        entry["seed"] = p.seed;
        doc.push_back(entry);
    }
    std::ofstream out(path);
    if (!out) throw ProfileFileError("cannot write " + path);
    out << doc.dump(2) << "\n";
}

SimStudent::SimStudent(const LearnerProfile& profile, SimConfig cfg)
    : profile_(profile), cfg_(cfg), rng_(profile.seed), skill_(profile.ability) {
    check_profile(profile);
}

double SimStudent::p_correct(const Action& action) const {
    double difficulty =
        clamp01(difficulty_ + cfg_.difficulty_step * action.difficulty_delta);
    return logistic(cfg_.slope * (skill_ + cfg_.hint_boost * action.hint_level +
                                  cfg_.tool_boost * (action.unlock_tool ? 1.0 : 0.0) -
                                  difficulty));
}

std::vector<RawEvent> SimStudent::step(const Action& action) {
    difficulty_ = clamp01(difficulty_ + cfg_.difficulty_step * action.difficulty_delta);
    double p = logistic(cfg_.slope * (skill_ + cfg_.hint_boost * action.hint_level +
                                      cfg_.tool_boost * (action.unlock_tool ? 1.0 : 0.0) -
                                      difficulty_));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    bool success = unit(rng_) < p;
    if (success) {
        skill_ = clamp01(skill_ +
                         profile_.learn_gain * (1.0 - cfg_.hint_learn_penalty * action.hint_level));
        frustration_ = clamp01(frustration_ - cfg_.success_frustration_drop);
        consecutive_failures_ = 0;
    } else {
        frustration_ =
            clamp01(frustration_ + profile_.frustration_propensity * cfg_.fail_frustration_gain);
        ++consecutive_failures_;
    }
    ++steps_;
    recent_outcomes_.push_back(success ? 1 : 0);
    while (recent_outcomes_.size() > static_cast<size_t>(cfg_.success_window))
        recent_outcomes_.pop_front();

    double score = std::accumulate(recent_outcomes_.begin(), recent_outcomes_.end(), 0.0) /
                   recent_outcomes_.size();
    std::uniform_real_distribution<double> noise(-cfg_.confidence_noise, cfg_.confidence_noise);
    double confidence = clamp01(skill_ + noise(rng_));
    bool optional_eval = unit(rng_) < cfg_.optional_eval_prob;

    GridlockPayload row;
    row.score = score;
    // The student slows down as engagement decays with session length.
    row.time_seconds =
        60.0 * clamp01(profile_.engagement_decay * steps_);
    row.attempts = consecutive_failures_ + 1;
    row.confidence = confidence;
    row.frustration = frustration_;
    row.evaluation_optional = optional_eval;

    RawEvent ev;
    ev.session = "sim";
    ev.source = EventSource::GridlockRow;
    ev.timestamp_ms = static_cast<int64_t>(steps_ * cfg_.step_seconds * 1000.0);
    ev.payload = row;
    return {ev};
}

Policy random_policy(uint32_t seed) {
    auto rng = std::make_shared<std::mt19937>(seed);
    return [rng](const StateVector&) {
        std::uniform_int_distribution<int> pick(0, kNumActions - 1);
        return action_from_index(pick(*rng));
    };
}

Policy greedy_policy(const QTable& q) {
    return [&q](const StateVector& s) { return action_from_index(q.greedy_action(discretize(s).index)); };
}

Policy max_hint_policy() {
    return [](const StateVector&) { return Action{0, 2, true}; };
}

Policy fixed_policy(const Action& action) {
    return [action](const StateVector&) { return action; };
}

PolicyFactory random_policy_factory() {
    return [](const LearnerProfile& p) { return random_policy(p.seed + 1000003u); };
}

PolicyFactory greedy_policy_factory(const QTable& q) {
    return [&q](const LearnerProfile&) { return greedy_policy(q); };
}

PolicyFactory max_hint_policy_factory() {
    return [](const LearnerProfile&) { return max_hint_policy(); };
}

namespace {

EpisodeMetrics run_episode_impl(const LearnerProfile& profile, const Policy* policy, QTable* q,
                                const EpisodeConfig& cfg,
                                std::vector<Experience>* out_experiences) {
    SimStudent sim(profile, cfg.sim);
    SessionPipeline pipeline(cfg.pipeline, "sim", "sim-student", "practice");
    std::mt19937 policy_rng(cfg.policy_seed);

    EpisodeMetrics metrics;
    double frustration_total = 0.0;
    StateVector state = pipeline.context().state;
    for (int t = 0; t < cfg.length; ++t) {
        Action action;
        int s_index = discretize(state).index;
        if (q)
            action = select_action(*q, {s_index}, cfg.epsilon, policy_rng);
        else
            action = (*policy)(state);

        for (const RawEvent& ev : sim.step(action)) pipeline.ingest(ev);
        StateVector next = pipeline.compute_state();
        double reward = compute_reward(state, next, cfg.reward_weights);
        metrics.total_reward += reward;
        frustration_total += sim.hidden_frustration();

        if (q) {
            Experience e{s_index, action_index(action), reward, discretize(next).index};
            if (cfg.online_updates) q->update(e, cfg.alpha, cfg.gamma);
            if (out_experiences) out_experiences->push_back(e);
        }
        state = next;
    }
    metrics.final_skill = sim.hidden_skill();
    metrics.mean_frustration = cfg.length > 0 ? frustration_total / cfg.length : 0.0;
    return metrics;
}

}  // namespace

EpisodeMetrics run_episode(const LearnerProfile& profile, const Policy& policy,
                           const EpisodeConfig& cfg) {
    return run_episode_impl(profile, &policy, nullptr, cfg, nullptr);
}

EpisodeMetrics run_episode_q(const LearnerProfile& profile, QTable& q, const EpisodeConfig& cfg,
                             std::vector<Experience>* out_experiences) {
    return run_episode_impl(profile, nullptr, &q, cfg, out_experiences);
}

std::vector<EpisodeMetrics> run_episode_batch(const std::vector<LearnerProfile>& profiles,
                                              const PolicyFactory& make_policy,
                                              const EpisodeConfig& cfg, bool parallel) {
    std::vector<EpisodeMetrics> out(profiles.size());
    if (parallel) {
#ifdef MENTOR_HAS_OPENMP
#pragma omp parallel for schedule(dynamic)
        for (long i = 0; i < static_cast<long>(profiles.size()); ++i) {
            Policy policy = make_policy(profiles[i]);
            out[i] = run_episode(profiles[i], policy, cfg);
        }
        return out;
#endif
    }
    for (size_t i = 0; i < profiles.size(); ++i) {
        Policy policy = make_policy(profiles[i]);
        out[i] = run_episode(profiles[i], policy, cfg);
    }
    return out;
}

TrainResult train_policy(const std::vector<LearnerProfile>& profiles, const TrainConfig& cfg) {
    if (profiles.empty()) throw ProfileFileError("training needs at least one profile");
    TrainResult result;
    for (int ep = 0; ep < cfg.episodes; ++ep) {
        const LearnerProfile& profile = profiles[ep % profiles.size()];
        EpisodeConfig ecfg = cfg.episode;
        ecfg.online_updates = true;
        ecfg.epsilon = epsilon_for_episode(ep);
        ecfg.policy_seed = cfg.episode.policy_seed + static_cast<uint32_t>(ep) * 7919u;
        EpisodeMetrics m = run_episode_q(profile, result.q, ecfg, &result.experiences);
        result.episode_returns.push_back(m.total_reward);
    }
    return result;
}

void write_metrics_csv(const std::vector<EpisodeMetrics>& metrics, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ProfileFileError("cannot write " + path);
    out << "episode,final_skill,mean_frustration,total_reward\n";
    for (size_t i = 0; i < metrics.size(); ++i)
        out << i << "," << metrics[i].final_skill << "," << metrics[i].mean_frustration << ","
            << metrics[i].total_reward << "\n";
}

}  // namespace mentor
