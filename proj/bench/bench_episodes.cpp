// Compares the serial reference episode-batch evaluation against the
// OpenMP-parallel path and reports wall times plus a result check.

#include <chrono>
#include <cmath>
#include <iostream>
#include <vector>

#include "mentor/sim.hpp"

using namespace mentor;

namespace {

std::vector<LearnerProfile> make_profiles(size_t n) {
    std::vector<LearnerProfile> out;
    for (size_t i = 0; i < n; ++i) {
        LearnerProfile p;
        p.ability = 0.1 + 0.3 * (i % 7) / 6.0;
        p.learn_gain = 0.008 + 0.012 * (i % 5) / 4.0;
        p.frustration_propensity = 0.2 + 0.6 * (i % 4) / 3.0;
        p.engagement_decay = 0.002 + 0.018 * (i % 3) / 2.0;
        p.seed = static_cast<uint32_t>(100 + i);
        out.push_back(p);
    }
    return out;
}

double mean_skill(const std::vector<EpisodeMetrics>& metrics) {
    double total = 0.0;
    for (const auto& m : metrics) total += m.final_skill;
    return metrics.empty() ? 0.0 : total / metrics.size();
}

}  // namespace

int main(int argc, char** argv) {
    size_t n_profiles = argc > 1 ? static_cast<size_t>(std::stoul(argv[1])) : 64;
    int length = argc > 2 ? std::stoi(argv[2]) : 200;

    std::vector<LearnerProfile> profiles = make_profiles(n_profiles);
    EpisodeConfig cfg;
    cfg.length = length;
    PolicyFactory factory = random_policy_factory();

    using clock = std::chrono::steady_clock;

    auto t0 = clock::now();
    auto serial = run_episode_batch(profiles, factory, cfg, false);
    auto t1 = clock::now();
    auto parallel = run_episode_batch(profiles, factory, cfg, true);
    auto t2 = clock::now();

    double serial_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    double parallel_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();

    bool identical = serial.size() == parallel.size();
    for (size_t i = 0; identical && i < serial.size(); ++i)
        identical = serial[i].final_skill == parallel[i].final_skill &&
                    serial[i].mean_frustration == parallel[i].mean_frustration &&
                    serial[i].total_reward == parallel[i].total_reward;

#ifdef MENTOR_HAS_OPENMP
    const char* mode = "openmp";
#else
    const char* mode = "serial-fallback";
#endif

    std::cout << "profiles: " << n_profiles << ", episode length: " << length << "\n"
              << "serial reference: " << serial_ms << " ms\n"
              << "parallel (" << mode << "): " << parallel_ms << " ms\n"
              << "speedup: " << (parallel_ms > 0 ? serial_ms / parallel_ms : 0.0) << "x\n"
              << "mean final skill: " << mean_skill(serial) << "\n"
              << "results identical: " << (identical ? "yes" : "NO") << "\n";
    return identical ? 0 : 1;
}
