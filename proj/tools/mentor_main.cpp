// Operator CLI: ontology validation, the HTTP service, offline training and
// simulation against the learner simulator, and event-log replay.

#include <algorithm>
#include <chrono>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "mentor/config.hpp"
#include "mentor/ontology.hpp"
#include "mentor/peer.hpp"
#include "mentor/service.hpp"
#include "mentor/sim.hpp"

namespace {

using namespace mentor;

int cmd_validate(const std::string& dir, const std::string& strategies_file) {
    StrategyRegistry registry = StrategyRegistry::builtin();
    if (!strategies_file.empty()) registry.load_file(strategies_file);

    LoadedOntology loaded = load_ontology_dir(dir);
    for (const std::string& w : loaded.warnings) std::cout << "warning: " << w << "\n";

    ValidationReport report = validate_ontology(loaded.ontology, registry.ids());
    for (const Finding& f : report.findings) {
        const char* severity = f.severity == Finding::Severity::Error ? "error" : "warning";
        std::cout << severity << " [" << f.code << "] " << f.message << "\n";
    }
    std::cout << loaded.ontology.concepts.size() << " concept(s), " << report.error_count()
              << " error(s), " << report.warning_count() << " warning(s)\n";
    return report.ok() ? 0 : 1;
}

int cmd_serve(const std::string& config_path, const std::string& host, int port) {
    std::vector<std::string> warnings;
    EngineConfig cfg = load_engine_config(config_path, &warnings);
    for (const std::string& w : warnings) std::cout << "warning: " << w << "\n";

    Engine engine(cfg);
    HttpService service(engine);
    int bound = service.start(host, port);
    if (bound < 0) {
        std::cerr << "error: cannot bind " << host << ":" << port << "\n";
        return 1;
    }
    std::cout << "listening on " << host << ":" << bound << " (domain '"
              << engine.ontology().domain_name << "', " << engine.ontology().concepts.size()
              << " concepts)\n";
    // Serve until killed.
    while (service.running()) std::this_thread::sleep_for(std::chrono::seconds(1));
    return 0;
}

int cmd_train(const std::string& profiles_path, int episodes, int length,
              const std::string& out_path, const std::string& experiences_path) {
    std::vector<LearnerProfile> profiles = load_profiles(profiles_path);
    TrainConfig cfg;
    cfg.episodes = episodes;
    cfg.episode.length = length;
    TrainResult result = train_policy(profiles, cfg);
    result.q.save(out_path);
    if (!experiences_path.empty()) save_experiences(result.experiences, experiences_path);

    double early = 0.0, late = 0.0;
    size_t n = result.episode_returns.size();
    size_t k = std::max<size_t>(1, n / 10);
    for (size_t i = 0; i < k; ++i) early += result.episode_returns[i];
    for (size_t i = n - k; i < n; ++i) late += result.episode_returns[i];
    std::cout << "trained " << episodes << " episodes on " << profiles.size()
              << " profiles; mean return first/last decile: " << early / k << " / " << late / k
              << "\nqtable written to " << out_path << "\n";
    return 0;
}

int cmd_simulate(const std::string& policy_spec, const std::string& profiles_path, int length,
                 const std::string& csv_path, bool parallel) {
    std::vector<LearnerProfile> profiles = load_profiles(profiles_path);
    EpisodeConfig cfg;
    cfg.length = length;

    QTable q;
    PolicyFactory factory;
    if (policy_spec == "random") {
        factory = random_policy_factory();
    } else if (policy_spec == "max_hint") {
        factory = max_hint_policy_factory();
    } else {
        q = QTable::load(policy_spec);
        factory = greedy_policy_factory(q);
    }

    std::vector<EpisodeMetrics> metrics = run_episode_batch(profiles, factory, cfg, parallel);
    double skill = 0.0, frustration = 0.0, reward = 0.0;
    for (const EpisodeMetrics& m : metrics) {
        skill += m.final_skill;
        frustration += m.mean_frustration;
        reward += m.total_reward;
    }
    double n = static_cast<double>(metrics.size());
    std::cout << "episodes: " << metrics.size() << "\nmean final skill: " << skill / n
              << "\nmean frustration: " << frustration / n
              << "\nmean total reward: " << reward / n << "\n";
    if (!csv_path.empty()) {
        write_metrics_csv(metrics, csv_path);
        std::cout << "metrics written to " << csv_path << "\n";
    }
    return 0;
}

int cmd_replay(const std::string& log_path, const std::string& config_path) {
    EngineConfig cfg;
    if (!config_path.empty()) cfg = load_engine_config(config_path);

    Ontology ontology;
    if (!cfg.ontology_dir.empty()) ontology = load_ontology_dir(cfg.ontology_dir).ontology;

    ReplayResult result = replay_log(log_path, cfg, ontology);
    std::cout << "session " << result.trace.session_id << ": " << result.trace.events.size()
              << " event(s), " << result.trace.state_history.size() << " state vector(s)\n";
    if (!result.trace.state_history.empty()) {
        const auto& [ts, state] = result.trace.state_history.back();
        std::cout << "final state at " << ts << "ms: " << state.to_json().dump() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neuro-symbolic tutoring middleware"};
    app.require_subcommand(1);

    std::string dir, strategies_file;
    auto* validate = app.add_subcommand("validate", "Validate an ontology directory");
    validate->add_option("dir", dir, "ontology directory")->required();
    validate->add_option("--strategies", strategies_file, "extra strategies file");

    std::string config_path, host = "127.0.0.1";
    int port = 8077;
    auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
    serve->add_option("--config", config_path, "engine config file")->required();
    serve->add_option("--host", host, "bind address");
    serve->add_option("--port", port, "bind port (0 = ephemeral)");

    std::string profiles_path, out_path = "qtable.json", experiences_path;
    int episodes = 500, length = 50;
    auto* train = app.add_subcommand("train", "Train the tutor policy in simulation");
    train->add_option("--profiles", profiles_path, "learner profile batch (JSON)")->required();
    train->add_option("--episodes", episodes, "training episodes");
    train->add_option("--length", length, "steps per episode");
    train->add_option("--out", out_path, "qtable checkpoint output");
    train->add_option("--experiences", experiences_path, "experience export (NDJSON)");

    std::string policy_spec, sim_profiles, csv_path;
    int sim_length = 50;
    bool parallel = false;
    auto* simulate = app.add_subcommand("simulate", "Evaluate a policy over a profile batch");
    simulate->add_option("--policy", policy_spec, "qtable path, 'random', or 'max_hint'")
        ->required();
    simulate->add_option("--profiles", sim_profiles, "learner profile batch (JSON)")->required();
    simulate->add_option("--length", sim_length, "steps per episode");
    simulate->add_option("--out", csv_path, "metrics CSV output");
    simulate->add_flag("--parallel", parallel, "evaluate episodes in parallel");

    std::string log_path, replay_config;
    auto* replay = app.add_subcommand("replay", "Reconstruct a session from its event log");
    replay->add_option("log", log_path, "session event log (NDJSON)")->required();
    replay->add_option("--config", replay_config, "engine config file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return cmd_validate(dir, strategies_file);
        if (serve->parsed()) return cmd_serve(config_path, host, port);
        if (train->parsed())
            return cmd_train(profiles_path, episodes, length, out_path, experiences_path);
        if (simulate->parsed())
            return cmd_simulate(policy_spec, sim_profiles, sim_length, csv_path, parallel);
        if (replay->parsed()) return cmd_replay(log_path, replay_config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
