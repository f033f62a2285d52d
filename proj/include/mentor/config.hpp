#pragma once
// Engine configuration: one JSON document wiring together ontology paths,
// adapter constants, rule cooldowns, tutor hyperparameters, peer backend
// settings, and the persistence directory. Everything range-checked at load.

#include <string>
#include <vector>

#include "mentor/pipeline.hpp"
#include "mentor/rules.hpp"
#include "mentor/tutor.hpp"

namespace mentor {

struct TutorConfig {
    double alpha = 0.2;
    double gamma = 0.9;
    double epsilon_online = 0.05;
    RewardWeights weights;
    double share_discount = 0.5;
    std::string checkpoint_path;   // optional preload
    std::string experience_path;   // optional donor experiences for cold start
};

struct PeerBackendConfig {
    std::string kind = "stub";  // "stub" or "http"
    std::string url;            // overridden by PEER_BACKEND_URL
    std::string api_key;        // overridden by PEER_BACKEND_KEY
    double timeout_seconds = 15.0;
    std::string strategies_file;  // optional extra strategies
};

struct EngineConfig {
    std::string ontology_dir;
    std::string persistence_dir = "sessions";
    std::string default_concept;  // fallback starting concept
    PipelineConfig pipeline;
    RuleConfig rules;
    TutorConfig tutor;
    PeerBackendConfig peer;
    uint32_t service_seed = 20240901;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Parses and range-checks; unknown keys are reported through `warnings`.
EngineConfig parse_engine_config(const std::string& text,
                                 std::vector<std::string>* warnings = nullptr);
EngineConfig load_engine_config(const std::string& path,
                                std::vector<std::string>* warnings = nullptr);
std::string serialize_engine_config(const EngineConfig& cfg);

}  // namespace mentor
