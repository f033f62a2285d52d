#pragma once
// Proactive peer-dialogue agent: turns rule-engine dispatches into grounded
// prompts, obtains a candidate utterance from a pluggable generation
// backend, and gates release behind a grounding validator with a canned
// fallback when generation cannot be validated.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mentor/ontology.hpp"
#include "mentor/rules.hpp"

namespace mentor {

struct StrategyTemplate {
    std::string strategy_id;
    std::string persona_line;
    std::string goal_instruction;
    std::string fallback_line;
};

class StrategyRegistry {
public:
    // Registry pre-loaded with the two built-in strategies.
    static StrategyRegistry builtin();

    void add(StrategyTemplate strategy);  // replaces on duplicate id
    const StrategyTemplate* find(const std::string& strategy_id) const;
    std::set<std::string> ids() const;

    // Strategies file: JSON array of
    // {strategy_id, persona_line, goal_instruction, fallback_line}.
    void load_file(const std::string& path);  // throws StrategyFileError

private:
    std::map<std::string, StrategyTemplate> strategies_;
};

class StrategyFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PromptBundle {
    std::string persona_line;
    std::string situation_summary;
    std::vector<std::string> key_fact_lines;      // each "KEY FACT: ..."
    std::vector<std::string> misconception_lines; // each "MISCONCEPTION: ..."
    std::string goal_line;                        // "GOAL: ..."
    bool empty_grounding = false;                 // forces fallback validation mode

    std::string render() const;  // deterministic full prompt text
};

// Deterministic assembly in template order: persona, situation, key facts,
// misconceptions, goal. The situation summary names the concept and reports
// frustration/proficiency to 2 decimals; a student query, when present, is
// appended to the situation.
PromptBundle build_prompt(const TriggerDispatch& dispatch, const GroundingBundle& bundle,
                          const StrategyRegistry& registry,
                          const Ontology& ontology);  // throws UnknownStrategyError

class BackendError : public std::runtime_error {
public:
    explicit BackendError(const std::string& what, int status = 0)
        : std::runtime_error(what), status(status) {}
    int status;
};

class BackendTimeoutError : public BackendError {
public:
    BackendTimeoutError() : BackendError("backend timed out") {}
};

class BackendNotConfiguredError : public BackendError {
public:
    BackendNotConfiguredError() : BackendError("no generation backend configured") {}
};

class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;
    virtual std::string generate(const std::string& prompt) = 0;  // throws BackendError
};

// Offline deterministic backend: persona-appropriate sentence embedding the
// first key fact verbatim.
class StubBackend : public GenerationBackend {
public:
    std::string generate(const std::string& prompt) override;
};

// Remote backend speaking HTTP POST {"prompt": ...} -> {"text": ...}.
// Timeout default 15 s; one retry on transport failure.
class HttpBackend : public GenerationBackend {
public:
    HttpBackend(std::string url, std::string api_key, double timeout_seconds = 15.0);
    std::string generate(const std::string& prompt) override;

private:
    std::string url_;
    std::string api_key_;
    double timeout_seconds_;
};

struct ValidationResult {
    bool passed = false;
    std::string reason;  // "length", "grounding", "giveaway" when failed
};

struct ValidatorConfig {
    size_t min_length = 20;
    size_t max_length = 600;
    size_t min_keyword_length = 5;
    std::vector<std::string> extra_stopwords;
};

// Content keywords of length >= 5 drawn from the bundle's key facts,
// stop-words removed, lowercased.
std::set<std::string> grounding_keywords(const GroundingBundle& bundle,
                                         const ValidatorConfig& cfg = {});

ValidationResult validate_response(const std::string& text, const GroundingBundle& bundle,
                                   const StrategyTemplate& strategy,
                                   const std::vector<std::string>& giveaway_phrases = {},
                                   const ValidatorConfig& cfg = {});

struct PeerResponse {
    std::string text;
    std::string strategy_id;
    bool validated = false;
    int attempts_used = 0;
    bool fallback_used = false;
};

struct PeerAgentConfig {
    int max_attempts = 3;
    ValidatorConfig validator;
    std::map<std::string, std::vector<std::string>> giveaway_phrases;  // by concept id
};

// build_prompt -> generate -> validate, regenerating up to the attempt
// budget, then falling back to the strategy's canned line. Every returned
// response has validated or fallback_used set.
PeerResponse handle_trigger(const TriggerDispatch& dispatch, const Ontology& ontology,
                            const StrategyRegistry& registry, GenerationBackend& backend,
                            const PeerAgentConfig& cfg = {},
                            const RetrievalConfig& retrieval = {});

}  // namespace mentor
