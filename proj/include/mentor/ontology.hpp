#pragma once
// The Educational Concept Ontology: the symbolic knowledge graph every agent
// reads. Immutable after load + validate; reload is replace-whole-value.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mentor/condition.hpp"
#include "mentor/state.hpp"

namespace mentor {

// update_state operation: sign-prefixed literal ("+0.1", "-0.05", "=0.3").
struct UpdateOp {
    enum class Kind { Add, Sub, Set };
    Kind kind = Kind::Add;
    double value = 0.0;

    bool operator==(const UpdateOp&) const = default;
};

UpdateOp parse_update_op(const std::string& text);  // throws std::invalid_argument
std::string to_string(const UpdateOp& op);

struct PedagogicalRule {
    std::string condition_source;
    ConditionPtr condition;
    std::vector<std::pair<std::string, UpdateOp>> state_updates;
    std::optional<std::string> trigger_peer;
};

bool operator==(const PedagogicalRule& a, const PedagogicalRule& b);

struct GroundingInfo {
    std::vector<std::string> key_facts;
    std::vector<std::string> common_misconceptions;

    bool operator==(const GroundingInfo&) const = default;
};

struct Concept {
    std::string concept_id;
    std::string display_name;
    std::string description;
    std::vector<std::string> prerequisites;
    double difficulty_level = 0.0;
    std::vector<std::string> associated_media;
    std::vector<PedagogicalRule> pedagogical_rules;
    GroundingInfo grounding;
};

bool operator==(const Concept& a, const Concept& b);

struct Ontology {
    std::map<std::string, Concept> concepts;
    std::string domain_name;
    std::string version;
    std::filesystem::path base_dir;      // for resolving associated_media
    std::vector<std::string> duplicate_ids;  // ids seen more than once while loading

    bool contains(const std::string& id) const { return concepts.count(id) > 0; }
    const Concept* find(const std::string& id) const {
        auto it = concepts.find(id);
        return it == concepts.end() ? nullptr : &it->second;
    }
    // Records the concept, keeping the first definition on duplicate ids.
    void add_concept(Concept c);
};

bool operator==(const Ontology& a, const Ontology& b);

class ParseError : public std::runtime_error {
public:
    enum class Code { MalformedSyntax, MissingField, BadRange, BadCondition };

    ParseError(Code code, std::string message, std::string concept_id = "",
               std::string field = "", size_t position = 0);

    Code code;
    std::string concept_id;  // empty when unknown
    std::string field;
    size_t position;  // byte offset for MalformedSyntax, rule index for BadCondition
};

class UnknownConceptError : public std::runtime_error {
public:
    explicit UnknownConceptError(const std::string& id)
        : std::runtime_error("unknown concept: " + id), concept_id(id) {}
    std::string concept_id;
};

class UnknownStrategyError : public std::runtime_error {
public:
    explicit UnknownStrategyError(const std::string& id)
        : std::runtime_error("unknown strategy: " + id), strategy_id(id) {}
    std::string strategy_id;
};

struct ParsedFile {
    std::vector<Concept> concepts;
    std::vector<std::string> warnings;  // unknown top-level fields etc.
};

// Parses one concept file (UTF-8 JSON, top-level array of concept objects).
ParsedFile parse_concept_file(const std::string& text);

// Emits the concept file format; parse(serialize(x)) round-trips to an
// identical value.
std::string serialize_concepts(const std::vector<Concept>& concepts);

struct Finding {
    enum class Severity { Error, Warning };
    Severity severity;
    std::string code;        // cycle, dangling_prerequisite, duplicate_id, ...
    std::string concept_id;
    std::string message;

    bool operator==(const Finding&) const = default;
};

struct ValidationReport {
    std::vector<Finding> findings;

    bool ok() const {
        for (const auto& f : findings)
            if (f.severity == Finding::Severity::Error) return false;
        return true;
    }
    size_t error_count() const;
    size_t warning_count() const;
    nlohmann::ordered_json to_json() const;
};

// Structural validation. Findings are data, not failures; the report is
// sorted by (concept_id, code, message).
ValidationReport validate_ontology(const Ontology& ontology,
                                   const std::set<std::string>& registered_strategies);

// All transitive prerequisites of `id`, dependents-before-prerequisites,
// deterministic: the lexicographically smallest topological order.
std::vector<std::string> prerequisite_closure(const Ontology& ontology, const std::string& id);

struct GroundingBundle {
    Concept subject;
    std::vector<Concept> prerequisite_chain;  // closure order, nearest-first
    std::vector<std::string> key_facts;
    std::vector<std::string> misconceptions;
    std::string strategy_id;
};

struct RetrievalConfig {
    // Prerequisite facts are pulled in only for struggling students.
    double prerequisite_inclusion_threshold = 0.5;
    size_t max_facts = 6;
};

// K_O assembly: the concept's own facts and misconceptions, plus direct
// prerequisites' key facts when proficiency is below the threshold. Own
// facts take priority under the cap.
GroundingBundle retrieve_grounding(const Ontology& ontology, const std::string& concept_id,
                                   const std::string& strategy_id, const StateVector& state,
                                   const std::set<std::string>& registered_strategies,
                                   const RetrievalConfig& cfg = {});

struct LoadedOntology {
    Ontology ontology;
    std::vector<std::string> warnings;
};

// Reads ontology.meta.json ({domain_name, version, files}) and every listed
// concept file from `dir`.
LoadedOntology load_ontology_dir(const std::filesystem::path& dir);

}  // namespace mentor
