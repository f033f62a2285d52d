#include "mentor/ontology.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <queue>
#include <sstream>

using nlohmann::ordered_json;

namespace mentor {

namespace {

bool valid_concept_token(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
        if (!ok) return false;
    }
    return true;
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

const char* kKnownFields[] = {"concept_id",       "display_name",      "description",
                              "prerequisites",    "difficulty_level",  "associated_media",
                              "pedagogical_rules", "llm_grounding_info"};

}  // namespace

UpdateOp parse_update_op(const std::string& text) {
    if (text.size() < 2) throw std::invalid_argument("bad operation value: '" + text + "'");
    UpdateOp op;
    switch (text[0]) {
        case '+': op.kind = UpdateOp::Kind::Add; break;
        case '-': op.kind = UpdateOp::Kind::Sub; break;
        case '=': op.kind = UpdateOp::Kind::Set; break;
        default: throw std::invalid_argument("bad operation value: '" + text + "'");
    }
    const char* begin = text.c_str() + 1;
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || !std::isfinite(v))
        throw std::invalid_argument("bad operation value: '" + text + "'");
    op.value = v;
    return op;
}

std::string to_string(const UpdateOp& op) {
    switch (op.kind) {
        case UpdateOp::Kind::Add: return "+" + format_double(op.value);
        case UpdateOp::Kind::Sub: return "-" + format_double(op.value);
        case UpdateOp::Kind::Set: return "=" + format_double(op.value);
    }
    return "";
}

bool operator==(const PedagogicalRule& a, const PedagogicalRule& b) {
    return a.condition_source == b.condition_source &&
           structurally_equal(a.condition, b.condition) && a.state_updates == b.state_updates &&
           a.trigger_peer == b.trigger_peer;
}

bool operator==(const Concept& a, const Concept& b) {
    return a.concept_id == b.concept_id && a.display_name == b.display_name &&
           a.description == b.description && a.prerequisites == b.prerequisites &&
           a.difficulty_level == b.difficulty_level && a.associated_media == b.associated_media &&
           a.pedagogical_rules == b.pedagogical_rules && a.grounding == b.grounding;
}

bool operator==(const Ontology& a, const Ontology& b) {
    return a.concepts == b.concepts && a.domain_name == b.domain_name && a.version == b.version;
}

void Ontology::add_concept(Concept c) {
    auto [it, inserted] = concepts.try_emplace(c.concept_id, std::move(c));
    if (!inserted) duplicate_ids.push_back(it->first);
}

ParseError::ParseError(Code code, std::string message, std::string concept_id, std::string field,
                       size_t position)
    : std::runtime_error(std::move(message)),
      code(code),
      concept_id(std::move(concept_id)),
      field(std::move(field)),
      position(position) {}

namespace {

Concept parse_concept_object(const ordered_json& obj, std::vector<std::string>& warnings) {
    if (!obj.is_object())
        throw ParseError(ParseError::Code::MalformedSyntax, "concept entry is not an object");

    auto require = [&](const char* field) -> const ordered_json& {
        auto it = obj.find(field);
        if (it == obj.end()) {
            std::string id = obj.value("concept_id", std::string());
            throw ParseError(ParseError::Code::MissingField,
                             "missing field '" + std::string(field) + "'" +
                                 (id.empty() ? "" : " in concept '" + id + "'"),
                             id, field);
        }
        return *it;
    };

    Concept c;
    c.concept_id = require("concept_id").get<std::string>();
    if (!valid_concept_token(c.concept_id))
        throw ParseError(ParseError::Code::BadRange,
                         "concept_id '" + c.concept_id + "' must match [a-z0-9_]+", c.concept_id,
                         "concept_id");
    c.display_name = require("display_name").get<std::string>();
    c.description = obj.value("description", std::string());

    if (auto it = obj.find("prerequisites"); it != obj.end()) {
        for (const auto& p : *it) {
            std::string id = p.get<std::string>();
            if (!valid_concept_token(id))
                throw ParseError(ParseError::Code::BadRange,
                                 "prerequisite '" + id + "' must match [a-z0-9_]+", c.concept_id,
                                 "prerequisites");
            if (id == c.concept_id)
                throw ParseError(ParseError::Code::BadRange,
                                 "concept '" + c.concept_id + "' lists itself as a prerequisite",
                                 c.concept_id, "prerequisites");
            if (std::find(c.prerequisites.begin(), c.prerequisites.end(), id) !=
                c.prerequisites.end())
                throw ParseError(ParseError::Code::BadRange,
                                 "duplicate prerequisite '" + id + "' in concept '" +
                                     c.concept_id + "'",
                                 c.concept_id, "prerequisites");
            c.prerequisites.push_back(std::move(id));
        }
    }

    const auto& diff = require("difficulty_level");
    if (!diff.is_number())
        throw ParseError(ParseError::Code::BadRange, "difficulty_level must be a number",
                         c.concept_id, "difficulty_level");
    c.difficulty_level = diff.get<double>();
    if (c.difficulty_level < 0.0 || c.difficulty_level > 1.0)
        throw ParseError(ParseError::Code::BadRange,
                         "difficulty_level " + format_double(c.difficulty_level) +
                             " outside [0,1] in concept '" + c.concept_id + "'",
                         c.concept_id, "difficulty_level");

    if (auto it = obj.find("associated_media"); it != obj.end())
        for (const auto& m : *it) c.associated_media.push_back(m.get<std::string>());

    if (auto it = obj.find("pedagogical_rules"); it != obj.end()) {
        if (!it->is_object())
            throw ParseError(ParseError::Code::MalformedSyntax,
                             "pedagogical_rules must be an object keyed by condition",
                             c.concept_id, "pedagogical_rules");
        size_t rule_idx = 0;
        for (const auto& [condition_src, body] : it->items()) {
            PedagogicalRule rule;
            rule.condition_source = condition_src;
            try {
                rule.condition = parse_condition(condition_src);
            } catch (const ConditionParseError& e) {
                throw ParseError(ParseError::Code::BadCondition,
                                 "rule " + std::to_string(rule_idx) + " of concept '" +
                                     c.concept_id + "': " + e.what(),
                                 c.concept_id, "pedagogical_rules", rule_idx);
            }
            if (auto us = body.find("update_state"); us != body.end()) {
                for (const auto& [metric, op_text] : us->items()) {
                    try {
                        rule.state_updates.emplace_back(metric,
                                                        parse_update_op(op_text.get<std::string>()));
                    } catch (const std::invalid_argument& e) {
                        throw ParseError(ParseError::Code::BadRange,
                                         "rule " + std::to_string(rule_idx) + " of concept '" +
                                             c.concept_id + "': " + e.what(),
                                         c.concept_id, "update_state", rule_idx);
                    }
                }
            }
            if (auto tp = body.find("trigger_peer"); tp != body.end())
                rule.trigger_peer = tp->get<std::string>();
            if (rule.state_updates.empty() && !rule.trigger_peer)
                throw ParseError(ParseError::Code::MissingField,
                                 "rule " + std::to_string(rule_idx) + " of concept '" +
                                     c.concept_id +
                                     "' has neither update_state nor trigger_peer",
                                 c.concept_id, "pedagogical_rules");
            c.pedagogical_rules.push_back(std::move(rule));
            ++rule_idx;
        }
    }

    if (auto it = obj.find("llm_grounding_info"); it != obj.end()) {
        if (auto kf = it->find("key_facts"); kf != it->end())
            for (const auto& f : *kf) c.grounding.key_facts.push_back(f.get<std::string>());
        if (auto mc = it->find("common_misconceptions"); mc != it->end())
            for (const auto& m : *mc)
                c.grounding.common_misconceptions.push_back(m.get<std::string>());
    }

    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (const char* f : kKnownFields)
            if (key == f) known = true;
        if (!known)
            warnings.push_back("concept '" + c.concept_id + "': unknown field '" + key + "'");
    }
    return c;
}

}  // namespace

ParsedFile parse_concept_file(const std::string& text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(ParseError::Code::MalformedSyntax, e.what(), "", "", e.byte);
    }
    if (!doc.is_array())
        throw ParseError(ParseError::Code::MalformedSyntax,
                         "concept file top level must be an array");
    ParsedFile out;
    for (const auto& entry : doc) out.concepts.push_back(parse_concept_object(entry, out.warnings));
    return out;
}

std::string serialize_concepts(const std::vector<Concept>& concepts) {
    ordered_json arr = ordered_json::array();
    for (const Concept& c : concepts) {
        ordered_json obj;
        obj["concept_id"] = c.concept_id;
        obj["display_name"] = c.display_name;
        obj["description"] = c.description;
        obj["prerequisites"] = c.prerequisites;
        obj["difficulty_level"] = c.difficulty_level;
        obj["associated_media"] = c.associated_media;
        ordered_json rules = ordered_json::object();
        for (const PedagogicalRule& r : c.pedagogical_rules) {
            ordered_json body = ordered_json::object();
            if (!r.state_updates.empty()) {
                ordered_json updates = ordered_json::object();
                for (const auto& [metric, op] : r.state_updates) updates[metric] = to_string(op);
                body["update_state"] = std::move(updates);
            }
            if (r.trigger_peer) body["trigger_peer"] = *r.trigger_peer;
            rules[r.condition_source] = std::move(body);
        }
        obj["pedagogical_rules"] = std::move(rules);
        obj["llm_grounding_info"] = {{"key_facts", c.grounding.key_facts},
                                     {"common_misconceptions", c.grounding.common_misconceptions}};
        arr.push_back(std::move(obj));
    }
    return arr.dump(2);
}

size_t ValidationReport::error_count() const {
    return static_cast<size_t>(std::count_if(findings.begin(), findings.end(), [](const Finding& f) {
        return f.severity == Finding::Severity::Error;
    }));
}

size_t ValidationReport::warning_count() const { return findings.size() - error_count(); }

ordered_json ValidationReport::to_json() const {
    ordered_json arr = ordered_json::array();
    for (const Finding& f : findings) {
        arr.push_back({{"severity", f.severity == Finding::Severity::Error ? "error" : "warning"},
                       {"code", f.code},
                       {"concept_id", f.concept_id},
                       {"message", f.message}});
    }
    return {{"errors", error_count()}, {"warnings", warning_count()}, {"findings", arr}};
}

namespace {

// Tarjan strongly connected components over the prerequisite graph; any SCC
// of size > 1 is a cycle (self-loops are rejected at parse).
struct SccFinder {
    const std::map<std::string, Concept>& concepts;
    std::map<std::string, int> index, lowlink;
    std::vector<std::string> stack;
    std::set<std::string> on_stack;
    int counter = 0;
    std::vector<std::vector<std::string>> cycles;

    explicit SccFinder(const std::map<std::string, Concept>& c) : concepts(c) {
        for (const auto& [id, _] : concepts)
            if (!index.count(id)) strongconnect(id);
    }

    void strongconnect(const std::string& v) {
        index[v] = lowlink[v] = counter++;
        stack.push_back(v);
        on_stack.insert(v);
        for (const std::string& w : concepts.at(v).prerequisites) {
            if (!concepts.count(w)) continue;  // dangling, reported separately
            if (!index.count(w)) {
                strongconnect(w);
                lowlink[v] = std::min(lowlink[v], lowlink[w]);
            } else if (on_stack.count(w)) {
                lowlink[v] = std::min(lowlink[v], index[w]);
            }
        }
        if (lowlink[v] == index[v]) {
            std::vector<std::string> scc;
            while (true) {
                std::string w = stack.back();
                stack.pop_back();
                on_stack.erase(w);
                scc.push_back(w);
                if (w == v) break;
            }
            if (scc.size() > 1) {
                std::sort(scc.begin(), scc.end());
                cycles.push_back(std::move(scc));
            }
        }
    }
};

std::string join(const std::vector<std::string>& parts, const char* sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace

ValidationReport validate_ontology(const Ontology& ontology,
                                   const std::set<std::string>& registered_strategies) {
    ValidationReport report;
    auto error = [&](std::string code, std::string id, std::string msg) {
        report.findings.push_back(
            {Finding::Severity::Error, std::move(code), std::move(id), std::move(msg)});
    };
    auto warning = [&](std::string code, std::string id, std::string msg) {
        report.findings.push_back(
            {Finding::Severity::Warning, std::move(code), std::move(id), std::move(msg)});
    };

    std::set<std::string> dup_seen;
    for (const std::string& id : ontology.duplicate_ids)
        if (dup_seen.insert(id).second)
            error("duplicate_id", id, "concept '" + id + "' defined more than once");

    for (const auto& [id, node] : ontology.concepts) {
        for (const std::string& p : node.prerequisites)
            if (!ontology.contains(p))
                error("dangling_prerequisite", id,
                      "concept '" + id + "' references missing prerequisite '" + p + "'");

        size_t rule_idx = 0;
        for (const PedagogicalRule& rule : node.pedagogical_rules) {
            // Conditions are vocabulary-checked at parse; re-check here so
            // programmatically built ontologies get the same findings.
            std::vector<const ConditionNode*> todo{rule.condition.get()};
            while (!todo.empty()) {
                const ConditionNode* n = todo.back();
                todo.pop_back();
                if (!n) continue;
                if (n->kind == ConditionNode::Kind::Comparison) {
                    if (!is_metric(n->name) && !is_counter(n->name))
                        error("unknown_metric", id,
                              "rule " + std::to_string(rule_idx) + " condition references unknown name '" +
                                  n->name + "'");
                } else {
                    todo.push_back(n->left.get());
                    todo.push_back(n->right.get());
                }
            }
            for (const auto& [metric, op] : rule.state_updates) {
                (void)op;
                if (is_counter(metric))
                    error("counter_update", id,
                          "rule " + std::to_string(rule_idx) + " updates counter '" + metric +
                              "'; counters are derived and not updatable");
                else if (!is_metric(metric))
                    error("unknown_metric", id,
                          "rule " + std::to_string(rule_idx) + " updates unknown metric '" +
                              metric + "'");
            }
            if (rule.trigger_peer && !registered_strategies.count(*rule.trigger_peer))
                error("unknown_strategy", id,
                      "rule " + std::to_string(rule_idx) + " triggers unregistered strategy '" +
                          *rule.trigger_peer + "'");
            ++rule_idx;
        }

        if (node.grounding.key_facts.empty())
            warning("empty_key_facts", id, "concept '" + id + "' has no key facts");

        for (const std::string& media : node.associated_media) {
            std::filesystem::path p = ontology.base_dir.empty()
                                          ? std::filesystem::path(media)
                                          : ontology.base_dir / media;
            if (!std::filesystem::exists(p))
                warning("missing_media", id,
                        "concept '" + id + "' media path '" + media + "' not found on disk");
        }
    }

    for (const auto& cycle : SccFinder(ontology.concepts).cycles)
        error("cycle", cycle.front(), "prerequisite cycle: [" + join(cycle, ", ") + "]");

    // Reachability: roots are concepts with no prerequisites; edges run
    // prerequisite -> dependent.
    std::map<std::string, std::vector<std::string>> dependents;
    std::queue<std::string> frontier;
    std::set<std::string> visited;
    for (const auto& [id, node] : ontology.concepts) {
        for (const std::string& p : node.prerequisites)
            if (ontology.contains(p)) dependents[p].push_back(id);
        if (node.prerequisites.empty()) {
            frontier.push(id);
            visited.insert(id);
        }
    }
    while (!frontier.empty()) {
        std::string id = frontier.front();
        frontier.pop();
        for (const std::string& d : dependents[id])
            if (visited.insert(d).second) frontier.push(d);
    }
    for (const auto& [id, _] : ontology.concepts)
        if (!visited.count(id))
            warning("unreachable", id, "concept '" + id + "' has no path from any root concept");

    std::sort(report.findings.begin(), report.findings.end(),
              [](const Finding& a, const Finding& b) {
                  return std::tie(a.concept_id, a.code, a.message) <
                         std::tie(b.concept_id, b.code, b.message);
              });
    return report;
}

std::vector<std::string> prerequisite_closure(const Ontology& ontology, const std::string& id) {
    const Concept* root = ontology.find(id);
    if (!root) throw UnknownConceptError(id);

    // Collect the transitive prerequisite set.
    std::set<std::string> closure;
    std::vector<std::string> stack(root->prerequisites.begin(), root->prerequisites.end());
    while (!stack.empty()) {
        std::string cur = stack.back();
        stack.pop_back();
        if (!ontology.contains(cur) || !closure.insert(cur).second) continue;
        const Concept& c = ontology.concepts.at(cur);
        stack.insert(stack.end(), c.prerequisites.begin(), c.prerequisites.end());
    }

    // Kahn's algorithm over edges dependent -> prerequisite, always popping
    // the lexicographically smallest available id: yields the smallest
    // topological order, which also puts direct prerequisites first.
    std::map<std::string, int> indegree;
    for (const std::string& c : closure) indegree[c] = 0;
    // Only edges between closure members constrain the order; the root is
    // conceptually already emitted, so its own edges are not counted.
    for (const std::string& c : closure)
        for (const std::string& p : ontology.concepts.at(c).prerequisites)
            if (closure.count(p)) ++indegree[p];

    std::set<std::string> available;  // ordered: begin() is the lexicographic minimum
    for (const auto& [cid, deg] : indegree)
        if (deg == 0) available.insert(cid);

    std::vector<std::string> order;
    order.reserve(closure.size());
    while (!available.empty()) {
        std::string cur = *available.begin();
        available.erase(available.begin());
        order.push_back(cur);
        for (const std::string& p : ontology.concepts.at(cur).prerequisites) {
            if (!closure.count(p)) continue;
            if (--indegree[p] == 0) available.insert(p);
        }
    }
    return order;
}

GroundingBundle retrieve_grounding(const Ontology& ontology, const std::string& concept_id,
                                   const std::string& strategy_id, const StateVector& state,
                                   const std::set<std::string>& registered_strategies,
                                   const RetrievalConfig& cfg) {
    const Concept* node = ontology.find(concept_id);
    if (!node) throw UnknownConceptError(concept_id);
    if (!registered_strategies.count(strategy_id)) throw UnknownStrategyError(strategy_id);

    GroundingBundle bundle;
    bundle.subject = *node;
    bundle.strategy_id = strategy_id;
    for (const std::string& pid : prerequisite_closure(ontology, concept_id))
        bundle.prerequisite_chain.push_back(ontology.concepts.at(pid));

    for (const std::string& fact : node->grounding.key_facts) {
        if (bundle.key_facts.size() >= cfg.max_facts) break;
        bundle.key_facts.push_back(fact);
    }
    if (state.proficiency < cfg.prerequisite_inclusion_threshold) {
        for (const std::string& pid : node->prerequisites) {
            const Concept* prereq = ontology.find(pid);
            if (!prereq) continue;
            for (const std::string& fact : prereq->grounding.key_facts) {
                if (bundle.key_facts.size() >= cfg.max_facts) break;
                bundle.key_facts.push_back(fact);
            }
        }
    }
    bundle.misconceptions = node->grounding.common_misconceptions;
    return bundle;
}

LoadedOntology load_ontology_dir(const std::filesystem::path& dir) {
    std::filesystem::path meta_path = dir / "ontology.meta.json";
    std::ifstream meta_in(meta_path);
    if (!meta_in)
        throw ParseError(ParseError::Code::MissingField,
                         "cannot open " + meta_path.string(), "", "ontology.meta.json");
    ordered_json meta;
    try {
        meta = ordered_json::parse(meta_in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(ParseError::Code::MalformedSyntax,
                         meta_path.string() + ": " + e.what(), "", "", e.byte);
    }

    LoadedOntology out;
    out.ontology.domain_name = meta.value("domain_name", std::string());
    out.ontology.version = meta.value("version", std::string());
    out.ontology.base_dir = dir;

    for (const auto& file : meta.at("files")) {
        std::filesystem::path path = dir / file.get<std::string>();
        std::ifstream in(path);
        if (!in)
            throw ParseError(ParseError::Code::MissingField, "cannot open " + path.string(), "",
                             path.filename().string());
        std::stringstream buf;
        buf << in.rdbuf();
        ParsedFile parsed = parse_concept_file(buf.str());
        for (Concept& c : parsed.concepts) out.ontology.add_concept(std::move(c));
        for (std::string& w : parsed.warnings)
            out.warnings.push_back(path.filename().string() + ": " + std::move(w));
    }
    return out;
}

}  // namespace mentor
