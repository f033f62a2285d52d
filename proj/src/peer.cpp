#include "mentor/peer.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace mentor {
namespace {

using nlohmann::json;

const std::set<std::string>& default_stopwords() {
    static const std::set<std::string> words = {
        "about", "above", "after", "again", "because", "before", "being", "below",
        "between", "could", "doing", "during", "especially", "everything",
        "having", "often", "other", "others", "should", "since", "some", "something",
        "their", "theirs", "there", "these", "they", "things", "think", "those",
        "through", "under", "until", "usually", "very", "where", "which", "while",
        "whose", "would", "your", "yours"};
    return words;
}

std::string lowercase(std::string text) {
    std::transform(text.begin(), text.end(), text.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return text;
}

std::set<std::string> tokenize_words(const std::string& text) {
    std::set<std::string> out;
    std::string word;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!word.empty()) {
            out.insert(word);
            word.clear();
        }
    }
    if (!word.empty()) out.insert(word);
    return out;
}

std::string two_decimals(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", value);
    return buf;
}

}  // namespace

StrategyRegistry StrategyRegistry::builtin() {
    StrategyRegistry r;
    r.add({"encourage_and_reframe", "You are a friendly peer.",
           "Encourage them and hint at the key fact without giving the answer.",
           "Hey, no worries! This part trips up a lot of people. Want to take another "
           "look at it together from a different angle?"});
    r.add({"reinforce_and_extend", "You are an encouraging peer.",
           "Congratulate them and ask a question to extend their thinking to a related topic.",
           "That was really solid work! I wonder how it connects to the next thing we "
           "are going to see."});
    return r;
}

void StrategyRegistry::add(StrategyTemplate strategy) {
    strategies_[strategy.strategy_id] = std::move(strategy);
}

const StrategyTemplate* StrategyRegistry::find(const std::string& strategy_id) const {
    auto it = strategies_.find(strategy_id);
    return it == strategies_.end() ? nullptr : &it->second;
}

std::set<std::string> StrategyRegistry::ids() const {
    std::set<std::string> out;
    for (const auto& [id, s] : strategies_) out.insert(id);
    return out;
}

void StrategyRegistry::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StrategyFileError("cannot read " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw StrategyFileError(std::string("malformed strategies file: ") + e.what());
    }
    if (!doc.is_array()) throw StrategyFileError("strategies file must be a JSON array");
    for (const auto& entry : doc) {
        if (!entry.is_object()) throw StrategyFileError("strategy entry must be an object");
        StrategyTemplate s;
        for (const char* key : {"strategy_id", "persona_line", "goal_instruction",
                                "fallback_line"})
            if (!entry.contains(key) || !entry[key].is_string())
                throw StrategyFileError(std::string("strategy entry missing text field: ") + key);
        s.strategy_id = entry["strategy_id"].get<std::string>();
        s.persona_line = entry["persona_line"].get<std::string>();
        s.goal_instruction = entry["goal_instruction"].get<std::string>();
        s.fallback_line = entry["fallback_line"].get<std::string>();
        if (s.strategy_id.empty() || s.persona_line.empty() || s.goal_instruction.empty())
            throw StrategyFileError("strategy fields must be non-empty");
        add(std::move(s));
    }
}

std::string PromptBundle::render() const {
    std::ostringstream out;
    out << persona_line << "\n" << situation_summary << "\n";
    for (const std::string& line : key_fact_lines) out << line << "\n";
    for (const std::string& line : misconception_lines) out << line << "\n";
    out << goal_line;
    return out.str();
}

PromptBundle build_prompt(const TriggerDispatch& dispatch, const GroundingBundle& bundle,
                          const StrategyRegistry& registry, const Ontology& ontology) {
    const StrategyTemplate* strategy = registry.find(dispatch.strategy_id);
    if (!strategy) throw UnknownStrategyError(dispatch.strategy_id);
    const Concept* node = ontology.find(dispatch.concept_id);
    if (!node) throw UnknownConceptError(dispatch.concept_id);

    PromptBundle prompt;
    prompt.persona_line = strategy->persona_line;
    std::ostringstream situation;
    situation << "The student is working on '" << node->display_name << "' (frustration "
              << two_decimals(dispatch.state_snapshot.frustration) << ", proficiency "
              << two_decimals(dispatch.state_snapshot.proficiency) << ").";
    if (!dispatch.student_query.empty())
        situation << " The student asked: \"" << dispatch.student_query << "\"";
    prompt.situation_summary = situation.str();
    for (const std::string& fact : bundle.key_facts)
        prompt.key_fact_lines.push_back("KEY FACT: " + fact);
    for (const std::string& misconception : bundle.misconceptions)
        prompt.misconception_lines.push_back("MISCONCEPTION: " + misconception);
    prompt.goal_line = "GOAL: " + strategy->goal_instruction;
    prompt.empty_grounding = bundle.key_facts.empty();
    return prompt;
}

std::string StubBackend::generate(const std::string& prompt) {
    std::string fact;
    std::istringstream lines(prompt);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.rfind("KEY FACT: ", 0) == 0) {
            fact = line.substr(10);
            break;
        }
    }
    bool friendly = prompt.find("friendly peer") != std::string::npos;
    std::string opener = friendly ? "Hey, no stress, this one is tricky!"
                                  : "Nice going, you are on a roll!";
    if (fact.empty())
        return opener + " Want to talk through what we just tried, step by step?";
    return opener + " Here is something that helped me: " + fact +
           " Does that change how you see it?";
}

HttpBackend::HttpBackend(std::string url, std::string api_key, double timeout_seconds)
    : url_(std::move(url)), api_key_(std::move(api_key)), timeout_seconds_(timeout_seconds) {}

std::string HttpBackend::generate(const std::string& prompt) {
    if (url_.empty()) throw BackendNotConfiguredError();

    // Split scheme://host[:port] from the path.
    std::string base = url_;
    std::string path = "/";
    size_t scheme = base.find("://");
    if (scheme != std::string::npos) {
        size_t slash = base.find('/', scheme + 3);
        if (slash != std::string::npos) {
            path = base.substr(slash);
            base = base.substr(0, slash);
        }
    }

    json body;
    body["prompt"] = prompt;
    std::string payload = body.dump();

    for (int attempt = 0; attempt < 2; ++attempt) {
        httplib::Client client(base);
        client.set_connection_timeout(static_cast<time_t>(timeout_seconds_),
                                      static_cast<time_t>((timeout_seconds_ -
                                                           static_cast<time_t>(timeout_seconds_)) *
                                                          1000000));
        client.set_read_timeout(static_cast<time_t>(timeout_seconds_), 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            if (attempt == 0) continue;  // one retry on transport failure
            if (res.error() == httplib::Error::ConnectionTimeout ||
                res.error() == httplib::Error::Read)
                throw BackendTimeoutError();
            throw BackendError("backend transport failure");
        }
        if (res->status < 200 || res->status >= 300)
            throw BackendError("backend returned status " + std::to_string(res->status),
                               res->status);
        json doc;
        try {
            doc = json::parse(res->body);
        } catch (const json::exception&) {
            throw BackendError("backend returned invalid JSON");
        }
        if (!doc.contains("text") || !doc["text"].is_string() ||
            doc["text"].get<std::string>().empty())
            throw BackendError("backend returned empty text");
        return doc["text"].get<std::string>();
    }
    throw BackendError("backend unreachable");
}

std::set<std::string> grounding_keywords(const GroundingBundle& bundle,
                                         const ValidatorConfig& cfg) {
    std::set<std::string> keywords;
    for (const std::string& fact : bundle.key_facts) {
        for (const std::string& word : tokenize_words(fact)) {
            if (word.size() < cfg.min_keyword_length) continue;
            if (default_stopwords().count(word)) continue;
            if (std::find(cfg.extra_stopwords.begin(), cfg.extra_stopwords.end(), word) !=
                cfg.extra_stopwords.end())
                continue;
            keywords.insert(word);
        }
    }
    return keywords;
}

ValidationResult validate_response(const std::string& text, const GroundingBundle& bundle,
                                   const StrategyTemplate& strategy,
                                   const std::vector<std::string>& giveaway_phrases,
                                   const ValidatorConfig& cfg) {
    if (text.size() < cfg.min_length || text.size() > cfg.max_length)
        return {false, "length"};
    if (!bundle.key_facts.empty()) {
        std::set<std::string> keywords = grounding_keywords(bundle, cfg);
        std::set<std::string> words = tokenize_words(text);
        bool grounded = std::any_of(keywords.begin(), keywords.end(),
                                    [&](const std::string& k) { return words.count(k) > 0; });
        if (!keywords.empty() && !grounded) return {false, "grounding"};
    }
    if (strategy.strategy_id == "encourage_and_reframe") {
        std::string lower = lowercase(text);
        for (const std::string& phrase : giveaway_phrases)
            if (!phrase.empty() && lower.find(lowercase(phrase)) != std::string::npos)
                return {false, "giveaway"};
    }
    return {true, ""};
}

PeerResponse handle_trigger(const TriggerDispatch& dispatch, const Ontology& ontology,
                            const StrategyRegistry& registry, GenerationBackend& backend,
                            const PeerAgentConfig& cfg, const RetrievalConfig& retrieval) {
    const StrategyTemplate* strategy = registry.find(dispatch.strategy_id);
    if (!strategy) throw UnknownStrategyError(dispatch.strategy_id);

    GroundingBundle bundle = retrieve_grounding(ontology, dispatch.concept_id,
                                                dispatch.strategy_id, dispatch.state_snapshot,
                                                registry.ids(), retrieval);
    PromptBundle prompt = build_prompt(dispatch, bundle, registry, ontology);
    std::string rendered = prompt.render();

    std::vector<std::string> giveaways;
    if (auto it = cfg.giveaway_phrases.find(dispatch.concept_id);
        it != cfg.giveaway_phrases.end())
        giveaways = it->second;

    PeerResponse response;
    response.strategy_id = dispatch.strategy_id;
    for (int attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
        response.attempts_used = attempt;
        std::string text;
        try {
            text = backend.generate(rendered);
        } catch (const BackendError&) {
            continue;  // treat like a failed attempt; fall back on exhaustion
        }
        ValidationResult check =
            validate_response(text, bundle, *strategy, giveaways, cfg.validator);
        if (check.passed) {
            response.text = std::move(text);
            response.validated = true;
            return response;
        }
    }
    response.text = strategy->fallback_line;
    response.validated = false;
    response.fallback_used = true;
    return response;
}

}  // namespace mentor
