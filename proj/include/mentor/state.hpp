#pragma once
// Standardized learner state vector and the evaluation context seen by
// trigger rules. The eight metrics are the cross-environment contract:
// every adapter emits exactly this shape.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace mentor {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// All metrics live in [0,1] except learning_rate, which is a delta in [-1,1].
struct MetricRange {
    double lo;
    double hi;
};

struct StateVector {
    double proficiency = 0.0;
    double learning_rate = 0.0;
    double frustration = 0.0;
    double engagement = 0.0;
    double effort = 0.0;
    double confidence = 0.0;
    double exploration = 0.0;
    double metacognition = 0.0;

    bool operator==(const StateVector&) const = default;

    static const std::array<std::string_view, 8>& metric_names() {
        static const std::array<std::string_view, 8> names = {
            "proficiency", "learning_rate", "frustration", "engagement",
            "effort",      "confidence",    "exploration", "metacognition"};
        return names;
    }

    double get(std::string_view name) const {
        if (name == "proficiency") return proficiency;
        if (name == "learning_rate") return learning_rate;
        if (name == "frustration") return frustration;
        if (name == "engagement") return engagement;
        if (name == "effort") return effort;
        if (name == "confidence") return confidence;
        if (name == "exploration") return exploration;
        if (name == "metacognition") return metacognition;
        throw std::out_of_range("unknown metric: " + std::string(name));
    }

    void set(std::string_view name, double value) {
        if (name == "proficiency") proficiency = value;
        else if (name == "learning_rate") learning_rate = value;
        else if (name == "frustration") frustration = value;
        else if (name == "engagement") engagement = value;
        else if (name == "effort") effort = value;
        else if (name == "confidence") confidence = value;
        else if (name == "exploration") exploration = value;
        else if (name == "metacognition") metacognition = value;
        else throw std::out_of_range("unknown metric: " + std::string(name));
    }

    void clamp_all() {
        proficiency = clamp01(proficiency);
        learning_rate = std::clamp(learning_rate, -1.0, 1.0);
        frustration = clamp01(frustration);
        engagement = clamp01(engagement);
        effort = clamp01(effort);
        confidence = clamp01(confidence);
        exploration = clamp01(exploration);
        metacognition = clamp01(metacognition);
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        for (auto name : metric_names()) j[std::string(name)] = get(name);
        return j;
    }

    static StateVector from_json(const nlohmann::json& j) {
        StateVector s;
        for (auto name : metric_names()) s.set(name, j.at(std::string(name)).get<double>());
        return s;
    }
};

inline bool is_metric(std::string_view name) {
    const auto& names = StateVector::metric_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

// Auxiliary counters referenced by trigger conditions but not part of the
// outgoing vector. Derived from events; never a target of update_state.
inline const std::array<std::string_view, 3>& counter_names() {
    static const std::array<std::string_view, 3> names = {"errors", "attempts",
                                                          "seconds_since_last_event"};
    return names;
}

inline bool is_counter(std::string_view name) {
    const auto& names = counter_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

inline MetricRange metric_range(std::string_view name) {
    if (name == "learning_rate") return {-1.0, 1.0};
    return {0.0, 1.0};
}

struct EvaluationContext {
    StateVector state;
    int errors = 0;
    int attempts = 0;
    double seconds_since_last_event = 0.0;

    double value_of(std::string_view name) const {
        if (name == "errors") return static_cast<double>(errors);
        if (name == "attempts") return static_cast<double>(attempts);
        if (name == "seconds_since_last_event") return seconds_since_last_event;
        return state.get(name);
    }
};

}  // namespace mentor
