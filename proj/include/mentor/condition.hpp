#pragma once
// Trigger-condition language for pedagogical rules.
//
// Grammar:
//   expr       := term (OR term)*
//   term       := factor (AND factor)*
//   factor     := NOT factor | '(' expr ')' | comparison
//   comparison := ident op number        op: > >= < <= ==
//
// AND binds tighter than OR. Identifiers and keywords are case-insensitive;
// identifiers are canonicalized to lowercase and must name a metric or
// counter.

#include <memory>
#include <set>
#include <stdexcept>
#include <string>

#include "mentor/state.hpp"

namespace mentor {

enum class CmpOp { Gt, Ge, Lt, Le, Eq };

std::string_view to_string(CmpOp op);

struct ConditionNode;
using ConditionPtr = std::shared_ptr<const ConditionNode>;

struct ConditionNode {
    enum class Kind { Comparison, And, Or, Not };
    Kind kind;

    // Comparison
    std::string name;
    CmpOp op = CmpOp::Gt;
    double threshold = 0.0;

    // And/Or use left+right, Not uses left only.
    ConditionPtr left;
    ConditionPtr right;

    static ConditionPtr comparison(std::string name, CmpOp op, double threshold);
    static ConditionPtr logical_and(ConditionPtr l, ConditionPtr r);
    static ConditionPtr logical_or(ConditionPtr l, ConditionPtr r);
    static ConditionPtr logical_not(ConditionPtr inner);
};

class ConditionParseError : public std::runtime_error {
public:
    enum class Code { UnexpectedToken, UnknownIdentifier, TrailingInput };

    ConditionParseError(Code code, size_t position, const std::string& detail);

    Code code;
    size_t position;  // byte offset into the source
};

// Vocabulary of names a condition may reference: the eight metrics plus the
// auxiliary counters.
const std::set<std::string>& default_condition_vocabulary();

ConditionPtr parse_condition(const std::string& source,
                             const std::set<std::string>& vocabulary = default_condition_vocabulary());

bool evaluate(const ConditionPtr& ast, const EvaluationContext& ctx);

// Minimal-parentheses rendering; parse(to_string(x)) is structurally equal
// to x.
std::string to_string(const ConditionPtr& ast);

bool structurally_equal(const ConditionPtr& a, const ConditionPtr& b);

}  // namespace mentor
