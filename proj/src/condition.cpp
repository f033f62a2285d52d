#include "mentor/condition.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>

namespace mentor {

std::string_view to_string(CmpOp op) {
    switch (op) {
        case CmpOp::Gt: return ">";
        case CmpOp::Ge: return ">=";
        case CmpOp::Lt: return "<";
        case CmpOp::Le: return "<=";
        case CmpOp::Eq: return "==";
    }
    return "?";
}

ConditionPtr ConditionNode::comparison(std::string name, CmpOp op, double threshold) {
    auto n = std::make_shared<ConditionNode>();
    n->kind = Kind::Comparison;
    n->name = std::move(name);
    n->op = op;
    n->threshold = threshold;
    return n;
}

ConditionPtr ConditionNode::logical_and(ConditionPtr l, ConditionPtr r) {
    auto n = std::make_shared<ConditionNode>();
    n->kind = Kind::And;
    n->left = std::move(l);
    n->right = std::move(r);
    return n;
}

ConditionPtr ConditionNode::logical_or(ConditionPtr l, ConditionPtr r) {
    auto n = std::make_shared<ConditionNode>();
    n->kind = Kind::Or;
    n->left = std::move(l);
    n->right = std::move(r);
    return n;
}

ConditionPtr ConditionNode::logical_not(ConditionPtr inner) {
    auto n = std::make_shared<ConditionNode>();
    n->kind = Kind::Not;
    n->left = std::move(inner);
    return n;
}

ConditionParseError::ConditionParseError(Code code, size_t position, const std::string& detail)
    : std::runtime_error("condition parse error at " + std::to_string(position) + ": " + detail),
      code(code),
      position(position) {}

const std::set<std::string>& default_condition_vocabulary() {
    static const std::set<std::string> vocab = [] {
        std::set<std::string> v;
        for (auto name : StateVector::metric_names()) v.emplace(name);
        for (auto name : counter_names()) v.emplace(name);
        return v;
    }();
    return vocab;
}

namespace {

struct Token {
    enum class Kind { Ident, Number, Op, LParen, RParen, End };
    Kind kind;
    size_t pos;
    std::string text;   // lowercased for idents
    CmpOp op = CmpOp::Gt;
    double number = 0.0;
};

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

class Lexer {
public:
    explicit Lexer(const std::string& src) : src_(src) { advance(); }

    const Token& peek() const { return tok_; }

    Token next() {
        Token t = tok_;
        advance();
        return t;
    }

private:
    void advance() {
        while (i_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[i_]))) ++i_;
        tok_.pos = i_;
        if (i_ >= src_.size()) {
            tok_.kind = Token::Kind::End;
            tok_.text.clear();
            return;
        }
        char c = src_[i_];
        if (c == '(') {
            tok_ = {Token::Kind::LParen, i_++, "("};
            return;
        }
        if (c == ')') {
            tok_ = {Token::Kind::RParen, i_++, ")"};
            return;
        }
        if (c == '>' || c == '<' || c == '=' || c == '!') {
            size_t start = i_;
            bool has_eq = i_ + 1 < src_.size() && src_[i_ + 1] == '=';
            if (c == '>') {
                tok_ = {Token::Kind::Op, start, has_eq ? ">=" : ">"};
                tok_.op = has_eq ? CmpOp::Ge : CmpOp::Gt;
                i_ += has_eq ? 2 : 1;
                return;
            }
            if (c == '<') {
                tok_ = {Token::Kind::Op, start, has_eq ? "<=" : "<"};
                tok_.op = has_eq ? CmpOp::Le : CmpOp::Lt;
                i_ += has_eq ? 2 : 1;
                return;
            }
            if (c == '=' && has_eq) {
                tok_ = {Token::Kind::Op, start, "=="};
                tok_.op = CmpOp::Eq;
                i_ += 2;
                return;
            }
            throw ConditionParseError(ConditionParseError::Code::UnexpectedToken, start,
                                      std::string("unexpected character '") + c + "'");
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+') {
            const char* begin = src_.c_str() + i_;
            char* end = nullptr;
            double v = std::strtod(begin, &end);
            if (end == begin)
                throw ConditionParseError(ConditionParseError::Code::UnexpectedToken, i_,
                                          "expected number");
            tok_ = {Token::Kind::Number, i_, std::string(begin, static_cast<const char*>(end))};
            tok_.number = v;
            i_ += static_cast<size_t>(end - begin);
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = i_;
            while (i_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[i_])) || src_[i_] == '_'))
                ++i_;
            tok_ = {Token::Kind::Ident, start, lower(src_.substr(start, i_ - start))};
            return;
        }
        throw ConditionParseError(ConditionParseError::Code::UnexpectedToken, i_,
                                  std::string("unexpected character '") + c + "'");
    }

    const std::string& src_;
    size_t i_ = 0;
    Token tok_;
};

class Parser {
public:
    Parser(const std::string& src, const std::set<std::string>& vocab)
        : lex_(src), vocab_(vocab) {}

    ConditionPtr parse() {
        ConditionPtr e = expr();
        if (lex_.peek().kind != Token::Kind::End)
            throw ConditionParseError(ConditionParseError::Code::TrailingInput, lex_.peek().pos,
                                      "trailing input '" + lex_.peek().text + "'");
        return e;
    }

private:
    ConditionPtr expr() {
        ConditionPtr left = term();
        while (is_keyword("or")) {
            lex_.next();
            left = ConditionNode::logical_or(std::move(left), term());
        }
        return left;
    }

    ConditionPtr term() {
        ConditionPtr left = factor();
        while (is_keyword("and")) {
            lex_.next();
            left = ConditionNode::logical_and(std::move(left), factor());
        }
        return left;
    }

    ConditionPtr factor() {
        if (is_keyword("not")) {
            lex_.next();
            return ConditionNode::logical_not(factor());
        }
        if (lex_.peek().kind == Token::Kind::LParen) {
            lex_.next();
            ConditionPtr inner = expr();
            if (lex_.peek().kind != Token::Kind::RParen)
                throw ConditionParseError(ConditionParseError::Code::UnexpectedToken,
                                          lex_.peek().pos, "expected ')'");
            lex_.next();
            return inner;
        }
        return comparison();
    }

    ConditionPtr comparison() {
        Token ident = lex_.peek();
        if (ident.kind != Token::Kind::Ident)
            throw ConditionParseError(ConditionParseError::Code::UnexpectedToken, ident.pos,
                                      "expected identifier, got '" + ident.text + "'");
        lex_.next();
        if (!vocab_.count(ident.text))
            throw ConditionParseError(ConditionParseError::Code::UnknownIdentifier, ident.pos,
                                      "unknown identifier '" + ident.text + "'");
        Token op = lex_.peek();
        if (op.kind != Token::Kind::Op)
            throw ConditionParseError(ConditionParseError::Code::UnexpectedToken, op.pos,
                                      "expected comparison operator");
        lex_.next();
        Token num = lex_.peek();
        if (num.kind != Token::Kind::Number)
            throw ConditionParseError(ConditionParseError::Code::UnexpectedToken, num.pos,
                                      "expected number");
        if (!std::isfinite(num.number))
            throw ConditionParseError(ConditionParseError::Code::UnexpectedToken, num.pos,
                                      "threshold must be finite");
        lex_.next();
        return ConditionNode::comparison(ident.text, op.op, num.number);
    }

    bool is_keyword(std::string_view kw) const {
        return lex_.peek().kind == Token::Kind::Ident && lex_.peek().text == kw;
    }

    Lexer lex_;
    const std::set<std::string>& vocab_;
};

int precedence(ConditionNode::Kind k) {
    switch (k) {
        case ConditionNode::Kind::Or: return 0;
        case ConditionNode::Kind::And: return 1;
        case ConditionNode::Kind::Not: return 2;
        case ConditionNode::Kind::Comparison: return 3;
    }
    return 3;
}

std::string format_number(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

void print_node(const ConditionPtr& n, int parent_prec, std::string& out) {
    int prec = precedence(n->kind);
    bool parens = prec < parent_prec;
    if (parens) out += '(';
    switch (n->kind) {
        case ConditionNode::Kind::Comparison:
            out += n->name;
            out += ' ';
            out += to_string(n->op);
            out += ' ';
            out += format_number(n->threshold);
            break;
        case ConditionNode::Kind::And:
            print_node(n->left, prec, out);
            out += " AND ";
            print_node(n->right, prec + 1, out);
            break;
        case ConditionNode::Kind::Or:
            print_node(n->left, prec, out);
            out += " OR ";
            print_node(n->right, prec + 1, out);
            break;
        case ConditionNode::Kind::Not:
            out += "NOT ";
            print_node(n->left, prec + 1, out);
            break;
    }
    if (parens) out += ')';
}

}  // namespace

ConditionPtr parse_condition(const std::string& source, const std::set<std::string>& vocabulary) {
    return Parser(source, vocabulary).parse();
}

bool evaluate(const ConditionPtr& ast, const EvaluationContext& ctx) {
    switch (ast->kind) {
        case ConditionNode::Kind::Comparison: {
            double v = ctx.value_of(ast->name);
            switch (ast->op) {
                case CmpOp::Gt: return v > ast->threshold;
                case CmpOp::Ge: return v >= ast->threshold;
                case CmpOp::Lt: return v < ast->threshold;
                case CmpOp::Le: return v <= ast->threshold;
                case CmpOp::Eq: return v == ast->threshold;
            }
            return false;
        }
        case ConditionNode::Kind::And: return evaluate(ast->left, ctx) && evaluate(ast->right, ctx);
        case ConditionNode::Kind::Or: return evaluate(ast->left, ctx) || evaluate(ast->right, ctx);
        case ConditionNode::Kind::Not: return !evaluate(ast->left, ctx);
    }
    return false;
}

std::string to_string(const ConditionPtr& ast) {
    std::string out;
    print_node(ast, 0, out);
    return out;
}

bool structurally_equal(const ConditionPtr& a, const ConditionPtr& b) {
    if (a == b) return true;
    if (!a || !b) return false;
    if (a->kind != b->kind) return false;
    switch (a->kind) {
        case ConditionNode::Kind::Comparison:
            return a->name == b->name && a->op == b->op && a->threshold == b->threshold;
        case ConditionNode::Kind::Not: return structurally_equal(a->left, b->left);
        case ConditionNode::Kind::And:
        case ConditionNode::Kind::Or:
            return structurally_equal(a->left, b->left) && structurally_equal(a->right, b->right);
    }
    return false;
}

}  // namespace mentor
