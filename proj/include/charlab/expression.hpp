#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "charlab/dual.hpp"
#include "charlab/errors.hpp"
#include "charlab/linalg.hpp"

namespace charlab {

/// Variable bindings for evaluation. Extra entries are ignored; a missing
/// entry for a free variable raises UnboundVariableError.
using Bindings = std::map<std::string, double>;

namespace detail {

enum class NodeKind : std::uint8_t {
    literal,
    variable,
    neg,
    add,
    sub,
    mul,
    div,
    pow,
    call,
};

enum class FuncId : std::uint8_t {
    sin,
    cos,
    tan,
    exp,
    log,
    sqrt,
    sinh,
    cosh,
    tanh,
    abs,
    min,
    max,
};

struct FuncInfo {
    std::string_view name;
    FuncId id;
    int arity;
};

inline constexpr std::array<FuncInfo, 12> kFunctions{{
    {"sin", FuncId::sin, 1},
    {"cos", FuncId::cos, 1},
    {"tan", FuncId::tan, 1},
    {"exp", FuncId::exp, 1},
    {"log", FuncId::log, 1},
    {"sqrt", FuncId::sqrt, 1},
    {"sinh", FuncId::sinh, 1},
    {"cosh", FuncId::cosh, 1},
    {"tanh", FuncId::tanh, 1},
    {"abs", FuncId::abs, 1},
    {"min", FuncId::min, 2},
    {"max", FuncId::max, 2},
}};

inline const FuncInfo* find_function(std::string_view name) {
    for (const auto& f : kFunctions)
        if (f.name == name) return &f;
    return nullptr;
}

struct Node {
    NodeKind kind;
    FuncId func = FuncId::sin;
    std::int32_t slot = -1;  // variable index for NodeKind::variable
    double literal = 0.0;
};

inline constexpr std::size_t kMaxEvalStack = 128;

}  // namespace detail

/**
 * A parsed scalar expression over named variables, stored as a postfix
 * program. Immutable after parse; evaluation is a pure function, so one
 * Expression may be evaluated from many threads at once.
 */
class Expression {
public:
    /// Free variables in order of first appearance in the source text.
    const std::vector<std::string>& free_vars() const { return vars_; }

    /// Slot of a variable name, or -1 when the name does not occur.
    int var_slot(std::string_view name) const {
        for (std::size_t i = 0; i < vars_.size(); ++i)
            if (vars_[i] == name) return static_cast<int>(i);
        return -1;
    }

    /// Value at slot-ordered variable values (free_vars() order).
    double value(std::span<const double> values) const { return eval_generic<double>(values); }

    /// Value at named bindings.
    double eval(const Bindings& b) const {
        std::vector<double> values = slot_values(b);
        return value(values);
    }

    /// One exact partial derivative by dual-number propagation.
    double derivative(std::span<const double> values, int seed_slot) const {
        std::array<dual1, 32> slots;
        for (std::size_t i = 0; i < vars_.size(); ++i)
            slots[i] = dual1(values[i], i == static_cast<std::size_t>(seed_slot) ? 1.0 : 0.0);
        return eval_generic<dual1>(std::span<const dual1>(slots.data(), vars_.size())).dot;
    }

    /// One exact second partial by nested duals.
    double second_derivative(std::span<const double> values, int slot_i, int slot_j) const {
        std::array<dual2, 32> slots;
        for (std::size_t i = 0; i < vars_.size(); ++i) {
            double di = i == static_cast<std::size_t>(slot_i) ? 1.0 : 0.0;
            double dj = i == static_cast<std::size_t>(slot_j) ? 1.0 : 0.0;
            slots[i] = dual2(dual1(values[i], dj), dual1(di, 0.0));
        }
        return eval_generic<dual2>(std::span<const dual2>(slots.data(), vars_.size())).dot.dot;
    }

    std::vector<double> slot_values(const Bindings& b) const {
        std::vector<double> values(vars_.size());
        for (std::size_t i = 0; i < vars_.size(); ++i) {
            auto it = b.find(vars_[i]);
            if (it == b.end()) throw UnboundVariableError(vars_[i]);
            values[i] = it->second;
        }
        return values;
    }

    const std::vector<detail::Node>& nodes() const { return nodes_; }

private:
    friend Expression parse(std::string_view);
    friend std::string to_string(const Expression&);

    template <class T>
    T eval_generic(std::span<const T> slots) const;

    std::string subexpr_text(std::size_t node_end) const;

    std::vector<detail::Node> nodes_;
    std::vector<std::string> vars_;
};

// -- parsing ------------------------------------------------------------

namespace detail {

struct Token {
    enum Kind { number, ident, plus, minus, star, slash, caret, lparen, rparen, comma, end };
    Kind kind;
    std::size_t pos;
    std::string_view text;
    double value = 0.0;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) { advance(); }

    const Token& peek() const { return tok_; }

    Token take() {
        Token t = tok_;
        advance();
        return t;
    }

private:
    void advance() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r'))
            ++pos_;
        tok_.pos = pos_;
        if (pos_ >= src_.size()) {
            tok_.kind = Token::end;
            tok_.text = {};
            return;
        }
        char c = src_[pos_];
        switch (c) {
            case '+': tok_.kind = Token::plus; break;
            case '-': tok_.kind = Token::minus; break;
            case '*': tok_.kind = Token::star; break;
            case '/': tok_.kind = Token::slash; break;
            case '^': tok_.kind = Token::caret; break;
            case '(': tok_.kind = Token::lparen; break;
            case ')': tok_.kind = Token::rparen; break;
            case ',': tok_.kind = Token::comma; break;
            default:
                if ((c >= '0' && c <= '9') || c == '.') {
                    lex_number();
                    return;
                }
                if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) {
                    lex_ident();
                    return;
                }
                throw SyntaxError(pos_, "a token (unexpected character '" + std::string(1, c) + "')");
        }
        tok_.text = src_.substr(pos_, 1);
        ++pos_;
    }

    // Decimal literal with optional fraction and exponent.
    void lex_number() {
        std::size_t start = pos_;
        while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') ++pos_;
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') ++pos_;
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t mark = pos_;
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') {
                while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') ++pos_;
            } else {
                pos_ = mark;  // 'e' was the start of an identifier, not an exponent
            }
        }
        std::string_view text = src_.substr(start, pos_ - start);
        if (text == ".") throw SyntaxError(start, "a numeric literal");
        tok_.kind = Token::number;
        tok_.text = text;
        double v = 0.0;
        std::from_chars(text.data(), text.data() + text.size(), v);
        tok_.value = v;
    }

    void lex_ident() {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               ((src_[pos_] >= 'a' && src_[pos_] <= 'z') || (src_[pos_] >= 'A' && src_[pos_] <= 'Z') ||
                (src_[pos_] >= '0' && src_[pos_] <= '9')))
            ++pos_;
        tok_.kind = Token::ident;
        tok_.text = src_.substr(start, pos_ - start);
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    Token tok_{Token::end, 0, {}, 0.0};
};

class Parser {
public:
    explicit Parser(std::string_view src) : lex_(src) {}

    void run(std::vector<Node>& nodes, std::vector<std::string>& vars) {
        nodes_ = &nodes;
        vars_ = &vars;
        parse_expr();
        if (lex_.peek().kind != Token::end) throw SyntaxError(lex_.peek().pos, "end of input or an operator");
    }

private:
    void emit(Node n) { nodes_->push_back(n); }

    int slot_for(std::string_view name) {
        for (std::size_t i = 0; i < vars_->size(); ++i)
            if ((*vars_)[i] == name) return static_cast<int>(i);
        vars_->emplace_back(name);
        return static_cast<int>(vars_->size() - 1);
    }

    void parse_expr() {
        parse_term();
        while (lex_.peek().kind == Token::plus || lex_.peek().kind == Token::minus) {
            Token op = lex_.take();
            parse_term();
            emit({op.kind == Token::plus ? NodeKind::add : NodeKind::sub});
        }
    }

    void parse_term() {
        parse_factor();
        while (lex_.peek().kind == Token::star || lex_.peek().kind == Token::slash) {
            Token op = lex_.take();
            parse_factor();
            emit({op.kind == Token::star ? NodeKind::mul : NodeKind::div});
        }
    }

    void parse_factor() {
        if (lex_.peek().kind == Token::minus) {
            lex_.take();
            parse_factor();
            emit({NodeKind::neg});
            return;
        }
        parse_power();
    }

    void parse_power() {
        parse_atom();
        if (lex_.peek().kind == Token::caret) {
            lex_.take();
            parse_factor();  // right-associative, binds tighter than unary minus
            emit({NodeKind::pow});
        }
    }

    void parse_atom() {
        const Token& t = lex_.peek();
        switch (t.kind) {
            case Token::number: {
                Token num = lex_.take();
                Node n{NodeKind::literal};
                n.literal = num.value;
                emit(n);
                return;
            }
            case Token::ident: {
                Token id = lex_.take();
                if (lex_.peek().kind == Token::lparen) {
                    parse_call(id);
                } else {
                    Node n{NodeKind::variable};
                    n.slot = slot_for(id.text);
                    emit(n);
                }
                return;
            }
            case Token::lparen: {
                lex_.take();
                parse_expr();
                expect(Token::rparen, "')'");
                return;
            }
            default:
                throw SyntaxError(t.pos, "a number, variable, function call, or '('");
        }
    }

    void parse_call(const Token& name) {
        const FuncInfo* info = find_function(name.text);
        if (!info) throw UnknownFunctionError(std::string(name.text), name.pos);
        lex_.take();  // '('
        int argc = 0;
        for (;;) {
            parse_expr();
            ++argc;
            if (lex_.peek().kind == Token::comma) {
                lex_.take();
                continue;
            }
            break;
        }
        expect(Token::rparen, "')' or ','");
        if (argc != info->arity)
            throw SyntaxError(name.pos, "function '" + std::string(name.text) + "' applied to " +
                                            std::to_string(info->arity) + " argument(s)");
        Node n{NodeKind::call};
        n.func = info->id;
        emit(n);
    }

    void expect(Token::Kind kind, const std::string& what) {
        if (lex_.peek().kind != kind) throw SyntaxError(lex_.peek().pos, what);
        lex_.take();
    }

    Lexer lex_;
    std::vector<Node>* nodes_ = nullptr;
    std::vector<std::string>* vars_ = nullptr;
};

inline std::size_t stack_need(const std::vector<Node>& nodes) {
    std::size_t depth = 0, peak = 0;
    for (const auto& n : nodes) {
        switch (n.kind) {
            case NodeKind::literal:
            case NodeKind::variable: ++depth; break;
            case NodeKind::neg: break;
            case NodeKind::call:
                if (n.func == FuncId::min || n.func == FuncId::max) --depth;
                break;
            default: --depth; break;
        }
        peak = std::max(peak, depth);
    }
    return peak;
}

}  // namespace detail

/// Parse expression text. Grammar (precedence low to high): '+'/'-',
/// '*'/'/', unary '-', right-associative '^', atoms.
inline Expression parse(std::string_view text) {
    Expression e;
    detail::Parser parser(text);
    parser.run(e.nodes_, e.vars_);
    if (detail::stack_need(e.nodes_) > detail::kMaxEvalStack) throw Error("expression too deeply nested");
    if (e.vars_.size() > 32) throw Error("too many distinct variables (limit 32)");
    return e;
}

// -- printing -----------------------------------------------------------

namespace detail {
inline std::string format_double(double v);
}

/// Canonical fully parenthesized rendering; parse(to_string(e)) evaluates
/// identically to e.
inline std::string to_string(const Expression& e) {
    std::vector<std::string> stack;
    for (const auto& n : e.nodes()) {
        using detail::NodeKind;
        switch (n.kind) {
            case NodeKind::literal: stack.push_back(detail::format_double(n.literal)); break;
            case NodeKind::variable: stack.push_back(e.free_vars()[static_cast<std::size_t>(n.slot)]); break;
            case NodeKind::neg: stack.back() = "(-" + stack.back() + ")"; break;
            case NodeKind::call: {
                int arity = (n.func == detail::FuncId::min || n.func == detail::FuncId::max) ? 2 : 1;
                std::string_view name;
                for (const auto& f : detail::kFunctions)
                    if (f.id == n.func) name = f.name;
                if (arity == 1) {
                    stack.back() = std::string(name) + "(" + stack.back() + ")";
                } else {
                    std::string b = stack.back();
                    stack.pop_back();
                    stack.back() = std::string(name) + "(" + stack.back() + ", " + b + ")";
                }
                break;
            }
            default: {
                const char* op = n.kind == NodeKind::add   ? " + "
                                 : n.kind == NodeKind::sub ? " - "
                                 : n.kind == NodeKind::mul ? " * "
                                 : n.kind == NodeKind::div ? " / "
                                                           : " ^ ";
                std::string b = stack.back();
                stack.pop_back();
                stack.back() = "(" + stack.back() + op + b + ")";
                break;
            }
        }
    }
    return stack.empty() ? "" : stack.back();
}

// -- evaluation ---------------------------------------------------------

namespace detail {

// Integer power by repeated multiplication so that derivative propagation
// stays exact for negative bases as well.
template <class T>
T ipow(const T& base, long k) {
    T acc = make_scalar<T>(1.0);
    for (long i = 0; i < k; ++i) acc = acc * base;
    return acc;
}

}  // namespace detail

template <class T>
T Expression::eval_generic(std::span<const T> slots) const {
    std::array<T, detail::kMaxEvalStack> stack;
    std::size_t top = 0;
    for (std::size_t idx = 0; idx < nodes_.size(); ++idx) {
        const detail::Node& n = nodes_[idx];
        using detail::FuncId;
        using detail::NodeKind;
        switch (n.kind) {
            case NodeKind::literal: stack[top++] = make_scalar<T>(n.literal); break;
            case NodeKind::variable: stack[top++] = slots[static_cast<std::size_t>(n.slot)]; break;
            case NodeKind::neg: stack[top - 1] = -stack[top - 1]; break;
            case NodeKind::add: --top; stack[top - 1] = stack[top - 1] + stack[top]; break;
            case NodeKind::sub: --top; stack[top - 1] = stack[top - 1] - stack[top]; break;
            case NodeKind::mul: --top; stack[top - 1] = stack[top - 1] * stack[top]; break;
            case NodeKind::div: {
                --top;
                if (scalar_value(stack[top]) == 0.0) throw DomainError("division by zero", subexpr_text(idx));
                stack[top - 1] = stack[top - 1] / stack[top];
                break;
            }
            case NodeKind::pow: {
                --top;
                const T& b = stack[top];
                T& a = stack[top - 1];
                double bs = scalar_value(b);
                if (is_derivative_free(b) && bs == std::rint(bs) && std::abs(bs) <= 64.0) {
                    long k = static_cast<long>(bs);
                    if (k >= 0) {
                        a = detail::ipow(a, k);
                    } else {
                        if (scalar_value(a) == 0.0) throw DomainError("division by zero", subexpr_text(idx));
                        a = make_scalar<T>(1.0) / detail::ipow(a, -k);
                    }
                } else if (scalar_value(a) > 0.0) {
                    a = exp(b * log(a));
                } else {
                    throw DomainError("power of a non-positive base with non-integer exponent", subexpr_text(idx));
                }
                break;
            }
            case NodeKind::call: {
                switch (n.func) {
                    case FuncId::sin: stack[top - 1] = sin(stack[top - 1]); break;
                    case FuncId::cos: stack[top - 1] = cos(stack[top - 1]); break;
                    case FuncId::tan: stack[top - 1] = tan(stack[top - 1]); break;
                    case FuncId::exp: stack[top - 1] = exp(stack[top - 1]); break;
                    case FuncId::log:
                        if (scalar_value(stack[top - 1]) <= 0.0)
                            throw DomainError("log of a non-positive value", subexpr_text(idx));
                        stack[top - 1] = log(stack[top - 1]);
                        break;
                    case FuncId::sqrt:
                        if (scalar_value(stack[top - 1]) < 0.0)
                            throw DomainError("sqrt of a negative value", subexpr_text(idx));
                        stack[top - 1] = sqrt(stack[top - 1]);
                        break;
                    case FuncId::sinh: stack[top - 1] = sinh(stack[top - 1]); break;
                    case FuncId::cosh: stack[top - 1] = cosh(stack[top - 1]); break;
                    case FuncId::tanh: stack[top - 1] = tanh(stack[top - 1]); break;
                    case FuncId::abs: stack[top - 1] = abs(stack[top - 1]); break;
                    case FuncId::min:
                        --top;
                        stack[top - 1] = min(stack[top - 1], stack[top]);
                        break;
                    case FuncId::max:
                        --top;
                        stack[top - 1] = max(stack[top - 1], stack[top]);
                        break;
                }
                break;
            }
        }
    }
    return stack[0];
}

/// Rebuild the printed form of the subtree whose root is nodes_[node_end],
/// for error messages.
inline std::string Expression::subexpr_text(std::size_t node_end) const {
    Expression sub;
    sub.vars_ = vars_;
    // Walk backwards to find the start of the subtree: a postfix subtree of
    // length L satisfies (pushes - pops) == 1 over its node range.
    int need = 1;
    std::size_t start = node_end + 1;
    while (start > 0 && need > 0) {
        --start;
        const detail::Node& n = nodes_[start];
        using detail::NodeKind;
        switch (n.kind) {
            case NodeKind::literal:
            case NodeKind::variable: need -= 1; break;
            case NodeKind::neg: break;
            case NodeKind::call:
                need += (n.func == detail::FuncId::min || n.func == detail::FuncId::max) ? 1 : 0;
                break;
            default: need += 1; break;
        }
    }
    sub.nodes_.assign(nodes_.begin() + static_cast<std::ptrdiff_t>(start),
                      nodes_.begin() + static_cast<std::ptrdiff_t>(node_end) + 1);
    return to_string(sub);
}

// -- derivatives --------------------------------------------------------

/// Exact gradient with respect to the named variables, one dual pass per
/// variable. Names absent from the expression contribute 0.
inline std::vector<double> grad(const Expression& e, std::span<const std::string> wrt, const Bindings& b) {
    std::vector<double> values = e.slot_values(b);
    std::vector<double> g(wrt.size(), 0.0);
    for (std::size_t i = 0; i < wrt.size(); ++i) {
        int slot = e.var_slot(wrt[i]);
        if (slot >= 0) g[i] = e.derivative(values, slot);
    }
    return g;
}

/// Exact Hessian by nested duals. The full matrix is computed and then
/// symmetrized by averaging, so the result is symmetric as returned.
inline Mat hessian(const Expression& e, std::span<const std::string> wrt, const Bindings& b) {
    std::vector<double> values = e.slot_values(b);
    int n = static_cast<int>(wrt.size());
    Mat h(n, n);
    std::vector<int> slots(wrt.size());
    for (std::size_t i = 0; i < wrt.size(); ++i) slots[i] = e.var_slot(wrt[i]);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (slots[static_cast<std::size_t>(i)] < 0 || slots[static_cast<std::size_t>(j)] < 0) continue;
            h(i, j) = e.second_derivative(values, slots[static_cast<std::size_t>(i)],
                                          slots[static_cast<std::size_t>(j)]);
        }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double avg = 0.5 * (h(i, j) + h(j, i));
            h(i, j) = avg;
            h(j, i) = avg;
        }
    return h;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

}  // namespace charlab
