#pragma once

// Scalar expression trees over state variables x1..xn, time t, and named
// parameters. Pieces of vector fields, switching surfaces, and Lyapunov
// candidates are all built from these. Expressions are immutable after
// construction and evaluation is pure, so concurrent use is safe.
//
// The grammar is deliberately smooth: abs/sign/min/max are not symbols.
// Nonsmoothness enters only through the region structure of a field.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fsim {

using ParamMap = std::map<std::string, double>;

struct ParseDiagnostic {
    std::size_t offset = 0;   // byte offset into the input text
    std::string message;
    std::string token;        // offending token, possibly empty at end of input
};

class ParseError : public std::runtime_error {
public:
    ParseError(ParseDiagnostic diag)
        : std::runtime_error(diag.message + " at offset " + std::to_string(diag.offset) +
                             (diag.token.empty() ? "" : " near '" + diag.token + "'")),
          diagnostic_(std::move(diag)) {}

    const ParseDiagnostic& diagnostic() const { return diagnostic_; }

private:
    ParseDiagnostic diagnostic_;
};

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class UnaryOp { Neg, Sin, Cos, Exp, Tanh, Sqrt };
enum class BinaryOp { Add, Sub, Mul, Div };

namespace detail {

struct ExprNode;
using NodePtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
    enum class Kind { Constant, State, Time, Param, Unary, Binary, Pow };

    Kind kind;
    double value = 0.0;        // Constant
    int index = -1;            // State, 0-based
    std::string name;          // Param
    UnaryOp uop = UnaryOp::Neg;
    BinaryOp bop = BinaryOp::Add;
    int exponent = 0;          // Pow
    NodePtr a, b;
};

inline double pow_int(double base, int n) {
    if (n == 0) return 1.0;
    if (n < 0) {
        if (base == 0.0) throw EvalError("zero raised to a negative power");
        return 1.0 / pow_int(base, -n);
    }
    double r = 1.0, b = base;
    for (int k = n; k > 0; k >>= 1) {
        if (k & 1) r *= b;
        b *= b;
    }
    return r;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

/// Immutable symbolic scalar expression. Cheap to copy (shared tree).
class Expression {
public:
    Expression() : node_(constant_node(0.0)) {}

    static Expression constant(double v) { return Expression(constant_node(v)); }

    /// State variable by 0-based index (prints as x{index+1}).
    static Expression state(int index) {
        if (index < 0) throw std::invalid_argument("state index must be nonnegative");
        auto n = std::make_shared<detail::ExprNode>();
        n->kind = detail::ExprNode::Kind::State;
        n->index = index;
        return Expression(std::move(n));
    }

    static Expression time() {
        auto n = std::make_shared<detail::ExprNode>();
        n->kind = detail::ExprNode::Kind::Time;
        return Expression(std::move(n));
    }

    static Expression parameter(std::string name) {
        auto n = std::make_shared<detail::ExprNode>();
        n->kind = detail::ExprNode::Kind::Param;
        n->name = std::move(name);
        return Expression(std::move(n));
    }

    bool is_constant() const { return node_->kind == detail::ExprNode::Kind::Constant; }
    bool is_constant(double v) const { return is_constant() && node_->value == v; }

    /// Largest 0-based state index referenced, or -1 if none.
    int max_state_index() const { return max_state_index(*node_); }

    bool references_time() const { return references_time(*node_); }

    double evaluate(std::span<const double> x, double t, const ParamMap& params = {}) const {
        return eval(*node_, x, t, params);
    }

    /// Exact partial derivative with respect to state variable `index` (0-based).
    Expression d_state(int index) const { return Expression(diff(node_, index, false)); }

    /// Exact partial derivative with respect to t.
    Expression d_time() const { return Expression(diff(node_, -1, true)); }

    std::string to_string() const { return print(*node_, 0); }

    friend Expression operator-(const Expression& a) { return Expression(make_neg(a.node_)); }
    friend Expression operator+(const Expression& a, const Expression& b) {
        return Expression(make_bin(BinaryOp::Add, a.node_, b.node_));
    }
    friend Expression operator-(const Expression& a, const Expression& b) {
        return Expression(make_bin(BinaryOp::Sub, a.node_, b.node_));
    }
    friend Expression operator*(const Expression& a, const Expression& b) {
        return Expression(make_bin(BinaryOp::Mul, a.node_, b.node_));
    }
    friend Expression operator/(const Expression& a, const Expression& b) {
        return Expression(make_bin(BinaryOp::Div, a.node_, b.node_));
    }

    friend Expression sin(const Expression& a) { return Expression(make_un(UnaryOp::Sin, a.node_)); }
    friend Expression cos(const Expression& a) { return Expression(make_un(UnaryOp::Cos, a.node_)); }
    friend Expression exp(const Expression& a) { return Expression(make_un(UnaryOp::Exp, a.node_)); }
    friend Expression tanh(const Expression& a) { return Expression(make_un(UnaryOp::Tanh, a.node_)); }
    friend Expression sqrt(const Expression& a) { return Expression(make_un(UnaryOp::Sqrt, a.node_)); }
    friend Expression pow(const Expression& a, int n) { return Expression(make_pow(a.node_, n)); }

private:
    explicit Expression(detail::NodePtr n) : node_(std::move(n)) {}

    static detail::NodePtr constant_node(double v) {
        auto n = std::make_shared<detail::ExprNode>();
        n->kind = detail::ExprNode::Kind::Constant;
        n->value = v;
        return n;
    }

    // Smart constructors fold constants and drop additive/multiplicative
    // identities; no rewriting beyond that.
    static detail::NodePtr make_un(UnaryOp op, detail::NodePtr a) {
        if (a->kind == detail::ExprNode::Kind::Constant) {
            const double v = a->value;
            switch (op) {
                case UnaryOp::Neg:  return constant_node(-v);
                case UnaryOp::Sin:  return constant_node(std::sin(v));
                case UnaryOp::Cos:  return constant_node(std::cos(v));
                case UnaryOp::Exp:  return constant_node(std::exp(v));
                case UnaryOp::Tanh: return constant_node(std::tanh(v));
                case UnaryOp::Sqrt:
                    if (v < 0.0) break;  // defer to evaluation error
                    return constant_node(std::sqrt(v));
            }
        }
        if (op == UnaryOp::Neg && a->kind == detail::ExprNode::Kind::Unary && a->uop == UnaryOp::Neg)
            return a->a;
        auto n = std::make_shared<detail::ExprNode>();
        n->kind = detail::ExprNode::Kind::Unary;
        n->uop = op;
        n->a = std::move(a);
        return n;
    }

    static detail::NodePtr make_neg(detail::NodePtr a) { return make_un(UnaryOp::Neg, std::move(a)); }

    static bool is_const(const detail::NodePtr& n, double v) {
        return n->kind == detail::ExprNode::Kind::Constant && n->value == v;
    }

    static detail::NodePtr make_bin(BinaryOp op, detail::NodePtr a, detail::NodePtr b) {
        const bool ca = a->kind == detail::ExprNode::Kind::Constant;
        const bool cb = b->kind == detail::ExprNode::Kind::Constant;
        switch (op) {
            case BinaryOp::Add:
                if (ca && cb) return constant_node(a->value + b->value);
                if (is_const(a, 0.0)) return b;
                if (is_const(b, 0.0)) return a;
                break;
            case BinaryOp::Sub:
                if (ca && cb) return constant_node(a->value - b->value);
                if (is_const(b, 0.0)) return a;
                if (is_const(a, 0.0)) return make_neg(b);
                break;
            case BinaryOp::Mul:
                if (ca && cb) return constant_node(a->value * b->value);
                if (is_const(a, 0.0) || is_const(b, 0.0)) return constant_node(0.0);
                if (is_const(a, 1.0)) return b;
                if (is_const(b, 1.0)) return a;
                break;
            case BinaryOp::Div:
                if (ca && cb && b->value != 0.0) return constant_node(a->value / b->value);
                if (is_const(b, 1.0)) return a;
                break;
        }
        auto n = std::make_shared<detail::ExprNode>();
        n->kind = detail::ExprNode::Kind::Binary;
        n->bop = op;
        n->a = std::move(a);
        n->b = std::move(b);
        return n;
    }

    static detail::NodePtr make_pow(detail::NodePtr a, int e) {
        if (e == 0) return constant_node(1.0);
        if (e == 1) return a;
        if (a->kind == detail::ExprNode::Kind::Constant && !(a->value == 0.0 && e < 0))
            return constant_node(detail::pow_int(a->value, e));
        auto n = std::make_shared<detail::ExprNode>();
        n->kind = detail::ExprNode::Kind::Pow;
        n->exponent = e;
        n->a = std::move(a);
        return n;
    }

    static double eval(const detail::ExprNode& n, std::span<const double> x, double t,
                       const ParamMap& params) {
        using Kind = detail::ExprNode::Kind;
        switch (n.kind) {
            case Kind::Constant: return n.value;
            case Kind::State:
                if (n.index < 0 || static_cast<std::size_t>(n.index) >= x.size())
                    throw EvalError("state variable x" + std::to_string(n.index + 1) +
                                    " outside the provided state vector");
                return x[static_cast<std::size_t>(n.index)];
            case Kind::Time: return t;
            case Kind::Param: {
                auto it = params.find(n.name);
                if (it == params.end()) throw EvalError("unbound parameter '" + n.name + "'");
                return it->second;
            }
            case Kind::Unary: {
                const double v = eval(*n.a, x, t, params);
                switch (n.uop) {
                    case UnaryOp::Neg:  return -v;
                    case UnaryOp::Sin:  return std::sin(v);
                    case UnaryOp::Cos:  return std::cos(v);
                    case UnaryOp::Exp:  return std::exp(v);
                    case UnaryOp::Tanh: return std::tanh(v);
                    case UnaryOp::Sqrt:
                        if (v < 0.0) throw EvalError("sqrt of negative value");
                        return std::sqrt(v);
                }
                break;
            }
            case Kind::Binary: {
                const double va = eval(*n.a, x, t, params);
                const double vb = eval(*n.b, x, t, params);
                switch (n.bop) {
                    case BinaryOp::Add: return va + vb;
                    case BinaryOp::Sub: return va - vb;
                    case BinaryOp::Mul: return va * vb;
                    case BinaryOp::Div:
                        if (vb == 0.0) throw EvalError("division by zero");
                        return va / vb;
                }
                break;
            }
            case Kind::Pow: {
                const double v = eval(*n.a, x, t, params);
                if (v == 0.0 && n.exponent < 0) throw EvalError("division by zero");
                return detail::pow_int(v, n.exponent);
            }
        }
        throw EvalError("malformed expression node");
    }

    // d/dx_index when !wrt_time, d/dt otherwise.
    static detail::NodePtr diff(const detail::NodePtr& n, int index, bool wrt_time) {
        using Kind = detail::ExprNode::Kind;
        switch (n->kind) {
            case Kind::Constant:
            case Kind::Param:
                return constant_node(0.0);
            case Kind::State:
                return constant_node(!wrt_time && n->index == index ? 1.0 : 0.0);
            case Kind::Time:
                return constant_node(wrt_time ? 1.0 : 0.0);
            case Kind::Unary: {
                auto da = diff(n->a, index, wrt_time);
                switch (n->uop) {
                    case UnaryOp::Neg:
                        return make_neg(std::move(da));
                    case UnaryOp::Sin:
                        return make_bin(BinaryOp::Mul, make_un(UnaryOp::Cos, n->a), std::move(da));
                    case UnaryOp::Cos:
                        return make_neg(make_bin(BinaryOp::Mul, make_un(UnaryOp::Sin, n->a), std::move(da)));
                    case UnaryOp::Exp:
                        return make_bin(BinaryOp::Mul, make_un(UnaryOp::Exp, n->a), std::move(da));
                    case UnaryOp::Tanh: {
                        auto th = make_un(UnaryOp::Tanh, n->a);
                        auto one_minus = make_bin(BinaryOp::Sub, constant_node(1.0), make_pow(th, 2));
                        return make_bin(BinaryOp::Mul, std::move(one_minus), std::move(da));
                    }
                    case UnaryOp::Sqrt: {
                        auto denom = make_bin(BinaryOp::Mul, constant_node(2.0), make_un(UnaryOp::Sqrt, n->a));
                        return make_bin(BinaryOp::Div, std::move(da), std::move(denom));
                    }
                }
                break;
            }
            case Kind::Binary: {
                auto da = diff(n->a, index, wrt_time);
                auto db = diff(n->b, index, wrt_time);
                switch (n->bop) {
                    case BinaryOp::Add: return make_bin(BinaryOp::Add, std::move(da), std::move(db));
                    case BinaryOp::Sub: return make_bin(BinaryOp::Sub, std::move(da), std::move(db));
                    case BinaryOp::Mul:
                        return make_bin(BinaryOp::Add,
                                        make_bin(BinaryOp::Mul, std::move(da), n->b),
                                        make_bin(BinaryOp::Mul, n->a, std::move(db)));
                    case BinaryOp::Div: {
                        auto num = make_bin(BinaryOp::Sub,
                                            make_bin(BinaryOp::Mul, std::move(da), n->b),
                                            make_bin(BinaryOp::Mul, n->a, std::move(db)));
                        return make_bin(BinaryOp::Div, std::move(num), make_pow(n->b, 2));
                    }
                }
                break;
            }
            case Kind::Pow: {
                // d(a^e) = e*a^(e-1)*a'
                auto da = diff(n->a, index, wrt_time);
                auto scaled = make_bin(BinaryOp::Mul, constant_node(static_cast<double>(n->exponent)),
                                       make_pow(n->a, n->exponent - 1));
                return make_bin(BinaryOp::Mul, std::move(scaled), std::move(da));
            }
        }
        throw EvalError("malformed expression node");
    }

    static int max_state_index(const detail::ExprNode& n) {
        using Kind = detail::ExprNode::Kind;
        int m = n.kind == Kind::State ? n.index : -1;
        if (n.a) m = std::max(m, max_state_index(*n.a));
        if (n.b) m = std::max(m, max_state_index(*n.b));
        return m;
    }

    static bool references_time(const detail::ExprNode& n) {
        if (n.kind == detail::ExprNode::Kind::Time) return true;
        if (n.a && references_time(*n.a)) return true;
        if (n.b && references_time(*n.b)) return true;
        return false;
    }

    // Precedence levels for printing: 0 add/sub, 1 mul/div, 2 unary minus, 3 pow/atom.
    static std::string print(const detail::ExprNode& n, int parent_level) {
        using Kind = detail::ExprNode::Kind;
        std::string s;
        int level = 3;
        switch (n.kind) {
            case Kind::Constant:
                s = detail::format_double(n.value);
                level = n.value < 0.0 ? 2 : 3;
                break;
            case Kind::State: s = "x" + std::to_string(n.index + 1); break;
            case Kind::Time:  s = "t"; break;
            case Kind::Param: s = n.name; break;
            case Kind::Unary:
                switch (n.uop) {
                    case UnaryOp::Neg:
                        s = "-" + print(*n.a, 2);
                        level = 2;
                        break;
                    case UnaryOp::Sin:  s = "sin(" + print(*n.a, 0) + ")"; break;
                    case UnaryOp::Cos:  s = "cos(" + print(*n.a, 0) + ")"; break;
                    case UnaryOp::Exp:  s = "exp(" + print(*n.a, 0) + ")"; break;
                    case UnaryOp::Tanh: s = "tanh(" + print(*n.a, 0) + ")"; break;
                    case UnaryOp::Sqrt: s = "sqrt(" + print(*n.a, 0) + ")"; break;
                }
                break;
            case Kind::Binary: {
                const bool additive = n.bop == BinaryOp::Add || n.bop == BinaryOp::Sub;
                level = additive ? 0 : 1;
                const char* op = n.bop == BinaryOp::Add ? " + "
                               : n.bop == BinaryOp::Sub ? " - "
                               : n.bop == BinaryOp::Mul ? "*" : "/";
                // Right operand needs the next level when the op is not associative.
                s = print(*n.a, level) + op + print(*n.b, level + 1);
                break;
            }
            case Kind::Pow:
                s = print(*n.a, 4) + "^" + (n.exponent < 0 ? "(" + std::to_string(n.exponent) + ")"
                                                           : std::to_string(n.exponent));
                level = 3;
                break;
        }
        if (level < parent_level) return "(" + s + ")";
        return s;
    }

    detail::NodePtr node_;
};

namespace detail {

class Parser {
public:
    Parser(std::string_view text, int dimension, std::span<const std::string> param_names)
        : text_(text), dimension_(dimension) {
        for (const auto& p : param_names) params_.push_back(p);
    }

    Expression run() {
        if (text_.empty()) fail(0, "empty expression", "");
        skip_ws();
        Expression e = parse_sum();
        skip_ws();
        if (pos_ != text_.size()) fail(pos_, "unexpected trailing input", token_at(pos_));
        return e;
    }

private:
    static bool ident_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
    static bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }

    void skip_ws() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
    }

    [[noreturn]] void fail(std::size_t offset, std::string message, std::string token) const {
        throw ParseError({offset, std::move(message), std::move(token)});
    }

    std::string token_at(std::size_t p) const {
        if (p >= text_.size()) return "";
        char c = text_[p];
        if (ident_start(c)) {
            std::size_t e = p;
            while (e < text_.size() && ident_char(text_[e])) ++e;
            return std::string(text_.substr(p, e - p));
        }
        return std::string(1, c);
    }

    bool consume(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Expression parse_sum() {
        Expression e = parse_term();
        for (;;) {
            if (consume('+')) e = e + parse_term();
            else if (consume('-')) e = e - parse_term();
            else return e;
        }
    }

    Expression parse_term() {
        Expression e = parse_factor();
        for (;;) {
            if (consume('*')) e = e * parse_factor();
            else if (consume('/')) e = e / parse_factor();
            else return e;
        }
    }

    // Unary minus binds looser than ^, so -x1^2 reads as -(x1^2).
    Expression parse_factor() {
        if (consume('-')) return -parse_factor();
        return parse_power();
    }

    Expression parse_power() {
        Expression base = parse_atom();
        skip_ws();
        if (consume('^')) return pow(base, parse_exponent());
        return base;
    }

    int parse_exponent() {
        skip_ws();
        bool paren = consume('(');
        skip_ws();
        bool negative = consume('-');
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') ++pos_;
        if (pos_ == start) fail(start, "expected integer exponent", token_at(start));
        if (pos_ < text_.size() && (text_[pos_] == '.' || text_[pos_] == 'e' || text_[pos_] == 'E'))
            fail(start, "exponent must be an integer literal", token_at(start));
        int value = 0;
        auto res = std::from_chars(text_.data() + start, text_.data() + pos_, value);
        if (res.ec != std::errc{}) fail(start, "exponent out of range", token_at(start));
        if (paren && !consume(')')) fail(pos_, "expected ')' after exponent", token_at(pos_));
        return negative ? -value : value;
    }

    Expression parse_atom() {
        skip_ws();
        if (pos_ >= text_.size()) fail(pos_, "unexpected end of input", "");
        char c = text_[pos_];

        if (c == '(') {
            ++pos_;
            Expression e = parse_sum();
            if (!consume(')')) fail(pos_, "expected ')'", token_at(pos_));
            return e;
        }

        if ((c >= '0' && c <= '9') || c == '.') return parse_number();

        if (ident_start(c)) return parse_identifier();

        fail(pos_, "unexpected character", std::string(1, c));
    }

    Expression parse_number() {
        std::size_t start = pos_;
        double value = 0.0;
        auto res = std::from_chars(text_.data() + start, text_.data() + text_.size(), value);
        if (res.ec != std::errc{} || res.ptr == text_.data() + start)
            fail(start, "invalid number literal", token_at(start));
        pos_ = static_cast<std::size_t>(res.ptr - text_.data());
        return Expression::constant(value);
    }

    Expression parse_identifier() {
        std::size_t start = pos_;
        while (pos_ < text_.size() && ident_char(text_[pos_])) ++pos_;
        std::string name(text_.substr(start, pos_ - start));

        if (name == "t") return Expression::time();

        static const std::pair<const char*, Expression (*)(const Expression&)> functions[] = {
            {"sin", [](const Expression& a) { return sin(a); }},
            {"cos", [](const Expression& a) { return cos(a); }},
            {"exp", [](const Expression& a) { return exp(a); }},
            {"tanh", [](const Expression& a) { return tanh(a); }},
            {"sqrt", [](const Expression& a) { return sqrt(a); }},
        };
        for (const auto& [fname, fn] : functions) {
            if (name == fname) {
                if (!consume('(')) fail(pos_, "expected '(' after function name", name);
                Expression arg = parse_sum();
                if (!consume(')')) fail(pos_, "expected ')'", token_at(pos_));
                return fn(arg);
            }
        }

        if (name.size() >= 2 && name[0] == 'x') {
            bool digits = true;
            for (std::size_t i = 1; i < name.size(); ++i)
                if (name[i] < '0' || name[i] > '9') { digits = false; break; }
            if (digits) {
                int idx = 0;
                std::from_chars(name.data() + 1, name.data() + name.size(), idx);
                if (idx < 1 || idx > dimension_)
                    fail(start, "state variable index out of range (dimension " +
                                    std::to_string(dimension_) + ")", name);
                return Expression::state(idx - 1);
            }
        }

        for (const auto& p : params_)
            if (name == p) return Expression::parameter(name);

        fail(start, "unknown identifier", name);
    }

    std::string_view text_;
    int dimension_;
    std::vector<std::string> params_;
    std::size_t pos_ = 0;
};

} // namespace detail

/// Parse conventional infix syntax. State variables are x1..x{dimension};
/// `t` is time; identifiers in `param_names` become parameter nodes.
inline Expression parse_expression(std::string_view text, int dimension,
                                   std::span<const std::string> param_names = {}) {
    if (dimension < 1) throw std::invalid_argument("dimension must be positive");
    for (const auto& p : param_names) {
        if (p == "t" || p == "sin" || p == "cos" || p == "exp" || p == "tanh" || p == "sqrt")
            throw std::invalid_argument("parameter name '" + p + "' collides with a builtin");
        if (p.size() >= 2 && p[0] == 'x') {
            bool digits = true;
            for (std::size_t i = 1; i < p.size(); ++i)
                if (p[i] < '0' || p[i] > '9') { digits = false; break; }
            if (digits) throw std::invalid_argument("parameter name '" + p + "' collides with a state variable");
        }
    }
    return detail::Parser(text, dimension, param_names).run();
}

} // namespace fsim
