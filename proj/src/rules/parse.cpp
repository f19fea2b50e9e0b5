#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "csav/rules/rules.hpp"

namespace csav::rules {

Value Value::sym(std::string s) {
    Value v;
    v.kind = Kind::Symbol;
    v.symbol = std::move(s);
    return v;
}

Value Value::num(std::int64_t i) {
    Value v;
    v.kind = Kind::Integer;
    v.integer = i;
    return v;
}

Value Value::num(double r) {
    Value v;
    v.kind = Kind::Real;
    v.real = r;
    return v;
}

bool operator==(const Value& a, const Value& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
    case Value::Kind::Symbol: return a.symbol == b.symbol;
    case Value::Kind::Integer: return a.integer == b.integer;
    case Value::Kind::Real: return a.real == b.real;
    }
    return false;
}

bool operator<(const Value& a, const Value& b) {
    if (a.kind != b.kind) return a.kind < b.kind;
    switch (a.kind) {
    case Value::Kind::Symbol: return a.symbol < b.symbol;
    case Value::Kind::Integer: return a.integer < b.integer;
    case Value::Kind::Real: return a.real < b.real;
    }
    return false;
}

bool operator<(const Atom& a, const Atom& b) {
    if (a.predicate != b.predicate) return a.predicate < b.predicate;
    return a.args < b.args;
}

namespace {

bool plain_symbol(const std::string& s) {
    if (s.empty() || !std::islower(static_cast<unsigned char>(s[0]))) return false;
    for (char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    return s != "is";
}

std::string term_text(const Term& t) { return t.variable ? t.name : to_string(t.value); }

std::string args_text(const std::string& pred, const std::vector<std::string>& args) {
    if (args.empty()) return pred;
    std::string s = pred + "(";
    for (std::size_t i = 0; i < args.size(); ++i) s += (i ? ", " : "") + args[i];
    return s + ")";
}

std::string expr_text(const Expr& e) {
    if (!e.op) return term_text(e.leaf);
    auto side = [](const Expr& x) { return x.op ? "(" + expr_text(x) + ")" : expr_text(x); };
    return side(*e.lhs) + " " + e.op + " " + side(*e.rhs);
}

const char* op_text(CompareOp op) {
    switch (op) {
    case CompareOp::Less: return "<";
    case CompareOp::Greater: return ">";
    case CompareOp::LessEq: return "=<";
    case CompareOp::GreaterEq: return ">=";
    case CompareOp::Equal: return "=";
    case CompareOp::NotEqual: return "\\=";
    }
    return "=";
}

} // namespace

std::string to_string(const Value& v) {
    switch (v.kind) {
    case Value::Kind::Symbol: {
        if (plain_symbol(v.symbol)) return v.symbol;
        std::string q = "'";
        for (char c : v.symbol) {
            if (c == '\'' || c == '\\') q += '\\';
            q += c;
        }
        return q + "'";
    }
    case Value::Kind::Integer: return std::to_string(v.integer);
    case Value::Kind::Real: {
        char buf[64];
        auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v.real);
        std::string s(buf, end);
        if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
        return s;
    }
    }
    return {};
}

std::string to_string(const Atom& a) {
    std::vector<std::string> args;
    for (const auto& v : a.args) args.push_back(to_string(v));
    return args_text(a.predicate, args);
}

std::string predicate_key(std::string_view name, std::size_t arity) { return std::string(name) + "/" + std::to_string(arity); }

std::string to_string(const Literal& l) {
    switch (l.kind) {
    case Literal::Kind::Positive:
    case Literal::Kind::Negative: {
        std::vector<std::string> args;
        for (const auto& t : l.args) args.push_back(term_text(t));
        return (l.kind == Literal::Kind::Negative ? "\\+ " : "") + args_text(l.predicate, args);
    }
    case Literal::Kind::Compare: return expr_text(*l.lhs) + " " + op_text(l.op) + " " + expr_text(*l.rhs);
    case Literal::Kind::Assign: return l.target + " is " + expr_text(*l.rhs);
    }
    return {};
}

std::string to_string(const Rule& r) {
    std::vector<std::string> args;
    for (const auto& t : r.head) args.push_back(term_text(t));
    std::string s = args_text(r.predicate, args);
    if (r.body.empty()) return s + ".";
    s += " :- ";
    for (std::size_t i = 0; i < r.body.size(); ++i) s += (i ? ", " : "") + to_string(r.body[i]);
    return s + ".";
}

SyntaxError::SyntaxError(const std::string& msg, int line, int column)
    : FormatError("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg), line_(line), column_(column) {}

RangeError::RangeError(const std::string& msg, std::string variable, int line)
    : FormatError("line " + std::to_string(line) + ": " + msg), variable_(std::move(variable)), line_(line) {}

namespace {

enum class Tok { Ident, Var, Int, Real, Quoted, Punct, End };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    int line = 1, column = 1;
};

class Lexer {
public:
    explicit Lexer(std::string_view s) : s_(s) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        for (;;) {
            skip();
            Token t;
            t.line = line_;
            t.column = col_;
            if (i_ >= s_.size()) {
                out.push_back(t);
                return out;
            }
            const char c = s_[i_];
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                t.kind = std::islower(static_cast<unsigned char>(c)) ? Tok::Ident : Tok::Var;
                while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_')) t.text += take();
            } else if (std::isdigit(static_cast<unsigned char>(c))) {
                t.kind = Tok::Int;
                while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) t.text += take();
                if (i_ + 1 < s_.size() && s_[i_] == '.' && std::isdigit(static_cast<unsigned char>(s_[i_ + 1]))) {
                    t.kind = Tok::Real;
                    t.text += take();
                    while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) t.text += take();
                }
                if (i_ < s_.size() && (s_[i_] == 'e' || s_[i_] == 'E')) {
                    std::size_t j = i_ + 1;
                    if (j < s_.size() && (s_[j] == '+' || s_[j] == '-')) ++j;
                    if (j < s_.size() && std::isdigit(static_cast<unsigned char>(s_[j]))) {
                        t.kind = Tok::Real;
                        while (i_ < j) t.text += take();
                        while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) t.text += take();
                    }
                }
            } else if (c == '\'') {
                t.kind = Tok::Quoted;
                take();
                for (;;) {
                    if (i_ >= s_.size() || s_[i_] == '\n') throw SyntaxError("unterminated quoted symbol", t.line, t.column);
                    char q = take();
                    if (q == '\'') break;
                    if (q == '\\' && i_ < s_.size()) q = take();
                    t.text += q;
                }
            } else {
                t.kind = Tok::Punct;
                static const char* two[] = {":-", "\\+", "\\=", ">=", "=<"};
                bool matched = false;
                for (const char* p : two)
                    if (s_.substr(i_, 2) == p) {
                        t.text = p;
                        take();
                        take();
                        matched = true;
                        break;
                    }
                if (!matched) {
                    if (std::string_view("(),.<>=+-*/").find(c) == std::string_view::npos)
                        throw SyntaxError(std::string("unexpected character '") + c + "'", t.line, t.column);
                    t.text = std::string(1, take());
                }
            }
            out.push_back(std::move(t));
        }
    }

private:
    char take() {
        const char c = s_[i_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }

    void skip() {
        while (i_ < s_.size()) {
            if (std::isspace(static_cast<unsigned char>(s_[i_]))) {
                take();
            } else if (s_[i_] == '%') {
                while (i_ < s_.size() && s_[i_] != '\n') take();
            } else {
                break;
            }
        }
    }

    std::string_view s_;
    std::size_t i_ = 0;
    int line_ = 1, col_ = 1;
};

bool is_compare(const Token& t) {
    if (t.kind != Tok::Punct) return false;
    return t.text == "<" || t.text == ">" || t.text == "=<" || t.text == ">=" || t.text == "=" || t.text == "\\=";
}

CompareOp compare_op(const std::string& s) {
    if (s == "<") return CompareOp::Less;
    if (s == ">") return CompareOp::Greater;
    if (s == "=<") return CompareOp::LessEq;
    if (s == ">=") return CompareOp::GreaterEq;
    if (s == "=") return CompareOp::Equal;
    return CompareOp::NotEqual;
}

Value number(const Token& t, bool negative) {
    const std::string text = (negative ? "-" : "") + t.text;
    if (t.kind == Tok::Int) {
        std::int64_t i = 0;
        auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), i);
        if (ec != std::errc()) throw SyntaxError("integer out of range", t.line, t.column);
        return Value::num(i);
    }
    return Value::num(std::stod(text));
}

void collect_vars(const Expr& e, std::vector<std::string>& out) {
    if (e.op) {
        collect_vars(*e.lhs, out);
        collect_vars(*e.rhs, out);
    } else if (e.leaf.variable) {
        out.push_back(e.leaf.name);
    }
}

class Parser {
public:
    explicit Parser(std::vector<Token> toks) : t_(std::move(toks)) {}

    Program run() {
        Program p;
        while (peek().kind != Tok::End) clause(p);
        return p;
    }

private:
    const Token& peek(std::size_t k = 0) const { return t_[std::min(i_ + k, t_.size() - 1)]; }
    const Token& next() { return t_[i_ < t_.size() - 1 ? i_++ : i_]; }
    bool punct(const char* s, std::size_t k = 0) const { return peek(k).kind == Tok::Punct && peek(k).text == s; }

    [[noreturn]] void fail(const std::string& what) const {
        const Token& t = peek();
        const std::string got = t.kind == Tok::End ? "end of input" : "'" + t.text + "'";
        throw SyntaxError("expected " + what + ", got " + got, t.line, t.column);
    }

    void expect(const char* s) {
        if (!punct(s)) fail(std::string("'") + s + "'");
        next();
    }

    Term term() {
        const Token& t = peek();
        switch (t.kind) {
        case Tok::Var: return Term::var(next().text);
        case Tok::Ident:
        case Tok::Quoted: return Term::ground(Value::sym(next().text));
        case Tok::Int:
        case Tok::Real: return Term::ground(number(next(), false));
        case Tok::Punct:
            if (t.text == "-" && (peek(1).kind == Tok::Int || peek(1).kind == Tok::Real)) {
                next();
                return Term::ground(number(next(), true));
            }
            break;
        case Tok::End: break;
        }
        fail("a term");
    }

    void atom(std::string& pred, std::vector<Term>& args) {
        if (peek().kind != Tok::Ident) fail("a predicate name");
        pred = next().text;
        if (!punct("(")) return;
        next();
        args.push_back(term());
        while (punct(",")) {
            next();
            args.push_back(term());
        }
        expect(")");
    }

    std::shared_ptr<const Expr> factor() {
        if (punct("(")) {
            next();
            auto e = expr();
            expect(")");
            return e;
        }
        if (punct("-") && peek(1).kind != Tok::Int && peek(1).kind != Tok::Real) {
            next();
            auto zero = std::make_shared<Expr>();
            zero->leaf = Term::ground(Value::num(std::int64_t{0}));
            auto e = std::make_shared<Expr>();
            e->op = '-';
            e->lhs = zero;
            e->rhs = factor();
            return e;
        }
        auto e = std::make_shared<Expr>();
        e->leaf = term();
        return e;
    }

    std::shared_ptr<const Expr> product() {
        auto e = factor();
        while (punct("*") || punct("/")) {
            auto b = std::make_shared<Expr>();
            b->op = next().text[0];
            b->lhs = e;
            b->rhs = factor();
            e = b;
        }
        return e;
    }

    std::shared_ptr<const Expr> expr() {
        auto e = product();
        while (punct("+") || punct("-")) {
            auto b = std::make_shared<Expr>();
            b->op = next().text[0];
            b->lhs = e;
            b->rhs = product();
            e = b;
        }
        return e;
    }

    Literal literal() {
        Literal l;
        if (punct("\\+")) {
            next();
            l.kind = Literal::Kind::Negative;
            atom(l.predicate, l.args);
            return l;
        }
        if (peek().kind == Tok::Var && peek(1).kind == Tok::Ident && peek(1).text == "is") {
            l.kind = Literal::Kind::Assign;
            l.target = next().text;
            next();
            l.rhs = expr();
            return l;
        }
        const bool atom_start = peek().kind == Tok::Ident && peek(1).kind == Tok::Punct &&
                                !is_compare(peek(1)) && peek(1).text != "+" && peek(1).text != "-" &&
                                peek(1).text != "*" && peek(1).text != "/";
        const bool bare = peek().kind == Tok::Ident && (peek(1).kind != Tok::Punct);
        if (atom_start || bare) {
            l.kind = Literal::Kind::Positive;
            atom(l.predicate, l.args);
            return l;
        }
        l.kind = Literal::Kind::Compare;
        l.lhs = expr();
        if (!is_compare(peek())) fail("a comparison operator");
        l.op = compare_op(next().text);
        l.rhs = expr();
        return l;
    }

    void clause(Program& p) {
        const int line = peek().line;
        Rule r;
        r.line = line;
        atom(r.predicate, r.head);
        if (punct(".")) {
            next();
            Atom a{r.predicate, {}};
            for (const auto& t : r.head) {
                if (t.variable) throw RangeError("variable " + t.name + " in fact " + r.predicate, t.name, line);
                a.args.push_back(t.value);
            }
            p.facts.push_back(std::move(a));
            return;
        }
        expect(":-");
        r.body.push_back(literal());
        while (punct(",")) {
            next();
            r.body.push_back(literal());
        }
        expect(".");
        check_range(r);
        p.rules.push_back(std::move(r));
    }

    static void check_range(const Rule& r) {
        std::set<std::string> bound;
        auto need = [&](const std::vector<std::string>& vars, const std::string& where) {
            for (const auto& v : vars) {
                if (v == "_") throw RangeError("anonymous variable in " + where, v, r.line);
                if (!bound.count(v)) throw RangeError("variable " + v + " is unbound in " + where, v, r.line);
            }
        };
        for (const auto& l : r.body) {
            const std::string where = "'" + to_string(l) + "'";
            switch (l.kind) {
            case Literal::Kind::Positive:
                for (const auto& t : l.args)
                    if (t.variable && t.name != "_") bound.insert(t.name);
                break;
            case Literal::Kind::Negative:
                for (const auto& t : l.args)
                    if (t.variable && t.name != "_" && !bound.count(t.name))
                        throw RangeError("variable " + t.name + " is unbound in " + where, t.name, r.line);
                break;
            case Literal::Kind::Compare: {
                std::vector<std::string> lv, rv;
                collect_vars(*l.lhs, lv);
                collect_vars(*l.rhs, rv);
                if (l.op == CompareOp::Equal) {
                    const bool lfree = !l.lhs->op && l.lhs->leaf.variable && l.lhs->leaf.name != "_" && !bound.count(l.lhs->leaf.name);
                    const bool rfree = !l.rhs->op && l.rhs->leaf.variable && l.rhs->leaf.name != "_" && !bound.count(l.rhs->leaf.name);
                    if (lfree && !rfree) {
                        need(rv, where);
                        bound.insert(l.lhs->leaf.name);
                        break;
                    }
                    if (rfree && !lfree) {
                        need(lv, where);
                        bound.insert(l.rhs->leaf.name);
                        break;
                    }
                }
                need(lv, where);
                need(rv, where);
                break;
            }
            case Literal::Kind::Assign: {
                std::vector<std::string> rv;
                collect_vars(*l.rhs, rv);
                need(rv, where);
                if (l.target == "_") throw RangeError("anonymous variable in " + where, "_", r.line);
                bound.insert(l.target);
                break;
            }
            }
        }
        for (const auto& t : r.head) {
            if (!t.variable) continue;
            if (t.name == "_") throw RangeError("anonymous variable in the head of " + r.predicate, "_", r.line);
            if (!bound.count(t.name)) throw RangeError("head variable " + t.name + " is unbound", t.name, r.line);
        }
    }

    std::vector<Token> t_;
    std::size_t i_ = 0;
};

void assign_ids(Program& p) {
    std::map<std::string, int> count;
    for (auto& r : p.rules) {
        const std::string key = predicate_key(r.predicate, r.head.size());
        r.id = key + "#" + std::to_string(++count[key]);
    }
}

} // namespace

Program parse_rules(std::string_view text) {
    Program p = Parser(Lexer(text).run()).run();
    assign_ids(p);
    return p;
}

Program merge(Program a, const Program& more) {
    a.rules.insert(a.rules.end(), more.rules.begin(), more.rules.end());
    a.facts.insert(a.facts.end(), more.facts.begin(), more.facts.end());
    assign_ids(a);
    return a;
}

} // namespace csav::rules
