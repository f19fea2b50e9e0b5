#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "csav/error.hpp"

namespace csav::rules {

// Ground value: symbol, integer or real. Equality is structural (1 and 1.0
// differ); ordering comparisons are numeric.
struct Value {
    enum class Kind { Symbol, Integer, Real };
    Kind kind = Kind::Symbol;
    std::string symbol;
    std::int64_t integer = 0;
    double real = 0.0;

    static Value sym(std::string s);
    static Value num(std::int64_t i);
    static Value num(double r);

    bool numeric() const { return kind != Kind::Symbol; }
    double as_double() const { return kind == Kind::Integer ? static_cast<double>(integer) : real; }

    friend bool operator==(const Value& a, const Value& b);
    friend bool operator<(const Value& a, const Value& b);
};

std::string to_string(const Value& v);

using Tuple = std::vector<Value>;

// Ground atom.
struct Atom {
    std::string predicate;
    Tuple args;

    friend bool operator==(const Atom&, const Atom&) = default;
    friend bool operator<(const Atom& a, const Atom& b);
};

std::string to_string(const Atom& a);
std::string predicate_key(std::string_view name, std::size_t arity); // "name/arity"

struct Term {
    bool variable = false;
    std::string name; // variable name; "_" is anonymous
    Value value;

    static Term var(std::string n) { return {true, std::move(n), {}}; }
    static Term ground(Value v) { return {false, {}, std::move(v)}; }
};

struct Expr {
    char op = 0; // 0 for a leaf, else one of + - * /
    Term leaf;
    std::shared_ptr<const Expr> lhs, rhs;
};

enum class CompareOp { Less, Greater, LessEq, GreaterEq, Equal, NotEqual };

struct Literal {
    enum class Kind { Positive, Negative, Compare, Assign };
    Kind kind = Kind::Positive;
    // Positive / Negative.
    std::string predicate;
    std::vector<Term> args;
    // Compare: lhs op rhs. Assign: variable `target` is rhs.
    CompareOp op = CompareOp::Equal;
    std::shared_ptr<const Expr> lhs, rhs;
    std::string target;
};

std::string to_string(const Literal& l);

struct Rule {
    std::string predicate;
    std::vector<Term> head;
    std::vector<Literal> body;
    int line = 0;
    std::string id; // "name/arity#k", k counting rules of the predicate from 1
};

std::string to_string(const Rule& r);

struct Program {
    std::vector<Rule> rules;
    std::vector<Atom> facts;
};

class SyntaxError : public FormatError {
public:
    SyntaxError(const std::string& msg, int line, int column);
    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_, column_;
};

// A variable used where it cannot be bound.
class RangeError : public FormatError {
public:
    RangeError(const std::string& msg, std::string variable, int line);
    const std::string& variable() const { return variable_; }
    int line() const { return line_; }

private:
    std::string variable_;
    int line_;
};

class UnstratifiableError : public Error {
public:
    using Error::Error;
};

// Non-numeric operands to arithmetic or ordering comparisons.
class EvalError : public Error {
public:
    using Error::Error;
};

// Grammar:
//   fact(a, 1, 2.5, 'Quoted').
//   head(X) :- body1(X, Y), \+ body2(Y), X >= 3, Z is X + 1.
//   % comment to end of line
Program parse_rules(std::string_view text);
// Appends the rules and facts of `more`, renumbering rule ids.
Program merge(Program a, const Program& more);

struct StratifiedProgram {
    Program program;
    std::map<std::string, int> stratum; // by predicate key
    std::vector<std::vector<int>> strata; // rule indices per stratum, textual order
};

// Throws UnstratifiableError naming a cycle through negation.
StratifiedProgram stratify(Program program);

struct Derivation {
    int rule = -1; // -1 for input facts
    std::vector<Atom> positives;
    std::vector<Atom> negated; // absent instances checked; "_" marks wildcards
};

class Model {
public:
    bool contains(const Atom& a) const;
    // Tuples of one predicate in derivation order.
    const std::vector<Tuple>& rows(std::string_view predicate, std::size_t arity) const;
    std::vector<Atom> atoms() const; // sorted
    std::size_t size() const;
    const Derivation& derivation(const Atom& a) const;
    const StratifiedProgram& program() const { return *program_; }

private:
    friend Model evaluate(const StratifiedProgram&, const std::vector<Atom>&);
    struct Relation {
        std::vector<Tuple> rows;
        std::map<Tuple, Derivation> index;
    };
    std::shared_ptr<const StratifiedProgram> program_;
    std::map<std::string, Relation> relations_;
};

// Semi-naive bottom-up evaluation, stratum by stratum. Program facts come
// before `facts`; the first derivation of each atom is kept.
Model evaluate(const StratifiedProgram& program, const std::vector<Atom>& facts);

struct DerivationTree {
    Atom fact;
    std::string rule_id; // empty for input facts
    std::vector<DerivationTree> children;
    std::vector<Atom> absent;

    std::vector<Atom> leaves() const;
};

// Throws UnknownIdError when the fact is not in the model.
DerivationTree explain(const Model& model, const Atom& fact);
std::string render(const DerivationTree& tree);

} // namespace csav::rules
