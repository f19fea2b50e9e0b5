#pragma once

// Reference implementations shared by the unit tests and the acceptance run.

#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "csav/behavior/behavior.hpp"
#include "csav/edl/model.hpp"
#include "csav/rules/rules.hpp"

namespace csav::oracle {

using behavior::kNoise;
using edl::EvidentialModel;
using edl::Sample;
using rules::Atom;
using rules::CompareOp;
using rules::Expr;
using rules::Literal;
using rules::Rule;
using rules::StratifiedProgram;
using rules::Term;
using rules::Tuple;
using rules::Value;

// Brute force: union-find over core-core edges, border points to the
// component of their lowest-index core neighbour's cluster after numbering.
inline std::vector<int> dbscan_oracle(const std::vector<Vec2>& p, double eps, int min_size) {
    const int n = static_cast<int>(p.size());
    auto near = [&](int i, int j) {
        const Vec2 d = p[i] - p[j];
        return d.x * d.x + d.y * d.y <= eps * eps;
    };
    std::vector<char> core(n);
    for (int i = 0; i < n; ++i) {
        int c = 0;
        for (int j = 0; j < n; ++j) c += near(i, j);
        core[i] = c >= min_size;
    }
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (core[i] && core[j] && near(i, j)) parent[find(i)] = find(j);
    std::map<int, int> number;
    std::vector<int> label(n, kNoise);
    for (int i = 0; i < n; ++i)
        if (core[i]) {
            auto [it, fresh] = number.try_emplace(find(i), static_cast<int>(number.size()));
            label[i] = it->second;
        }
    for (int i = 0; i < n; ++i) {
        if (core[i]) continue;
        for (int j = 0; j < n; ++j)
            if (core[j] && near(i, j) && (label[i] == kNoise || label[j] < label[i])) label[i] = label[j];
    }
    return label;
}

// Naive fixpoint: recompute every rule over the whole model until nothing changes.
inline std::set<Atom> naive(const StratifiedProgram& sp, const std::vector<Atom>& facts) {
    std::set<Atom> model(facts.begin(), facts.end());
    model.insert(sp.program.facts.begin(), sp.program.facts.end());
    auto numeric = [](const Value& v) { return v.as_double(); };
    for (const auto& stratum : sp.strata) {
        for (bool changed = true; changed;) {
            changed = false;
            std::vector<Atom> found;
            for (int ri : stratum) {
                const Rule& r = sp.program.rules[ri];
                std::map<std::string, Value> env;
                std::function<Value(const Expr&)> val = [&](const Expr& e) -> Value {
                    if (!e.op) return e.leaf.variable ? env.at(e.leaf.name) : e.leaf.value;
                    const Value a = val(*e.lhs), b = val(*e.rhs);
                    if (e.op == '+') return Value::num(a.integer + b.integer);
                    if (e.op == '-') return Value::num(a.integer - b.integer);
                    return Value::num(a.integer * b.integer);
                };
                auto unify = [&](const std::vector<Term>& ts, const Tuple& row, std::map<std::string, Value>& e) {
                    for (std::size_t i = 0; i < ts.size(); ++i) {
                        const Term& t = ts[i];
                        if (!t.variable) {
                            if (!(t.value == row[i])) return false;
                        } else if (t.name != "_") {
                            auto it = e.find(t.name);
                            if (it == e.end()) e[t.name] = row[i];
                            else if (!(it->second == row[i])) return false;
                        }
                    }
                    return true;
                };
                std::function<void(std::size_t)> go = [&](std::size_t k) {
                    if (k == r.body.size()) {
                        Atom h{r.predicate, {}};
                        for (const auto& t : r.head) h.args.push_back(t.variable ? env.at(t.name) : t.value);
                        found.push_back(h);
                        return;
                    }
                    const Literal& l = r.body[k];
                    if (l.kind == Literal::Kind::Positive || l.kind == Literal::Kind::Negative) {
                        bool any = false;
                        for (const auto& a : model) {
                            if (a.predicate != l.predicate || a.args.size() != l.args.size()) continue;
                            auto saved = env;
                            if (unify(l.args, a.args, env)) {
                                any = true;
                                if (l.kind == Literal::Kind::Positive) go(k + 1);
                            }
                            env = saved;
                            if (any && l.kind == Literal::Kind::Negative) break;
                        }
                        if (l.kind == Literal::Kind::Negative && !any) go(k + 1);
                    } else if (l.kind == Literal::Kind::Assign) {
                        env[l.target] = val(*l.rhs);
                        go(k + 1);
                        env.erase(l.target);
                    } else {
                        const Value a = val(*l.lhs), b = val(*l.rhs);
                        bool ok = false;
                        switch (l.op) {
                        case CompareOp::Less: ok = numeric(a) < numeric(b); break;
                        case CompareOp::Greater: ok = numeric(a) > numeric(b); break;
                        case CompareOp::LessEq: ok = numeric(a) <= numeric(b); break;
                        case CompareOp::GreaterEq: ok = numeric(a) >= numeric(b); break;
                        case CompareOp::Equal: ok = a == b; break;
                        case CompareOp::NotEqual: ok = !(a == b); break;
                        }
                        if (ok) go(k + 1);
                    }
                };
                go(0);
            }
            for (auto& a : found) changed |= model.insert(a).second;
        }
    }
    return model;
}

struct RandomProgram {
    std::string text;
    std::vector<Atom> facts;
};

// Predicates p0..p5; positive bodies use predicates up to the head's index,
// negation only strictly lower ones, so every program stratifies.
inline RandomProgram random_program(std::mt19937_64& rng, bool allow_negation) {
    auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
    const int preds = 2 + pick(5);
    std::vector<int> arity(preds);
    for (auto& a : arity) a = 1 + pick(2);
    RandomProgram out;
    const int nfacts = 5 + pick(16);
    for (int i = 0; i < nfacts; ++i) {
        const int p = pick(preds);
        Atom a{"p" + std::to_string(p), {}};
        for (int k = 0; k < arity[p]; ++k) a.args.push_back(Value::num(static_cast<std::int64_t>(pick(4))));
        out.facts.push_back(a);
    }
    const char* vars[] = {"X", "Y", "Z"};
    const int nrules = 1 + pick(6);
    std::ostringstream os;
    for (int i = 0; i < nrules; ++i) {
        const int h = pick(preds);
        std::vector<std::string> body;
        std::set<std::string> bound;
        const int npos = 1 + pick(2);
        for (int j = 0; j < npos; ++j) {
            const int p = pick(h + 1);
            std::string lit = "p" + std::to_string(p) + "(";
            for (int k = 0; k < arity[p]; ++k) {
                if (k) lit += ", ";
                if (pick(4) == 0) {
                    lit += std::to_string(pick(4));
                } else {
                    const std::string v = vars[pick(3)];
                    lit += v;
                    bound.insert(v);
                }
            }
            body.push_back(lit + ")");
        }
        if (bound.empty()) continue;
        std::vector<std::string> bv(bound.begin(), bound.end());
        if (allow_negation && h > 0 && pick(2) == 0) {
            const int p = pick(h);
            std::string lit = "\\+ p" + std::to_string(p) + "(";
            for (int k = 0; k < arity[p]; ++k) lit += std::string(k ? ", " : "") + (pick(5) == 0 ? "_" : bv[pick(static_cast<int>(bv.size()))]);
            body.push_back(lit + ")");
        }
        if (pick(3) == 0) {
            const char* ops[] = {"<", ">=", "\\=", "=<"};
            body.push_back(bv[pick(static_cast<int>(bv.size()))] + " " + ops[pick(4)] + " " + std::to_string(pick(4)));
        }
        if (pick(4) == 0) body.push_back("W is " + bv[pick(static_cast<int>(bv.size()))] + " + 1, W < 4");
        std::string head = "p" + std::to_string(h) + "(";
        for (int k = 0; k < arity[h]; ++k) head += std::string(k ? ", " : "") + bv[pick(static_cast<int>(bv.size()))];
        os << head << ") :- ";
        for (std::size_t j = 0; j < body.size(); ++j) os << (j ? ", " : "") << body[j];
        os << ".\n";
    }
    out.text = os.str();
    return out;
}

// KL(Beta(a, b) || Beta(1, 1)) by composite Simpson quadrature of f ln f.
inline double kl_beta_quadrature(double a, double b) {
    const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
    auto integrand = [&](double p) {
        if (p <= 0.0 || p >= 1.0) {
            // f ln f vanishes at the ends whenever the density does; a = 1 or b = 1 keeps it finite.
            const double q = p <= 0.0 ? 1e-300 : 1.0 - 1e-16;
            p = q;
        }
        const double lf = log_norm + (a - 1.0) * std::log(p) + (b - 1.0) * std::log1p(-p);
        return std::exp(lf) * lf;
    };
    const int n = 20000;
    const double h = 1.0 / n;
    double s = integrand(0.0) + integrand(1.0);
    for (int i = 1; i < n; ++i) s += integrand(i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

inline std::vector<Sample> random_batch(std::mt19937_64& rng, int n, int inputs, int classes) {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_int_distribution<int> cls(0, classes - 1);
    std::vector<Sample> b(n);
    for (auto& s : b) {
        s.x.resize(inputs);
        for (auto& v : s.x) v = n01(rng);
        s.y.assign(classes, 0.0);
        s.y[cls(rng)] = 1.0;
    }
    return b;
}

inline bool near_kink(const EvidentialModel& m, const std::vector<Sample>& batch) {
    for (const auto& s : batch)
        for (double r : m.raw(s.x))
            if (std::abs(r) < 1e-3) return true;
    return false;
}

inline double l2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace csav::oracle
