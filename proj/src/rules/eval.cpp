#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "csav/rules/rules.hpp"

namespace csav::rules {

namespace {

const std::vector<Tuple> kNoRows;

struct Env {
    std::vector<Value> value;
    std::vector<char> bound;
};

struct CompiledTerm {
    int slot = -1; // -1: ground, -2: anonymous
    Value value;
};

struct CompiledLiteral {
    const Literal* source = nullptr;
    std::string key; // predicate key for atoms
    std::vector<CompiledTerm> args;
    int target = -1; // Assign target, or the free side of a binding '='
    bool bind_left = false, bind_right = false;
};

struct CompiledRule {
    int index = 0;
    std::string head_key;
    std::vector<CompiledTerm> head;
    std::vector<CompiledLiteral> body;
    std::map<std::string, int> slot_of;
    int slots = 0;
};

CompiledRule compile(const Rule& r, int index) {
    CompiledRule c;
    c.index = index;
    c.head_key = predicate_key(r.predicate, r.head.size());
    std::map<std::string, int> slot;
    std::set<std::string> bound;
    auto term = [&](const Term& t) {
        CompiledTerm ct;
        if (!t.variable) {
            ct.value = t.value;
        } else if (t.name == "_") {
            ct.slot = -2;
        } else {
            ct.slot = slot.try_emplace(t.name, static_cast<int>(slot.size())).first->second;
        }
        return ct;
    };
    auto free_var = [&](const Expr& e) { return !e.op && e.leaf.variable && e.leaf.name != "_" && !bound.count(e.leaf.name); };
    for (const auto& l : r.body) {
        CompiledLiteral cl;
        cl.source = &l;
        switch (l.kind) {
        case Literal::Kind::Positive:
        case Literal::Kind::Negative:
            cl.key = predicate_key(l.predicate, l.args.size());
            for (const auto& t : l.args) {
                cl.args.push_back(term(t));
                if (l.kind == Literal::Kind::Positive && t.variable && t.name != "_") bound.insert(t.name);
            }
            break;
        case Literal::Kind::Compare:
            if (l.op == CompareOp::Equal) {
                cl.bind_left = free_var(*l.lhs) && !free_var(*l.rhs);
                cl.bind_right = free_var(*l.rhs) && !free_var(*l.lhs);
                const Expr* side = cl.bind_left ? l.lhs.get() : cl.bind_right ? l.rhs.get() : nullptr;
                if (side) {
                    cl.target = term(side->leaf).slot;
                    bound.insert(side->leaf.name);
                }
            }
            break;
        case Literal::Kind::Assign:
            cl.target = term(Term::var(l.target)).slot;
            bound.insert(l.target);
            break;
        }
        c.body.push_back(std::move(cl));
    }
    for (const auto& t : r.head) c.head.push_back(term(t));
    c.slots = static_cast<int>(slot.size());
    c.slot_of = std::move(slot);
    return c;
}

// Values of expressions under an environment.
class ExprEval {
public:
    ExprEval(const std::map<std::string, int>& slots, const Env& env, const Literal& lit) : slots_(slots), env_(env), lit_(lit) {}

    Value operator()(const Expr& e) const {
        if (!e.op) {
            if (!e.leaf.variable) return e.leaf.value;
            return env_.value[slots_.at(e.leaf.name)];
        }
        const Value a = (*this)(*e.lhs), b = (*this)(*e.rhs);
        if (!a.numeric() || !b.numeric())
            throw EvalError("non-numeric operand in '" + to_string(lit_) + "'");
        if (e.op == '/') {
            if (b.as_double() == 0.0) throw EvalError("division by zero in '" + to_string(lit_) + "'");
            return Value::num(a.as_double() / b.as_double());
        }
        if (a.kind == Value::Kind::Integer && b.kind == Value::Kind::Integer) {
            switch (e.op) {
            case '+': return Value::num(a.integer + b.integer);
            case '-': return Value::num(a.integer - b.integer);
            default: return Value::num(a.integer * b.integer);
            }
        }
        switch (e.op) {
        case '+': return Value::num(a.as_double() + b.as_double());
        case '-': return Value::num(a.as_double() - b.as_double());
        default: return Value::num(a.as_double() * b.as_double());
        }
    }

private:
    const std::map<std::string, int>& slots_;
    const Env& env_;
    const Literal& lit_;
};

struct ModelBuilder {
    ModelBuilder(const StratifiedProgram& p, std::map<std::string, std::vector<Tuple>>& r,
                 std::map<std::string, std::map<Tuple, Derivation>>& i)
        : sp(p), rows(r), index(i) {}

    const StratifiedProgram& sp;
    std::map<std::string, std::vector<Tuple>>& rows;
    std::map<std::string, std::map<Tuple, Derivation>>& index;

    struct Range {
        std::size_t lo = 0, hi = 0;
    };

    // Per-rule scratch.
    const CompiledRule* rule = nullptr;
    std::map<std::string, Range> full, old, delta;
    int delta_pos = -1;
    std::vector<std::pair<std::string, std::size_t>> matched;
    std::vector<std::pair<std::string, Tuple>> pending;
    std::map<std::string, std::set<Tuple>> pending_set;
    std::map<std::string, std::vector<Derivation>> pending_deriv;

    const std::vector<Tuple>& rel(const std::string& key) {
        auto it = rows.find(key);
        return it == rows.end() ? kNoRows : it->second;
    }

    static bool matches(const std::vector<CompiledTerm>& args, const Tuple& row, const Env& env) {
        for (std::size_t i = 0; i < args.size(); ++i) {
            const auto& a = args[i];
            if (a.slot == -2) continue;
            if (a.slot == -1) {
                if (!(a.value == row[i])) return false;
            } else if (env.bound[a.slot] && !(env.value[a.slot] == row[i])) {
                return false;
            }
        }
        return true;
    }

    static bool compare(CompareOp op, const Value& a, const Value& b, const Literal& lit) {
        if (op == CompareOp::Equal) return a == b;
        if (op == CompareOp::NotEqual) return !(a == b);
        if (!a.numeric() || !b.numeric()) throw EvalError("non-numeric comparison in '" + to_string(lit) + "'");
        const double x = a.as_double(), y = b.as_double();
        switch (op) {
        case CompareOp::Less: return x < y;
        case CompareOp::Greater: return x > y;
        case CompareOp::LessEq: return x <= y;
        case CompareOp::GreaterEq: return x >= y;
        default: return false;
        }
    }

    void solve(std::size_t pos, Env& env) {
        if (pos == rule->body.size()) {
            emit(env);
            return;
        }
        const CompiledLiteral& cl = rule->body[pos];
        const Literal& lit = *cl.source;
        switch (lit.kind) {
        case Literal::Kind::Positive: {
            const auto& rs = rel(cl.key);
            Range r = full.count(cl.key) ? full[cl.key] : Range{0, rs.size()};
            if (delta_pos >= 0 && delta.count(cl.key)) {
                if (static_cast<int>(pos) == delta_pos) r = delta[cl.key];
                else if (static_cast<int>(pos) < delta_pos) r = old[cl.key];
            }
            for (std::size_t k = r.lo; k < r.hi; ++k) {
                const Tuple& row = rs[k];
                if (!matches(cl.args, row, env)) continue;
                std::vector<int> newly;
                bool ok = true;
                for (std::size_t i = 0; i < cl.args.size(); ++i) {
                    const int s = cl.args[i].slot;
                    if (s < 0) continue;
                    if (env.bound[s]) {
                        if (!(env.value[s] == row[i])) ok = false; // repeated variable
                        continue;
                    }
                    env.value[s] = row[i];
                    env.bound[s] = 1;
                    newly.push_back(s);
                }
                if (ok) {
                    matched.emplace_back(cl.key, k);
                    solve(pos + 1, env);
                    matched.pop_back();
                }
                for (int s : newly) env.bound[s] = 0;
            }
            return;
        }
        case Literal::Kind::Negative: {
            for (const auto& row : rel(cl.key))
                if (matches(cl.args, row, env)) return;
            solve(pos + 1, env);
            return;
        }
        case Literal::Kind::Compare: {
            ExprEval ev(rule->slot_of, env, lit);
            if (cl.bind_left || cl.bind_right) {
                env.value[cl.target] = ev(cl.bind_left ? *lit.rhs : *lit.lhs);
                env.bound[cl.target] = 1;
                solve(pos + 1, env);
                env.bound[cl.target] = 0;
                return;
            }
            if (compare(lit.op, ev(*lit.lhs), ev(*lit.rhs), lit)) solve(pos + 1, env);
            return;
        }
        case Literal::Kind::Assign: {
            ExprEval ev(rule->slot_of, env, lit);
            Value v = ev(*lit.rhs);
            if (!v.numeric()) throw EvalError("non-numeric value in '" + to_string(lit) + "'");
            if (env.bound[cl.target]) {
                if (env.value[cl.target].as_double() == v.as_double()) solve(pos + 1, env);
                return;
            }
            env.value[cl.target] = std::move(v);
            env.bound[cl.target] = 1;
            solve(pos + 1, env);
            env.bound[cl.target] = 0;
            return;
        }
        }
    }

    void emit(const Env& env) {
        Tuple head;
        for (const auto& t : rule->head) head.push_back(t.slot == -1 ? t.value : env.value[t.slot]);
        const auto& idx = index[rule->head_key];
        if (idx.count(head)) return;
        if (!pending_set[rule->head_key].insert(head).second) return;
        Derivation d;
        d.rule = rule->index;
        std::size_t m = 0;
        for (const auto& cl : rule->body) {
            const Literal& lit = *cl.source;
            if (lit.kind == Literal::Kind::Positive) {
                const auto& [key, k] = matched[m++];
                d.positives.push_back({lit.predicate, rows[key][k]});
            } else if (lit.kind == Literal::Kind::Negative) {
                Atom a{lit.predicate, {}};
                for (const auto& t : cl.args)
                    a.args.push_back(t.slot == -1 ? t.value : t.slot == -2 ? Value::sym("_") : env.value[t.slot]);
                d.negated.push_back(std::move(a));
            }
        }
        pending.emplace_back(rule->head_key, std::move(head));
        pending_deriv[rule->head_key].push_back(std::move(d));
    }

    void run_rule(const CompiledRule& cr) {
        rule = &cr;
        Env env;
        env.value.resize(cr.slots);
        env.bound.assign(cr.slots, 0);
        solve(0, env);
    }

    // Moves pending facts into the relations; returns whether any were new.
    bool flush() {
        std::map<std::string, std::size_t> used;
        for (auto& [key, tuple] : pending) {
            auto& d = pending_deriv[key][used[key]++];
            index[key].emplace(tuple, std::move(d));
            rows[key].push_back(std::move(tuple));
        }
        const bool any = !pending.empty();
        pending.clear();
        pending_set.clear();
        pending_deriv.clear();
        return any;
    }
};

} // namespace

bool Model::contains(const Atom& a) const {
    auto it = relations_.find(predicate_key(a.predicate, a.args.size()));
    return it != relations_.end() && it->second.index.count(a.args) > 0;
}

const std::vector<Tuple>& Model::rows(std::string_view predicate, std::size_t arity) const {
    auto it = relations_.find(predicate_key(predicate, arity));
    return it == relations_.end() ? kNoRows : it->second.rows;
}

std::vector<Atom> Model::atoms() const {
    std::vector<Atom> out;
    for (const auto& [key, rel] : relations_) {
        const std::string name = key.substr(0, key.rfind('/'));
        for (const auto& row : rel.rows) out.push_back({name, row});
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t Model::size() const {
    std::size_t n = 0;
    for (const auto& [key, rel] : relations_) n += rel.rows.size();
    return n;
}

const Derivation& Model::derivation(const Atom& a) const {
    auto it = relations_.find(predicate_key(a.predicate, a.args.size()));
    if (it != relations_.end()) {
        auto d = it->second.index.find(a.args);
        if (d != it->second.index.end()) return d->second;
    }
    throw UnknownIdError(to_string(a) + " is not in the model");
}

Model evaluate(const StratifiedProgram& program, const std::vector<Atom>& facts) {
    std::map<std::string, std::vector<Tuple>> rows;
    std::map<std::string, std::map<Tuple, Derivation>> index;
    auto add_input = [&](const Atom& a) {
        const std::string key = predicate_key(a.predicate, a.args.size());
        if (index[key].emplace(a.args, Derivation{}).second) rows[key].push_back(a.args);
    };
    for (const auto& f : program.program.facts) add_input(f);
    for (const auto& f : facts) add_input(f);

    std::vector<CompiledRule> compiled;
    for (std::size_t r = 0; r < program.program.rules.size(); ++r) compiled.push_back(compile(program.program.rules[r], static_cast<int>(r)));

    ModelBuilder b(program, rows, index);
    for (const auto& stratum : program.strata) {
        if (stratum.empty()) continue;
        std::set<std::string> local;
        for (int r : stratum) local.insert(compiled[r].head_key);
        auto snapshot = [&](std::map<std::string, ModelBuilder::Range>& into) {
            into.clear();
            for (const auto& [key, rs] : rows) into[key] = {0, rs.size()};
        };

        // First round: everything against the stratum's inputs.
        snapshot(b.full);
        b.delta_pos = -1;
        b.delta.clear();
        std::map<std::string, std::size_t> before;
        for (const auto& k : local) before[k] = rows[k].size();
        for (int r : stratum) b.run_rule(compiled[r]);
        if (!b.flush()) continue;

        for (;;) {
            // delta = rows added last round, old = rows before it.
            b.old.clear();
            b.delta.clear();
            snapshot(b.full);
            bool any_delta = false;
            for (const auto& k : local) {
                const std::size_t lo = before[k], hi = rows[k].size();
                b.old[k] = {0, lo};
                b.delta[k] = {lo, hi};
                any_delta |= hi > lo;
                before[k] = hi;
            }
            if (!any_delta) break;
            for (int r : stratum) {
                const CompiledRule& cr = compiled[r];
                for (std::size_t pos = 0; pos < cr.body.size(); ++pos) {
                    const auto& cl = cr.body[pos];
                    if (cl.source->kind != Literal::Kind::Positive || !local.count(cl.key)) continue;
                    const auto& d = b.delta[cl.key];
                    if (d.lo == d.hi) continue;
                    b.delta_pos = static_cast<int>(pos);
                    b.run_rule(cr);
                }
            }
            b.delta_pos = -1;
            if (!b.flush()) break;
        }
    }

    Model m;
    m.program_ = std::make_shared<const StratifiedProgram>(program);
    for (auto& [key, rs] : rows) {
        auto& rel = m.relations_[key];
        rel.rows = std::move(rs);
        rel.index = std::move(index[key]);
    }
    return m;
}

namespace {

void explain_into(const Model& m, const Atom& a, DerivationTree& t) {
    t.fact = a;
    const Derivation& d = m.derivation(a);
    if (d.rule < 0) return;
    t.rule_id = m.program().program.rules[d.rule].id;
    t.absent = d.negated;
    for (const auto& p : d.positives) {
        DerivationTree c;
        explain_into(m, p, c);
        t.children.push_back(std::move(c));
    }
}

void leaves_into(const DerivationTree& t, std::vector<Atom>& out) {
    if (t.rule_id.empty()) {
        out.push_back(t.fact);
        return;
    }
    for (const auto& c : t.children) leaves_into(c, out);
}

void render_into(const DerivationTree& t, int depth, std::string& out) {
    const std::string pad(2 * depth, ' ');
    out += pad + to_string(t.fact) + (t.rule_id.empty() ? "  [fact]" : "  [" + t.rule_id + "]") + "\n";
    for (const auto& c : t.children) render_into(c, depth + 1, out);
    for (const auto& a : t.absent) out += pad + "  not " + to_string(a) + "\n";
}

} // namespace

DerivationTree explain(const Model& model, const Atom& fact) {
    DerivationTree t;
    explain_into(model, fact, t);
    return t;
}

std::vector<Atom> DerivationTree::leaves() const {
    std::vector<Atom> out;
    leaves_into(*this, out);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::string render(const DerivationTree& tree) {
    std::string out;
    render_into(tree, 0, out);
    return out;
}

} // namespace csav::rules
