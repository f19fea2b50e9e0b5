#include <algorithm>
#include <functional>
#include <map>
#include <queue>
#include <set>

#include "csav/rules/rules.hpp"

namespace csav::rules {

StratifiedProgram stratify(Program program) {
    std::map<std::string, int> id;
    std::vector<std::string> names;
    auto node = [&](const std::string& key) {
        auto [it, fresh] = id.try_emplace(key, static_cast<int>(names.size()));
        if (fresh) names.push_back(key);
        return it->second;
    };
    for (const auto& f : program.facts) node(predicate_key(f.predicate, f.args.size()));
    struct Edge {
        int to;
        bool negative;
    };
    std::vector<std::vector<Edge>> out;
    auto add_edge = [&](int from, int to, bool neg) {
        if (static_cast<int>(out.size()) <= std::max(from, to)) out.resize(std::max(from, to) + 1);
        out[from].push_back({to, neg});
    };
    std::vector<int> head_of(program.rules.size());
    for (std::size_t r = 0; r < program.rules.size(); ++r) {
        const auto& rule = program.rules[r];
        const int h = node(predicate_key(rule.predicate, rule.head.size()));
        head_of[r] = h;
        for (const auto& l : rule.body)
            if (l.kind == Literal::Kind::Positive || l.kind == Literal::Kind::Negative)
                add_edge(node(predicate_key(l.predicate, l.args.size())), h, l.kind == Literal::Kind::Negative);
    }
    const int n = static_cast<int>(names.size());
    out.resize(n);

    // Tarjan; components come out heads-first.
    std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
    std::vector<char> on(n, 0);
    std::vector<int> stack;
    int counter = 0, comps = 0;
    std::function<void(int)> visit = [&](int v) {
        index[v] = low[v] = counter++;
        stack.push_back(v);
        on[v] = 1;
        for (const auto& e : out[v]) {
            if (index[e.to] < 0) {
                visit(e.to);
                low[v] = std::min(low[v], low[e.to]);
            } else if (on[e.to]) {
                low[v] = std::min(low[v], index[e.to]);
            }
        }
        if (low[v] == index[v]) {
            for (;;) {
                const int w = stack.back();
                stack.pop_back();
                on[w] = 0;
                comp[w] = comps;
                if (w == v) break;
            }
            ++comps;
        }
    };
    for (int v = 0; v < n; ++v)
        if (index[v] < 0) visit(v);

    for (int u = 0; u < n; ++u)
        for (const auto& e : out[u]) {
            if (!e.negative || comp[u] != comp[e.to]) continue;
            // Path back from e.to to u inside the component.
            std::vector<int> prev(n, -1);
            std::queue<int> q;
            q.push(e.to);
            prev[e.to] = e.to;
            while (!q.empty() && prev[u] < 0) {
                const int x = q.front();
                q.pop();
                for (const auto& f : out[x])
                    if (comp[f.to] == comp[u] && prev[f.to] < 0) {
                        prev[f.to] = x;
                        q.push(f.to);
                    }
            }
            std::vector<int> path{u};
            for (int x = u; x != e.to; x = prev[x]) path.push_back(prev[x]);
            std::reverse(path.begin(), path.end()); // e.to ... u
            std::string cycle = names[u];
            for (int x : path) cycle += " -> " + names[x];
            throw UnstratifiableError("unstratifiable: negation inside the cycle " + cycle + " (" + names[e.to] +
                                      " depends on \\+ " + names[u] + ")");
        }

    std::vector<int> comp_stratum(comps, 0);
    for (int c = comps - 1; c >= 0; --c)
        for (int u = 0; u < n; ++u) {
            if (comp[u] != c) continue;
            for (const auto& e : out[u])
                if (comp[e.to] != c) comp_stratum[comp[e.to]] = std::max(comp_stratum[comp[e.to]], comp_stratum[c] + (e.negative ? 1 : 0));
        }

    StratifiedProgram sp;
    int top = 0;
    for (int v = 0; v < n; ++v) {
        sp.stratum[names[v]] = comp_stratum[comp[v]];
        top = std::max(top, comp_stratum[comp[v]]);
    }
    sp.strata.assign(top + 1, {});
    for (std::size_t r = 0; r < program.rules.size(); ++r) sp.strata[comp_stratum[comp[head_of[r]]]].push_back(static_cast<int>(r));
    sp.program = std::move(program);
    return sp;
}

} // namespace csav::rules
