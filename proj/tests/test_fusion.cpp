#include <doctest.h>

#include <charconv>
#include <random>
#include <sstream>

#include "csav/arbiter/arbiter.hpp"
#include "csav/error.hpp"
#include "csav/eval/eval.hpp"

using namespace csav;
using namespace csav::arbiter;
using namespace csav::eval;

namespace {

LogicOutcome outcome(bool applicable, bool label) {
    LogicOutcome o;
    o.applicable = applicable;
    o.label = label;
    if (applicable && label) {
        const auto sp = rules::stratify(rules::parse_rules("p(1) :- q(1)."));
        const auto m = rules::evaluate(sp, {{"q", {rules::Value::num(std::int64_t{1})}}});
        o.derivation = rules::explain(m, {"p", {rules::Value::num(std::int64_t{1})}});
    }
    return o;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
    return out;
}

std::optional<double> parse_metric(const std::string& cell) {
    if (cell == "N/A") return std::nullopt;
    double v = 0.0;
    std::from_chars(cell.data(), cell.data() + cell.size(), v);
    return v;
}

Report synthetic_report(std::mt19937_64& rng, int n) {
    std::bernoulli_distribution coin(0.5), rare(0.15);
    Report r;
    r.scenario = "synthetic";
    r.frames = n;
    std::vector<bool> base, hyb, lp, lt, ha;
    for (int k = 0; k < n; ++k) {
        const bool truth = coin(rng), b = rare(rng) ? !truth : truth;
        const auto d = fuse_fully_active(k, Task::Light, b, outcome(coin(rng), truth));
        r.decisions.push_back(d);
        r.truth.push_back(truth);
        base.push_back(b);
        hyb.push_back(d.final_label);
        ++r.evaluated;
        if (d.invoked) {
            ++r.applicable;
            lp.push_back(d.logic->label);
            lt.push_back(truth);
            ha.push_back(d.final_label);
        }
    }
    auto sc = [](const std::vector<bool>& p, const std::vector<bool>& t) {
        const auto c = confusion(p, t);
        return Scored{c, metrics(c)};
    };
    r.baseline = sc(base, r.truth);
    r.hybrid = sc(hyb, r.truth);
    r.logic = sc(lp, lt);
    r.hybrid_applicable = sc(ha, lt);
    return r;
}

} // namespace

TEST_CASE("confusion examples") {
    CHECK(confusion({true, false, true}, {true, false, true}).fp == 0);
    CHECK(confusion({true, false, true}, {true, false, true}).fn == 0);
    std::vector<bool> preds(10, false), truths(10, false);
    for (int k = 0; k < 5; ++k) truths[k] = true;
    const auto c = confusion(preds, truths);
    CHECK(c.tp == 0);
    CHECK(c.fn == 5);
    CHECK(c.tn == 5);
    CHECK(c.fp == 0);
    CHECK(confusion({}, {}).total() == 0);
    CHECK_THROWS_AS(confusion({true}, {}), DimensionError);
}

TEST_CASE("metrics examples and N/A propagation") {
    auto m = metrics({1, 0, 0, 0});
    CHECK(m.accuracy == 1.0);
    CHECK(*m.precision == 1.0);
    CHECK(*m.recall == 1.0);
    CHECK(*m.f_score == 1.0);

    m = metrics({0, 0, 93, 7});
    CHECK(m.accuracy == doctest::Approx(0.93));
    CHECK_FALSE(m.precision);
    CHECK(*m.recall == 0.0);
    CHECK_FALSE(m.f_score);
    CHECK(format_metric(m.accuracy, 4) == "0.9300");
    CHECK(format_metric(m.precision, 4) == "N/A");

    m = metrics({2, 0, 0, 5});
    CHECK(*m.precision == 1.0);
    CHECK(*m.recall == doctest::Approx(0.2857).epsilon(1e-4));
    CHECK(*m.f_score == doctest::Approx(0.4444).epsilon(1e-4));

    m = metrics({});
    CHECK(m.accuracy == 0.0);
    CHECK_FALSE(m.precision);
    CHECK_FALSE(m.recall);
    CHECK(*metrics({0, 3, 0, 2}).f_score == 0.0);
}

TEST_CASE("metrics of confusion equal a direct recount") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = std::uniform_int_distribution<int>(0, 60)(rng);
        const double rate = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        std::bernoulli_distribution b(rate);
        std::vector<bool> p(n), t(n);
        for (int k = 0; k < n; ++k) {
            p[k] = b(rng);
            t[k] = b(rng);
        }
        int right = 0, pred_pos = 0, true_pos = 0, hit = 0;
        for (int k = 0; k < n; ++k) {
            right += p[k] == t[k];
            pred_pos += p[k];
            true_pos += t[k];
            hit += p[k] && t[k];
        }
        const auto m = metrics(confusion(p, t));
        CHECK(m.accuracy == doctest::Approx(n ? static_cast<double>(right) / n : 0.0));
        CHECK(m.precision.has_value() == (pred_pos > 0));
        CHECK(m.recall.has_value() == (true_pos > 0));
        if (pred_pos) CHECK(*m.precision == doctest::Approx(static_cast<double>(hit) / pred_pos));
        if (true_pos) CHECK(*m.recall == doctest::Approx(static_cast<double>(hit) / true_pos));
        for (auto v : {m.precision, m.recall, m.f_score})
            if (v) CHECK((*v >= 0.0 && *v <= 1.0));
    }
}

TEST_CASE("dynamic threshold") {
    CHECK(dynamic_threshold({-0.9, -0.7}) == doctest::Approx(-0.8));
    CHECK(dynamic_threshold({0.2, 0.4}, 2.0) == doctest::Approx(0.6));
    CHECK_THROWS_AS(dynamic_threshold({}), Error);
    CHECK_THROWS_AS(dynamic_threshold({0.1}, 0.0), ConfigError);
    CHECK(FusionMode::uncertainty(Task::Light).kind == UncertaintyKind::Aleatoric);
    CHECK(FusionMode::uncertainty(Task::Light).policy == ThresholdPolicy::Dynamic);
    CHECK(FusionMode::uncertainty(Task::Obstacle).kind == UncertaintyKind::Epistemic);
    CHECK(FusionMode::uncertainty(Task::Obstacle).static_threshold == 0.5);
    CHECK(FusionMode::fully().fully_active);
}

TEST_CASE("fully-active fusion favours an applicable logic") {
    int hooked = 0;
    auto hook = [&](const FrameDecision&) { ++hooked; };
    auto d = fuse_fully_active(3, Task::Light, false, outcome(true, true), hook);
    CHECK(d.final_label);
    CHECK(d.invoked);
    CHECK(hooked == 1);
    CHECK(d.explanation.find("p(1)") != std::string::npos);

    d = fuse_fully_active(4, Task::Light, true, outcome(false, false), hook);
    CHECK(d.final_label);
    CHECK(d.evaluated());
    CHECK_FALSE(d.invoked);
    CHECK(d.explanation == "baseline");

    d = fuse_fully_active(5, Task::Light, true, outcome(true, false), hook);
    CHECK_FALSE(d.final_label);
    CHECK(hooked == 2);
    d = fuse_fully_active(6, Task::Light, true, outcome(true, true), hook);
    CHECK(hooked == 2);
}

TEST_CASE("uncertainty-invoked fusion runs the logic only above the threshold") {
    int calls = 0;
    auto logic = [&] {
        ++calls;
        return outcome(true, true);
    };
    auto d = fuse_uncertainty_invoked(0, Task::Light, false, -0.9, -0.8, logic);
    CHECK(calls == 0);
    CHECK_FALSE(d.evaluated());
    CHECK_FALSE(d.final_label);
    d = fuse_uncertainty_invoked(1, Task::Light, false, -0.8, -0.8, logic);
    CHECK(calls == 0);
    d = fuse_uncertainty_invoked(2, Task::Light, false, -0.6, -0.8, logic);
    CHECK(calls == 1);
    CHECK(d.final_label);
    CHECK(d.uncertainty == -0.6);
}

TEST_CASE("laziness, dominance, oracle logic and explanation completeness") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1.0, -0.5);
    std::bernoulli_distribution coin(0.5), rare(0.2);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 200;
        std::vector<double> unc(n);
        std::vector<bool> truth(n), base(n), app(n);
        for (int k = 0; k < n; ++k) {
            unc[k] = u(rng);
            truth[k] = coin(rng);
            base[k] = rare(rng) ? !truth[k] : truth[k];
            app[k] = coin(rng);
        }
        const double th = dynamic_threshold(unc, 1.0);
        int lazy = 0, full = 0;
        std::vector<bool> oracle_hyb, oracle_truth;
        for (int k = 0; k < n; ++k) {
            const auto logic = [&] { return outcome(app[k], truth[k]); };
            const auto a = fuse_fully_active(k, Task::Light, base[k], logic());
            const auto b = fuse_uncertainty_invoked(k, Task::Light, base[k], unc[k], th, logic);
            full += a.evaluated();
            lazy += b.evaluated();
            for (const auto* d : {&a, &b}) {
                if (!d->invoked) CHECK(d->final_label == d->baseline);
                if (d->final_label != d->baseline) {
                    CHECK(d->invoked);
                    CHECK(d->explanation != "baseline");
                }
                if (d->invoked) {
                    oracle_hyb.push_back(d->final_label);
                    oracle_truth.push_back(truth[k]);
                }
            }
        }
        CHECK(lazy <= full);
        CHECK(lazy < n);
        if (!oracle_hyb.empty()) CHECK(metrics(confusion(oracle_hyb, oracle_truth)).accuracy == 1.0);
    }
}

TEST_CASE("rendered csv parses back to the exact metrics") {
    std::mt19937_64 rng(8);
    std::vector<Report> rs;
    for (int k = 0; k < 5; ++k) {
        rs.push_back(synthetic_report(rng, 37 + 11 * k));
        rs.back().scenario = "run" + std::to_string(k);
    }
    const auto csv = render_reports(rs, Format::Csv);
    std::stringstream ss(csv);
    std::string line;
    std::getline(ss, line);
    CHECK(line == "scenario,model,accuracy,precision,recall,f_score");
    for (const auto& r : rs)
        for (const auto* m : {&r.baseline.metrics, &r.logic.metrics, &r.hybrid.metrics}) {
            REQUIRE(std::getline(ss, line));
            const auto cells = split(line);
            REQUIRE(cells.size() == 6);
            CHECK(cells[0] == r.scenario);
            CHECK(*parse_metric(cells[2]) == m->accuracy);
            CHECK(parse_metric(cells[3]) == m->precision);
            CHECK(parse_metric(cells[4]) == m->recall);
            CHECK(parse_metric(cells[5]) == m->f_score);
        }
    CHECK_FALSE(std::getline(ss, line));

    const auto md = render_report(rs[0], Format::Markdown);
    CHECK(md.find("| Scenario | Model | Accuracy | Precision | Recall | F-Score |") == 0);
    CHECK(md.find("| Baseline |") != std::string::npos);
    CHECK(md.find("| Hybrid |") != std::string::npos);
    CHECK_THROWS_AS(format_from("xml"), ConfigError);
}

TEST_CASE("structured report round-trips") {
    std::mt19937_64 rng(9);
    auto r = synthetic_report(rng, 50);
    r.baseline.metrics.precision.reset();
    const auto back = report_from_json(nlohmann::json::parse(to_json(r).dump()));
    CHECK(to_json(back).dump() == to_json(r).dump());
    CHECK_FALSE(back.baseline.metrics.precision);

    auto j = to_json(r);
    j["version"] = "report-v0";
    CHECK_THROWS_AS(report_from_json(j), FormatError);
    j = to_json(r);
    j.erase("metrics");
    CHECK_THROWS_AS(report_from_json(j), FormatError);
}

TEST_CASE("scenario assertions") {
    Report r;
    r.task = Task::Obstacle;
    r.frames = 100;
    r.evaluated = 10;
    r.baseline.metrics = metrics({0, 0, 93, 7});
    r.hybrid.metrics = metrics({2, 0, 93, 5});
    const auto as = assertions_from_json(nlohmann::json::parse(R"({"assertions": [
        {"metric": "baseline.precision", "op": "==", "value": null},
        {"metric": "baseline.recall", "op": "==", "value": 0},
        {"metric": "hybrid.precision", "op": ">=", "value": 1},
        {"metric": "evaluated_fraction", "op": "<", "value": 0.2},
        {"task": "light", "metric": "hybrid.recall", "op": ">", "value": 0.9},
        {"mode": "uncertainty", "metric": "hybrid.recall", "op": ">", "value": 0.9}
    ]})"));
    REQUIRE(as.size() == 6);
    CHECK(check_assertions(r, as).empty());
    r.mode.fully_active = false;
    CHECK(check_assertions(r, as).size() == 1);

    CHECK(assertions_from_json(nlohmann::json::object()).empty());
    CHECK_THROWS_AS(assertions_from_json(nlohmann::json::parse(R"({"assertions": [{"metric": "x", "op": "~", "value": 1}]})")), ConfigError);
    CHECK_THROWS_AS(assertions_from_json(nlohmann::json::parse(R"({"assertions": [{"metric": "x", "op": "<", "value": null}]})")), ConfigError);
    const auto bad = assertions_from_json(nlohmann::json::parse(R"({"assertions": [{"metric": "hybrid.speed", "op": "<", "value": 1}]})"));
    CHECK_THROWS_AS(check_assertions(r, bad), ConfigError);
}
