#include "csav/eval/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "csav/error.hpp"
#include "csav/sim/ground_truth.hpp"

namespace csav::eval {

using nlohmann::json;
using nlohmann::ordered_json;

Confusion confusion(const std::vector<bool>& predictions, const std::vector<bool>& truths) {
    if (predictions.size() != truths.size())
        throw DimensionError("confusion of " + std::to_string(predictions.size()) + " predictions against " +
                             std::to_string(truths.size()) + " truths");
    Confusion c;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i]) (truths[i] ? c.tp : c.fp)++;
        else (truths[i] ? c.fn : c.tn)++;
    }
    return c;
}

Metrics metrics(const Confusion& c) {
    Metrics m;
    if (c.total() > 0) m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (m.precision && m.recall)
        m.f_score = *m.precision + *m.recall > 0.0 ? 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall) : 0.0;
    return m;
}

namespace {

Scored score(const std::vector<bool>& pred, const std::vector<bool>& truth) {
    const Confusion c = confusion(pred, truth);
    return {c, metrics(c)};
}

bool has_extra(const sim::Recording& rec, const char* key) {
    if (rec.extras.size() != rec.frames.size() || rec.frames.empty()) return false;
    for (const auto& e : rec.extras)
        if (!e.is_object() || !e.contains(key)) return false;
    return true;
}

bool baseline_obstacle(const perception::Observation& o, const sim::RoadMap& map) {
    if (o.ego_lane < 0 || o.ego_lane >= static_cast<int>(map.lanes().size())) return false;
    const double s_ego = map.project(o.ego_lane, o.ego_position).s;
    for (const auto& d : o.obstacles) {
        const auto c = map.project(o.ego_lane, d.box.center());
        const double ahead = c.s - s_ego;
        if (std::abs(c.lateral) <= map.descriptor().lane_width / 2.0 && ahead > 0.0 && ahead <= bridge::kObstacleLookahead) return true;
    }
    return false;
}

double uncertainty_of(const perception::Observation& o, arbiter::Task task, arbiter::UncertaintyKind kind) {
    if (task == arbiter::Task::Light) {
        const auto u = o.light_uncertainty();
        return kind == arbiter::UncertaintyKind::Aleatoric ? u.alea : u.epis;
    }
    if (kind == arbiter::UncertaintyKind::Aleatoric) throw ConfigError("aleatoric invocation is defined for the light task only");
    return o.corridor_epistemic;
}

std::string_view kind_name(arbiter::UncertaintyKind k) { return k == arbiter::UncertaintyKind::Aleatoric ? "aleatoric" : "epistemic"; }

std::string_view policy_name(arbiter::ThresholdPolicy p) {
    switch (p) {
    case arbiter::ThresholdPolicy::Dynamic: return "dynamic";
    case arbiter::ThresholdPolicy::Running: return "running";
    case arbiter::ThresholdPolicy::Static: return "static";
    }
    return "dynamic";
}

arbiter::ThresholdPolicy policy_from(const std::string& s) {
    if (s == "dynamic") return arbiter::ThresholdPolicy::Dynamic;
    if (s == "running") return arbiter::ThresholdPolicy::Running;
    if (s == "static") return arbiter::ThresholdPolicy::Static;
    throw FormatError("unknown threshold policy '" + s + "'");
}

} // namespace

std::vector<perception::Observation> observations_of(const sim::Recording& rec, const perception::PerceptionConfig& cfg,
                                                     const edl::EvidentialModel* model) {
    std::vector<perception::Observation> out;
    out.reserve(rec.frames.size());
    if (has_extra(rec, "obs")) {
        for (const auto& e : rec.extras) out.push_back(perception::observation_from_json(e.at("obs")));
        return out;
    }
    if (!model) throw FormatError("recording has no observations; a light model is needed to compute them");
    const sim::RoadMap map(rec.config.map);
    for (const auto& f : rec.frames) out.push_back(perception::sense_frame(map, f, cfg, *model));
    return out;
}

void attach_observations(sim::Recording& rec, const std::vector<perception::Observation>& obs) {
    if (obs.size() != rec.frames.size()) throw DimensionError("one observation per frame expected");
    rec.extras.resize(rec.frames.size(), ordered_json::object());
    for (std::size_t i = 0; i < obs.size(); ++i) {
        if (!rec.extras[i].is_object()) rec.extras[i] = ordered_json::object();
        rec.extras[i]["obs"] = perception::to_json(obs[i]);
    }
}

void attach_clusters(sim::Recording& rec, const std::vector<std::vector<behavior::BehaviorCluster>>& clusters) {
    if (clusters.size() != rec.frames.size()) throw DimensionError("one cluster list per frame expected");
    rec.extras.resize(rec.frames.size(), ordered_json::object());
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        if (!rec.extras[i].is_object()) rec.extras[i] = ordered_json::object();
        rec.extras[i]["clusters"] = behavior::to_json(clusters[i]);
    }
}

std::vector<std::vector<behavior::BehaviorCluster>> clusters_of(const sim::Recording& rec, const behavior::ClusteringConfig& cfg) {
    if (!has_extra(rec, "clusters")) return behavior::clusters_by_frame(rec, cfg);
    std::vector<std::vector<behavior::BehaviorCluster>> out;
    for (const auto& e : rec.extras) out.push_back(behavior::clusters_from_json(e.at("clusters")));
    return out;
}

std::vector<bridge::FrameContext> frame_contexts(const sim::Recording& rec) {
    const std::size_t n = rec.frames.size();
    std::vector<bridge::FrameContext> out(n);
    if (n == 0) return out;
    if (n >= 2)
        for (const auto& e : behavior::label_recording(rec))
            for (int f = e.start_frame; f <= e.end_frame && f < static_cast<int>(n); ++f) out[f].actions[e.vehicle] = e.category;

    const sim::RoadMap map(rec.config.map);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& f = rec.frames[i];
        const auto a = sim::governing_light(map, f, f.ego_id);
        if (!a) continue;
        auto green = [&](std::size_t k) {
            const auto c = rec.frames[k].light(a->intersection, a->dir);
            return c && *c == sim::LightColor::Green;
        };
        if (!green(i)) continue;
        std::size_t k = i;
        while (k > 0 && green(k - 1)) --k;
        // Green since the recording began: the switch is long past.
        out[i].green_elapsed = k == 0 ? std::numeric_limits<double>::max() : f.time - rec.frames[k].time;
    }
    return out;
}

std::vector<bool> ground_truth(const sim::Recording& rec, arbiter::Task task) {
    const sim::RoadMap map(rec.config.map);
    std::vector<bool> out;
    out.reserve(rec.frames.size());
    for (const auto& f : rec.frames)
        out.push_back(task == arbiter::Task::Light ? sim::ground_truth_light_for(map, f, f.ego_id)
                                                   : sim::ground_truth_obstacle_ahead(map, f).has_value());
    return out;
}

bridge::FactBase frame_facts(const sim::Recording& rec, int frame, const EvalConfig& cfg, const edl::EvidentialModel* model) {
    if (frame < 0 || frame >= static_cast<int>(rec.frames.size()))
        throw UnknownIdError("frame " + std::to_string(frame) + " is not in the recording");
    const auto obs = observations_of(rec, cfg.perception, model);
    const auto clusters = clusters_of(rec, cfg.clustering);
    const auto ctx = frame_contexts(rec);
    const sim::RoadMap map(rec.config.map);
    return bridge::facts_from_frame(obs[frame], clusters[frame], rec.frames[frame].index, map, ctx[frame]);
}

Report evaluate_recording(const sim::Recording& rec, const EvalConfig& cfg, const bridge::Rulebase& rules,
                          const edl::EvidentialModel* model, std::string scenario) {
    const auto obs = observations_of(rec, cfg.perception, model);
    const auto clusters = clusters_of(rec, cfg.clustering);
    const auto ctx = frame_contexts(rec);
    const sim::RoadMap map(rec.config.map);
    const std::size_t n = rec.frames.size();

    Report r;
    r.scenario = scenario.empty() ? rec.config.archetype + "-" + std::to_string(rec.config.seed) : std::move(scenario);
    r.task = cfg.task;
    r.mode = cfg.mode;
    r.truth = ground_truth(rec, cfg.task);
    r.frames = static_cast<int>(n);

    std::vector<bool> baseline(n);
    std::vector<double> u(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        baseline[i] = cfg.task == arbiter::Task::Light ? obs[i].light_says_red() : baseline_obstacle(obs[i], map);
        if (!cfg.mode.fully_active) u[i] = uncertainty_of(obs[i], cfg.task, cfg.mode.kind);
    }
    if (!cfg.mode.fully_active && n > 0) {
        if (cfg.mode.policy == arbiter::ThresholdPolicy::Dynamic) r.threshold = arbiter::dynamic_threshold(u, cfg.mode.fraction);
        if (cfg.mode.policy == arbiter::ThresholdPolicy::Static) r.threshold = cfg.mode.static_threshold;
    }

    auto logic = [&](std::size_t i) {
        const auto fb = bridge::facts_from_frame(obs[i], clusters[i], rec.frames[i].index, map, ctx[i]);
        arbiter::LogicOutcome out;
        if (cfg.task == arbiter::Task::Light) {
            auto v = bridge::logic_light_verdict(fb, rules, cfg.protocol);
            out = {v.applicable, v.red, std::move(v.derivation)};
        } else {
            auto v = bridge::logic_obstacle_verdict(fb, rules);
            out = {v.applicable, v.obstacle, std::move(v.derivation)};
        }
        return out;
    };

    double running = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int frame = rec.frames[i].index;
        if (cfg.mode.fully_active) {
            r.decisions.push_back(arbiter::fuse_fully_active(frame, cfg.task, baseline[i], logic(i)));
            continue;
        }
        running += u[i];
        const double threshold = cfg.mode.policy == arbiter::ThresholdPolicy::Running
                                     ? cfg.mode.fraction * running / static_cast<double>(i + 1)
                                     : *r.threshold;
        r.decisions.push_back(arbiter::fuse_uncertainty_invoked(frame, cfg.task, baseline[i], u[i], threshold, [&] { return logic(i); }));
    }

    std::vector<bool> hybrid, logic_pred, logic_truth, hybrid_app;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& d = r.decisions[i];
        hybrid.push_back(d.final_label);
        r.evaluated += d.evaluated();
        if (d.invoked) {
            ++r.applicable;
            logic_pred.push_back(d.logic->label);
            logic_truth.push_back(r.truth[i]);
            hybrid_app.push_back(d.final_label);
        }
    }
    r.baseline = score(baseline, r.truth);
    r.hybrid = score(hybrid, r.truth);
    r.logic = score(logic_pred, logic_truth);
    r.hybrid_applicable = score(hybrid_app, logic_truth);
    return r;
}

Format format_from(std::string_view s) {
    if (s == "csv") return Format::Csv;
    if (s == "markdown" || s == "md") return Format::Markdown;
    if (s == "structured" || s == "json") return Format::Structured;
    throw ConfigError("unknown report format '" + std::string(s) + "'");
}

std::string format_metric(std::optional<double> v, int decimals) {
    if (!v) return "N/A";
    char buf[64];
    if (decimals >= 0) {
        std::snprintf(buf, sizeof buf, "%.*f", decimals, *v);
        return buf;
    }
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, *v);
    return std::string(buf, end);
}

namespace {

ordered_json metric_json(std::optional<double> v) { return v ? ordered_json(*v) : ordered_json("N/A"); }

std::optional<double> metric_from(const json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() != "N/A") throw FormatError("metric must be a number or \"N/A\"");
        return std::nullopt;
    }
    return j.get<double>();
}

ordered_json scored_json(const Scored& s) {
    return ordered_json{{"tp", s.confusion.tp},
                        {"fp", s.confusion.fp},
                        {"tn", s.confusion.tn},
                        {"fn", s.confusion.fn},
                        {"accuracy", s.metrics.accuracy},
                        {"precision", metric_json(s.metrics.precision)},
                        {"recall", metric_json(s.metrics.recall)},
                        {"f_score", metric_json(s.metrics.f_score)}};
}

Scored scored_from(const json& j) {
    Scored s;
    s.confusion = {j.at("tp").get<long>(), j.at("fp").get<long>(), j.at("tn").get<long>(), j.at("fn").get<long>()};
    s.metrics.accuracy = j.at("accuracy").get<double>();
    s.metrics.precision = metric_from(j.at("precision"));
    s.metrics.recall = metric_from(j.at("recall"));
    s.metrics.f_score = metric_from(j.at("f_score"));
    return s;
}

struct Row {
    const char* model;
    const Metrics* m;
};

std::vector<Row> rows_of(const Report& r) {
    return {{"Baseline", &r.baseline.metrics}, {"Logic", &r.logic.metrics}, {"Hybrid", &r.hybrid.metrics}};
}

} // namespace

ordered_json to_json(const Report& r) {
    ordered_json j;
    j["version"] = kReportVersion;
    j["scenario"] = r.scenario;
    j["task"] = arbiter::to_string(r.task);
    j["mode"] = ordered_json{{"name", r.mode.fully_active ? "fully-active" : "uncertainty"},
                             {"kind", kind_name(r.mode.kind)},
                             {"policy", policy_name(r.mode.policy)},
                             {"fraction", r.mode.fraction},
                             {"static_threshold", r.mode.static_threshold}};
    j["threshold"] = r.threshold ? ordered_json(*r.threshold) : ordered_json(nullptr);
    j["frames"] = r.frames;
    j["evaluated"] = r.evaluated;
    j["applicable"] = r.applicable;
    j["metrics"] = ordered_json{{"baseline", scored_json(r.baseline)},
                                {"logic", scored_json(r.logic)},
                                {"hybrid", scored_json(r.hybrid)},
                                {"hybrid_applicable", scored_json(r.hybrid_applicable)}};
    ordered_json ds = ordered_json::array();
    for (std::size_t i = 0; i < r.decisions.size(); ++i) {
        const auto& d = r.decisions[i];
        ordered_json o{{"frame", d.frame}, {"truth", i < r.truth.size() && r.truth[i]}, {"baseline", d.baseline}};
        o["uncertainty"] = d.uncertainty;
        o["evaluated"] = d.evaluated();
        o["applicable"] = d.evaluated() && d.logic->applicable;
        o["logic"] = d.evaluated() ? ordered_json(d.logic->label) : ordered_json(nullptr);
        o["final"] = d.final_label;
        o["explanation"] = d.explanation;
        ds.push_back(std::move(o));
    }
    j["decisions"] = std::move(ds);
    return j;
}

Report report_from_json(const json& j) {
    try {
        if (j.at("version").get<std::string>() != kReportVersion)
            throw FormatError("expected a " + std::string(kReportVersion) + " report, got " + j.at("version").dump());
        Report r;
        r.scenario = j.at("scenario").get<std::string>();
        r.task = arbiter::task_from(j.at("task").get<std::string>());
        const auto& m = j.at("mode");
        r.mode.fully_active = m.at("name").get<std::string>() == "fully-active";
        r.mode.kind = m.at("kind").get<std::string>() == "aleatoric" ? arbiter::UncertaintyKind::Aleatoric : arbiter::UncertaintyKind::Epistemic;
        r.mode.policy = policy_from(m.at("policy").get<std::string>());
        r.mode.fraction = m.at("fraction").get<double>();
        r.mode.static_threshold = m.at("static_threshold").get<double>();
        if (!j.at("threshold").is_null()) r.threshold = j.at("threshold").get<double>();
        r.frames = j.at("frames").get<int>();
        r.evaluated = j.at("evaluated").get<int>();
        r.applicable = j.at("applicable").get<int>();
        const auto& ms = j.at("metrics");
        r.baseline = scored_from(ms.at("baseline"));
        r.logic = scored_from(ms.at("logic"));
        r.hybrid = scored_from(ms.at("hybrid"));
        r.hybrid_applicable = scored_from(ms.at("hybrid_applicable"));
        for (const auto& o : j.at("decisions")) {
            arbiter::FrameDecision d;
            d.frame = o.at("frame").get<int>();
            d.task = r.task;
            d.baseline = o.at("baseline").get<bool>();
            d.uncertainty = o.at("uncertainty").get<double>();
            if (o.at("evaluated").get<bool>()) {
                arbiter::LogicOutcome lo;
                lo.applicable = o.at("applicable").get<bool>();
                lo.label = o.at("logic").get<bool>();
                d.logic = lo;
                d.invoked = lo.applicable;
            }
            d.final_label = o.at("final").get<bool>();
            d.explanation = o.at("explanation").get<std::string>();
            r.truth.push_back(o.at("truth").get<bool>());
            r.decisions.push_back(std::move(d));
        }
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed report: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("malformed report: ") + e.what());
    }
}

std::string render_reports(const std::vector<Report>& rs, Format f) {
    std::string out;
    switch (f) {
    case Format::Csv:
        out = "scenario,model,accuracy,precision,recall,f_score\n";
        for (const auto& r : rs)
            for (const auto& row : rows_of(r))
                out += r.scenario + "," + row.model + "," + format_metric(row.m->accuracy) + "," + format_metric(row.m->precision) + "," +
                       format_metric(row.m->recall) + "," + format_metric(row.m->f_score) + "\n";
        return out;
    case Format::Markdown:
        out = "| Scenario | Model | Accuracy | Precision | Recall | F-Score |\n|---|---|---|---|---|---|\n";
        for (const auto& r : rs)
            for (const auto& row : rows_of(r))
                out += "| " + r.scenario + " | " + row.model + " | " + format_metric(row.m->accuracy, 4) + " | " +
                       format_metric(row.m->precision, 4) + " | " + format_metric(row.m->recall, 4) + " | " +
                       format_metric(row.m->f_score, 4) + " |\n";
        return out;
    case Format::Structured: {
        if (rs.size() == 1) return to_json(rs[0]).dump(2) + "\n";
        ordered_json a = ordered_json::array();
        for (const auto& r : rs) a.push_back(to_json(r));
        return a.dump(2) + "\n";
    }
    }
    return out;
}

std::string render_report(const Report& r, Format f) { return render_reports({r}, f); }

std::vector<Assertion> assertions_from_json(const json& scenario) {
    std::vector<Assertion> out;
    const auto it = scenario.find("assertions");
    if (it == scenario.end()) return out;
    if (!it->is_array()) throw ConfigError("assertions must be an array");
    static const std::vector<std::string> ops{"==", "!=", "<", "<=", ">", ">="};
    for (const auto& e : *it) {
        try {
            Assertion a;
            if (e.contains("task")) a.task = arbiter::task_from(e.at("task").get<std::string>());
            if (e.contains("mode")) {
                const auto m = e.at("mode").get<std::string>();
                if (m != "fully-active" && m != "uncertainty") throw ConfigError("assertion mode must be fully-active or uncertainty");
                a.fully_active = m == "fully-active";
            }
            a.metric = e.at("metric").get<std::string>();
            a.op = e.at("op").get<std::string>();
            if (std::find(ops.begin(), ops.end(), a.op) == ops.end()) throw ConfigError("unknown assertion op '" + a.op + "'");
            if (!e.at("value").is_null()) a.value = e.at("value").get<double>();
            else if (a.op != "==" && a.op != "!=") throw ConfigError("N/A can only be compared with == or !=");
            out.push_back(std::move(a));
        } catch (const json::exception& ex) {
            throw ConfigError(std::string("malformed assertion: ") + ex.what());
        }
    }
    return out;
}

namespace {

std::optional<double> metric_value(const Report& r, const std::string& name) {
    if (name == "evaluated_fraction") return r.frames > 0 ? static_cast<double>(r.evaluated) / r.frames : 0.0;
    const auto dot = name.find('.');
    if (dot == std::string::npos) throw ConfigError("unknown assertion metric '" + name + "'");
    const std::string row = name.substr(0, dot), field = name.substr(dot + 1);
    const Scored* s = row == "baseline" ? &r.baseline
                      : row == "logic" ? &r.logic
                      : row == "hybrid" ? &r.hybrid
                      : row == "hybrid_applicable" ? &r.hybrid_applicable
                                                   : nullptr;
    if (!s) throw ConfigError("unknown assertion row '" + row + "'");
    if (field == "accuracy") return s->metrics.accuracy;
    if (field == "precision") return s->metrics.precision;
    if (field == "recall") return s->metrics.recall;
    if (field == "f_score") return s->metrics.f_score;
    throw ConfigError("unknown assertion metric '" + name + "'");
}

bool holds(std::optional<double> x, const std::string& op, std::optional<double> v) {
    if (!x || !v) {
        const bool same = x.has_value() == v.has_value() && (!x || *x == *v);
        if (op == "==") return same;
        if (op == "!=") return !same;
        return false;
    }
    if (op == "==") return *x == *v;
    if (op == "!=") return *x != *v;
    if (op == "<") return *x < *v;
    if (op == "<=") return *x <= *v;
    if (op == ">") return *x > *v;
    return *x >= *v;
}

} // namespace

std::vector<std::string> check_assertions(const Report& r, const std::vector<Assertion>& as) {
    std::vector<std::string> failures;
    for (const auto& a : as) {
        if (a.task && *a.task != r.task) continue;
        if (a.fully_active && *a.fully_active != r.mode.fully_active) continue;
        const auto x = metric_value(r, a.metric);
        if (!holds(x, a.op, a.value))
            failures.push_back(r.scenario + ": " + a.metric + " = " + format_metric(x) + ", expected " + a.op + " " + format_metric(a.value));
    }
    return failures;
}

Scenario scenario_from_json(const json& j, std::string name) {
    Scenario s;
    s.name = std::move(name);
    s.world = sim::config_from_json(j);
    s.perception.weather_noise = s.world.weather_noise;
    s.perception.seed = s.world.seed;
    if (auto it = j.find("perception"); it != j.end()) s.perception = perception::perception_config_from_json(*it, s.perception);
    s.assertions = assertions_from_json(j);
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        const std::string text = ss.str();
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("config syntax error: ") + e.what());
        }
        return scenario_from_json(j, path.stem().string());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

} // namespace csav::eval
