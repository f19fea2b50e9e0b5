// Command-line entry point: simulate, train-edl, perceive, evaluate, explain, report, check-rules.
// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 scenario assertion failure.

#include <glob.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "csav/error.hpp"
#include "csav/eval/eval.hpp"
#include "csav/sim/recording.hpp"

using namespace csav;
namespace fs = std::filesystem;

namespace {

constexpr int kExitData = 2;
constexpr int kExitAssertion = 3;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("failed writing " + path.string());
}

std::vector<std::string> expand_glob(const std::string& pattern) {
    glob_t g{};
    std::vector<std::string> out;
    if (::glob(pattern.c_str(), 0, nullptr, &g) == 0)
        for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    ::globfree(&g);
    return out; // glob(3) returns paths sorted
}

// Perception overrides shared by perceive, evaluate and explain.
struct PerceptionFlags {
    std::optional<double> fn_rate, weather_noise;
    std::optional<std::uint64_t> seed;
    std::string scenario;

    void add(CLI::App* app) {
        app->add_option("--scenario", scenario, "Scenario file whose perception block and assertions apply")->check(CLI::ExistingFile);
        app->add_option("--fn-rate", fn_rate, "Injected false-negative rate of the light baseline (default: scenario, else 0)");
        app->add_option("--weather-noise", weather_noise, "Weather noise of the light features (default: the recording's)");
        app->add_option("--perception-seed", seed, "Seed of the perception noise (default: the recording's seed)");
    }

    // Recording defaults, then the scenario's perception block, then flags.
    perception::PerceptionConfig config(const sim::Recording& rec, std::vector<eval::Assertion>* assertions = nullptr) const {
        perception::PerceptionConfig pc;
        pc.weather_noise = rec.config.weather_noise;
        pc.seed = rec.config.seed;
        if (!scenario.empty()) {
            const auto s = eval::load_scenario(scenario);
            pc = s.perception;
            if (assertions) *assertions = s.assertions;
        }
        if (fn_rate) pc.false_negative_rate = *fn_rate;
        if (weather_noise) pc.weather_noise = *weather_noise;
        if (seed) pc.seed = *seed;
        perception::validate(pc);
        return pc;
    }
};

struct ClusterFlags {
    behavior::ClusteringConfig cfg;

    void add(CLI::App* app) {
        app->add_option("--window", cfg.window, "Sliding window of behavior clustering, s");
        app->add_option("--eps", cfg.eps, "DBSCAN neighbourhood radius, m");
        app->add_option("--min-size", cfg.min_size, "DBSCAN minimum cluster size");
    }
};

std::optional<edl::EvidentialModel> load_optional_model(const std::string& path) {
    if (path.empty()) return std::nullopt;
    return edl::load_model(path);
}

const bridge::Rulebase& rulebase_for(arbiter::Task task, const std::string& rules_path, std::optional<bridge::Rulebase>& storage) {
    if (!rules_path.empty()) {
        storage = bridge::load_rulebase_file(rules_path);
        return *storage;
    }
    return task == arbiter::Task::Light ? bridge::traffic_light_rules() : bridge::obstacle_rules();
}

bool has_observations(const sim::Recording& rec) { return rec.extras.size() == rec.frames.size() && !rec.frames.empty() && rec.extras[0].contains("obs"); }

void print_metrics_row(const char* model, const eval::Scored& s) {
    std::printf("  %-18s accuracy %s  precision %s  recall %s  f_score %s\n", model, eval::format_metric(s.metrics.accuracy, 4).c_str(),
                eval::format_metric(s.metrics.precision, 4).c_str(), eval::format_metric(s.metrics.recall, 4).c_str(),
                eval::format_metric(s.metrics.f_score, 4).c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Commonsense checks over simulated driving perception"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Run a scenario and write a rec-v1 recording");
    std::string sim_scenario, sim_out;
    simulate->add_option("--scenario", sim_scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    simulate->add_option("--out", sim_out, "Recording path (JSON Lines)")->required();

    // train-edl
    auto* train = app.add_subcommand("train-edl", "Train the evidential light classifier on recordings");
    std::string train_glob, train_out;
    edl::TrainingSchedule schedule;
    int stride = 2;
    bool ego_only = false;
    std::optional<double> train_noise;
    std::string loss_variant = "squared", kl_target = "full";
    train->add_option("--recordings", train_glob, "Glob of recordings with light ground truth")->required();
    train->add_option("--out", train_out, "Model path (edl-v1)")->required();
    train->add_option("--epochs", schedule.epochs, "Training epochs")->check(CLI::PositiveNumber);
    train->add_option("--lr", schedule.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
    train->add_option("--seed", schedule.seed, "Initialisation and shuffling seed");
    train->add_option("--hidden", schedule.hidden, "Hidden units")->check(CLI::PositiveNumber);
    train->add_option("--batch-size", schedule.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
    train->add_option("--anneal", schedule.anneal_denominator, "Epochs until the KL weight reaches 1")->check(CLI::PositiveNumber);
    train->add_option("--loss", loss_variant, "Data term: squared or literal")->check(CLI::IsMember({"squared", "literal"}));
    train->add_option("--kl-target", kl_target, "KL target: full or misleading-removed")->check(CLI::IsMember({"full", "misleading-removed"}));
    train->add_option("--stride", stride, "Use every n-th frame")->check(CLI::PositiveNumber);
    train->add_flag("--ego-only", ego_only, "Only the ego's view of the light");
    train->add_option("--weather-noise", train_noise, "Weather noise of the features (default: each recording's)");

    // perceive
    auto* perceive = app.add_subcommand("perceive", "Attach observations (and clusters) to a recording");
    std::string per_rec, per_model, per_out;
    bool per_clusters = false;
    PerceptionFlags per_flags;
    ClusterFlags per_cluster;
    perceive->add_option("--recording", per_rec, "Input recording")->required()->check(CLI::ExistingFile);
    perceive->add_option("--model", per_model, "Light classifier (edl-v1)")->required()->check(CLI::ExistingFile);
    perceive->add_option("--out", per_out, "Output recording (rec-obs-v1, or rec-full-v1 with --clusters)")->required();
    perceive->add_flag("--clusters", per_clusters, "Also attach behavior clusters");
    per_flags.add(perceive);
    per_cluster.add(perceive);

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score baseline, logic and hybrid over a recording");
    std::string ev_rec, ev_mode = "fully-active", ev_task = "light", ev_rules, ev_model, ev_report;
    std::string ev_policy = "default";
    double ev_fraction = 1.0, ev_static = 0.5;
    bridge::ProtocolConfig protocol;
    PerceptionFlags ev_flags;
    ClusterFlags ev_cluster;
    evaluate->add_option("--recording", ev_rec, "Recording")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--mode", ev_mode, "Fusion mode")->check(CLI::IsMember({"fully-active", "uncertainty"}));
    evaluate->add_option("--task", ev_task, "Task")->check(CLI::IsMember({"light", "obstacle"}));
    evaluate->add_option("--rules", ev_rules, "Rules file (default: the shipped rulebase of the task)")->check(CLI::ExistingFile);
    evaluate->add_option("--model", ev_model, "Light classifier, needed unless the recording carries observations")->check(CLI::ExistingFile);
    evaluate->add_option("--report", ev_report, "Report path stem; writes .json, .csv and .md")->required();
    evaluate->add_option("--threshold-policy", ev_policy, "dynamic, running or static (default: dynamic for light, static for obstacle)")
        ->check(CLI::IsMember({"default", "dynamic", "running", "static"}));
    evaluate->add_option("--threshold-fraction", ev_fraction, "Fraction of the mean uncertainty for dynamic/running thresholds")
        ->check(CLI::PositiveNumber);
    evaluate->add_option("--static-threshold", ev_static, "Static epistemic threshold");
    evaluate->add_option("--grace", protocol.grace_period, "Seconds after green during which the light logic does not apply");
    ev_flags.add(evaluate);
    ev_cluster.add(evaluate);

    // explain
    auto* explain = app.add_subcommand("explain", "Print the logic derivation at one frame");
    std::string ex_rec, ex_task = "light", ex_rules, ex_model;
    int ex_frame = 0;
    PerceptionFlags ex_flags;
    ClusterFlags ex_cluster;
    bridge::ProtocolConfig ex_protocol;
    explain->add_option("--recording", ex_rec, "Recording")->required()->check(CLI::ExistingFile);
    explain->add_option("--frame", ex_frame, "Frame index")->required();
    explain->add_option("--task", ex_task, "Task")->check(CLI::IsMember({"light", "obstacle"}));
    explain->add_option("--rules", ex_rules, "Rules file (default: the shipped rulebase of the task)")->check(CLI::ExistingFile);
    explain->add_option("--model", ex_model, "Light classifier, needed unless the recording carries observations")->check(CLI::ExistingFile);
    explain->add_option("--grace", ex_protocol.grace_period, "Seconds after green during which the light logic does not apply");
    ex_flags.add(explain);
    ex_cluster.add(explain);

    // report
    auto* report = app.add_subcommand("report", "Render report-v1 files as one table");
    std::vector<std::string> rep_files;
    std::string rep_format = "markdown", rep_out;
    report->add_option("reports", rep_files, "report-v1 files")->required()->check(CLI::ExistingFile);
    report->add_option("--format", rep_format, "csv, markdown or structured")->check(CLI::IsMember({"csv", "markdown", "structured"}));
    report->add_option("--out", rep_out, "Output path (default: stdout)");

    // check-rules
    auto* check = app.add_subcommand("check-rules", "Parse and stratify rule files");
    std::vector<std::string> check_files;
    check->add_option("files", check_files, "Rule files")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*simulate) {
            const auto cfg = sim::load_config(sim_scenario);
            const auto rec = sim::run_scenario(cfg);
            sim::save_recording(sim_out, rec);
            std::printf("%zu frames\n", rec.frames.size());
            return 0;
        }

        if (*train) {
            const auto files = expand_glob(train_glob);
            if (files.empty()) throw Error("no recordings match '" + train_glob + "'");
            schedule.loss.variant = loss_variant == "literal" ? edl::LossVariant::Literal : edl::LossVariant::Squared;
            schedule.loss.kl_target = kl_target == "full" ? edl::KlTarget::Full : edl::KlTarget::MisleadingRemoved;
            std::vector<edl::Sample> data;
            for (const auto& f : files) {
                const auto rec = sim::load_recording(f);
                perception::PerceptionConfig pc;
                pc.weather_noise = train_noise ? *train_noise : rec.config.weather_noise;
                pc.seed = rec.config.seed;
                const auto part = perception::light_dataset(rec, pc, stride, ego_only);
                data.insert(data.end(), part.begin(), part.end());
            }
            const auto result = edl::train(data, schedule);
            edl::save_model(train_out, result.model);
            const auto loss = edl::edl_loss(data, result.model, static_cast<double>(schedule.epochs - 1) / schedule.anneal_denominator,
                                            schedule.loss);
            std::printf("%zu samples from %zu recordings\n", data.size(), files.size());
            std::printf("final loss %.6f = data %.6f + %.3f x kl %.6f (per sample)\n", loss.total / loss.n, loss.data_term / loss.n,
                        loss.lambda, loss.kl_term / loss.n);
            std::printf("train accuracy %.4f\n", edl::accuracy(result.model, data));
            return 0;
        }

        if (*perceive) {
            auto rec = sim::load_recording(per_rec);
            const auto model = edl::load_model(per_model);
            const auto pc = per_flags.config(rec);
            rec.extras.clear();
            eval::attach_observations(rec, eval::observations_of(rec, pc, &model));
            if (per_clusters) eval::attach_clusters(rec, eval::clusters_of(rec, per_cluster.cfg));
            sim::save_recording(per_out, rec);
            std::printf("%zu frames, %s\n", rec.frames.size(), sim::recording_version(rec).c_str());
            return 0;
        }

        if (*evaluate) {
            const auto rec = sim::load_recording(ev_rec);
            eval::EvalConfig ec;
            ec.task = arbiter::task_from(ev_task);
            ec.mode = ev_mode == "fully-active" ? arbiter::FusionMode::fully() : arbiter::FusionMode::uncertainty(ec.task);
            if (ev_policy == "dynamic") ec.mode.policy = arbiter::ThresholdPolicy::Dynamic;
            if (ev_policy == "running") ec.mode.policy = arbiter::ThresholdPolicy::Running;
            if (ev_policy == "static") ec.mode.policy = arbiter::ThresholdPolicy::Static;
            ec.mode.fraction = ev_fraction;
            ec.mode.static_threshold = ev_static;
            ec.protocol = protocol;
            ec.clustering = ev_cluster.cfg;
            std::vector<eval::Assertion> assertions;
            ec.perception = ev_flags.config(rec, &assertions);
            const auto model = load_optional_model(ev_model);
            if (!model && !has_observations(rec))
                throw FormatError(ev_mode == "uncertainty" ? "uncertainty mode needs --model: the recording carries no observations"
                                                           : "the recording carries no observations; pass --model");
            std::optional<bridge::Rulebase> storage;
            const auto& rules = rulebase_for(ec.task, ev_rules, storage);
            const auto r = eval::evaluate_recording(rec, ec, rules, model ? &*model : nullptr,
                                                    ev_flags.scenario.empty() ? std::string{} : fs::path(ev_flags.scenario).stem().string());

            write_text(ev_report + ".json", eval::render_report(r, eval::Format::Structured));
            write_text(ev_report + ".csv", eval::render_report(r, eval::Format::Csv));
            write_text(ev_report + ".md", eval::render_report(r, eval::Format::Markdown));

            std::printf("%s, %s task, %s\n", r.scenario.c_str(), ev_task.c_str(), ev_mode.c_str());
            print_metrics_row("baseline", r.baseline);
            print_metrics_row("logic (applicable)", r.logic);
            print_metrics_row("hybrid", r.hybrid);
            print_metrics_row("hybrid (applicable)", r.hybrid_applicable);
            std::printf("logic evaluated on %d of %d frames, applicable on %d\n", r.evaluated, r.frames, r.applicable);
            if (r.threshold) std::printf("threshold %.6f\n", *r.threshold);

            const auto failures = eval::check_assertions(r, assertions);
            for (const auto& f : failures) std::fprintf(stderr, "assertion failed: %s\n", f.c_str());
            return failures.empty() ? 0 : kExitAssertion;
        }

        if (*explain) {
            const auto rec = sim::load_recording(ex_rec);
            eval::EvalConfig ec;
            ec.task = arbiter::task_from(ex_task);
            ec.protocol = ex_protocol;
            ec.clustering = ex_cluster.cfg;
            ec.perception = ex_flags.config(rec);
            const auto model = load_optional_model(ex_model);
            if (!model && !has_observations(rec)) throw FormatError("the recording carries no observations; pass --model");
            std::optional<bridge::Rulebase> storage;
            const auto& rules = rulebase_for(ec.task, ex_rules, storage);
            int pos = -1;
            for (std::size_t k = 0; k < rec.frames.size(); ++k)
                if (rec.frames[k].index == ex_frame) pos = static_cast<int>(k);
            if (pos < 0) throw UnknownIdError("frame " + std::to_string(ex_frame) + " is not in the recording");
            const auto fb = eval::frame_facts(rec, pos, ec, model ? &*model : nullptr);

            std::optional<rules::DerivationTree> tree;
            bool applicable = false;
            if (ec.task == arbiter::Task::Light) {
                auto v = bridge::logic_light_verdict(fb, rules, ec.protocol);
                tree = std::move(v.derivation);
                applicable = v.applicable;
            } else {
                auto v = bridge::logic_obstacle_verdict(fb, rules);
                tree = std::move(v.derivation);
                applicable = v.applicable;
            }
            if (!tree) throw Error("no logic derivation at frame " + std::to_string(ex_frame));
            std::printf("frame %d, logic %s\n%s", ex_frame, applicable ? "applicable" : "not applicable", rules::render(*tree).c_str());
            std::printf("rests on:\n");
            for (const auto& leaf : tree->leaves()) std::printf("  %s\n", rules::to_string(leaf).c_str());
            return 0;
        }

        if (*report) {
            std::vector<eval::Report> rs;
            for (const auto& f : rep_files) {
                std::ifstream in(f);
                nlohmann::json j;
                try {
                    j = nlohmann::json::parse(in);
                } catch (const nlohmann::json::parse_error& e) {
                    throw FormatError(f + ": " + e.what());
                }
                rs.push_back(eval::report_from_json(j));
            }
            const auto text = eval::render_reports(rs, eval::format_from(rep_format));
            if (rep_out.empty()) std::fputs(text.c_str(), stdout);
            else write_text(rep_out, text);
            return 0;
        }

        if (*check) {
            for (const auto& f : check_files) {
                const auto rb = bridge::load_rulebase_file(f);
                std::printf("%s: %zu rules, %zu facts, %zu strata\n", f.c_str(), rb.program.program.rules.size(),
                            rb.program.program.facts.size(), rb.program.strata.size());
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return 1;
}
