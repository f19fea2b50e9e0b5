#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "csav/arbiter/arbiter.hpp"
#include "csav/behavior/behavior.hpp"
#include "csav/bridge/bridge.hpp"
#include "csav/edl/model.hpp"
#include "csav/perception/perception.hpp"
#include "csav/sim/world.hpp"

namespace csav::eval {

inline constexpr const char* kReportVersion = "report-v1";

struct Confusion {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    long total() const { return tp + fp + tn + fn; }
};

// Positive = red-impacting light / obstacle present. Throws DimensionError on a length mismatch.
Confusion confusion(const std::vector<bool>& predictions, const std::vector<bool>& truths);

// Undefined precision / recall / F1 stay empty ("N/A").
struct Metrics {
    double accuracy = 0.0; // 0 for an empty confusion
    std::optional<double> precision, recall, f_score;
};

Metrics metrics(const Confusion& c);

struct Scored {
    Confusion confusion;
    Metrics metrics;
};

struct EvalConfig {
    arbiter::Task task = arbiter::Task::Light;
    arbiter::FusionMode mode;
    bridge::ProtocolConfig protocol;
    behavior::ClusteringConfig clustering;
    perception::PerceptionConfig perception; // used when the recording has no observations
};

struct Report {
    std::string scenario;
    arbiter::Task task = arbiter::Task::Light;
    arbiter::FusionMode mode;
    std::optional<double> threshold; // uncertainty mode with a fixed threshold
    std::vector<arbiter::FrameDecision> decisions;
    std::vector<bool> truth;
    Scored baseline;          // all frames
    Scored logic;             // logic-applicable frames
    Scored hybrid;            // all frames
    Scored hybrid_applicable; // logic-applicable frames
    int frames = 0;
    int evaluated = 0;  // frames where the logic ran
    int applicable = 0; // frames where its label was used
};

// Per-frame observations, computed with `model` when not stored in the recording.
std::vector<perception::Observation> observations_of(const sim::Recording& rec, const perception::PerceptionConfig& cfg,
                                                     const edl::EvidentialModel* model);
// Adds "obs" (and "clusters" when `clusters` is set) to every frame's extras.
void attach_observations(sim::Recording& rec, const std::vector<perception::Observation>& obs);
void attach_clusters(sim::Recording& rec, const std::vector<std::vector<behavior::BehaviorCluster>>& clusters);
std::vector<std::vector<behavior::BehaviorCluster>> clusters_of(const sim::Recording& rec, const behavior::ClusteringConfig& cfg);

// Frame contexts for the fact bases: current behaviors and the grace-period clock.
std::vector<bridge::FrameContext> frame_contexts(const sim::Recording& rec);
// Ground truth for the task per frame.
std::vector<bool> ground_truth(const sim::Recording& rec, arbiter::Task task);

// Throws FormatError when observations are missing and no model is given.
Report evaluate_recording(const sim::Recording& rec, const EvalConfig& cfg, const bridge::Rulebase& rules,
                          const edl::EvidentialModel* model = nullptr, std::string scenario = {});

// Fact base of one frame, as evaluate_recording builds it.
bridge::FactBase frame_facts(const sim::Recording& rec, int frame, const EvalConfig& cfg, const edl::EvidentialModel* model);

enum class Format { Csv, Markdown, Structured };
Format format_from(std::string_view s); // csv, markdown, structured; throws ConfigError

std::string format_metric(std::optional<double> v, int decimals = -1); // -1: shortest round-trip
std::string render_report(const Report& r, Format f);
std::string render_reports(const std::vector<Report>& rs, Format f);

nlohmann::ordered_json to_json(const Report& r);
// Restores metrics, counts and per-frame labels; derivations come back as text only.
Report report_from_json(const nlohmann::json& j);

// Scenario-manifest check, e.g. {"task": "obstacle", "metric": "hybrid_applicable.recall", "op": ">=", "value": 1}.
// metric is <baseline|logic|hybrid|hybrid_applicable>.<accuracy|precision|recall|f_score> or
// evaluated_fraction; a null value stands for N/A. task and mode ("fully-active", "uncertainty") are optional filters.
struct Assertion {
    std::optional<arbiter::Task> task;
    std::optional<bool> fully_active;
    std::string metric;
    std::string op;
    std::optional<double> value;
};

// Reads the "assertions" array of a scenario file (absent = none). Throws ConfigError.
std::vector<Assertion> assertions_from_json(const nlohmann::json& scenario);
// One message per failed assertion that applies to the report.
std::vector<std::string> check_assertions(const Report& r, const std::vector<Assertion>& as);

// A scenario file: the world plus an optional "perception" block and assertions.
struct Scenario {
    std::string name; // file stem
    sim::WorldConfig world;
    perception::PerceptionConfig perception; // weather and seed follow the world unless the block sets them
    std::vector<Assertion> assertions;
};

// Throws ConfigError; syntax errors carry line/column.
Scenario load_scenario(const std::filesystem::path& path);
Scenario scenario_from_json(const nlohmann::json& j, std::string name);

} // namespace csav::eval
