#include "csav/arbiter/arbiter.hpp"

#include <numeric>
#include <string>

#include "csav/error.hpp"

namespace csav::arbiter {

std::string_view to_string(Task t) { return t == Task::Light ? "light" : "obstacle"; }

Task task_from(std::string_view s) {
    if (s == "light") return Task::Light;
    if (s == "obstacle") return Task::Obstacle;
    throw ConfigError("unknown task '" + std::string(s) + "'");
}

FusionMode FusionMode::fully() { return {}; }

FusionMode FusionMode::uncertainty(Task task) {
    FusionMode m;
    m.fully_active = false;
    if (task == Task::Obstacle) {
        m.kind = UncertaintyKind::Epistemic;
        m.policy = ThresholdPolicy::Static;
    }
    return m;
}

double dynamic_threshold(const std::vector<double>& uncertainties, double fraction) {
    if (uncertainties.empty()) throw Error("dynamic threshold of an empty uncertainty sequence");
    if (!(fraction > 0.0)) throw ConfigError("threshold fraction must be positive");
    const double mean = std::accumulate(uncertainties.begin(), uncertainties.end(), 0.0) / static_cast<double>(uncertainties.size());
    return fraction * mean;
}

namespace {

void apply(FrameDecision& d, const LogicOutcome& logic, const DiscrepancyHook& hook) {
    d.logic = logic;
    d.invoked = logic.applicable;
    if (!logic.applicable) return;
    d.final_label = logic.label;
    d.explanation = logic.derivation ? rules::render(*logic.derivation) : "logic: no rule fired";
    if (hook && logic.label != d.baseline) hook(d);
}

} // namespace

FrameDecision fuse_fully_active(int frame, Task task, bool baseline, const LogicOutcome& logic, const DiscrepancyHook& hook) {
    FrameDecision d;
    d.frame = frame;
    d.task = task;
    d.baseline = baseline;
    d.final_label = baseline;
    d.explanation = "baseline";
    apply(d, logic, hook);
    return d;
}

FrameDecision fuse_uncertainty_invoked(int frame, Task task, bool baseline, double uncertainty, double threshold,
                                       const std::function<LogicOutcome()>& logic, const DiscrepancyHook& hook) {
    FrameDecision d;
    d.frame = frame;
    d.task = task;
    d.baseline = baseline;
    d.final_label = baseline;
    d.uncertainty = uncertainty;
    d.explanation = "baseline";
    if (uncertainty > threshold) apply(d, logic(), hook);
    return d;
}

} // namespace csav::arbiter
