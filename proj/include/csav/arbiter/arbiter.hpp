#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "csav/rules/rules.hpp"

namespace csav::arbiter {

enum class Task { Light, Obstacle };
std::string_view to_string(Task t);
Task task_from(std::string_view s);

enum class UncertaintyKind { Aleatoric, Epistemic };
enum class ThresholdPolicy { Dynamic, Running, Static };

struct FusionMode {
    bool fully_active = true;
    UncertaintyKind kind = UncertaintyKind::Aleatoric;
    ThresholdPolicy policy = ThresholdPolicy::Dynamic;
    double fraction = 1.0;         // of the mean uncertainty, for Dynamic / Running
    double static_threshold = 0.5; // for Static

    static FusionMode fully();
    // Aleatoric with a dynamic threshold for lights, epistemic with a static one for obstacles.
    static FusionMode uncertainty(Task task);
};

// Logic output for one frame.
struct LogicOutcome {
    bool applicable = false;
    bool label = false; // red / obstacle
    std::optional<rules::DerivationTree> derivation;
};

struct FrameDecision {
    int frame = 0;
    Task task = Task::Light;
    bool baseline = false;
    std::optional<LogicOutcome> logic; // set iff the logic was evaluated
    bool final_label = false;
    bool invoked = false; // logic evaluated and applicable
    double uncertainty = 0.0;
    std::string explanation; // rendered derivation, or "baseline"

    bool evaluated() const { return logic.has_value(); }
};

// Called when an applicable logic label disagrees with the baseline; the
// decision itself always favours the logic.
using DiscrepancyHook = std::function<void(const FrameDecision&)>;

// fraction x mean; throws Error on an empty sequence or fraction <= 0.
double dynamic_threshold(const std::vector<double>& uncertainties, double fraction = 1.0);

FrameDecision fuse_fully_active(int frame, Task task, bool baseline, const LogicOutcome& logic,
                                const DiscrepancyHook& hook = {});

// The logic runs only when uncertainty > threshold.
FrameDecision fuse_uncertainty_invoked(int frame, Task task, bool baseline, double uncertainty, double threshold,
                                       const std::function<LogicOutcome()>& logic, const DiscrepancyHook& hook = {});

} // namespace csav::arbiter
