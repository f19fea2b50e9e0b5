#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csav/behavior/behavior.hpp"
#include "csav/perception/perception.hpp"
#include "csav/rules/rules.hpp"
#include "csav/sim/road_map.hpp"

namespace csav::bridge {

inline constexpr double kNearbyIntersection = 30.0;       // m to the stop line
inline constexpr double kClusterIntersectionRadius = 20.0; // m from a junction box
inline constexpr double kObstacleLookahead = 50.0;         // m
inline constexpr double kAlignedHeading = 15.0;           // deg, vehicle ahead vs ego lane
inline constexpr double kCrossingBand = 30.0;             // deg around perpendicular
inline constexpr double kCodirectional = 30.0;            // deg
inline constexpr double kJunctionMargin = 3.0;            // m around a box for straight clusters
inline constexpr double kPathAhead = 15.0;                // m, cluster start ahead of the ego
inline constexpr double kPathBehind = 20.0;               // m, cluster start behind the ego
inline constexpr double kRegionReach = 35.0;              // m swept ahead of a lane-change cluster
inline constexpr int kClusterLive = 30;                   // frames a cluster counts after its last event ends

struct ProtocolConfig {
    double grace_period = 2.0; // s after the governing light turns green
};

// Per-frame inputs besides the observation.
struct FrameContext {
    std::map<int, behavior::Category> actions; // current behavior per vehicle id
    std::optional<double> green_elapsed;       // s since the ego's light turned green, while green
};

struct FactBase {
    int frame = 0;
    std::vector<rules::Atom> facts;
};

std::string action_symbol(behavior::Category c); // change_lane_left, ...

// Throws Error when the observation belongs to another frame.
FactBase facts_from_frame(const perception::Observation& obs, const std::vector<behavior::BehaviorCluster>& clusters,
                          int frame_index, const sim::RoadMap& map, const FrameContext& ctx = {});

struct Rulebase {
    std::string name;
    rules::StratifiedProgram program;
};

// Parses and stratifies; throws FormatError / UnstratifiableError.
Rulebase load_rulebase(const std::string& name, const std::string& text);
Rulebase load_rulebase_file(const std::string& path);
const std::string& traffic_light_rules_text();
const std::string& obstacle_rules_text();
const Rulebase& traffic_light_rules();
const Rulebase& obstacle_rules();

struct LightVerdict {
    int frame = 0;
    bool applicable = false;
    bool red = false;
    std::optional<rules::DerivationTree> derivation; // red_traffic_light or consistent_intersection
};

struct ObstacleVerdict {
    int frame = 0;
    bool applicable = false;
    bool obstacle = false;
    std::optional<Box> location; // inferred region of an undetected obstacle
    std::optional<rules::DerivationTree> derivation;
};

// Nearby signalized approach, a live cluster at that junction, and outside the grace period.
bool logic_applicable(const FactBase& fb, const ProtocolConfig& protocol);
// A lane-change cluster in the ego's path is active.
bool obstacle_logic_applicable(const FactBase& fb);

LightVerdict logic_light_verdict(const FactBase& fb, const Rulebase& rules, const ProtocolConfig& protocol = {});
ObstacleVerdict logic_obstacle_verdict(const FactBase& fb, const Rulebase& rules);

} // namespace csav::bridge
