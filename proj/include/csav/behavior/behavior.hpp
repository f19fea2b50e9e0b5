#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "csav/geometry.hpp"
#include "csav/sim/world.hpp"

namespace csav::behavior {

enum class Category { LaneFollow, ChangeLaneLeft, ChangeLaneRight, Straight, TurnLeft, TurnRight };

std::string_view to_string(Category c);
Category category_from(std::string_view s);

inline constexpr double kTurnThreshold = 60.0;       // degrees of heading change through a junction
inline constexpr double kLateralSpeedOnset = 0.2;    // m/s
inline constexpr double kLaneChangeFraction = 0.8;   // of a lane width

struct TrackPoint {
    int frame = 0;
    double time = 0.0;
    Vec2 position;
    double heading = 0.0;
    int lane_id = 0;
};

struct BehaviorEvent {
    int vehicle = 0;
    Category category = Category::LaneFollow;
    int start_frame = 0, end_frame = 0;
    double start_time = 0.0, end_time = 0.0;
    Vec2 start_location;
    double start_heading = 0.0;
};

// Splits a track into maximal events covering every frame exactly once.
// Throws Error for tracks shorter than two frames.
std::vector<BehaviorEvent> label_behavior(int vehicle, const std::vector<TrackPoint>& track,
                                          const std::vector<Box>& intersections, double lane_width);

// Track of one vehicle through a recording.
std::vector<TrackPoint> track_of(const sim::Recording& rec, int vehicle);

inline constexpr int kNoise = -1;

// Density clustering; a point's neighbourhood includes itself. Cluster ids are
// numbered in order of each cluster's lowest-index core point; a border point
// joins the lowest-numbered cluster among its core neighbours.
std::vector<int> dbscan(const std::vector<Vec2>& points, double eps, int min_size);

struct ClusteringConfig {
    double window = 20.0; // s
    double eps = 2.7;     // m
    int min_size = 2;
};

struct EventRef {
    int vehicle = 0;
    int start_frame = 0;
};

struct BehaviorCluster {
    Category category = Category::LaneFollow;
    std::vector<int> members; // vehicle ids, ascending
    std::vector<EventRef> events; // member events, not serialized
    int frame_start = 0, frame_end = 0;
    Box box; // of member start locations
    bool ego_member = false;
    double heading = 0.0; // circular mean of member start headings
};

// Events are clipped to `now_frame`; those starting within the window are
// clustered per category on their start locations.
std::vector<BehaviorCluster> cluster_behaviors(const std::vector<BehaviorEvent>& events, int now_frame, double now_time,
                                               const ClusteringConfig& cfg, int ego_id);

// Clusters whose category differs from the dominant category of the members'
// preceding events (a vehicle's first event counts as LaneFollow before it).
std::vector<BehaviorCluster> detect_action_changes(const std::vector<BehaviorCluster>& clusters,
                                                   const std::vector<BehaviorEvent>& events);

// Keeps the first of clusters sharing (category, member set).
std::vector<BehaviorCluster> deduplicate(const std::vector<BehaviorCluster>& clusters);

// Labels every track and returns, per frame, the action-change clusters among
// events that started within `view_radius` (box half-size) of the ego.
std::vector<std::vector<BehaviorCluster>> clusters_by_frame(const sim::Recording& rec, const ClusteringConfig& cfg,
                                                            double view_radius = 50.0);
std::vector<BehaviorEvent> label_recording(const sim::Recording& rec);

nlohmann::ordered_json to_json(const BehaviorCluster& c);
BehaviorCluster cluster_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const std::vector<BehaviorCluster>& cs);
std::vector<BehaviorCluster> clusters_from_json(const nlohmann::json& j);

} // namespace csav::behavior
