#pragma once

#include <optional>

#include "csav/sim/frame.hpp"
#include "csav/sim/road_map.hpp"

namespace csav::sim {

inline constexpr double kApproachZone = 30.0;     // m before the stop line where a light applies
inline constexpr double kQueueLinkGap = 8.0;      // m bumper gap that still chains a stopped queue
inline constexpr double kObstacleLookahead = 50.0; // m

// The approach a vehicle is on and how far its centre is from the stop line.
struct Approach {
    int intersection = 0;
    Direction dir = Direction::East;
    double line_distance = 0.0;
    bool signalized = false;
};

// Approach of the vehicle's current link; none while it is inside a junction box.
std::optional<Approach> approach_of(const RoadMap& map, const Frame& frame, const VehicleState& v);

// Light that governs the vehicle: its approach's light when the vehicle is in the
// approach zone, or stopped in a queue whose head is in the zone.
std::optional<Approach> governing_light(const RoadMap& map, const Frame& frame, int vehicle_id);

// True iff the governing light is red or yellow. Throws UnknownIdError.
bool ground_truth_light_for(const RoadMap& map, const Frame& frame, int vehicle_id);

// Id of the nearest active obstacle in the ego's lane within the lookahead.
std::optional<int> ground_truth_obstacle_ahead(const RoadMap& map, const Frame& frame);

} // namespace csav::sim
