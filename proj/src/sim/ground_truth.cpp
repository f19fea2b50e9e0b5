#include "csav/sim/ground_truth.hpp"

#include <limits>
#include <string>

#include "csav/error.hpp"

namespace csav::sim {

std::optional<Approach> approach_of(const RoadMap& map, const Frame& frame, const VehicleState& v) {
    (void)frame;
    if (map.node_at(v.position)) return std::nullopt;
    if (v.lane_id < 0 || v.lane_id >= static_cast<int>(map.lanes().size())) return std::nullopt;
    const Lane& lane = map.lane(v.lane_id);
    const Link& link = map.link(lane.link);
    const LaneCoord c = map.project(lane.id, v.position);
    Approach a;
    a.intersection = link.to_node;
    a.dir = link.dir;
    a.line_distance = lane.length - c.s;
    a.signalized = map.node(link.to_node).signalized;
    return a;
}

std::optional<Approach> governing_light(const RoadMap& map, const Frame& frame, int vehicle_id) {
    const VehicleState* v = frame.find(vehicle_id);
    if (!v) throw UnknownIdError("unknown vehicle id " + std::to_string(vehicle_id));
    const auto a = approach_of(map, frame, *v);
    if (!a || !a->signalized) return std::nullopt;
    if (a->line_distance <= kApproachZone) return a;
    if (!v->stopped()) return std::nullopt;

    // Walk forward through the stopped queue on the same lane.
    const int lane = v->lane_id;
    double s = map.project(lane, v->position).s;
    for (;;) {
        const VehicleState* next = nullptr;
        double next_s = std::numeric_limits<double>::infinity();
        for (const auto& o : frame.vehicles) {
            if (o.id == v->id || o.lane_id != lane || map.node_at(o.position)) continue;
            const double so = map.project(lane, o.position).s;
            if (so > s && so < next_s) {
                next_s = so;
                next = &o;
            }
        }
        if (!next || !next->stopped() || next_s - s - kVehicleLength > kQueueLinkGap) return std::nullopt;
        if (map.lane(lane).length - next_s <= kApproachZone) return a;
        s = next_s;
    }
}

bool ground_truth_light_for(const RoadMap& map, const Frame& frame, int vehicle_id) {
    const auto a = governing_light(map, frame, vehicle_id);
    if (!a) return false;
    const auto c = frame.light(a->intersection, a->dir);
    return c && *c != LightColor::Green;
}

std::optional<int> ground_truth_obstacle_ahead(const RoadMap& map, const Frame& frame) {
    const VehicleState& ego = frame.ego();
    const double s_ego = map.project(ego.lane_id, ego.position).s;
    std::optional<int> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& o : frame.obstacles) {
        if (o.lane_id != ego.lane_id) continue;
        const double d = map.project(o.lane_id, o.box.center()).s - s_ego;
        if (d > 0.0 && d <= kObstacleLookahead && d < best_d) {
            best_d = d;
            best = o.id;
        }
    }
    return best;
}

} // namespace csav::sim
