#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "csav/geometry.hpp"
#include "csav/sim/config.hpp"
#include "csav/sim/road_map.hpp"

namespace csav::sim {

inline constexpr double kVehicleLength = 4.5;
inline constexpr double kVehicleWidth = 1.8;
inline constexpr double kStoppedSpeed = 0.1; // m/s; below this a vehicle counts as stopped

enum class LightColor { Green, Yellow, Red };

std::string_view to_string(LightColor c);
LightColor light_color_from(std::string_view s);

struct VehicleState {
    int id = 0;
    Vec2 position;
    double heading = 0.0;
    Vec2 velocity;
    int lane_id = 0; // target lane while crossing a junction
    Box box;

    double speed() const { return norm(velocity); }
    bool stopped() const { return speed() < kStoppedSpeed; }
};

struct LightState {
    int intersection = 0;
    Direction approach = Direction::East; // travel direction of the vehicles it governs
    LightColor color = LightColor::Green;
};

struct ObstacleState {
    int id = 0;
    ObstacleKind kind = ObstacleKind::StoppedVehicle;
    int lane_id = 0;
    Box box;
};

struct Frame {
    int index = 0;
    double time = 0.0;
    std::vector<VehicleState> vehicles;
    std::vector<LightState> lights;
    std::vector<Box> intersections; // indexed by junction id
    std::vector<ObstacleState> obstacles;
    int ego_id = 0;

    const VehicleState* find(int id) const;
    const VehicleState& ego() const;
    std::optional<LightColor> light(int intersection, Direction approach) const;
};

nlohmann::ordered_json to_json(const Frame& f);
Frame frame_from_json(const nlohmann::json& j);

} // namespace csav::sim
