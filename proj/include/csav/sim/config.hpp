#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace csav::sim {

enum class ObstacleKind { StoppedVehicle, Animal };

std::string_view to_string(ObstacleKind k);
ObstacleKind obstacle_kind_from(std::string_view s);

struct ObstacleSpec {
    ObstacleKind kind = ObstacleKind::StoppedVehicle;
    int lane_id = 0;
    double position = 0.0; // metres along the lane from its start
    double spawn_s = 0.0;
    double despawn_s = std::numeric_limits<double>::infinity();

    bool active_at(double t) const { return t >= spawn_s && t < despawn_s; }
};

// Grid town: (blocks_x + 1) x (blocks_y + 1) junctions spaced block_length apart,
// two-way roads with lanes_per_direction lanes each way.
struct MapDescriptor {
    int blocks_x = 1;
    int blocks_y = 1;
    double block_length = 150.0;
    int lanes_per_direction = 1;
    double lane_width = 3.5;
};

// Timings for the north-south axis; the east-west axis is derived so that
// both axes are never green together (see LightController).
struct LightTimings {
    double green_s = 25.0;
    double yellow_s = 3.0;
    double red_s = 31.0;
    double all_red_s = 3.0;
};

enum class TurnPolicy { Random, Straight };

struct EgoStart {
    int lane_id = 0;
    double position = 0.0;
};

struct WorldConfig {
    std::string archetype = "custom";
    std::uint64_t seed = 1;
    double tick_rate = 10.0;
    double duration = 60.0;
    MapDescriptor map;
    int npc_count = 0;
    LightTimings light_timings;
    std::map<int, LightTimings> light_overrides; // keyed by intersection id
    std::vector<ObstacleSpec> obstacles;
    double weather_noise = 0.0;

    double max_speed = 12.0;
    double max_accel = 4.0;
    // Probability that an NPC ignores a red light it meets; the ego never does.
    double violation_rate = 0.0;
    double turn_probability = 0.2; // per side, at junctions where that turn exists
    std::optional<EgoStart> ego_start;
    TurnPolicy ego_turns = TurnPolicy::Random;
    std::vector<int> spawn_links; // empty = whole network

    int frame_count() const;
};

// Throws ConfigError naming the offending field.
void validate(const WorldConfig& cfg);

nlohmann::ordered_json to_json(const WorldConfig& cfg);
WorldConfig config_from_json(const nlohmann::json& j);

// Parses a scenario file. Syntax errors carry line/column.
WorldConfig load_config(const std::filesystem::path& path);
WorldConfig parse_config(std::string_view text);

} // namespace csav::sim
