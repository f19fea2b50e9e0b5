#pragma once

#include <random>
#include <unordered_map>
#include <vector>

#include "csav/sim/config.hpp"
#include "csav/sim/frame.hpp"
#include "csav/sim/road_map.hpp"

namespace csav::sim {

// What the driving policy is doing, exposed for checking trajectory labels.
enum class Maneuver { LaneFollow, ChangeLaneLeft, ChangeLaneRight, Straight, TurnLeft, TurnRight };

// Fixed-time two-phase controller per signalized junction. The north-south
// axis runs green/yellow/red with the configured durations; east-west gets
// its green inside the north-south red, separated by all-red clearance.
class LightController {
public:
    LightController() = default;
    LightController(const RoadMap& map, const WorldConfig& cfg, std::mt19937_64& rng);

    LightColor color(int node, Direction approach, double t) const;
    std::vector<LightState> states(double t) const;

private:
    struct Program {
        int node = 0;
        LightTimings timings;
        double offset = 0.0;
        std::vector<Direction> approaches;
    };
    std::vector<Program> programs_;
    std::unordered_map<int, std::size_t> by_node_;
};

namespace policy {
inline constexpr double kTimeGap = 1.5;        // s
inline constexpr double kStandstillGap = 2.0;  // m
inline constexpr double kStopLineGap = 0.5;    // m between bumper and line
inline constexpr double kComfortDecel = 2.5;   // m/s^2
inline constexpr double kLaneChangeTrigger = 30.0; // m to an in-lane obstacle
inline constexpr double kLaneChangeDuration = 3.0; // s
inline constexpr double kSlotLength = kVehicleLength + kStandstillGap;
} // namespace policy

class World {
public:
    // Validates the config, builds the road graph and places vehicles.
    // Throws ConfigError / CapacityError.
    explicit World(WorldConfig cfg);

    const Frame& frame() const { return frame_; }
    const RoadMap& map() const { return map_; }
    const WorldConfig& config() const { return cfg_; }
    Maneuver maneuver(int vehicle_id) const;

    // Advances every vehicle by one tick and returns the new frame.
    const Frame& step();

private:
    struct Agent {
        int id = 0;
        bool ego = false;
        int link = 0;
        int lane = 0;
        double s = 0.0;
        bool in_connector = false;
        Connector conn;
        Turn next_turn = Turn::Straight;
        double v = 0.0;

        bool changing = false;
        int lc_from = 0, lc_to = 0;
        double lc_t = 0.0;
        bool lc_switched = false;
        double lateral = 0.0;
        double lat_v = 0.0;

        enum class Plan { None, Stop, Go } plan = Plan::None;
    };

    struct Occupant {
        double s;
        double half_length;
        double v;
        int agent; // -1 for obstacles
    };

    using Occupancy = std::unordered_map<int, std::vector<Occupant>>;

    Turn choose_turn(const Agent& a);
    Occupancy occupancy(double t) const;
    double target_speed(Agent& a, const Occupancy& occ, double t);
    bool wants_line_stop(Agent& a, const Occupancy& occ, double t);
    void maybe_start_lane_change(Agent& a, const Occupancy& occ, double t);
    Pose pose_of(const Agent& a) const;
    Frame make_frame(int index, double t) const;

    WorldConfig cfg_;
    RoadMap map_;
    std::mt19937_64 rng_;
    LightController lights_;
    std::vector<Agent> agents_;
    Frame frame_;
    int index_ = 0;
};

World build_world(const WorldConfig& cfg);
Frame step(World& world);

struct Recording {
    WorldConfig config;
    std::vector<Frame> frames;
    // Per-frame objects merged into each frame line ("obs", "clusters"); empty when absent.
    std::vector<nlohmann::ordered_json> extras;
};

// duration x tick_rate frames; frame 0 is the initial state.
Recording run_scenario(const WorldConfig& cfg);

} // namespace csav::sim
