#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include <json.hpp>

#include "csav/edl/dirichlet.hpp"
#include "csav/edl/model.hpp"
#include "csav/geometry.hpp"
#include "csav/sim/frame.hpp"
#include "csav/sim/road_map.hpp"
#include "csav/sim/world.hpp"

namespace csav::perception {

inline constexpr int kLightFeatures = 4; // red, yellow, green intensity; distance to the line
inline constexpr int kRedImpacting = 0;  // class index of the light classifier
inline constexpr int kBevClasses = 4;    // vehicle, drivable, lane marking, other

struct PerceptionConfig {
    double weather_noise = 0.0;
    double detection_range = 40.0;
    double false_negative_rate = 0.0;
    std::set<sim::ObstacleKind> ood_classes{sim::ObstacleKind::Animal};
    double bev_cell = 1.0;
    double bev_extent = 100.0;
    double corridor_length = 45.0; // ego-lane stretch summarised as obstacle uncertainty
    std::uint64_t seed = 1;
};

// Throws ConfigError on rates outside [0, 1] or non-positive sizes.
void validate(const PerceptionConfig& cfg);
nlohmann::ordered_json to_json(const PerceptionConfig& cfg);
// Reads the keys present in j over `base`.
PerceptionConfig perception_config_from_json(const nlohmann::json& j, PerceptionConfig base);

// Generator for everything sensed in one frame, independent of other frames.
std::mt19937_64 frame_rng(std::uint64_t seed, int frame_index, int stream = 0);

// Light-signal channels of the light governing `vehicle_id`, dimmed by weather
// and perturbed by Gaussian noise; a null signal when no light governs it.
std::vector<double> extract_light_features(const sim::RoadMap& map, const sim::Frame& frame, int vehicle_id,
                                           const PerceptionConfig& cfg, std::mt19937_64& rng);

// Visible iff the segment between the centres touches no other vehicle's box.
// Throws UnknownIdError for an unknown observer.
bool occlusion_check(const sim::Frame& frame, int observer_id, const Box& target);

struct BevGrid {
    int size = 0;     // cells per side
    double cell = 1.0;
    Vec2 origin;      // ego position
    double heading = 0.0;
    std::vector<std::array<double, kBevClasses>> alpha; // row-major, row = forward index, col = left index

    // Ego-frame centre (forward, left) of cell (row, col).
    Vec2 local_center(int row, int col) const;
    Vec2 world_center(int row, int col) const;
    edl::DirichletPrediction at(int row, int col) const;
    double epistemic(int row, int col) const;
};

sim::SurfaceClass dominant_class(const sim::RoadMap& map, const sim::Frame& frame, Vec2 p);
BevGrid bev_rasterize(const sim::RoadMap& map, const sim::Frame& frame, const PerceptionConfig& cfg, std::mt19937_64& rng);

struct DetectedVehicle {
    int id = 0;
    Vec2 position;
    double heading = 0.0;
    Vec2 velocity;
    Box box;
};

struct DetectedObstacle {
    int id = 0;
    sim::ObstacleKind kind = sim::ObstacleKind::StoppedVehicle;
    Box box;
};

struct UncertainCell {
    int row = 0, col = 0;
    double epistemic = 0.0;
};

struct Observation {
    int frame = 0;
    double time = 0.0;
    int ego_id = 0;
    Vec2 ego_position;
    double ego_heading = 0.0;
    Vec2 ego_velocity;
    int ego_lane = 0;
    std::vector<DetectedVehicle> vehicles; // excludes the ego
    std::vector<DetectedObstacle> obstacles;
    bool light_in_view = false;
    edl::DirichletPrediction light; // uniform when no light is in view
    bool light_flipped = false;
    BevGrid bev; // not serialized cell by cell
    int bev_size = 0;
    double bev_cell = 1.0;
    double bev_mean_epistemic = 0.0;
    double corridor_epistemic = 0.0; // max over ego-lane cells ahead
    std::vector<UncertainCell> uncertain_cells;

    bool light_says_red() const { return light.p(kRedImpacting) > 0.5; }
    edl::Uncertainty light_uncertainty() const { return edl::uncertainties(light); }
};

Observation sense_frame(const sim::RoadMap& map, const sim::Frame& frame, const PerceptionConfig& cfg,
                        const edl::EvidentialModel& model);

// Max epistemic uncertainty over the ego lane from the ego to corridor_length ahead.
double corridor_epistemic(const sim::RoadMap& map, const BevGrid& bev, int ego_lane, const PerceptionConfig& cfg);

nlohmann::ordered_json to_json(const Observation& o);
Observation observation_from_json(const nlohmann::json& j);

// Light-classifier samples from every `stride`-th frame, one per vehicle with a
// light in view (or only the ego when ego_only), labelled with the ground truth.
std::vector<edl::Sample> light_dataset(const sim::Recording& rec, const PerceptionConfig& cfg, int stride = 1,
                                       bool ego_only = false);

} // namespace csav::perception
