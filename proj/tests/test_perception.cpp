#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "csav/error.hpp"
#include "csav/perception/perception.hpp"
#include "csav/sim/ground_truth.hpp"
#include "csav/sim/recording.hpp"

using namespace csav;
using namespace csav::sim;
using namespace csav::perception;

namespace {

VehicleState at_lane(const RoadMap& m, int id, int lane, double s, double speed = 0.0) {
    const Pose p = m.lane_pose(lane, s);
    VehicleState v;
    v.id = id;
    v.position = p.position;
    v.heading = p.heading;
    v.velocity = unit(p.heading) * speed;
    v.lane_id = lane;
    v.box = oriented_bounds(p.position, p.heading, kVehicleLength, kVehicleWidth);
    return v;
}

ObstacleState obstacle_at(const RoadMap& m, int id, ObstacleKind kind, int lane, double s) {
    const Pose p = m.lane_pose(lane, s);
    const bool animal = kind == ObstacleKind::Animal;
    return {id, kind, lane, oriented_bounds(p.position, p.heading, animal ? 1.5 : 4.5, animal ? 0.8 : 1.8)};
}

Frame scene(const RoadMap& m) {
    Frame f;
    for (const auto& n : m.nodes()) f.intersections.push_back(n.box);
    return f;
}

VehicleState box_vehicle(int id, Box b) {
    VehicleState v;
    v.id = id;
    v.position = b.center();
    v.box = b;
    return v;
}

Recording light_recording(std::uint64_t seed, double duration = 90.0) {
    WorldConfig c;
    c.seed = seed;
    c.map.blocks_x = 2;
    c.map.blocks_y = 2;
    c.npc_count = 40;
    c.duration = duration;
    return run_scenario(c);
}

edl::EvidentialModel train_at(double noise, std::uint64_t seed) {
    PerceptionConfig pc;
    pc.weather_noise = noise;
    pc.seed = seed;
    const auto data = light_dataset(light_recording(seed), pc, 5);
    edl::TrainingSchedule sch;
    sch.seed = seed;
    sch.epochs = 40;
    return edl::train(data, sch).model;
}

double error_rate(const edl::EvidentialModel& m, const std::vector<edl::Sample>& data) { return 1.0 - edl::accuracy(m, data); }

} // namespace

TEST_CASE("occlusion by a segment-box test") {
    Frame f;
    f.vehicles.push_back(box_vehicle(0, {-1, -1, 1, 1}));
    const Box target{19, -1, 21, 1};
    CHECK(occlusion_check(f, 0, target));
    f.vehicles.push_back(box_vehicle(1, {9, -1, 11, 1}));
    CHECK_FALSE(occlusion_check(f, 0, target));
    f.vehicles[1] = box_vehicle(1, {9, 4, 11, 6});
    CHECK(occlusion_check(f, 0, target));
    CHECK_THROWS_AS(occlusion_check(f, 9, target), UnknownIdError);
}

TEST_CASE("ego alone sees nothing and no light") {
    const RoadMap m(MapDescriptor{});
    Frame f = scene(m);
    f.vehicles.push_back(at_lane(m, 0, 0, 40.0, 5.0));
    const auto model = edl::EvidentialModel::initialized(kLightFeatures, 4, 2, 1);
    const Observation o = sense_frame(m, f, PerceptionConfig{}, model);
    CHECK(o.vehicles.empty());
    CHECK(o.obstacles.empty());
    CHECK_FALSE(o.light_in_view);
    CHECK(o.light.p(0) == doctest::Approx(0.5));
    CHECK_FALSE(o.light_says_red());
    CHECK(o.bev_size == 100);
}

TEST_CASE("obstacle hidden behind a vehicle on the sight line is not detected") {
    const RoadMap m(MapDescriptor{1, 1, 150.0, 1, 3.5});
    Frame f = scene(m);
    f.vehicles.push_back(at_lane(m, 0, 0, 20.0));
    f.obstacles.push_back(obstacle_at(m, 0, ObstacleKind::StoppedVehicle, 0, 45.0));
    const auto model = edl::EvidentialModel::initialized(kLightFeatures, 4, 2, 1);
    CHECK(sense_frame(m, f, PerceptionConfig{}, model).obstacles.size() == 1);
    f.vehicles.push_back(at_lane(m, 1, 0, 32.0));
    const Observation o = sense_frame(m, f, PerceptionConfig{}, model);
    CHECK(o.obstacles.empty());
    CHECK(o.vehicles.size() == 1);
}

TEST_CASE("animals are never detected and light up epistemic uncertainty") {
    const RoadMap m(MapDescriptor{1, 1, 150.0, 1, 3.5});
    Frame f = scene(m);
    f.vehicles.push_back(at_lane(m, 0, 0, 20.0));
    f.obstacles.push_back(obstacle_at(m, 0, ObstacleKind::Animal, 0, 30.0));
    const auto model = edl::EvidentialModel::initialized(kLightFeatures, 4, 2, 1);
    PerceptionConfig pc;
    pc.weather_noise = 0.3;
    const Observation o = sense_frame(m, f, pc, model);
    CHECK(o.obstacles.empty());
    const Box foot = f.obstacles[0].box.inflated(0.15);
    double sum = 0.0;
    int n = 0;
    std::vector<double> ood, in;
    for (int r = 0; r < o.bev.size; ++r)
        for (int c = 0; c < o.bev.size; ++c) {
            if (foot.contains(o.bev.world_center(r, c))) {
                sum += o.bev.epistemic(r, c);
                ++n;
                ood.push_back(o.bev.epistemic(r, c));
            } else if (!f.obstacles[0].box.inflated(1.0).contains(o.bev.world_center(r, c))) {
                in.push_back(o.bev.epistemic(r, c));
            }
        }
    REQUIRE(n > 0);
    CHECK(sum / n > 0.8);
    CHECK(o.corridor_epistemic > 0.8);
    // Median gap between animal cells and the rest.
    std::nth_element(ood.begin(), ood.begin() + ood.size() / 2, ood.end());
    std::nth_element(in.begin(), in.begin() + in.size() / 2, in.end());
    CHECK(ood[ood.size() / 2] - in[in.size() / 2] > 0.5);
}

TEST_CASE("BEV grid dimensions and calibration") {
    const RoadMap m(MapDescriptor{1, 1, 150.0, 1, 3.5});
    Frame f = scene(m);
    f.vehicles.push_back(at_lane(m, 0, 0, 60.0));
    std::mt19937_64 rng(1);
    const BevGrid g = bev_rasterize(m, f, PerceptionConfig{}, rng);
    CHECK(g.size == 100);
    CHECK(g.alpha.size() == 10000);
    int road = 0;
    for (int r = 0; r < g.size; ++r)
        for (int c = 0; c < g.size; ++c) {
            const auto truth = dominant_class(m, f, g.world_center(r, c));
            const auto d = g.at(r, c);
            CHECK(d.argmax() == static_cast<int>(truth));
            if (truth == SurfaceClass::Drivable) {
                ++road;
                CHECK(g.epistemic(r, c) < 0.1);
            }
        }
    CHECK(road > 0);
    // Ego-centred and heading-aligned: the cell just ahead of the ego is its own lane.
    CHECK(m.project(0, g.world_center(55, 50)).s > m.project(0, f.vehicles[0].position).s);
}

TEST_CASE("noise-free light features encode the colour") {
    const RoadMap m(MapDescriptor{2, 2, 150.0, 1, 3.5});
    const int link = m.node(1).out_links[static_cast<int>(Direction::North)];
    Frame f = scene(m);
    f.vehicles.push_back(at_lane(m, 0, m.lane_id(link, 0), m.link(link).length - 10.0));
    f.lights.push_back({4, Direction::North, LightColor::Red});
    std::mt19937_64 rng(1);
    auto x = extract_light_features(m, f, 0, PerceptionConfig{}, rng);
    CHECK(x[0] == 1.0);
    CHECK(x[1] == 0.0);
    CHECK(x[2] == 0.0);
    f.lights[0].color = LightColor::Green;
    x = extract_light_features(m, f, 0, PerceptionConfig{}, rng);
    CHECK(x[2] == 1.0);
    Frame far = scene(m);
    far.vehicles.push_back(at_lane(m, 0, m.lane_id(link, 0), 5.0, 8.0));
    x = extract_light_features(m, far, 0, PerceptionConfig{}, rng);
    CHECK(x == std::vector<double>{0.0, 0.0, 0.0, 1.0});
}

TEST_CASE("light classifier: perfect at zero noise, degrading with weather") {
    PerceptionConfig clean;
    const auto train_set = light_dataset(light_recording(2), clean, 5);
    edl::TrainingSchedule sch;
    sch.epochs = 40;
    const auto model = edl::train(train_set, sch).model;
    const auto held_out = light_dataset(light_recording(3), clean, 7);
    REQUIRE(held_out.size() > 100);
    CHECK(edl::accuracy(model, held_out) == 1.0);

    // Monte-Carlo error at increasing noise, each level with its own trained model.
    const auto test_rec = light_recording(4, 150.0);
    std::vector<double> errors;
    for (double noise : {0.5, 1.0, 2.0}) {
        PerceptionConfig pc;
        pc.weather_noise = noise;
        pc.seed = 99;
        const auto test = light_dataset(test_rec, pc, 3);
        REQUIRE(test.size() >= 1000);
        errors.push_back(error_rate(train_at(noise, 5), test));
    }
    CHECK(errors[0] <= errors[1]);
    CHECK(errors[1] <= errors[2]);
    CHECK(errors[2] > errors[0]);
}

TEST_CASE("detections are a subset of ground truth and sensing is reproducible") {
    WorldConfig c;
    c.seed = 8;
    c.map.blocks_x = 2;
    c.map.blocks_y = 1;
    c.map.lanes_per_direction = 2;
    c.npc_count = 30;
    c.duration = 8;
    c.obstacles.push_back({ObstacleKind::StoppedVehicle, 2, 50.0});
    c.obstacles.push_back({ObstacleKind::Animal, 9, 70.0});
    const Recording rec = run_scenario(c);
    const RoadMap m(c.map);
    const auto model = edl::EvidentialModel::initialized(kLightFeatures, 4, 2, 1);
    PerceptionConfig pc;
    pc.weather_noise = 0.7;
    for (const auto& f : rec.frames) {
        const Observation o = sense_frame(m, f, pc, model);
        for (const auto& v : o.vehicles) {
            const auto* truth = f.find(v.id);
            REQUIRE(truth);
            CHECK(truth->box == v.box);
        }
        for (const auto& d : o.obstacles) {
            CHECK(d.kind != ObstacleKind::Animal);
            bool found = false;
            for (const auto& g : f.obstacles) found = found || (g.id == d.id && g.box == d.box);
            CHECK(found);
        }
        if (f.index % 20 == 0) {
            const Observation again = sense_frame(m, f, pc, model);
            CHECK(to_json(again).dump() == to_json(o).dump());
            const Observation back = observation_from_json(nlohmann::json::parse(to_json(o).dump()));
            CHECK(to_json(back).dump() == to_json(o).dump());
        }
    }
}

TEST_CASE("false-negative flips only turn red predictions green") {
    const RoadMap m(MapDescriptor{2, 2, 150.0, 1, 3.5});
    const int link = m.node(1).out_links[static_cast<int>(Direction::North)];
    PerceptionConfig clean;
    const auto data = light_dataset(light_recording(2), clean, 5);
    const auto model = edl::train(data, edl::TrainingSchedule{}).model;
    Frame f = scene(m);
    f.vehicles.push_back(at_lane(m, 0, m.lane_id(link, 0), m.link(link).length - 10.0));
    f.lights.push_back({4, Direction::North, LightColor::Red});
    PerceptionConfig pc;
    pc.false_negative_rate = 1.0;
    const Observation o = sense_frame(m, f, pc, model);
    CHECK(o.light_flipped);
    CHECK_FALSE(o.light_says_red());
    f.lights[0].color = LightColor::Green;
    const Observation g = sense_frame(m, f, pc, model);
    CHECK_FALSE(g.light_flipped);
    CHECK_FALSE(g.light_says_red());
    CHECK_THROWS_AS(perception_config_from_json(nlohmann::json{{"false_negative_rate", 1.5}}, {}), ConfigError);
}
