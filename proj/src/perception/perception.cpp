#include "csav/perception/perception.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "csav/error.hpp"
#include "csav/sim/ground_truth.hpp"

namespace csav::perception {

using nlohmann::json;
using nlohmann::ordered_json;
using sim::Frame;
using sim::ObstacleKind;
using sim::RoadMap;
using sim::SurfaceClass;

namespace {

constexpr double kNoisePerWeather = 0.5; // std dev of feature noise per unit of weather_noise
constexpr double kBevEvidence = 10.0;    // in-distribution evidence at weather_noise 1
constexpr double kMinWeather = 0.1;
constexpr double kOodEvidence = 0.05;
constexpr double kUncertainCell = 0.5;

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

ordered_json vec_json(Vec2 v) { return ordered_json::array({v.x, v.y}); }
ordered_json box_json(const Box& b) { return ordered_json::array({b.x1, b.y1, b.x2, b.y2}); }
Vec2 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }
Box box_from(const json& j) {
    if (!j.is_array() || j.size() != 4) throw FormatError("box must be [c1x, c1y, c2x, c2y]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

// Cells whose centre may fall inside a world box, as a row/col range.
struct CellRange {
    int r0, r1, c0, c1;
};

CellRange cells_under(const BevGrid& g, const Box& b) {
    const Vec2 corners[4] = {{b.x1, b.y1}, {b.x2, b.y1}, {b.x1, b.y2}, {b.x2, b.y2}};
    double fmin = 1e300, fmax = -1e300, lmin = 1e300, lmax = -1e300;
    for (Vec2 c : corners) {
        const Vec2 local = rotate(c - g.origin, -g.heading);
        fmin = std::min(fmin, local.x);
        fmax = std::max(fmax, local.x);
        lmin = std::min(lmin, local.y);
        lmax = std::max(lmax, local.y);
    }
    const double half = g.size * g.cell / 2.0;
    auto idx = [&](double v) { return static_cast<int>(std::floor((v + half) / g.cell)); };
    return {std::max(0, idx(fmin) - 1), std::min(g.size - 1, idx(fmax) + 1), std::max(0, idx(lmin) - 1),
            std::min(g.size - 1, idx(lmax) + 1)};
}

} // namespace

void validate(const PerceptionConfig& c) {
    if (!(c.weather_noise >= 0.0)) throw ConfigError("perception.weather_noise must be >= 0");
    if (!(c.false_negative_rate >= 0.0 && c.false_negative_rate <= 1.0))
        throw ConfigError("perception.false_negative_rate must be in [0, 1]");
    if (!(c.detection_range > 0.0)) throw ConfigError("perception.detection_range must be > 0");
    if (!(c.bev_cell > 0.0) || !(c.bev_extent >= c.bev_cell)) throw ConfigError("perception.bev_cell must be > 0 and <= bev_extent");
    if (!(c.corridor_length > 0.0)) throw ConfigError("perception.corridor_length must be > 0");
}

ordered_json to_json(const PerceptionConfig& c) {
    ordered_json ood = ordered_json::array();
    for (auto k : c.ood_classes) ood.push_back(sim::to_string(k));
    return ordered_json{{"weather_noise", c.weather_noise}, {"detection_range", c.detection_range},
                        {"false_negative_rate", c.false_negative_rate}, {"ood_classes", ood},
                        {"bev_cell", c.bev_cell},           {"bev_extent", c.bev_extent},
                        {"corridor_length", c.corridor_length}, {"seed", c.seed}};
}

PerceptionConfig perception_config_from_json(const json& j, PerceptionConfig c) {
    if (!j.is_object()) throw ConfigError("perception config must be an object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "weather_noise") c.weather_noise = v.get<double>();
            else if (key == "detection_range") c.detection_range = v.get<double>();
            else if (key == "false_negative_rate") c.false_negative_rate = v.get<double>();
            else if (key == "bev_cell") c.bev_cell = v.get<double>();
            else if (key == "bev_extent") c.bev_extent = v.get<double>();
            else if (key == "corridor_length") c.corridor_length = v.get<double>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "ood_classes") {
                c.ood_classes.clear();
                for (const auto& k : v) c.ood_classes.insert(sim::obstacle_kind_from(k.get<std::string>()));
            } else
                throw ConfigError("unknown perception key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("perception config: ") + e.what());
    }
    validate(c);
    return c;
}

std::mt19937_64 frame_rng(std::uint64_t seed, int frame_index, int stream) {
    std::uint64_t s = splitmix(seed);
    s = splitmix(s ^ static_cast<std::uint64_t>(frame_index));
    s = splitmix(s ^ (static_cast<std::uint64_t>(stream) << 32));
    return std::mt19937_64(s);
}

std::vector<double> extract_light_features(const RoadMap& map, const Frame& frame, int vehicle_id,
                                           const PerceptionConfig& cfg, std::mt19937_64& rng) {
    std::vector<double> f(kLightFeatures, 0.0);
    f[3] = 1.0;
    const auto gov = sim::governing_light(map, frame, vehicle_id);
    if (gov) {
        const auto color = frame.light(gov->intersection, gov->dir);
        if (color) {
            const double amplitude = 1.0 / (1.0 + cfg.weather_noise);
            f[2 - static_cast<int>(*color)] = amplitude; // red, yellow, green
            f[3] = std::clamp(gov->line_distance / sim::kApproachZone, 0.0, 1.0) * 0.5;
        }
    }
    std::normal_distribution<double> noise(0.0, 1.0);
    const double sigma = kNoisePerWeather * cfg.weather_noise;
    for (auto& v : f) v += sigma * noise(rng);
    return f;
}

bool occlusion_check(const Frame& frame, int observer_id, const Box& target) {
    const auto* obs = frame.find(observer_id);
    if (!obs) throw UnknownIdError("unknown observer id " + std::to_string(observer_id));
    const Vec2 a = obs->position, b = target.center();
    for (const auto& v : frame.vehicles) {
        if (v.id == observer_id || v.box == target) continue;
        if (segment_intersects_box(a, b, v.box)) return false;
    }
    return true;
}

Vec2 BevGrid::local_center(int row, int col) const {
    const double half = size * cell / 2.0;
    return {-half + (row + 0.5) * cell, -half + (col + 0.5) * cell};
}

Vec2 BevGrid::world_center(int row, int col) const { return origin + rotate(local_center(row, col), heading); }

edl::DirichletPrediction BevGrid::at(int row, int col) const {
    const auto& a = alpha.at(static_cast<std::size_t>(row) * size + col);
    return edl::DirichletPrediction(std::vector<double>(a.begin(), a.end()));
}

double BevGrid::epistemic(int row, int col) const {
    const auto& a = alpha.at(static_cast<std::size_t>(row) * size + col);
    return kBevClasses / (a[0] + a[1] + a[2] + a[3]);
}

SurfaceClass dominant_class(const RoadMap& map, const Frame& frame, Vec2 p) {
    for (const auto& v : frame.vehicles)
        if (v.box.contains(p)) return SurfaceClass::Vehicle;
    for (const auto& o : frame.obstacles)
        if (o.box.contains(p)) return o.kind == ObstacleKind::StoppedVehicle ? SurfaceClass::Vehicle : SurfaceClass::Other;
    return map.surface_at(p);
}

BevGrid bev_rasterize(const RoadMap& map, const Frame& frame, const PerceptionConfig& cfg, std::mt19937_64& rng) {
    BevGrid g;
    g.size = static_cast<int>(std::lround(cfg.bev_extent / cfg.bev_cell));
    g.cell = cfg.bev_cell;
    const auto& ego = frame.ego();
    g.origin = ego.position;
    g.heading = ego.heading;
    const std::size_t n = static_cast<std::size_t>(g.size) * g.size;

    std::vector<int> cls(n);
    std::vector<char> ood(n, 0);
    for (int r = 0; r < g.size; ++r)
        for (int c = 0; c < g.size; ++c) cls[static_cast<std::size_t>(r) * g.size + c] = static_cast<int>(map.surface_at(g.world_center(r, c)));

    auto paint = [&](const Box& box, int klass, bool out_of_distribution) {
        const CellRange cr = cells_under(g, box);
        for (int r = cr.r0; r <= cr.r1; ++r) {
            for (int c = cr.c0; c <= cr.c1; ++c) {
                const std::size_t i = static_cast<std::size_t>(r) * g.size + c;
                if (out_of_distribution) {
                    // Any overlap with a 3x3 sample of the cell marks it.
                    const Vec2 lc = g.local_center(r, c);
                    bool hit = false;
                    for (int a = -1; a <= 1 && !hit; ++a)
                        for (int b = -1; b <= 1 && !hit; ++b)
                            hit = box.contains(g.origin + rotate(lc + Vec2{a * g.cell / 3.0, b * g.cell / 3.0}, g.heading));
                    if (hit) ood[i] = 1;
                } else if (box.contains(g.world_center(r, c))) {
                    cls[i] = klass;
                }
            }
        }
    };
    for (const auto& v : frame.vehicles) paint(v.box, static_cast<int>(SurfaceClass::Vehicle), false);
    for (const auto& o : frame.obstacles) {
        const bool is_ood = cfg.ood_classes.count(o.kind) > 0;
        const int klass = static_cast<int>(o.kind == ObstacleKind::StoppedVehicle ? SurfaceClass::Vehicle : SurfaceClass::Other);
        paint(o.box, klass, is_ood);
    }

    std::uniform_real_distribution<double> jitter(0.8, 1.2);
    const double scale = kBevEvidence / std::max(cfg.weather_noise, kMinWeather);
    g.alpha.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double e = scale * jitter(rng);
        auto& a = g.alpha[i];
        if (ood[i]) {
            a.fill(1.0 + kOodEvidence);
        } else {
            a.fill(1.0);
            a[cls[i]] += e;
        }
    }
    return g;
}

double corridor_epistemic(const RoadMap& map, const BevGrid& bev, int ego_lane, const PerceptionConfig& cfg) {
    if (ego_lane < 0 || ego_lane >= static_cast<int>(map.lanes().size()) || bev.size == 0) return 0.0;
    const auto& lane = map.lane(ego_lane);
    const double s_ego = map.project(ego_lane, bev.origin).s;
    const double half_w = map.descriptor().lane_width / 2.0;
    double best = 0.0;
    for (int r = 0; r < bev.size; ++r) {
        for (int c = 0; c < bev.size; ++c) {
            const auto lc = map.project(ego_lane, bev.world_center(r, c));
            const double ahead = lc.s - s_ego;
            if (ahead < 0.0 || ahead > cfg.corridor_length || lc.s > lane.length || std::abs(lc.lateral) > half_w) continue;
            best = std::max(best, bev.epistemic(r, c));
        }
    }
    return best;
}

Observation sense_frame(const RoadMap& map, const Frame& frame, const PerceptionConfig& cfg, const edl::EvidentialModel& model) {
    Observation o;
    o.frame = frame.index;
    o.time = frame.time;
    const auto& ego = frame.ego();
    o.ego_id = ego.id;
    o.ego_position = ego.position;
    o.ego_heading = ego.heading;
    o.ego_velocity = ego.velocity;
    o.ego_lane = ego.lane_id;

    for (const auto& v : frame.vehicles) {
        if (v.id == ego.id) continue;
        if (distance(v.position, ego.position) > cfg.detection_range) continue;
        if (!occlusion_check(frame, ego.id, v.box)) continue;
        o.vehicles.push_back({v.id, v.position, v.heading, v.velocity, v.box});
    }
    for (const auto& ob : frame.obstacles) {
        if (cfg.ood_classes.count(ob.kind)) continue;
        if (distance(ob.box.center(), ego.position) > cfg.detection_range) continue;
        if (!occlusion_check(frame, ego.id, ob.box)) continue;
        o.obstacles.push_back({ob.id, ob.kind, ob.box});
    }

    o.light_in_view = sim::governing_light(map, frame, ego.id).has_value();
    auto rng = frame_rng(cfg.seed, frame.index, 0);
    const auto features = extract_light_features(map, frame, ego.id, cfg, rng);
    std::vector<double> alpha(model.classes, 1.0); // no evidence without a light in view
    if (o.light_in_view) alpha = model.predict(features).alpha();
    std::uniform_real_distribution<double> unit01(0.0, 1.0);
    const double u = unit01(rng);
    o.light = edl::DirichletPrediction(alpha);
    if (o.light_says_red() && u < cfg.false_negative_rate) {
        std::swap(alpha[0], alpha[1]);
        o.light = edl::DirichletPrediction(alpha);
        o.light_flipped = true;
    }

    auto bev_rng = frame_rng(cfg.seed, frame.index, 1);
    o.bev = bev_rasterize(map, frame, cfg, bev_rng);
    o.bev_size = o.bev.size;
    o.bev_cell = o.bev.cell;
    double sum = 0.0;
    for (int r = 0; r < o.bev.size; ++r) {
        for (int c = 0; c < o.bev.size; ++c) {
            const double e = o.bev.epistemic(r, c);
            sum += e;
            if (e > kUncertainCell) o.uncertain_cells.push_back({r, c, e});
        }
    }
    o.bev_mean_epistemic = sum / (static_cast<double>(o.bev.size) * o.bev.size);
    o.corridor_epistemic = corridor_epistemic(map, o.bev, o.ego_lane, cfg);
    return o;
}

ordered_json to_json(const Observation& o) {
    ordered_json j;
    j["frame"] = o.frame;
    j["time"] = o.time;
    j["ego"] = ordered_json{{"id", o.ego_id},
                            {"position", vec_json(o.ego_position)},
                            {"heading", o.ego_heading},
                            {"velocity", vec_json(o.ego_velocity)},
                            {"lane_id", o.ego_lane}};
    ordered_json vs = ordered_json::array();
    for (const auto& v : o.vehicles)
        vs.push_back(ordered_json{{"id", v.id},
                                  {"position", vec_json(v.position)},
                                  {"heading", v.heading},
                                  {"velocity", vec_json(v.velocity)},
                                  {"box", box_json(v.box)}});
    j["vehicles"] = vs;
    ordered_json os = ordered_json::array();
    for (const auto& d : o.obstacles) os.push_back(ordered_json{{"id", d.id}, {"kind", sim::to_string(d.kind)}, {"box", box_json(d.box)}});
    j["obstacles"] = os;
    j["light"] = ordered_json{{"in_view", o.light_in_view}, {"alpha", o.light.alpha()}, {"flipped", o.light_flipped}};
    ordered_json cells = ordered_json::array();
    for (const auto& c : o.uncertain_cells) cells.push_back(ordered_json::array({c.row, c.col, c.epistemic}));
    j["bev"] = ordered_json{{"size", o.bev_size},
                            {"cell", o.bev_cell},
                            {"mean_u_epis", o.bev_mean_epistemic},
                            {"corridor_u_epis", o.corridor_epistemic},
                            {"uncertain_cells", cells}};
    return j;
}

Observation observation_from_json(const json& j) {
    try {
        Observation o;
        o.frame = j.at("frame").get<int>();
        o.time = j.at("time").get<double>();
        const auto& e = j.at("ego");
        o.ego_id = e.at("id").get<int>();
        o.ego_position = vec_from(e.at("position"));
        o.ego_heading = e.at("heading").get<double>();
        o.ego_velocity = vec_from(e.at("velocity"));
        o.ego_lane = e.at("lane_id").get<int>();
        for (const auto& v : j.at("vehicles"))
            o.vehicles.push_back({v.at("id").get<int>(), vec_from(v.at("position")), v.at("heading").get<double>(),
                                  vec_from(v.at("velocity")), box_from(v.at("box"))});
        for (const auto& d : j.at("obstacles"))
            o.obstacles.push_back({d.at("id").get<int>(), sim::obstacle_kind_from(d.at("kind").get<std::string>()), box_from(d.at("box"))});
        o.light = edl::DirichletPrediction(j.at("light").at("alpha").get<std::vector<double>>());
        o.light_flipped = j.at("light").at("flipped").get<bool>();
        o.light_in_view = j.at("light").at("in_view").get<bool>();
        const auto& b = j.at("bev");
        o.bev_size = b.at("size").get<int>();
        o.bev_cell = b.at("cell").get<double>();
        o.bev_mean_epistemic = b.at("mean_u_epis").get<double>();
        o.corridor_epistemic = b.at("corridor_u_epis").get<double>();
        for (const auto& c : b.at("uncertain_cells"))
            o.uncertain_cells.push_back({c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<double>()});
        return o;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed observation: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("malformed observation: ") + e.what());
    } catch (const Error& e) {
        throw FormatError(std::string("malformed observation: ") + e.what());
    }
}

std::vector<edl::Sample> light_dataset(const sim::Recording& rec, const PerceptionConfig& cfg, int stride, bool ego_only) {
    if (stride < 1) throw ConfigError("stride must be >= 1");
    const RoadMap map(rec.config.map);
    std::vector<edl::Sample> out;
    for (const auto& f : rec.frames) {
        if (f.index % stride != 0) continue;
        for (const auto& v : f.vehicles) {
            if (ego_only && v.id != f.ego_id) continue;
            if (!sim::governing_light(map, f, v.id)) continue; // the classifier only runs with a light in view
            auto rng = frame_rng(cfg.seed ^ 0x6c69676874ULL, f.index, v.id + 2);
            edl::Sample s;
            s.x = extract_light_features(map, f, v.id, cfg, rng);
            const bool red = sim::ground_truth_light_for(map, f, v.id);
            s.y = {red ? 1.0 : 0.0, red ? 0.0 : 1.0};
            out.push_back(std::move(s));
        }
    }
    return out;
}

} // namespace csav::perception
