#include "csav/sim/frame.hpp"

#include <string>

#include "csav/error.hpp"

namespace csav::sim {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(LightColor c) {
    switch (c) {
    case LightColor::Green: return "green";
    case LightColor::Yellow: return "yellow";
    case LightColor::Red: return "red";
    }
    return "green";
}

LightColor light_color_from(std::string_view s) {
    if (s == "green") return LightColor::Green;
    if (s == "yellow") return LightColor::Yellow;
    if (s == "red") return LightColor::Red;
    throw FormatError("unknown light color '" + std::string(s) + "'");
}

const VehicleState* Frame::find(int id) const {
    for (const auto& v : vehicles)
        if (v.id == id) return &v;
    return nullptr;
}

const VehicleState& Frame::ego() const {
    const VehicleState* v = find(ego_id);
    if (!v) throw UnknownIdError("ego vehicle missing from frame " + std::to_string(index));
    return *v;
}

std::optional<LightColor> Frame::light(int intersection, Direction approach) const {
    for (const auto& l : lights)
        if (l.intersection == intersection && l.approach == approach) return l.color;
    return std::nullopt;
}

namespace {

ordered_json box_json(const Box& b) { return ordered_json::array({b.x1, b.y1, b.x2, b.y2}); }

Box box_from(const json& j) {
    if (!j.is_array() || j.size() != 4) throw FormatError("box must be [c1x, c1y, c2x, c2y]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

} // namespace

ordered_json to_json(const Frame& f) {
    ordered_json j;
    j["index"] = f.index;
    j["time"] = f.time;
    ordered_json vs = ordered_json::array();
    for (const auto& v : f.vehicles) {
        vs.push_back(ordered_json{{"id", v.id},
                                  {"position", {v.position.x, v.position.y}},
                                  {"heading", v.heading},
                                  {"velocity", {v.velocity.x, v.velocity.y}},
                                  {"lane_id", v.lane_id},
                                  {"box", box_json(v.box)}});
    }
    j["vehicles"] = vs;
    ordered_json ls = ordered_json::array();
    for (const auto& l : f.lights)
        ls.push_back(ordered_json{{"intersection", l.intersection}, {"approach", to_string(l.approach)}, {"color", to_string(l.color)}});
    j["lights"] = ls;
    ordered_json is = ordered_json::array();
    for (const auto& b : f.intersections) is.push_back(box_json(b));
    j["intersections"] = is;
    ordered_json os = ordered_json::array();
    for (const auto& o : f.obstacles)
        os.push_back(ordered_json{{"id", o.id}, {"kind", to_string(o.kind)}, {"lane_id", o.lane_id}, {"box", box_json(o.box)}});
    j["obstacles"] = os;
    j["ego_id"] = f.ego_id;
    return j;
}

Frame frame_from_json(const json& j) {
    try {
        Frame f;
        f.index = j.at("index").get<int>();
        f.time = j.at("time").get<double>();
        for (const auto& v : j.at("vehicles")) {
            VehicleState s;
            s.id = v.at("id").get<int>();
            s.position = {v.at("position").at(0).get<double>(), v.at("position").at(1).get<double>()};
            s.heading = v.at("heading").get<double>();
            s.velocity = {v.at("velocity").at(0).get<double>(), v.at("velocity").at(1).get<double>()};
            s.lane_id = v.at("lane_id").get<int>();
            s.box = box_from(v.at("box"));
            f.vehicles.push_back(s);
        }
        for (const auto& l : j.at("lights"))
            f.lights.push_back({l.at("intersection").get<int>(), direction_from(l.at("approach").get<std::string>()),
                                light_color_from(l.at("color").get<std::string>())});
        for (const auto& b : j.at("intersections")) f.intersections.push_back(box_from(b));
        for (const auto& o : j.at("obstacles"))
            f.obstacles.push_back({o.at("id").get<int>(), obstacle_kind_from(o.at("kind").get<std::string>()),
                                   o.at("lane_id").get<int>(), box_from(o.at("box"))});
        f.ego_id = j.at("ego_id").get<int>();
        return f;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed frame: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("malformed frame: ") + e.what());
    }
}

} // namespace csav::sim
