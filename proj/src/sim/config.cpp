#include "csav/sim/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "csav/error.hpp"

namespace csav::sim {

using nlohmann::json;

std::string_view to_string(ObstacleKind k) {
    return k == ObstacleKind::Animal ? "animal" : "stopped_vehicle";
}

ObstacleKind obstacle_kind_from(std::string_view s) {
    if (s == "animal") return ObstacleKind::Animal;
    if (s == "stopped_vehicle") return ObstacleKind::StoppedVehicle;
    throw ConfigError("unknown obstacle kind '" + std::string(s) + "'");
}

int WorldConfig::frame_count() const {
    return static_cast<int>(std::llround(duration * tick_rate));
}

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid config: " + what);
}

void check_keys(const json& j, const std::string& where, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) throw ConfigError("invalid config: " + where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        bool known = false;
        for (auto a : allowed) known = known || a == key;
        if (!known) throw ConfigError("invalid config: unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read(const json& j, std::string_view key, T& out, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->template get<T>();
    } catch (const json::exception&) {
        throw ConfigError("invalid config: wrong type for '" + std::string(key) + "' in " + where);
    }
}

LightTimings timings_from(const json& j, const std::string& where) {
    check_keys(j, where, {"green_s", "yellow_s", "red_s", "all_red_s"});
    LightTimings t;
    read(j, "green_s", t.green_s, where);
    read(j, "yellow_s", t.yellow_s, where);
    read(j, "red_s", t.red_s, where);
    read(j, "all_red_s", t.all_red_s, where);
    return t;
}

json timings_to(const LightTimings& t) {
    return nlohmann::ordered_json{{"green_s", t.green_s}, {"yellow_s", t.yellow_s}, {"red_s", t.red_s}, {"all_red_s", t.all_red_s}};
}

void validate_timings(const LightTimings& t, const std::string& where) {
    require(t.green_s > 0 && t.yellow_s > 0 && t.red_s > 0 && t.all_red_s > 0, where + " timings must be > 0");
    require(t.red_s > t.yellow_s + 2.0 * t.all_red_s,
            where + " red_s must exceed yellow_s + 2*all_red_s so the cross axis gets a green phase");
}

} // namespace

void validate(const WorldConfig& c) {
    require(c.tick_rate > 0, "tick_rate must be > 0");
    require(c.duration > 0, "duration must be > 0");
    require(c.npc_count >= 0, "npc_count must be >= 0");
    require(c.map.blocks_x >= 1 && c.map.blocks_y >= 1, "map.blocks must be >= 1");
    require(c.map.lanes_per_direction >= 1, "map.lanes_per_direction must be >= 1");
    require(c.map.lane_width > 0, "map.lane_width must be > 0");
    require(c.map.block_length > 2.0 * c.map.lanes_per_direction * c.map.lane_width + 20.0,
            "map.block_length too short for the road width");
    require(c.weather_noise >= 0, "weather_noise must be >= 0");
    require(c.max_speed > 0 && c.max_accel > 0, "max_speed and max_accel must be > 0");
    require(c.violation_rate >= 0 && c.violation_rate <= 1, "violation_rate must be in [0,1]");
    require(c.turn_probability >= 0 && c.turn_probability <= 0.5, "turn_probability must be in [0,0.5]");
    validate_timings(c.light_timings, "light_timings");
    for (const auto& [id, t] : c.light_overrides) validate_timings(t, "light_overrides[" + std::to_string(id) + "]");
    for (const auto& o : c.obstacles) {
        require(o.despawn_s > o.spawn_s, "obstacle despawn must follow spawn");
        require(o.position >= 0, "obstacle position must be >= 0");
    }
}

nlohmann::ordered_json to_json(const WorldConfig& c) {
    nlohmann::ordered_json j;
    j["archetype"] = c.archetype;
    j["seed"] = c.seed;
    j["tick_rate"] = c.tick_rate;
    j["duration"] = c.duration;
    j["map"] = {{"blocks", {c.map.blocks_x, c.map.blocks_y}},
                {"block_length", c.map.block_length},
                {"lanes_per_direction", c.map.lanes_per_direction},
                {"lane_width", c.map.lane_width}};
    j["npc_count"] = c.npc_count;
    j["light_timings"] = timings_to(c.light_timings);
    nlohmann::ordered_json overrides = nlohmann::ordered_json::object();
    for (const auto& [id, t] : c.light_overrides) overrides[std::to_string(id)] = timings_to(t);
    j["light_overrides"] = overrides;
    nlohmann::ordered_json obs = nlohmann::ordered_json::array();
    for (const auto& o : c.obstacles) {
        nlohmann::ordered_json e{{"kind", to_string(o.kind)}, {"lane_id", o.lane_id}, {"position", o.position},
                                 {"spawn_s", o.spawn_s}};
        if (std::isfinite(o.despawn_s)) e["despawn_s"] = o.despawn_s;
        else e["despawn_s"] = nullptr;
        obs.push_back(e);
    }
    j["obstacles"] = obs;
    j["weather_noise"] = c.weather_noise;
    j["max_speed"] = c.max_speed;
    j["max_accel"] = c.max_accel;
    j["violation_rate"] = c.violation_rate;
    j["turn_probability"] = c.turn_probability;
    nlohmann::ordered_json ego{{"turns", c.ego_turns == TurnPolicy::Straight ? "straight" : "random"}};
    if (c.ego_start) {
        ego["lane_id"] = c.ego_start->lane_id;
        ego["position"] = c.ego_start->position;
    }
    j["ego"] = ego;
    j["spawn_links"] = c.spawn_links;
    return j;
}

WorldConfig config_from_json(const json& j) {
    check_keys(j, "config",
               {"archetype", "seed", "tick_rate", "duration", "map", "npc_count", "light_timings", "light_overrides",
                "obstacles", "weather_noise", "max_speed", "max_accel", "violation_rate", "turn_probability", "ego",
                "spawn_links", "assertions", "perception", "description"});
    WorldConfig c;
    read(j, "archetype", c.archetype, "config");
    read(j, "seed", c.seed, "config");
    read(j, "tick_rate", c.tick_rate, "config");
    read(j, "duration", c.duration, "config");
    read(j, "npc_count", c.npc_count, "config");
    read(j, "weather_noise", c.weather_noise, "config");
    read(j, "max_speed", c.max_speed, "config");
    read(j, "max_accel", c.max_accel, "config");
    read(j, "violation_rate", c.violation_rate, "config");
    read(j, "turn_probability", c.turn_probability, "config");
    read(j, "spawn_links", c.spawn_links, "config");

    if (auto it = j.find("map"); it != j.end()) {
        check_keys(*it, "map", {"blocks", "block_length", "lanes_per_direction", "lane_width"});
        if (auto b = it->find("blocks"); b != it->end()) {
            if (b->is_number_integer()) {
                c.map.blocks_x = c.map.blocks_y = b->get<int>();
            } else if (b->is_array() && b->size() == 2 && (*b)[0].is_number_integer() && (*b)[1].is_number_integer()) {
                c.map.blocks_x = (*b)[0].get<int>();
                c.map.blocks_y = (*b)[1].get<int>();
            } else {
                throw ConfigError("invalid config: map.blocks must be an integer or [bx, by]");
            }
        }
        read(*it, "block_length", c.map.block_length, "map");
        read(*it, "lanes_per_direction", c.map.lanes_per_direction, "map");
        read(*it, "lane_width", c.map.lane_width, "map");
    }
    if (auto it = j.find("light_timings"); it != j.end()) c.light_timings = timings_from(*it, "light_timings");
    if (auto it = j.find("light_overrides"); it != j.end()) {
        if (!it->is_object()) throw ConfigError("invalid config: light_overrides must be an object");
        for (const auto& [key, value] : it->items()) {
            int id = 0;
            try {
                id = std::stoi(key);
            } catch (const std::exception&) {
                throw ConfigError("invalid config: light_overrides key '" + key + "' is not an intersection id");
            }
            c.light_overrides[id] = timings_from(value, "light_overrides[" + key + "]");
        }
    }
    if (auto it = j.find("obstacles"); it != j.end()) {
        if (!it->is_array()) throw ConfigError("invalid config: obstacles must be an array");
        for (const auto& o : *it) {
            check_keys(o, "obstacles[]", {"kind", "lane_id", "position", "spawn_s", "despawn_s"});
            ObstacleSpec s;
            std::string kind = "stopped_vehicle";
            read(o, "kind", kind, "obstacles[]");
            s.kind = obstacle_kind_from(kind);
            read(o, "lane_id", s.lane_id, "obstacles[]");
            read(o, "position", s.position, "obstacles[]");
            read(o, "spawn_s", s.spawn_s, "obstacles[]");
            if (auto d = o.find("despawn_s"); d != o.end() && !d->is_null()) read(o, "despawn_s", s.despawn_s, "obstacles[]");
            c.obstacles.push_back(s);
        }
    }
    if (auto it = j.find("ego"); it != j.end()) {
        check_keys(*it, "ego", {"lane_id", "position", "turns"});
        std::string turns = "random";
        read(*it, "turns", turns, "ego");
        if (turns == "straight") c.ego_turns = TurnPolicy::Straight;
        else if (turns == "random") c.ego_turns = TurnPolicy::Random;
        else throw ConfigError("invalid config: ego.turns must be 'random' or 'straight'");
        if (it->contains("lane_id") || it->contains("position")) {
            EgoStart e;
            read(*it, "lane_id", e.lane_id, "ego");
            read(*it, "position", e.position, "ego");
            c.ego_start = e;
        }
    }
    validate(c);
    return c;
}

WorldConfig parse_config(std::string_view text) {
    json j;
    try {
        j = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config syntax error: ") + e.what());
    }
    return config_from_json(j);
}

WorldConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

} // namespace csav::sim
