#include "csav/bridge/bridge.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "csav/error.hpp"
#include "csav/sim/ground_truth.hpp"

namespace csav::bridge {

namespace detail {
extern const std::string kTrafficLightRules;
extern const std::string kObstacleRules;
} // namespace detail

using rules::Atom;
using rules::Value;

namespace {

Value num(double v) { return Value::num(v); }
Value num(int v) { return Value::num(static_cast<std::int64_t>(v)); }
Value sym(std::string s) { return Value::sym(std::move(s)); }

void push_box(std::vector<Value>& args, const Box& b) {
    args.push_back(num(b.x1));
    args.push_back(num(b.y1));
    args.push_back(num(b.x2));
    args.push_back(num(b.y2));
}

bool is_lane_change(behavior::Category c) {
    return c == behavior::Category::ChangeLaneLeft || c == behavior::Category::ChangeLaneRight;
}

Box swept(const Box& b, double heading, double reach, double margin) {
    const Vec2 step = unit(heading) * reach;
    Box out = b;
    for (Vec2 p : {Vec2{b.x1, b.y1}, Vec2{b.x1, b.y2}, Vec2{b.x2, b.y1}, Vec2{b.x2, b.y2}}) out = expand(out, p + step);
    return out.inflated(margin);
}

bool frame_arg_is(const Atom& a, int frame) { return !a.args.empty() && a.args[0] == Value::num(static_cast<std::int64_t>(frame)); }

} // namespace

std::string action_symbol(behavior::Category c) {
    switch (c) {
    case behavior::Category::LaneFollow: return "lane_follow";
    case behavior::Category::ChangeLaneLeft: return "change_lane_left";
    case behavior::Category::ChangeLaneRight: return "change_lane_right";
    case behavior::Category::Straight: return "straight";
    case behavior::Category::TurnLeft: return "turn_left";
    case behavior::Category::TurnRight: return "turn_right";
    }
    return "lane_follow";
}

FactBase facts_from_frame(const perception::Observation& obs, const std::vector<behavior::BehaviorCluster>& clusters,
                          int frame_index, const sim::RoadMap& map, const FrameContext& ctx) {
    if (obs.frame != frame_index)
        throw Error("observation of frame " + std::to_string(obs.frame) + " used for frame " + std::to_string(frame_index));
    FactBase fb;
    fb.frame = frame_index;
    auto& out = fb.facts;
    const Value F = num(frame_index);
    auto fact = [&](const char* pred, std::vector<Value> args) { out.push_back({pred, std::move(args)}); };

    fact("frame", {F});
    fact("driver_location", {F, num(obs.ego_position.x), num(obs.ego_position.y)});
    fact("driver_rotation", {F, num(obs.ego_heading)});
    fact("driver_speed", {F, num(norm(obs.ego_velocity))});

    const bool lane_known = obs.ego_lane >= 0 && obs.ego_lane < static_cast<int>(map.lanes().size());
    const double half_lane = map.descriptor().lane_width / 2.0;
    double s_ego = 0.0, lane_heading = obs.ego_heading, lane_length = 0.0;
    if (lane_known) {
        const auto& lane = map.lane(obs.ego_lane);
        fact("ego_lane", {F, num(obs.ego_lane)});
        s_ego = map.project(obs.ego_lane, obs.ego_position).s;
        lane_heading = std::atan2(lane.dir.y, lane.dir.x);
        lane_length = lane.length;
    }

    for (const auto& v : obs.vehicles) {
        auto it = ctx.actions.find(v.id);
        const std::string action = action_symbol(it == ctx.actions.end() ? behavior::Category::LaneFollow : it->second);
        std::vector<Value> args{F, num(v.id), sym(action), num(v.velocity.x), num(v.velocity.y), num(v.heading)};
        push_box(args, v.box);
        fact("vehicle", std::move(args));
    }

    for (const auto& n : map.nodes()) {
        if (box_distance(n.box, obs.ego_position) > kObstacleLookahead) continue;
        std::vector<Value> args{F, num(n.id)};
        push_box(args, n.box);
        fact("intersection", std::move(args));
    }

    std::optional<double> line_distance;
    if (lane_known) {
        sim::VehicleState ego;
        ego.id = obs.ego_id;
        ego.position = obs.ego_position;
        ego.heading = obs.ego_heading;
        ego.lane_id = obs.ego_lane;
        const auto a = sim::approach_of(map, sim::Frame{}, ego);
        if (a && a->signalized && a->line_distance >= 0.0 && a->line_distance <= kNearbyIntersection) {
            fact("nearby_intersection", {F, num(a->intersection), num(a->line_distance)});
            line_distance = a->line_distance;
        }
        const int link = map.lane(obs.ego_lane).link;
        for (const auto& v : obs.vehicles) {
            if (map.node_at(v.position)) continue;
            if (std::abs(deg(angle_diff(v.heading, lane_heading))) > kAlignedHeading) continue;
            for (const auto& lane : map.lanes()) {
                if (lane.link != link) continue;
                const auto c = map.project(lane.id, v.position);
                const double d = c.s - s_ego;
                if (std::abs(c.lateral) > half_lane || d <= 0.0 || d > kObstacleLookahead || c.s > lane_length) continue;
                fact("ahead_on_approach", {F, num(v.id), num(lane.index), num(d)});
                if (lane.id == obs.ego_lane) fact("ahead_in_lane", {F, num(v.id), num(d)});
                break;
            }
        }
    }

    for (const auto& o : obs.obstacles) {
        std::vector<Value> args{F, num(o.id), sym(std::string(sim::to_string(o.kind)))};
        push_box(args, o.box);
        fact("obstacle_detected", std::move(args));
        if (!lane_known) continue;
        const auto c = map.project(obs.ego_lane, o.box.center());
        const double d = c.s - s_ego;
        if (std::abs(c.lateral) <= half_lane && d > 0.0 && d <= kObstacleLookahead) fact("obstacle_in_lane_ahead", {F, num(o.id), num(d)});
    }

    if (obs.light_in_view) {
        fact("light_detected", {F});
        fact("baseline_light", {F, sym(obs.light_says_red() ? "red" : "green")});
    }

    for (const auto& c : clusters) {
        const Value FS = num(c.frame_start), FE = num(c.frame_end), A = sym(action_symbol(c.category));
        std::vector<Value> args{FS, FE, A, sym(c.ego_member ? "true" : "false")};
        push_box(args, c.box);
        fact("change_action_cluster", std::move(args));

        for (const auto& n : map.nodes())
            if (n.signalized && c.box.overlaps(n.box.inflated(kJunctionMargin))) fact("junction_cluster", {F, FS, FE, A, num(n.id)});

        if (c.category == behavior::Category::Straight) {
            const double rel = std::abs(deg(angle_diff(c.heading, obs.ego_heading)));
            for (const auto& n : map.nodes()) {
                if (!n.signalized || !c.box.overlaps(n.box.inflated(kJunctionMargin))) continue;
                if (std::abs(rel - 90.0) <= kCrossingBand) fact("crossing_cluster", {F, FS, FE, num(n.id)});
                if (rel <= kCodirectional) fact("codirectional_cluster", {F, FS, FE, num(n.id)});
                if (c.ego_member) fact("ego_cluster_at", {F, FS, FE, num(n.id)});
            }
        }
        if (!is_lane_change(c.category)) continue;
        for (const auto& n : map.nodes())
            if (box_distance(n.box, c.box) <= kClusterIntersectionRadius) {
                fact("cluster_near_intersection", {FS, FE, A});
                break;
            }
        const Box region = swept(c.box, c.heading, kRegionReach, half_lane);
        std::vector<Value> rargs{FS, FE, A};
        push_box(rargs, region);
        fact("cluster_region", std::move(rargs));
        for (const auto& o : obs.obstacles)
            if (region.overlaps(o.box)) fact("obstacle_in_region", {FS, FE, A, num(o.id)});
        if (lane_known) {
            const auto p = map.project(obs.ego_lane, c.box.center());
            const double d = p.s - s_ego;
            if (std::abs(p.lateral) <= half_lane && p.s >= 0.0 && p.s <= lane_length && d >= -kPathBehind && d <= kPathAhead)
                fact("cluster_in_path", {F, FS, FE, A});
        }
    }

    if (ctx.green_elapsed) fact("green_elapsed", {F, num(*ctx.green_elapsed)});
    return fb;
}

Rulebase load_rulebase(const std::string& name, const std::string& text) {
    return {name, rules::stratify(rules::parse_rules(text))};
}

Rulebase load_rulebase_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read rules file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return load_rulebase(path, ss.str());
    } catch (const rules::SyntaxError& e) {
        throw rules::SyntaxError(path + ": " + e.what(), e.line(), e.column());
    }
}

const std::string& traffic_light_rules_text() { return detail::kTrafficLightRules; }
const std::string& obstacle_rules_text() { return detail::kObstacleRules; }

const Rulebase& traffic_light_rules() {
    static const Rulebase rb = load_rulebase("traffic_light.rules", detail::kTrafficLightRules);
    return rb;
}

const Rulebase& obstacle_rules() {
    static const Rulebase rb = load_rulebase("obstacle.rules", detail::kObstacleRules);
    return rb;
}

bool logic_applicable(const FactBase& fb, const ProtocolConfig& protocol) {
    std::set<Value> approached, active;
    for (const auto& a : fb.facts) {
        if (!frame_arg_is(a, fb.frame)) continue;
        if (a.predicate == "nearby_intersection" && a.args.size() == 3) approached.insert(a.args[1]);
        else if (a.predicate == "junction_cluster" && a.args.size() == 5 && a.args[2].as_double() + kClusterLive >= fb.frame)
            active.insert(a.args[4]);
        else if (a.predicate == "green_elapsed" && a.args.size() == 2 && a.args[1].numeric() &&
                 a.args[1].as_double() < protocol.grace_period)
            return false;
    }
    for (const auto& i : approached)
        if (active.count(i)) return true;
    return false;
}

bool obstacle_logic_applicable(const FactBase& fb) {
    for (const auto& a : fb.facts) {
        if (a.predicate != "cluster_in_path" || a.args.size() != 4 || !frame_arg_is(a, fb.frame)) continue;
        const std::string& action = a.args[3].symbol;
        if (action != "change_lane_left" && action != "change_lane_right") continue;
        if (a.args[1].as_double() <= fb.frame && fb.frame <= a.args[2].as_double()) return true;
    }
    return false;
}

LightVerdict logic_light_verdict(const FactBase& fb, const Rulebase& rules, const ProtocolConfig& protocol) {
    LightVerdict v;
    v.frame = fb.frame;
    v.applicable = logic_applicable(fb, protocol);
    const auto model = rules::evaluate(rules.program, fb.facts);
    const Atom red{"red_traffic_light", {Value::num(static_cast<std::int64_t>(fb.frame))}};
    const Atom green{"consistent_intersection", {Value::num(static_cast<std::int64_t>(fb.frame))}};
    if (model.contains(red)) {
        v.red = true;
        v.derivation = rules::explain(model, red);
    } else if (model.contains(green)) {
        v.derivation = rules::explain(model, green);
    }
    return v;
}

ObstacleVerdict logic_obstacle_verdict(const FactBase& fb, const Rulebase& rules) {
    ObstacleVerdict v;
    v.frame = fb.frame;
    v.applicable = obstacle_logic_applicable(fb);
    const auto model = rules::evaluate(rules.program, fb.facts);
    const Atom ahead{"obstacle_ahead", {Value::num(static_cast<std::int64_t>(fb.frame))}};
    if (!model.contains(ahead)) return v;
    v.obstacle = true;
    v.derivation = rules::explain(model, ahead);
    for (const auto& row : model.rows("undetected_obstacle", 5))
        if (row[0] == ahead.args[0]) {
            v.location = Box{row[1].as_double(), row[2].as_double(), row[3].as_double(), row[4].as_double()};
            break;
        }
    return v;
}

} // namespace csav::bridge
