#include "csav/sim/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "csav/error.hpp"

namespace csav::sim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLaneChangeRamp = policy::kLaneChangeDuration / 4.0;
constexpr double kLeaderLookahead = 120.0;

bool north_south(Direction d) { return d == Direction::North || d == Direction::South; }

Direction opposite(Direction d) { return static_cast<Direction>((static_cast<int>(d) + 2) % 4); }

double obstacle_length(ObstacleKind k) { return k == ObstacleKind::Animal ? 1.5 : kVehicleLength; }
double obstacle_width(ObstacleKind k) { return k == ObstacleKind::Animal ? 0.8 : kVehicleWidth; }

// Speed that keeps the constant time gap to a leader and can still brake
// comfortably behind it.
double follow_speed(double gap, double v_leader, double standstill) {
    const double free = gap - standstill;
    if (free <= 0.1) return 0.0;
    const double v = std::min(free / policy::kTimeGap, std::sqrt(2.0 * policy::kComfortDecel * free + v_leader * v_leader));
    // Close the last metres at walking pace instead of creeping asymptotically.
    return std::max(v, std::min(1.0, free));
}

// Trapezoidal lateral velocity: ramp up over tau, hold, ramp down over tau.
double lateral_speed(double t, double peak) {
    const double d = policy::kLaneChangeDuration, tau = kLaneChangeRamp;
    if (t <= 0.0 || t >= d) return 0.0;
    if (t < tau) return peak * t / tau;
    if (t > d - tau) return peak * (d - t) / tau;
    return peak;
}

double lateral_offset(double t, double peak) {
    const double d = policy::kLaneChangeDuration, tau = kLaneChangeRamp;
    t = std::clamp(t, 0.0, d);
    if (t < tau) return peak * t * t / (2.0 * tau);
    if (t <= d - tau) return peak * (tau / 2.0 + (t - tau));
    const double r = d - t;
    return peak * (d - tau) - peak * r * r / (2.0 * tau);
}

} // namespace

LightController::LightController(const RoadMap& map, const WorldConfig& cfg, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit01(0.0, 1.0);
    for (const auto& n : map.nodes()) {
        if (!n.signalized) continue;
        Program p;
        p.node = n.id;
        auto it = cfg.light_overrides.find(n.id);
        p.timings = it != cfg.light_overrides.end() ? it->second : cfg.light_timings;
        const LightTimings& tm = p.timings;
        p.offset = unit01(rng) * (tm.green_s + tm.yellow_s + tm.red_s);
        for (int d = 0; d < 4; ++d)
            if (n.out_links[d] >= 0) p.approaches.push_back(opposite(static_cast<Direction>(d)));
        std::sort(p.approaches.begin(), p.approaches.end());
        by_node_[n.id] = programs_.size();
        programs_.push_back(p);
    }
}

LightColor LightController::color(int node, Direction approach, double t) const {
    auto it = by_node_.find(node);
    if (it == by_node_.end()) return LightColor::Green;
    const Program& p = programs_[it->second];
    const LightTimings& tm = p.timings;
    const double cycle = tm.green_s + tm.yellow_s + tm.red_s;
    double tau = std::fmod(t + p.offset, cycle);
    if (tau < 0.0) tau += cycle;
    if (north_south(approach)) {
        if (tau < tm.green_s) return LightColor::Green;
        if (tau < tm.green_s + tm.yellow_s) return LightColor::Yellow;
        return LightColor::Red;
    }
    if (tau < tm.green_s + tm.yellow_s + tm.all_red_s) return LightColor::Red;
    if (tau < cycle - tm.yellow_s - tm.all_red_s) return LightColor::Green;
    if (tau < cycle - tm.all_red_s) return LightColor::Yellow;
    return LightColor::Red;
}

std::vector<LightState> LightController::states(double t) const {
    std::vector<LightState> out;
    for (const auto& p : programs_)
        for (Direction d : p.approaches) out.push_back({p.node, d, color(p.node, d, t)});
    return out;
}

World::World(WorldConfig cfg) : cfg_(std::move(cfg)), map_((validate(cfg_), cfg_.map)), rng_(cfg_.seed) {
    const int n_lanes = static_cast<int>(map_.lanes().size());
    for (std::size_t i = 0; i < cfg_.obstacles.size(); ++i) {
        const auto& o = cfg_.obstacles[i];
        if (o.lane_id < 0 || o.lane_id >= n_lanes)
            throw ConfigError("obstacles[" + std::to_string(i) + "].lane_id " + std::to_string(o.lane_id) + " does not exist");
        if (o.position < 0.0 || o.position > map_.lane(o.lane_id).length)
            throw ConfigError("obstacles[" + std::to_string(i) + "].position is off lane " + std::to_string(o.lane_id));
    }
    for (int l : cfg_.spawn_links)
        if (l < 0 || l >= static_cast<int>(map_.links().size()))
            throw ConfigError("spawn_links: link " + std::to_string(l) + " does not exist");
    if (cfg_.ego_start) {
        const auto& e = *cfg_.ego_start;
        if (e.lane_id < 0 || e.lane_id >= n_lanes) throw ConfigError("ego.lane_id " + std::to_string(e.lane_id) + " does not exist");
        if (e.position < 0.0 || e.position > map_.lane(e.lane_id).length) throw ConfigError("ego.position is off its lane");
    }

    const long capacity = map_.slot_capacity(policy::kSlotLength, cfg_.spawn_links);
    const long wanted = static_cast<long>(cfg_.npc_count) + 1;
    if (wanted > capacity)
        throw CapacityError("npc_count " + std::to_string(cfg_.npc_count) + " exceeds lane capacity of " +
                            std::to_string(capacity - 1) + " vehicles");

    lights_ = LightController(map_, cfg_, rng_);

    struct Slot {
        int lane;
        double s;
    };
    std::vector<Slot> free_slots;
    auto blocked = [&](int lane, double s) {
        for (const auto& o : cfg_.obstacles)
            if (o.lane_id == lane && std::abs(o.position - s) < policy::kSlotLength + obstacle_length(o.kind) / 2.0) return true;
        if (cfg_.ego_start && cfg_.ego_start->lane_id == lane && std::abs(cfg_.ego_start->position - s) < policy::kSlotLength)
            return true;
        return false;
    };
    for (const auto& lane : map_.lanes()) {
        if (!cfg_.spawn_links.empty() &&
            std::find(cfg_.spawn_links.begin(), cfg_.spawn_links.end(), lane.link) == cfg_.spawn_links.end())
            continue;
        const int slots = static_cast<int>(std::floor(lane.length / policy::kSlotLength));
        for (int i = 0; i < slots; ++i) {
            const double s = (i + 0.5) * policy::kSlotLength;
            if (!blocked(lane.id, s)) free_slots.push_back({lane.id, s});
        }
    }
    const long needed = static_cast<long>(cfg_.npc_count) + (cfg_.ego_start ? 0 : 1);
    if (needed > static_cast<long>(free_slots.size()))
        throw CapacityError("npc_count " + std::to_string(cfg_.npc_count) + " exceeds free lane slots (" +
                            std::to_string(free_slots.size()) + ") after obstacles");
    std::shuffle(free_slots.begin(), free_slots.end(), rng_);

    std::size_t next = 0;
    const int lanes_per = cfg_.map.lanes_per_direction;
    for (int id = 0; id <= cfg_.npc_count; ++id) {
        Agent a;
        a.id = id;
        a.ego = id == 0;
        int lane_id;
        if (a.ego && cfg_.ego_start) {
            lane_id = cfg_.ego_start->lane_id;
            a.s = cfg_.ego_start->position;
        } else {
            lane_id = free_slots[next].lane;
            a.s = free_slots[next].s;
            ++next;
        }
        a.link = lane_id / lanes_per;
        a.lane = lane_id % lanes_per;
        agents_.push_back(a);
    }
    for (auto& a : agents_) a.next_turn = choose_turn(a);

    frame_ = make_frame(0, 0.0);
}

Turn World::choose_turn(const Agent& a) {
    const auto turns = map_.available_turns(a.link);
    if (a.ego && cfg_.ego_turns == TurnPolicy::Straight &&
        std::find(turns.begin(), turns.end(), Turn::Straight) != turns.end())
        return Turn::Straight;
    const double p = cfg_.turn_probability;
    double total = 0.0;
    std::vector<double> w;
    for (Turn t : turns) {
        w.push_back(t == Turn::Straight ? 1.0 - 2.0 * p : p);
        total += w.back();
    }
    std::uniform_real_distribution<double> unit01(0.0, 1.0);
    double u = unit01(rng_) * total;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        if (u < w[i]) return turns[i];
        u -= w[i];
    }
    return turns.back();
}

World::Occupancy World::occupancy(double t) const {
    Occupancy occ;
    const double half = kVehicleLength / 2.0;
    for (std::size_t i = 0; i < agents_.size(); ++i) {
        const Agent& a = agents_[i];
        const int idx = static_cast<int>(i);
        if (a.in_connector) {
            occ[map_.lane_id(a.conn.out_link, a.lane)].push_back({a.s - a.conn.length, half, a.v, idx});
            if (a.s < kVehicleLength)
                occ[map_.lane_id(a.conn.in_link, a.lane)].push_back({map_.link(a.conn.in_link).length + a.s, half, a.v, idx});
        } else {
            occ[map_.lane_id(a.link, a.lane)].push_back({a.s, half, a.v, idx});
            if (a.changing) {
                const int other = a.lane == a.lc_to ? a.lc_from : a.lc_to;
                occ[map_.lane_id(a.link, other)].push_back({a.s, half, a.v, idx});
            }
        }
    }
    for (const auto& o : cfg_.obstacles)
        if (o.active_at(t)) occ[o.lane_id].push_back({o.position, obstacle_length(o.kind) / 2.0, 0.0, -1});
    return occ;
}

bool World::wants_line_stop(Agent& a, const Occupancy& occ, double t) {
    const Link& link = map_.link(a.link);
    const Node& node = map_.node(link.to_node);
    const double to_line = link.length - (a.s + kVehicleLength / 2.0);
    const bool can_stop = a.v * a.v / (2.0 * cfg_.max_accel) <= to_line - policy::kStopLineGap + 1e-9;

    if (node.signalized) {
        const LightColor c = lights_.color(node.id, link.dir, t);
        if (c == LightColor::Green) {
            a.plan = Agent::Plan::None;
        } else if (a.plan == Agent::Plan::None) {
            if (c == LightColor::Yellow) {
                a.plan = can_stop ? Agent::Plan::Stop : Agent::Plan::Go;
            } else if (!can_stop) {
                // Already too close when first seeing red: entered the link during all-red or yellow.
                a.plan = Agent::Plan::Go;
            } else {
                a.plan = Agent::Plan::Stop;
                if (!a.ego && cfg_.violation_rate > 0.0) {
                    std::uniform_real_distribution<double> unit01(0.0, 1.0);
                    if (unit01(rng_) < cfg_.violation_rate) a.plan = Agent::Plan::Go;
                }
            }
        }
        if (c != LightColor::Green && a.plan == Agent::Plan::Stop) return true;
    }

    // Do not block the junction: wait at the line until the exit lane has room.
    if (!can_stop) return false;
    const int out = map_.out_link(a.link, a.next_turn);
    auto it = occ.find(map_.lane_id(out, a.lane));
    if (it == occ.end()) return false;
    double rear_min = kInf;
    for (const auto& o : it->second) {
        if (o.agent >= 0 && &agents_[o.agent] == &a) continue;
        rear_min = std::min(rear_min, o.s - o.half_length);
    }
    return rear_min < kVehicleLength + policy::kStandstillGap;
}

double World::target_speed(Agent& a, const Occupancy& occ, double t) {
    double target = cfg_.max_speed;
    const double half = kVehicleLength / 2.0;
    const Agent* self = &a;

    auto nearest_gap = [&](int lane_id, double s_self, double offset) {
        double best = kInf, v_lead = 0.0;
        auto it = occ.find(lane_id);
        if (it == occ.end()) return std::pair{best, v_lead};
        for (const auto& o : it->second) {
            if (o.agent >= 0 && &agents_[o.agent] == self) continue;
            const double s_o = o.s + offset;
            if (s_o <= s_self) continue;
            const double gap = s_o - s_self - o.half_length - half;
            if (gap < best) {
                best = gap;
                v_lead = o.v;
            }
        }
        return std::pair{best, v_lead};
    };
    auto apply = [&](std::pair<double, double> g, double standstill) {
        if (g.first < kLeaderLookahead) target = std::min(target, follow_speed(g.first, g.second, standstill));
    };

    if (a.in_connector) {
        apply(nearest_gap(map_.lane_id(a.conn.out_link, a.lane), a.s - a.conn.length, 0.0), policy::kStandstillGap);
        return target;
    }

    const Link& link = map_.link(a.link);
    apply(nearest_gap(map_.lane_id(a.link, a.lane), a.s, 0.0), policy::kStandstillGap);
    if (a.changing) {
        const int other = a.lane == a.lc_to ? a.lc_from : a.lc_to;
        apply(nearest_gap(map_.lane_id(a.link, other), a.s, 0.0), policy::kStandstillGap);
    }

    if (wants_line_stop(a, occ, t)) {
        target = std::min(target, follow_speed(link.length - (a.s + half), 0.0, policy::kStopLineGap));
    } else if (!a.changing) {
        // Look through the junction onto the exit lane.
        const int out = map_.out_link(a.link, a.next_turn);
        const Connector c = map_.connector(a.link, a.next_turn, a.lane);
        apply(nearest_gap(map_.lane_id(out, a.lane), a.s, link.length + c.length), policy::kStandstillGap);
    }
    return target;
}

void World::maybe_start_lane_change(Agent& a, const Occupancy& occ, double t) {
    if (a.in_connector || a.changing) return;
    const int lanes = cfg_.map.lanes_per_direction;
    if (lanes < 2) return;
    const int here = map_.lane_id(a.link, a.lane);
    bool blocked = false;
    for (const auto& o : cfg_.obstacles) {
        if (!o.active_at(t) || o.lane_id != here) continue;
        const double ds = o.position - a.s;
        if (ds > 0.0 && ds <= policy::kLaneChangeTrigger) blocked = true;
    }
    if (!blocked) return;

    const Link& link = map_.link(a.link);
    if (link.length - a.s < a.v * policy::kLaneChangeDuration + kVehicleLength) return;
    for (int target : {a.lane - 1, a.lane + 1}) {
        if (target < 0 || target >= lanes) continue;
        const int tid = map_.lane_id(a.link, target);
        bool clear = true;
        auto it = occ.find(tid);
        if (it != occ.end()) {
            for (const auto& o : it->second) {
                const double ds = o.s - a.s;
                if (o.agent < 0 ? (ds > -5.0 && ds < 35.0) : (ds > -15.0 && ds < 12.0)) {
                    clear = false;
                    break;
                }
            }
        }
        if (!clear) continue;
        a.changing = true;
        a.lc_from = a.lane;
        a.lc_to = target;
        a.lc_t = 0.0;
        a.lc_switched = false;
        a.lateral = 0.0;
        a.lat_v = 0.0;
        return;
    }
}

Pose World::pose_of(const Agent& a) const {
    if (a.in_connector) return map_.connector_pose(a.conn, a.s);
    const int lid = map_.lane_id(a.link, a.lane);
    const Lane& lane = map_.lane(lid);
    Pose p = map_.lane_pose(lid, std::clamp(a.s, 0.0, lane.length), a.lateral);
    if (a.s > lane.length) p.position = p.position + lane.dir * (a.s - lane.length);
    if (a.changing) p.heading = wrap_angle(p.heading + std::atan2(a.lat_v, std::max(a.v, 5.0)));
    return p;
}

Maneuver World::maneuver(int vehicle_id) const {
    if (vehicle_id < 0 || vehicle_id >= static_cast<int>(agents_.size()))
        throw UnknownIdError("unknown vehicle id " + std::to_string(vehicle_id));
    const Agent& a = agents_[vehicle_id];
    if (a.in_connector) {
        switch (a.conn.turn) {
        case Turn::Straight: return Maneuver::Straight;
        case Turn::Left: return Maneuver::TurnLeft;
        case Turn::Right: return Maneuver::TurnRight;
        }
    }
    if (a.changing) return a.lc_to < a.lc_from ? Maneuver::ChangeLaneLeft : Maneuver::ChangeLaneRight;
    return Maneuver::LaneFollow;
}

const Frame& World::step() {
    const double dt = 1.0 / cfg_.tick_rate;
    const double t = index_ * dt;
    const Occupancy occ = occupancy(t);
    const double w = cfg_.map.lane_width;
    const double peak = w / (policy::kLaneChangeDuration - kLaneChangeRamp);
    const double dv_max = cfg_.max_accel * dt;

    std::vector<double> targets(agents_.size());
    for (std::size_t i = 0; i < agents_.size(); ++i) {
        maybe_start_lane_change(agents_[i], occ, t);
        targets[i] = target_speed(agents_[i], occ, t);
    }

    for (std::size_t i = 0; i < agents_.size(); ++i) {
        Agent& a = agents_[i];
        const double speed_before = std::hypot(a.v, a.lat_v);
        double v = a.v + std::clamp(targets[i] - a.v, -dv_max, dv_max);
        double lat_v = 0.0;
        if (a.changing) {
            a.lc_t += dt;
            lat_v = lateral_speed(a.lc_t, peak);
            // Keep the speed magnitude within the per-tick limit and the speed cap.
            const double cap = std::sqrt(std::max(0.0, cfg_.max_speed * cfg_.max_speed - lat_v * lat_v));
            v = std::min(v, cap);
            const double m = std::hypot(v, lat_v);
            if (m > speed_before + dv_max) {
                const double mt = speed_before + dv_max;
                v = std::sqrt(std::max(0.0, mt * mt - lat_v * lat_v));
            } else if (m < speed_before - dv_max) {
                const double mt = speed_before - dv_max;
                v = std::sqrt(std::max(0.0, mt * mt - lat_v * lat_v));
            }
        }
        a.v = std::max(0.0, v);
        a.s += a.v * dt;

        if (a.changing) {
            const double sign = a.lc_to < a.lc_from ? 1.0 : -1.0; // lower index lies to the left
            const double y = lateral_offset(a.lc_t, peak);
            a.lat_v = sign * lat_v;
            if (!a.lc_switched && y >= w / 2.0) {
                a.lane = a.lc_to;
                a.lc_switched = true;
            }
            a.lateral = sign * (a.lc_switched ? y - w : y);
            if (a.lc_t >= policy::kLaneChangeDuration - 1e-9) {
                a.changing = false;
                a.lane = a.lc_to;
                a.lateral = 0.0;
                a.lat_v = 0.0;
            }
        }

        if (!a.in_connector && a.s >= map_.link(a.link).length) {
            if (a.changing) {
                a.changing = false;
                a.lane = a.lc_to;
                a.lateral = 0.0;
                a.lat_v = 0.0;
            }
            a.s -= map_.link(a.link).length;
            a.conn = map_.connector(a.link, a.next_turn, a.lane);
            a.in_connector = true;
        }
        if (a.in_connector && a.s >= a.conn.length) {
            a.s -= a.conn.length;
            a.link = a.conn.out_link;
            a.in_connector = false;
            a.plan = Agent::Plan::None;
            a.next_turn = choose_turn(a);
        }
    }

    ++index_;
    frame_ = make_frame(index_, index_ * dt);
    return frame_;
}

Frame World::make_frame(int index, double t) const {
    Frame f;
    f.index = index;
    f.time = t;
    f.ego_id = 0;
    for (const auto& a : agents_) {
        const Pose p = pose_of(a);
        VehicleState v;
        v.id = a.id;
        v.position = p.position;
        v.heading = p.heading;
        const Vec2 u = a.in_connector ? unit(p.heading) : map_.lane(map_.lane_id(a.link, a.lane)).dir;
        v.velocity = u * a.v + left_normal(u) * a.lat_v;
        v.lane_id = a.in_connector ? map_.lane_id(a.conn.out_link, a.lane) : map_.lane_id(a.link, a.lane);
        v.box = oriented_bounds(p.position, p.heading, kVehicleLength, kVehicleWidth);
        f.vehicles.push_back(v);
    }
    f.lights = lights_.states(t);
    for (const auto& n : map_.nodes()) f.intersections.push_back(n.box);
    for (std::size_t i = 0; i < cfg_.obstacles.size(); ++i) {
        const auto& o = cfg_.obstacles[i];
        if (!o.active_at(t)) continue;
        const Pose p = map_.lane_pose(o.lane_id, o.position);
        f.obstacles.push_back({static_cast<int>(i), o.kind, o.lane_id,
                               oriented_bounds(p.position, p.heading, obstacle_length(o.kind), obstacle_width(o.kind))});
    }
    return f;
}

World build_world(const WorldConfig& cfg) { return World(cfg); }

Frame step(World& world) { return world.step(); }

Recording run_scenario(const WorldConfig& cfg) {
    Recording rec;
    rec.config = cfg;
    World world(cfg);
    const int n = cfg.frame_count();
    rec.frames.reserve(n);
    rec.frames.push_back(world.frame());
    while (static_cast<int>(rec.frames.size()) < n) rec.frames.push_back(world.step());
    return rec;
}

} // namespace csav::sim
