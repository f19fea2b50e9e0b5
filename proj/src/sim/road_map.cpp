#include "csav/sim/road_map.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "csav/error.hpp"

namespace csav::sim {

namespace {

constexpr std::array<Vec2, 4> kDirVec{Vec2{1, 0}, Vec2{0, 1}, Vec2{-1, 0}, Vec2{0, -1}};
constexpr double kMarkingHalfWidth = 0.3;

Vec2 dir_vec(Direction d) { return kDirVec[static_cast<int>(d)]; }

Direction turn_dir(Direction d, Turn t) {
    const int i = static_cast<int>(d);
    switch (t) {
    case Turn::Left: return static_cast<Direction>((i + 1) % 4);
    case Turn::Right: return static_cast<Direction>((i + 3) % 4);
    case Turn::Straight: break;
    }
    return d;
}

} // namespace

std::string_view to_string(Direction d) {
    switch (d) {
    case Direction::East: return "east";
    case Direction::North: return "north";
    case Direction::West: return "west";
    case Direction::South: return "south";
    }
    return "east";
}

Direction direction_from(std::string_view s) {
    if (s == "east") return Direction::East;
    if (s == "north") return Direction::North;
    if (s == "west") return Direction::West;
    if (s == "south") return Direction::South;
    throw FormatError("unknown direction '" + std::string(s) + "'");
}

double heading_of(Direction d) { return static_cast<int>(d) * std::numbers::pi / 2.0; }

RoadMap::RoadMap(const MapDescriptor& desc) : desc_(desc) {
    if (desc.blocks_x < 1 || desc.blocks_y < 1 || desc.lanes_per_direction < 1 || desc.lane_width <= 0)
        throw ConfigError("invalid map descriptor");
    const double hw = half_road_width();
    if (desc.block_length <= 2.0 * hw + 1.0) throw ConfigError("invalid map descriptor: block_length too short");

    const int nx = desc.blocks_x + 1, ny = desc.blocks_y + 1;
    for (int gy = 0; gy < ny; ++gy) {
        for (int gx = 0; gx < nx; ++gx) {
            Node n;
            n.id = static_cast<int>(nodes_.size());
            n.gx = gx;
            n.gy = gy;
            n.position = {gx * desc.block_length, gy * desc.block_length};
            n.box = {n.position.x - hw, n.position.y - hw, n.position.x + hw, n.position.y + hw};
            nodes_.push_back(n);
        }
    }
    auto node_at_grid = [&](int gx, int gy) -> int {
        if (gx < 0 || gy < 0 || gx >= nx || gy >= ny) return -1;
        return gy * nx + gx;
    };
    for (auto& n : nodes_) {
        int degree = 0;
        for (int d = 0; d < 4; ++d) {
            const Vec2 u = kDirVec[d];
            const int to = node_at_grid(n.gx + static_cast<int>(u.x), n.gy + static_cast<int>(u.y));
            if (to < 0) continue;
            ++degree;
            Link l;
            l.id = static_cast<int>(links_.size());
            l.from_node = n.id;
            l.to_node = to;
            l.dir = static_cast<Direction>(d);
            l.length = desc.block_length - 2.0 * hw;
            n.out_links[d] = l.id;
            links_.push_back(l);
        }
        n.signalized = degree >= 3;
    }
    for (const auto& l : links_) {
        const Vec2 u = dir_vec(l.dir);
        const Vec2 right = left_normal(u) * -1.0;
        for (int k = 0; k < desc.lanes_per_direction; ++k) {
            Lane lane;
            lane.id = lane_id(l.id, k);
            lane.link = l.id;
            lane.index = k;
            lane.dir = u;
            lane.length = l.length;
            lane.start = nodes_[l.from_node].position + u * hw + right * ((k + 0.5) * desc.lane_width);
            lanes_.push_back(lane);
        }
    }
}

int RoadMap::out_link(int link_id, Turn turn) const {
    const Link& l = link(link_id);
    return nodes_[l.to_node].out_links[static_cast<int>(turn_dir(l.dir, turn))];
}

std::vector<Turn> RoadMap::available_turns(int link_id) const {
    std::vector<Turn> out;
    for (Turn t : {Turn::Straight, Turn::Left, Turn::Right})
        if (out_link(link_id, t) >= 0) out.push_back(t);
    return out;
}

Connector RoadMap::connector(int in_link, Turn turn, int lane_index) const {
    Connector c;
    c.in_link = in_link;
    c.out_link = out_link(in_link, turn);
    if (c.out_link < 0) throw Error("no connector for requested turn");
    c.lane_index = lane_index;
    c.turn = turn;
    const double hw = half_road_width();
    const double off = (lane_index + 0.5) * desc_.lane_width;
    switch (turn) {
    case Turn::Straight: c.length = 2.0 * hw; break;
    case Turn::Left: c.length = (hw + off) * std::numbers::pi / 2.0; break;
    case Turn::Right: c.length = (hw - off) * std::numbers::pi / 2.0; break;
    }
    return c;
}

Pose RoadMap::connector_pose(const Connector& c, double s) const {
    const Link& in = link(c.in_link);
    const Vec2 o = nodes_[in.to_node].position;
    const Vec2 u = dir_vec(in.dir);
    const Vec2 nl = left_normal(u);
    const double h = heading_of(in.dir);
    const double hw = half_road_width();
    const double off = (c.lane_index + 0.5) * desc_.lane_width;
    s = std::clamp(s, 0.0, c.length);
    switch (c.turn) {
    case Turn::Straight: {
        const Vec2 entry = o - u * hw - nl * off;
        return {entry + u * s, h};
    }
    case Turn::Left: {
        const double r = hw + off;
        const double th = s / r;
        const Vec2 center = o - u * hw + nl * hw;
        return {center + (nl * -std::cos(th) + u * std::sin(th)) * r, wrap_angle(h + th)};
    }
    case Turn::Right: {
        const double r = hw - off;
        const double th = s / r;
        const Vec2 center = o - u * hw - nl * hw;
        return {center + (nl * std::cos(th) + u * std::sin(th)) * r, wrap_angle(h - th)};
    }
    }
    return {o, h};
}

Pose RoadMap::lane_pose(int id, double s, double lateral) const {
    const Lane& l = lane(id);
    return {l.start + l.dir * s + left_normal(l.dir) * lateral, std::atan2(l.dir.y, l.dir.x)};
}

LaneCoord RoadMap::project(int id, Vec2 p) const {
    const Lane& l = lane(id);
    const Vec2 d = p - l.start;
    return {dot(d, l.dir), dot(d, left_normal(l.dir))};
}

std::optional<int> RoadMap::node_at(Vec2 p) const {
    const double pitch = desc_.block_length;
    const int gx = static_cast<int>(std::lround(p.x / pitch));
    const int gy = static_cast<int>(std::lround(p.y / pitch));
    if (gx < 0 || gy < 0 || gx > desc_.blocks_x || gy > desc_.blocks_y) return std::nullopt;
    const Node& n = nodes_[gy * (desc_.blocks_x + 1) + gx];
    if (n.box.contains(p)) return n.id;
    return std::nullopt;
}

SurfaceClass RoadMap::surface_at(Vec2 p) const {
    const double pitch = desc_.block_length;
    const double hw = half_road_width();
    const double w = desc_.lane_width;
    if (node_at(p)) return SurfaceClass::Drivable;

    const double xmax = desc_.blocks_x * pitch, ymax = desc_.blocks_y * pitch;
    auto band = [&](double along, double across, double along_max, int across_count) -> std::optional<double> {
        if (along < -hw || along > along_max + hw) return std::nullopt;
        const int g = static_cast<int>(std::lround(across / pitch));
        if (g < 0 || g > across_count) return std::nullopt;
        const double d = across - g * pitch;
        if (std::abs(d) > hw) return std::nullopt;
        return d;
    };
    std::optional<double> offset = band(p.x, p.y, xmax, desc_.blocks_y);
    if (!offset) offset = band(p.y, p.x, ymax, desc_.blocks_x);
    if (!offset) return SurfaceClass::Other;
    const double m = *offset / w;
    if (std::abs(m - std::round(m)) * w <= kMarkingHalfWidth) return SurfaceClass::LaneMarking;
    return SurfaceClass::Drivable;
}

long RoadMap::slot_capacity(double slot, const std::vector<int>& only_links) const {
    long total = 0;
    for (const auto& l : lanes_) {
        if (!only_links.empty() && std::find(only_links.begin(), only_links.end(), l.link) == only_links.end()) continue;
        total += static_cast<long>(std::floor(l.length / slot));
    }
    return total;
}

} // namespace csav::sim
