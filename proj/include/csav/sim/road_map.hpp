#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "csav/geometry.hpp"
#include "csav/sim/config.hpp"

namespace csav::sim {

// Direction of travel along a link.
enum class Direction { East = 0, North = 1, West = 2, South = 3 };

std::string_view to_string(Direction d);
Direction direction_from(std::string_view s);
double heading_of(Direction d);

enum class Turn { Straight, Left, Right };

struct Node {
    int id = 0;
    int gx = 0, gy = 0;
    Vec2 position;
    Box box;
    bool signalized = false;
    std::array<int, 4> out_links{-1, -1, -1, -1}; // indexed by Direction
};

struct Link {
    int id = 0;
    int from_node = 0;
    int to_node = 0;
    Direction dir = Direction::East;
    double length = 0.0; // box edge to box edge
};

struct Lane {
    int id = 0;
    int link = 0;
    int index = 0; // 0 = innermost (next to the centre line)
    Vec2 start;
    Vec2 dir;
    double length = 0.0;
};

struct Pose {
    Vec2 position;
    double heading = 0.0;
};

// Path through a junction from lane `index` of in_link to the same index of out_link.
struct Connector {
    int in_link = -1;
    int out_link = -1;
    int lane_index = 0;
    Turn turn = Turn::Straight;
    double length = 0.0;
};

struct LaneCoord {
    double s = 0.0;       // along the lane from its start
    double lateral = 0.0; // positive = left of the lane centre
};

enum class SurfaceClass { Vehicle = 0, Drivable = 1, LaneMarking = 2, Other = 3 };

class RoadMap {
public:
    explicit RoadMap(const MapDescriptor& desc);

    const MapDescriptor& descriptor() const { return desc_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<Link>& links() const { return links_; }
    const std::vector<Lane>& lanes() const { return lanes_; }
    const Node& node(int id) const { return nodes_.at(id); }
    const Link& link(int id) const { return links_.at(id); }
    const Lane& lane(int id) const { return lanes_.at(id); }
    int lane_id(int link, int index) const { return link * desc_.lanes_per_direction + index; }
    double half_road_width() const { return desc_.lanes_per_direction * desc_.lane_width; }

    // Link leaving the to-node of `link` for the given turn, or -1.
    int out_link(int link, Turn turn) const;
    std::vector<Turn> available_turns(int link) const;
    Connector connector(int in_link, Turn turn, int lane_index) const;
    Pose connector_pose(const Connector& c, double s) const;
    Pose lane_pose(int lane_id, double s, double lateral = 0.0) const;
    LaneCoord project(int lane_id, Vec2 p) const;

    // Id of the junction whose box contains p, if any.
    std::optional<int> node_at(Vec2 p) const;
    // Road surface class of a world point, ignoring vehicles.
    SurfaceClass surface_at(Vec2 p) const;

    // Number of vehicle slots of length `slot` over all lanes (or only the given links).
    long slot_capacity(double slot, const std::vector<int>& links = {}) const;

private:
    MapDescriptor desc_;
    std::vector<Node> nodes_;
    std::vector<Link> links_;
    std::vector<Lane> lanes_;
};

} // namespace csav::sim
