#include "csav/behavior/behavior.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>

#include "csav/error.hpp"

namespace csav::behavior {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr Category kAll[] = {Category::LaneFollow, Category::ChangeLaneLeft, Category::ChangeLaneRight,
                             Category::Straight,   Category::TurnLeft,       Category::TurnRight};

int box_index(const std::vector<Box>& boxes, Vec2 p) {
    for (std::size_t i = 0; i < boxes.size(); ++i)
        if (boxes[i].contains(p)) return static_cast<int>(i);
    return -1;
}

double circular_mean(const std::vector<double>& angles) {
    Vec2 s;
    for (double a : angles) s = s + unit(a);
    return std::atan2(s.y, s.x);
}

} // namespace

std::string_view to_string(Category c) {
    switch (c) {
    case Category::LaneFollow: return "LaneFollow";
    case Category::ChangeLaneLeft: return "ChangeLaneLeft";
    case Category::ChangeLaneRight: return "ChangeLaneRight";
    case Category::Straight: return "Straight";
    case Category::TurnLeft: return "TurnLeft";
    case Category::TurnRight: return "TurnRight";
    }
    return "LaneFollow";
}

Category category_from(std::string_view s) {
    for (Category c : kAll)
        if (to_string(c) == s) return c;
    throw FormatError("unknown behavior category '" + std::string(s) + "'");
}

std::vector<BehaviorEvent> label_behavior(int vehicle, const std::vector<TrackPoint>& track,
                                          const std::vector<Box>& intersections, double lane_width) {
    const int n = static_cast<int>(track.size());
    if (n < 2) throw Error("track of vehicle " + std::to_string(vehicle) + " has fewer than 2 frames");
    std::vector<int> inbox(n);
    for (int k = 0; k < n; ++k) inbox[k] = box_index(intersections, track[k].position);
    std::vector<Category> cat(n, Category::LaneFollow);

    for (int k = 0; k < n;) {
        if (inbox[k] < 0) {
            ++k;
            continue;
        }
        const int s = k;
        while (k + 1 < n && inbox[k + 1] >= 0) ++k;
        const int e = k++;
        const double before = track[s > 0 ? s - 1 : s].heading;
        const double after = track[e + 1 < n ? e + 1 : e].heading;
        const double turn = deg(angle_diff(after, before));
        const Category c = turn >= kTurnThreshold ? Category::TurnLeft : turn <= -kTurnThreshold ? Category::TurnRight : Category::Straight;
        std::fill(cat.begin() + s, cat.begin() + e + 1, c);
    }

    for (int k = 0; k < n;) {
        if (inbox[k] >= 0) {
            ++k;
            continue;
        }
        const int a = k;
        while (k + 1 < n && inbox[k + 1] < 0) ++k;
        const int b = k++;
        if (b == a) continue;
        std::vector<double> headings;
        for (int i = a; i <= b; ++i) headings.push_back(track[i].heading);
        const Vec2 left = left_normal(unit(circular_mean(headings)));
        std::vector<double> lat(n, 0.0), vlat(n, 0.0);
        for (int i = a; i <= b; ++i) lat[i] = dot(track[i].position, left);
        for (int i = a + 1; i <= b; ++i) {
            const double dt = track[i].time - track[i - 1].time;
            vlat[i] = dt > 0.0 ? (lat[i] - lat[i - 1]) / dt : 0.0;
        }
        for (int i = a + 1; i <= b; ++i) {
            if (track[i].lane_id == track[i - 1].lane_id) continue;
            int lo = i, hi = i;
            while (lo - 1 > a && std::abs(vlat[lo - 1]) > kLateralSpeedOnset) --lo;
            while (hi + 1 <= b && std::abs(vlat[hi + 1]) > kLateralSpeedOnset) ++hi;
            const double shift = lat[hi] - lat[lo - 1];
            if (std::abs(shift) < kLaneChangeFraction * lane_width) continue;
            const Category c = shift > 0.0 ? Category::ChangeLaneLeft : Category::ChangeLaneRight;
            for (int j = lo; j <= hi; ++j)
                if (cat[j] == Category::LaneFollow) cat[j] = c;
        }
    }

    std::vector<BehaviorEvent> out;
    for (int k = 0; k < n;) {
        const int s = k;
        while (k + 1 < n && cat[k + 1] == cat[s]) ++k;
        const int e = k++;
        BehaviorEvent ev;
        ev.vehicle = vehicle;
        ev.category = cat[s];
        ev.start_frame = track[s].frame;
        ev.end_frame = track[e].frame;
        ev.start_time = track[s].time;
        ev.end_time = track[e].time;
        ev.start_location = track[s].position;
        ev.start_heading = track[s].heading;
        out.push_back(ev);
    }
    return out;
}

std::vector<TrackPoint> track_of(const sim::Recording& rec, int vehicle) {
    std::vector<TrackPoint> t;
    t.reserve(rec.frames.size());
    for (const auto& f : rec.frames) {
        const auto* v = f.find(vehicle);
        if (!v) continue;
        t.push_back({f.index, f.time, v->position, v->heading, v->lane_id});
    }
    return t;
}

std::vector<int> dbscan(const std::vector<Vec2>& points, double eps, int min_size) {
    if (!(eps > 0.0) || min_size < 1) throw Error("dbscan needs eps > 0 and min_size >= 1");
    const int n = static_cast<int>(points.size());
    auto key = [&](std::int64_t cx, std::int64_t cy) { return (cx << 32) ^ (cy & 0xffffffffLL); };
    auto cell = [&](double v) { return static_cast<std::int64_t>(std::floor(v / eps)); };
    std::unordered_map<std::int64_t, std::vector<int>> grid;
    for (int i = 0; i < n; ++i) grid[key(cell(points[i].x), cell(points[i].y))].push_back(i);

    const double eps2 = eps * eps;
    std::vector<std::vector<int>> nbr(n);
    for (int i = 0; i < n; ++i) {
        const std::int64_t cx = cell(points[i].x), cy = cell(points[i].y);
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy) {
                auto it = grid.find(key(cx + dx, cy + dy));
                if (it == grid.end()) continue;
                for (int j : it->second) {
                    const Vec2 d = points[i] - points[j];
                    if (d.x * d.x + d.y * d.y <= eps2) nbr[i].push_back(j);
                }
            }
        std::sort(nbr[i].begin(), nbr[i].end());
    }
    std::vector<char> core(n);
    for (int i = 0; i < n; ++i) core[i] = static_cast<int>(nbr[i].size()) >= min_size;

    std::vector<int> label(n, kNoise);
    int next = 0;
    std::vector<int> stack;
    for (int i = 0; i < n; ++i) {
        if (!core[i] || label[i] != kNoise) continue;
        const int id = next++;
        label[i] = id;
        stack.assign(1, i);
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            for (int q : nbr[p])
                if (core[q] && label[q] == kNoise) {
                    label[q] = id;
                    stack.push_back(q);
                }
        }
    }
    for (int i = 0; i < n; ++i) {
        if (core[i]) continue;
        for (int q : nbr[i])
            if (core[q] && (label[i] == kNoise || label[q] < label[i])) label[i] = label[q];
    }
    return label;
}

std::vector<BehaviorCluster> cluster_behaviors(const std::vector<BehaviorEvent>& events, int now_frame, double now_time,
                                               const ClusteringConfig& cfg, int ego_id) {
    if (!(cfg.window > 0.0) || !(cfg.eps > 0.0) || cfg.min_size < 1) throw Error("invalid clustering config");
    std::vector<BehaviorCluster> out;
    for (Category c : kAll) {
        std::vector<const BehaviorEvent*> sel;
        for (const auto& e : events)
            if (e.category == c && e.start_frame <= now_frame && e.start_time >= now_time - cfg.window - 1e-9) sel.push_back(&e);
        if (sel.empty()) continue;
        std::vector<Vec2> pts;
        for (const auto* e : sel) pts.push_back(e->start_location);
        const auto label = dbscan(pts, cfg.eps, cfg.min_size);
        const int count = label.empty() ? 0 : *std::max_element(label.begin(), label.end()) + 1;
        for (int id = 0; id < count; ++id) {
            BehaviorCluster cl;
            cl.category = c;
            std::set<int> members;
            std::vector<double> headings;
            bool first = true;
            for (std::size_t i = 0; i < sel.size(); ++i) {
                if (label[i] != id) continue;
                const auto& e = *sel[i];
                members.insert(e.vehicle);
                cl.events.push_back({e.vehicle, e.start_frame});
                headings.push_back(e.start_heading);
                const int end = std::min(e.end_frame, now_frame);
                if (first) {
                    cl.frame_start = e.start_frame;
                    cl.frame_end = end;
                    cl.box = {e.start_location.x, e.start_location.y, e.start_location.x, e.start_location.y};
                    first = false;
                } else {
                    cl.frame_start = std::min(cl.frame_start, e.start_frame);
                    cl.frame_end = std::max(cl.frame_end, end);
                    cl.box = expand(cl.box, e.start_location);
                }
            }
            if (static_cast<int>(members.size()) < cfg.min_size) continue;
            cl.members.assign(members.begin(), members.end());
            cl.ego_member = members.count(ego_id) > 0;
            cl.heading = circular_mean(headings);
            out.push_back(std::move(cl));
        }
    }
    return out;
}

std::vector<BehaviorCluster> detect_action_changes(const std::vector<BehaviorCluster>& clusters,
                                                   const std::vector<BehaviorEvent>& events) {
    // (vehicle, frame after the event) -> category of the event that precedes it.
    std::map<std::pair<int, int>, Category> before;
    for (const auto& e : events) before[{e.vehicle, e.end_frame + 1}] = e.category;
    std::vector<BehaviorCluster> out;
    for (const auto& c : clusters) {
        std::map<Category, int> votes;
        for (const auto& r : c.events) {
            auto it = before.find({r.vehicle, r.start_frame});
            ++votes[it == before.end() ? Category::LaneFollow : it->second];
        }
        Category dominant = Category::LaneFollow;
        int best = -1;
        for (const auto& [cat, n] : votes)
            if (n > best) {
                best = n;
                dominant = cat;
            }
        if (dominant != c.category) out.push_back(c);
    }
    return out;
}

std::vector<BehaviorCluster> deduplicate(const std::vector<BehaviorCluster>& clusters) {
    std::set<std::pair<Category, std::vector<int>>> seen;
    std::vector<BehaviorCluster> out;
    for (const auto& c : clusters)
        if (seen.insert({c.category, c.members}).second) out.push_back(c);
    return out;
}

std::vector<BehaviorEvent> label_recording(const sim::Recording& rec) {
    std::vector<BehaviorEvent> all;
    if (rec.frames.size() < 2) return all;
    const auto& first = rec.frames.front();
    for (const auto& v : first.vehicles) {
        const auto track = track_of(rec, v.id);
        if (track.size() < 2) continue;
        auto ev = label_behavior(v.id, track, first.intersections, rec.config.map.lane_width);
        all.insert(all.end(), ev.begin(), ev.end());
    }
    std::stable_sort(all.begin(), all.end(), [](const BehaviorEvent& a, const BehaviorEvent& b) { return a.start_frame < b.start_frame; });
    return all;
}

std::vector<std::vector<BehaviorCluster>> clusters_by_frame(const sim::Recording& rec, const ClusteringConfig& cfg,
                                                            double view_radius) {
    const auto events = label_recording(rec);
    std::vector<BehaviorEvent> seen;
    for (const auto& e : events) {
        const auto& f = rec.frames.at(e.start_frame);
        const auto& ego = f.ego();
        const Vec2 local = rotate(e.start_location - ego.position, -ego.heading);
        if (std::abs(local.x) <= view_radius && std::abs(local.y) <= view_radius) seen.push_back(e);
    }
    const int ego_id = rec.frames.empty() ? 0 : rec.frames.front().ego_id;
    std::vector<std::vector<BehaviorCluster>> out;
    out.reserve(rec.frames.size());
    std::size_t upto = 0;
    std::vector<BehaviorEvent> window;
    for (const auto& f : rec.frames) {
        while (upto < seen.size() && seen[upto].start_frame <= f.index) ++upto;
        window.clear();
        for (std::size_t i = 0; i < upto; ++i)
            if (seen[i].start_time >= f.time - cfg.window - 1e-9) window.push_back(seen[i]);
        out.push_back(detect_action_changes(cluster_behaviors(window, f.index, f.time, cfg, ego_id), events));
    }
    return out;
}

ordered_json to_json(const BehaviorCluster& c) {
    return ordered_json{{"category", to_string(c.category)},
                        {"members", c.members},
                        {"frame_start", c.frame_start},
                        {"frame_end", c.frame_end},
                        {"box", {c.box.x1, c.box.y1, c.box.x2, c.box.y2}},
                        {"ego_member", c.ego_member},
                        {"heading", c.heading}};
}

BehaviorCluster cluster_from_json(const json& j) {
    try {
        BehaviorCluster c;
        c.category = category_from(j.at("category").get<std::string>());
        c.members = j.at("members").get<std::vector<int>>();
        c.frame_start = j.at("frame_start").get<int>();
        c.frame_end = j.at("frame_end").get<int>();
        const auto& b = j.at("box");
        c.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
        c.ego_member = j.at("ego_member").get<bool>();
        c.heading = j.at("heading").get<double>();
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed cluster: ") + e.what());
    }
}

ordered_json to_json(const std::vector<BehaviorCluster>& cs) {
    ordered_json a = ordered_json::array();
    for (const auto& c : cs) a.push_back(to_json(c));
    return a;
}

std::vector<BehaviorCluster> clusters_from_json(const json& j) {
    if (!j.is_array()) throw FormatError("clusters must be an array");
    std::vector<BehaviorCluster> out;
    for (const auto& c : j) out.push_back(cluster_from_json(c));
    return out;
}

} // namespace csav::behavior
