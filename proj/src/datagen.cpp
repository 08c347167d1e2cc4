#include "ccdiff/datagen.hpp"

#include <algorithm>
#include <cmath>

#include "ccdiff/causal.hpp"
#include "ccdiff/dynamics.hpp"
#include "ccdiff/errors.hpp"

namespace ccdiff {

MapLayout layout_from_name(const std::string& name) {
    if (name == "straight") return MapLayout::Straight;
    if (name == "t_junction") return MapLayout::TJunction;
    if (name == "crossroads") return MapLayout::Crossroads;
    throw CcdiffError(ErrorCode::BadConfig, "unknown layout '" + name + "'");
}

const char* layout_name(MapLayout l) {
    switch (l) {
        case MapLayout::Straight: return "straight";
        case MapLayout::TJunction: return "t_junction";
        case MapLayout::Crossroads: return "crossroads";
    }
    return "?";
}

namespace {

using Polyline = std::vector<std::array<double, 2>>;

Polyline straight_line(double x0, double y0, double x1, double y1, double step = 4.0) {
    Polyline p;
    const double len = std::hypot(x1 - x0, y1 - y0);
    const int segs = std::max(1, static_cast<int>(len / step));
    for (int i = 0; i <= segs; ++i) {
        const double t = static_cast<double>(i) / segs;
        p.push_back({x0 + t * (x1 - x0), y0 + t * (y1 - y0)});
    }
    return p;
}

// Arc from (x0, y0) heading a0 turning by da; the center sits perpendicular to the
// heading on the turn side.
Polyline arc(double x0, double y0, double a0, double radius, double da, int segs = 8) {
    Polyline p;
    const double side = da > 0 ? 1.0 : -1.0;
    const double ccx = x0 - side * radius * std::sin(a0);
    const double ccy = y0 + side * radius * std::cos(a0);
    const double start = std::atan2(y0 - ccy, x0 - ccx);
    for (int i = 0; i <= segs; ++i) {
        const double a = start + da * i / segs;
        p.push_back({ccx + radius * std::cos(a), ccy + radius * std::sin(a)});
    }
    return p;
}

void fill_band_horizontal(MapModel& m, double cy, double half) {
    for (int iy = 0; iy < m.height; ++iy) {
        const double y = m.origin_y + (iy + 0.5) * m.resolution;
        if (std::fabs(y - cy) > half) continue;
        for (int ix = 0; ix < m.width; ++ix)
            m.drivable[static_cast<size_t>(iy) * m.width + ix] = 1;
    }
}

void fill_band_vertical(MapModel& m, double cx, double half, double y_min, double y_max) {
    for (int iy = 0; iy < m.height; ++iy) {
        const double y = m.origin_y + (iy + 0.5) * m.resolution;
        if (y < y_min || y > y_max) continue;
        for (int ix = 0; ix < m.width; ++ix) {
            const double x = m.origin_x + (ix + 0.5) * m.resolution;
            if (std::fabs(x - cx) <= half)
                m.drivable[static_cast<size_t>(iy) * m.width + ix] = 1;
        }
    }
}

}  // namespace

// Opposing centerlines sit a full lane width either side of the road axis so the
// conservative disc footprints (radius ~2.5 m for a default car) clear each other.
MapModel make_map(MapLayout layout, double lane_width, double extent, double resolution) {
    MapModel m;
    m.resolution = resolution;
    const double w = lane_width;
    const double half_band = 2.0 * w;
    const double margin = 2.0;

    if (layout == MapLayout::Straight) {
        m.origin_x = 0.0;
        m.origin_y = -4.0 * w;
        m.width = static_cast<int>(std::ceil(extent / resolution));
        m.height = static_cast<int>(std::ceil(8.0 * w / resolution));
        m.drivable.assign(static_cast<size_t>(m.width) * m.height, 0);
        fill_band_horizontal(m, 0.0, half_band);
        m.lanes.push_back(straight_line(margin, -w, extent - margin, -w));
        m.lanes.push_back(straight_line(extent - margin, w, margin, w));
        return m;
    }

    m.origin_x = 0.0;
    m.origin_y = 0.0;
    m.width = static_cast<int>(std::ceil(extent / resolution));
    m.height = m.width;
    m.drivable.assign(static_cast<size_t>(m.width) * m.height, 0);
    const double c = extent / 2.0;

    if (layout == MapLayout::Crossroads) {
        fill_band_horizontal(m, c, half_band);
        fill_band_vertical(m, c, half_band, 0.0, extent);
        m.lanes.push_back(straight_line(margin, c - w, extent - margin, c - w));
        m.lanes.push_back(straight_line(extent - margin, c + w, margin, c + w));
        m.lanes.push_back(straight_line(c + w, margin, c + w, extent - margin));
        m.lanes.push_back(straight_line(c - w, extent - margin, c - w, margin));
        return m;
    }

    // T junction: through road plus a stem from the south merging east.
    fill_band_horizontal(m, c, half_band);
    fill_band_vertical(m, c, half_band, 0.0, c);
    m.lanes.push_back(straight_line(margin, c - w, extent - margin, c - w));
    m.lanes.push_back(straight_line(extent - margin, c + w, margin, c + w));
    {
        const double sx = c + w;
        const double turn_r = 3.0;
        Polyline stem = straight_line(sx, margin, sx, c - w - turn_r);
        Polyline turn = arc(sx, c - w - turn_r, kPi / 2, turn_r, -kPi / 2);
        Polyline east = straight_line(sx + turn_r, c - w, extent - margin, c - w);
        stem.insert(stem.end(), turn.begin() + 1, turn.end());
        stem.insert(stem.end(), east.begin() + 1, east.end());
        m.lanes.push_back(stem);
    }
    return m;
}

namespace {

// Arc-length parameterized lane.
struct LanePath {
    Polyline pts;
    std::vector<double> cum;  // cumulative length at each point

    explicit LanePath(const Polyline& p) : pts(p), cum(p.size(), 0.0) {
        for (size_t i = 1; i < pts.size(); ++i)
            cum[i] = cum[i - 1] +
                     std::hypot(pts[i][0] - pts[i - 1][0], pts[i][1] - pts[i - 1][1]);
    }

    double length() const { return cum.back(); }

    void at(double s, double* x, double* y, double* heading) const {
        s = std::clamp(s, 0.0, length());
        size_t i = 1;
        while (i + 1 < pts.size() && cum[i] < s) ++i;
        const double seg = cum[i] - cum[i - 1];
        const double t = seg > 0.0 ? (s - cum[i - 1]) / seg : 0.0;
        *x = pts[i - 1][0] + t * (pts[i][0] - pts[i - 1][0]);
        *y = pts[i - 1][1] + t * (pts[i][1] - pts[i - 1][1]);
        *heading = std::atan2(pts[i][1] - pts[i - 1][1], pts[i][0] - pts[i - 1][0]);
    }

    double project(double x, double y) const {
        double best_d = 1e300, best_s = 0.0;
        for (size_t i = 1; i < pts.size(); ++i) {
            const double ax = pts[i - 1][0], ay = pts[i - 1][1];
            const double ux = pts[i][0] - ax, uy = pts[i][1] - ay;
            const double len_sq = ux * ux + uy * uy;
            double t = len_sq > 0.0 ? ((x - ax) * ux + (y - ay) * uy) / len_sq : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double px = ax + t * ux, py = ay + t * uy;
            const double d = std::hypot(x - px, y - py);
            if (d < best_d) {
                best_d = d;
                best_s = cum[i - 1] + t * std::sqrt(len_sq);
            }
        }
        return best_s;
    }
};

struct RuleAgent {
    AgentState state;
    int lane = 0;
    double s = 0.0;  // arc position
};

Action rule_policy(const RuleAgent& me, const std::vector<RuleAgent>& all, int self,
                   const LanePath& lane, const SceneGenConfig& cfg) {
    // car following: nearest leader ahead on the same lane within sense range
    double lead_gap = -1.0;
    for (size_t j = 0; j < all.size(); ++j) {
        if (static_cast<int>(j) == self || all[j].lane != me.lane) continue;
        const double ds = all[j].s - me.s;
        if (ds > 0.0 && ds <= cfg.sense_range && (lead_gap < 0.0 || ds < lead_gap))
            lead_gap = ds;
    }
    double accel = cfg.k_v * (cfg.v_des - me.state.speed);
    if (lead_gap >= 0.0) {
        const double gap = lead_gap - me.state.length;
        accel += cfg.k_g * (gap - cfg.gap_des);
    }

    // brake to a stop before the route runs out (comfortable 2 m/s^2 curve)
    const double remaining = lane.length() - me.s;
    const double v_allowed = std::sqrt(std::max(0.0, 2.0 * 2.0 * (remaining - 4.0)));
    if (me.state.speed > v_allowed) accel = std::min(accel, 2.0 * (v_allowed - me.state.speed));

    // yield to crossing traffic: lower id has right of way
    for (size_t j = 0; j < all.size(); ++j) {
        if (static_cast<int>(j) >= self || all[j].lane == me.lane) continue;
        const double ttc = compute_ttc(me.state, all[j].state);
        if (ttc <= 4.0) accel = std::min(accel, -2.0 * (4.0 - ttc));
    }

    // pure pursuit on the lane centerline; hold heading once the route is exhausted
    const double lookahead = std::max(3.0, 0.8 * me.state.speed);
    double yaw_rate = 0.0;
    if (me.s + lookahead < lane.length()) {
        double tx = 0.0, ty = 0.0, th = 0.0;
        lane.at(me.s + lookahead, &tx, &ty, &th);
        const double alpha =
            wrap_angle(std::atan2(ty - me.state.y, tx - me.state.x) - me.state.heading);
        yaw_rate = me.state.speed * 2.0 * std::sin(alpha) / lookahead;
    }

    return clamp_action({accel, yaw_rate}, cfg.bounds);
}

bool any_disc_overlap(const std::vector<RuleAgent>& agents) {
    for (size_t i = 0; i < agents.size(); ++i) {
        for (size_t j = i + 1; j < agents.size(); ++j) {
            const double r =
                footprint_radius(agents[i].state) + footprint_radius(agents[j].state);
            const double dx = agents[i].state.x - agents[j].state.x;
            const double dy = agents[i].state.y - agents[j].state.y;
            if (dx * dx + dy * dy <= r * r) return true;
        }
    }
    return false;
}

}  // namespace

GeneratedScene make_scene(const MapModel& map, const SceneGenConfig& cfg, Rng& rng) {
    if (map.lanes.empty()) throw CcdiffError(ErrorCode::BadParams, "map has no lanes");
    std::vector<LanePath> lanes;
    for (const auto& l : map.lanes) lanes.emplace_back(l);

    const int n = cfg.n_agents;
    const int total_steps = cfg.history_steps - 1 + cfg.future_steps;

    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        // placement
        std::vector<RuleAgent> agents;
        bool placed = true;
        for (int i = 0; i < n; ++i) {
            bool ok = false;
            for (int tries = 0; tries < 40 && !ok; ++tries) {
                RuleAgent a;
                a.lane = static_cast<int>(rng.uniform_int(0, static_cast<int>(lanes.size()) - 1));
                a.s = rng.uniform(5.0, std::max(6.0, lanes[a.lane].length() - 10.0));
                lanes[a.lane].at(a.s, &a.state.x, &a.state.y, &a.state.heading);
                a.state.speed = rng.uniform(0.5 * cfg.v_des, cfg.v_des);
                a.state.length = 4.5;
                a.state.width = 2.0;
                ok = true;
                for (const auto& other : agents) {
                    const double d = std::hypot(a.state.x - other.state.x,
                                                a.state.y - other.state.y);
                    if (d < footprint_radius(a.state) + footprint_radius(other.state) + 2.0)
                        ok = false;
                    if (other.lane == a.lane && std::fabs(other.s - a.s) < 10.0) ok = false;
                }
                if (ok) agents.push_back(a);
            }
            if (!ok) {
                placed = false;
                break;
            }
        }
        if (!placed) continue;

        // simulate the rule policy over history + future
        std::vector<std::vector<AgentState>> states(n);  // per agent, includes placement
        std::vector<std::vector<Action>> actions(n);
        for (int i = 0; i < n; ++i) states[i].push_back(agents[i].state);

        bool collided = false;
        for (int t = 0; t < total_steps && !collided; ++t) {
            std::vector<Action> acts(n);
            for (int i = 0; i < n; ++i)
                acts[i] = rule_policy(agents[i], agents, i, lanes[agents[i].lane], cfg);
            for (int i = 0; i < n; ++i) {
                agents[i].state = step_unicycle(agents[i].state, acts[i], cfg.dt, cfg.bounds);
                agents[i].s = lanes[agents[i].lane].project(agents[i].state.x, agents[i].state.y);
                states[i].push_back(agents[i].state);
                actions[i].push_back(acts[i]);
            }
            collided = any_disc_overlap(agents);
        }
        if (collided) continue;

        GeneratedScene out;
        out.scene.map = map;
        out.scene.dt = cfg.dt;
        out.scene.t0 = cfg.history_steps - 1;
        for (int i = 0; i < n; ++i) {
            AgentTrack track;
            track.id = i;
            track.history.assign(states[i].begin(), states[i].begin() + cfg.history_steps);
            out.scene.agents.push_back(std::move(track));
        }
        out.future = Trajectory(cfg.future_steps, n, cfg.dt);
        out.future.initial.resize(n);
        for (int i = 0; i < n; ++i) {
            out.future.initial[i] = states[i][cfg.history_steps - 1];
            for (int t = 0; t < cfg.future_steps; ++t) {
                out.future.state(t, i) = states[i][cfg.history_steps + t];
                out.future.action(t, i) = actions[i][cfg.history_steps - 1 + t];
            }
        }
        return out;
    }
    throw CcdiffError(ErrorCode::PlacementFailure,
                      "no collision-free layout after " + std::to_string(cfg.max_attempts) +
                          " attempts");
}

}  // namespace ccdiff
