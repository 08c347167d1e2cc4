#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "ccdiff/tensor.hpp"

namespace ccdiff {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Normalize an angle to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * kPi);
    if (a <= -kPi) a += 2.0 * kPi;
    return a;
}

struct AgentState {
    double x = 0.0;        // m
    double y = 0.0;        // m
    double heading = 0.0;  // rad, (-pi, pi]
    double speed = 0.0;    // m/s, >= 0
    double length = 4.5;   // m
    double width = 2.0;    // m

    double vx() const { return speed * std::cos(heading); }
    double vy() const { return speed * std::sin(heading); }
};

// Disc footprint used by every collision-style test in the pipeline.
inline double footprint_radius(const AgentState& s) { return 0.5 * std::hypot(s.length, s.width); }

struct Action {
    double accel = 0.0;     // m/s^2
    double yaw_rate = 0.0;  // rad/s
};

struct ActionBounds {
    double a_max = 6.0;  // m/s^2
    double r_max = 1.0;  // rad/s
    bool allow_reverse = false;
};

struct MapModel {
    double origin_x = 0.0;  // world coords of cell (0,0) corner, m
    double origin_y = 0.0;
    double resolution = 0.5;  // m per cell
    int width = 0;            // cells in x
    int height = 0;           // cells in y
    std::vector<uint8_t> drivable;  // row-major, rows indexed by y
    std::vector<std::vector<std::array<double, 2>>> lanes;  // centerline polylines

    bool cell_drivable(int ix, int iy) const {
        if (ix < 0 || iy < 0 || ix >= width || iy >= height) return false;
        return drivable[static_cast<size_t>(iy) * width + ix] != 0;
    }

    bool contains(double x, double y) const {
        return x >= origin_x && y >= origin_y && x < origin_x + width * resolution &&
               y < origin_y + height * resolution;
    }

    bool point_drivable(double x, double y) const {
        const int ix = static_cast<int>(std::floor((x - origin_x) / resolution));
        const int iy = static_cast<int>(std::floor((y - origin_y) / resolution));
        return cell_drivable(ix, iy);
    }
};

struct AgentTrack {
    int id = 0;
    std::vector<AgentState> history;  // oldest first, last entry = current state
};

struct Scene {
    MapModel map;
    std::vector<AgentTrack> agents;
    double dt = 0.1;  // s
    int t0 = 0;       // step index of the last history entry

    int num_agents() const { return static_cast<int>(agents.size()); }
    int history_len() const { return agents.empty() ? 0 : static_cast<int>(agents[0].history.size()); }

    const AgentState& current(int i) const { return agents[i].history.back(); }

    std::vector<AgentState> current_states() const {
        std::vector<AgentState> s;
        s.reserve(agents.size());
        for (const auto& a : agents) s.push_back(a.history.back());
        return s;
    }
};

// Generated motion. states[t] is the state reached after applying actions[0..t] to
// initial (the scene state at generation time); actions are stored post-clamp so the
// whole sequence replays exactly through step_unicycle.
struct Trajectory {
    int T = 0, N = 0;
    std::vector<AgentState> initial;  // [N]
    std::vector<AgentState> states;   // [T][N]
    std::vector<Action> actions;      // [T][N]
    double dt = 0.1;

    Trajectory() = default;
    Trajectory(int t, int n, double dt_) : T(t), N(n), states(static_cast<size_t>(t) * n), actions(static_cast<size_t>(t) * n), dt(dt_) {}

    AgentState& state(int t, int n) { return states[static_cast<size_t>(t) * N + n]; }
    const AgentState& state(int t, int n) const { return states[static_cast<size_t>(t) * N + n]; }
    Action& action(int t, int n) { return actions[static_cast<size_t>(t) * N + n]; }
    const Action& action(int t, int n) const { return actions[static_cast<size_t>(t) * N + n]; }

    std::vector<double> agent_radii() const {
        std::vector<double> r(N, 0.0);
        for (int n = 0; n < N; ++n)
            r[n] = footprint_radius(initial.size() == static_cast<size_t>(N) ? initial[n]
                                                                             : state(0, n));
        return r;
    }
};

enum class CostId { Collision, Offroad, Overspeed };

const char* cost_id_name(CostId id);
CostId cost_id_from_name(const std::string& name);

struct GuidanceTerm {
    CostId cost = CostId::Collision;
    double weight = 0.0;
    std::vector<int> scope;  // agent indices; empty = all agents
    double v_limit = 10.0;   // m/s, overspeed only
};

struct GuidanceSpec {
    std::vector<GuidanceTerm> terms;
    int grad_steps = 30;
    double grad_lr = 1e-3;
    double grad_norm_clip = 100.0;
    double discount = 0.99;

    bool empty() const { return terms.empty() || grad_steps == 0; }
};

struct Violation {
    std::string code;
    int agent = -1;  // -1 when scene-level
    std::string detail;

    std::string str() const;
};

std::vector<Violation> validate_scene(const Scene& scene);

std::vector<Violation> validate_guidance_spec(const GuidanceSpec& spec, int num_agents);

}  // namespace ccdiff
