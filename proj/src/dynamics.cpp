#include "ccdiff/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ccdiff/errors.hpp"

namespace ccdiff {

Action clamp_action(const Action& a, const ActionBounds& bounds) {
    return {std::clamp(a.accel, -bounds.a_max, bounds.a_max),
            std::clamp(a.yaw_rate, -bounds.r_max, bounds.r_max)};
}

AgentState step_unicycle(const AgentState& state, const Action& action, double dt,
                         const ActionBounds& bounds) {
    if (!(std::isfinite(state.x) && std::isfinite(state.y) && std::isfinite(state.heading) &&
          std::isfinite(state.speed) && std::isfinite(action.accel) &&
          std::isfinite(action.yaw_rate))) {
        throw CcdiffError(ErrorCode::NonFiniteState, "step_unicycle input");
    }
    const Action a = clamp_action(action, bounds);
    AgentState next = state;
    next.speed = state.speed + a.accel * dt;
    if (!bounds.allow_reverse) next.speed = std::max(0.0, next.speed);
    next.heading = wrap_angle(state.heading + a.yaw_rate * dt);
    next.x = state.x + next.speed * std::cos(next.heading) * dt;
    next.y = state.y + next.speed * std::sin(next.heading) * dt;
    return next;
}

Trajectory rollout(const std::vector<AgentState>& initial, const ActionTensor& actions, double dt,
                   const ActionBounds& bounds) {
    const int n = static_cast<int>(initial.size());
    if (actions.N != n)
        throw CcdiffError(ErrorCode::BadParams, "rollout: action tensor has " +
                                                    std::to_string(actions.N) + " agents, expected " +
                                                    std::to_string(n));
    Trajectory traj(actions.T, n, dt);
    traj.initial = initial;
    for (int i = 0; i < n; ++i) {
        AgentState s = initial[i];
        for (int t = 0; t < actions.T; ++t) {
            const Action a = clamp_action({actions.at(t, i, 0), actions.at(t, i, 1)}, bounds);
            s = step_unicycle(s, a, dt, bounds);
            traj.state(t, i) = s;
            traj.action(t, i) = a;
        }
    }
    return traj;
}

std::vector<Violation> trajectory_violations(const Trajectory& traj, const ActionBounds& bounds,
                                             double tol) {
    std::vector<Violation> out;
    for (int n = 0; n < traj.N; ++n) {
        if (traj.initial.size() == static_cast<size_t>(traj.N) && traj.T > 0) {
            const AgentState expect = step_unicycle(traj.initial[n], traj.action(0, n), traj.dt,
                                                    bounds);
            const AgentState& got = traj.state(0, n);
            const double err = std::max({std::fabs(expect.x - got.x), std::fabs(expect.y - got.y),
                                         std::fabs(expect.heading - got.heading),
                                         std::fabs(expect.speed - got.speed)});
            if (!(err <= tol)) out.push_back({"dynamics-infeasible", n, "t=0"});
        }
        for (int t = 0; t + 1 < traj.T; ++t) {
            const AgentState expect = step_unicycle(traj.state(t, n), traj.action(t + 1, n),
                                                    traj.dt, bounds);
            const AgentState& got = traj.state(t + 1, n);
            const double err = std::max({std::fabs(expect.x - got.x), std::fabs(expect.y - got.y),
                                         std::fabs(expect.heading - got.heading),
                                         std::fabs(expect.speed - got.speed)});
            if (!(err <= tol)) {
                out.push_back({"dynamics-infeasible", n, "t=" + std::to_string(t + 1)});
                break;
            }
        }
        for (int t = 0; t < traj.T; ++t) {
            const Action& a = traj.action(t, n);
            if (std::fabs(a.accel) > bounds.a_max + tol || std::fabs(a.yaw_rate) > bounds.r_max + tol) {
                out.push_back({"action-out-of-bounds", n, "t=" + std::to_string(t)});
                break;
            }
        }
    }
    return out;
}

}  // namespace ccdiff
