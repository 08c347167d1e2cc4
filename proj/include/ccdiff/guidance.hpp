#pragma once

#include <vector>

#include "ccdiff/tensor.hpp"
#include "ccdiff/types.hpp"

namespace ccdiff {

// Signed distance to the drivable-region boundary, positive inside, sampled at cell
// centers and bilinearly interpolated. Outside the grid the value continues linearly
// downward, so off-grid positions always read as off-road.
struct SignedDistanceField {
    int width = 0, height = 0;
    double origin_x = 0.0, origin_y = 0.0, resolution = 1.0;
    std::vector<double> values;  // [height][width], meters

    static SignedDistanceField build(const MapModel& map);

    // Value at a world point; optional gradient output.
    double sample(double x, double y, double* gx = nullptr, double* gy = nullptr) const;
};

// Per-state cost gradients, [T][N] each, fed backward through the unicycle recurrence.
struct StateGrads {
    int T = 0, N = 0;
    std::vector<double> x, y, speed, heading;

    StateGrads() = default;
    StateGrads(int t, int n)
        : T(t), N(n), x(static_cast<size_t>(t) * n, 0.0), y(static_cast<size_t>(t) * n, 0.0),
          speed(static_cast<size_t>(t) * n, 0.0), heading(static_cast<size_t>(t) * n, 0.0) {}

    size_t idx(int t, int n) const { return static_cast<size_t>(t) * N + n; }
};

// Reverse-mode chain rule over the rollout recurrence: gradients w.r.t. positions,
// speeds, and headings of every stored state become gradients w.r.t. the actions.
// Speed-floor and clamp activity is reconstructed from the stored trajectory.
ActionTensor backprop_through_rollout(const Trajectory& traj, const StateGrads& grads,
                                      const ActionBounds& bounds = {});

struct CostResult {
    double cost = 0.0;
    ActionTensor grad;  // w.r.t. actions, [T][N][2]
};

// Pairwise proximity penalty: sum_t sum_{i<j} discount^t * softplus(r_i + r_j + margin - d_ij).
// Positive when agents are close; a negative weight turns the update collision-seeking.
CostResult collision_cost(const Trajectory& traj, const std::vector<double>& radii,
                          double discount = 1.0, const std::vector<int>& scope = {},
                          double margin = 0.5, const ActionBounds& bounds = {});

// sum_t sum_i discount^t * softplus(-sdf(p_i(t))).
CostResult offroad_cost(const Trajectory& traj, const SignedDistanceField& sdf,
                        double discount = 1.0, const std::vector<int>& scope = {},
                        const ActionBounds& bounds = {});
CostResult offroad_cost(const Trajectory& traj, const MapModel& map, double discount = 1.0,
                        const std::vector<int>& scope = {}, const ActionBounds& bounds = {});

// -sum_t sum_i discount^t * softplus(speed_i(t) - v_limit); negative so that a positive
// weight seeks over-speed, mirroring the collision sign convention.
CostResult overspeed_cost(const Trajectory& traj, double v_limit, double discount = 1.0,
                          const std::vector<int>& scope = {}, const ActionBounds& bounds = {});

// Everything the inner guidance loop needs to roll out and score candidate actions.
struct GuidanceContext {
    std::vector<AgentState> initial;
    double dt = 0.1;
    const SignedDistanceField* sdf = nullptr;  // required for offroad terms
    ActionBounds bounds;
};

struct GuidanceEval {
    double total = 0.0;           // sum_j weight_j * cost_j
    ActionTensor grad;            // d total / d raw actions
    std::vector<double> per_term;
};

GuidanceEval evaluate_guidance(const GuidanceContext& ctx, const ActionTensor& actions,
                               const GuidanceSpec& spec);

// grad_steps iterations of adaptive-moment descent on sum_j weight_j * cost_j, with
// gradient rows of agents where rho = 0 zeroed and the total gradient norm clipped.
// Agents with rho = 0 come back bit-identical.
ActionTensor masked_guidance_update(const ActionTensor& actions, const std::vector<uint8_t>& rho,
                                    const GuidanceSpec& spec, const GuidanceContext& ctx);

double softplus(double x);
double sigmoid(double x);

}  // namespace ccdiff
