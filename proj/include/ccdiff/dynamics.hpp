#pragma once

#include <vector>

#include "ccdiff/tensor.hpp"
#include "ccdiff/types.hpp"

namespace ccdiff {

Action clamp_action(const Action& a, const ActionBounds& bounds);

// Semi-implicit Euler unicycle step: speed and heading update first, then position.
// Speed is floored at 0 unless bounds.allow_reverse. Throws NonFiniteState on
// non-finite input.
AgentState step_unicycle(const AgentState& state, const Action& action, double dt,
                         const ActionBounds& bounds = {});

// Integrates a [T][N] action tensor from per-agent initial states. states[t] is the
// state after actions[0..t]; stored actions are the clamped ones actually applied.
Trajectory rollout(const std::vector<AgentState>& initial, const ActionTensor& actions, double dt,
                   const ActionBounds& bounds = {});

// Reconstruction check of the dynamics-feasibility invariant: consecutive states must
// be reproduced by stepping the recorded actions, within tol per field.
std::vector<Violation> trajectory_violations(const Trajectory& traj,
                                             const ActionBounds& bounds = {}, double tol = 1e-9);

}  // namespace ccdiff
