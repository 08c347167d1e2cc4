#pragma once

#include <string>
#include <vector>

#include "ccdiff/diffusion.hpp"
#include "ccdiff/types.hpp"

namespace ccdiff {

// Extract steps [start, start + len) as a standalone feasible trajectory.
Trajectory slice_trajectory(const Trajectory& traj, int start, int len);

struct ClosedLoopConfig {
    SamplerConfig sampler;
    double t_replan = 0.5;  // s between replans
    double horizon = 10.0;  // total generated seconds
    std::vector<int> controlled;  // empty = every agent model-driven; otherwise agents
                                  // outside the set replay the reference log
};

struct ReplanRecord {
    int start_step = 0;  // absolute step of the first committed pair
    int committed = 0;
    Trajectory sample;                       // the full open-loop sample
    std::vector<AgentTrack> history_passed;  // agent histories fed to the sampler
};

struct ClosedLoopTrace {
    std::vector<ReplanRecord> replans;
};

// Replan every t_replan seconds, commit the prefix, feed committed states back as the
// new history window. Output spans exactly horizon/dt steps and stays feasible across
// commit boundaries. reference is required when cfg.controlled is nonempty.
Trajectory run_closed_loop(const Scene& scene0, const Denoiser& denoiser,
                           const NoiseSchedule& schedule, const ClosedLoopConfig& cfg,
                           const Trajectory* reference = nullptr,
                           ClosedLoopTrace* trace = nullptr);

struct SceneResult {
    int scene_index = -1;
    uint64_t seed = 0;
    bool ok = false;
    std::string error;
    int collided = 0;
    double orr = 0.0, fde = 0.0, cfd = 0.0;
    int clique_count = 0;
    Trajectory traj;
};

struct BatchEvalConfig {
    ClosedLoopConfig loop;
    int workers = 0;  // 0 = library default thread count
};

// Closed-loop generation plus raw metrics per scene, scenes in parallel with
// per-scene derived seeds. Per-scene failures are recorded in the row, not fatal.
std::vector<SceneResult> batch_evaluate(const std::vector<Scene>& scenes,
                                        const std::vector<Trajectory>& references,
                                        const Denoiser& denoiser, const NoiseSchedule& schedule,
                                        const BatchEvalConfig& cfg);

}  // namespace ccdiff
