#include "ccdiff/closedloop.hpp"

#include <algorithm>
#include <cmath>

#include "ccdiff/dynamics.hpp"
#include "ccdiff/errors.hpp"
#include "ccdiff/metrics.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ccdiff {

Trajectory slice_trajectory(const Trajectory& traj, int start, int len) {
    if (start < 0 || len < 1 || start + len > traj.T)
        throw CcdiffError(ErrorCode::BadParams, "slice_trajectory: range out of bounds");
    Trajectory out(len, traj.N, traj.dt);
    out.initial.resize(traj.N);
    for (int n = 0; n < traj.N; ++n)
        out.initial[n] = start == 0 ? traj.initial[n] : traj.state(start - 1, n);
    for (int t = 0; t < len; ++t) {
        for (int n = 0; n < traj.N; ++n) {
            out.state(t, n) = traj.state(start + t, n);
            out.action(t, n) = traj.action(start + t, n);
        }
    }
    return out;
}

namespace {

int steps_from_seconds(double seconds, double dt, const char* what) {
    const double raw = seconds / dt;
    const int steps = static_cast<int>(std::llround(raw));
    if (steps < 1 || std::fabs(raw - steps) > 1e-6)
        throw CcdiffError(ErrorCode::BadParams,
                          std::string(what) + " must be a positive multiple of dt");
    return steps;
}

// Replace non-controlled agents' actions with the reference log and re-integrate.
Trajectory apply_log_replay(const Trajectory& sample, const std::vector<int>& controlled,
                            const Trajectory& reference, int abs_start,
                            const ActionBounds& bounds) {
    std::vector<uint8_t> is_controlled(sample.N, 0);
    for (int i : controlled)
        if (i >= 0 && i < sample.N) is_controlled[i] = 1;

    ActionTensor actions(sample.T, sample.N, 0.0);
    for (int t = 0; t < sample.T; ++t) {
        for (int n = 0; n < sample.N; ++n) {
            Action a = sample.action(t, n);
            if (!is_controlled[n]) {
                const int rt = abs_start + t;
                a = rt < reference.T ? reference.action(rt, n) : Action{0.0, 0.0};
            }
            actions.at(t, n, 0) = a.accel;
            actions.at(t, n, 1) = a.yaw_rate;
        }
    }
    return rollout(sample.initial, actions, sample.dt, bounds);
}

}  // namespace

Trajectory run_closed_loop(const Scene& scene0, const Denoiser& denoiser,
                           const NoiseSchedule& schedule, const ClosedLoopConfig& cfg,
                           const Trajectory* reference, ClosedLoopTrace* trace) {
    const int n = scene0.num_agents();
    const int total_steps = steps_from_seconds(cfg.horizon, scene0.dt, "horizon");
    const int commit_steps = steps_from_seconds(cfg.t_replan, scene0.dt, "replan period");
    if (commit_steps > cfg.sampler.gen_steps)
        throw CcdiffError(ErrorCode::BadParams, "replan period exceeds the generation window");
    if (!cfg.controlled.empty() && !reference)
        throw CcdiffError(ErrorCode::BadParams, "log replay needs a reference trajectory");

    Scene scene = scene0;
    Trajectory out(total_steps, n, scene0.dt);
    out.initial = scene0.current_states();

    int done = 0;
    int replan_index = 0;
    while (done < total_steps) {
        SamplerConfig scfg = cfg.sampler;
        scfg.seed = mix_seed(cfg.sampler.seed, static_cast<uint64_t>(replan_index));

        Trajectory sample;
        try {
            sample = guided_sample(scene, denoiser, schedule, scfg);
        } catch (const CcdiffError& e) {
            throw CcdiffError(e.code(),
                              "replan " + std::to_string(replan_index) + ": " + e.what());
        }
        if (!cfg.controlled.empty())
            sample = apply_log_replay(sample, cfg.controlled, *reference, done, scfg.bounds);

        const int commit = std::min(commit_steps, total_steps - done);
        for (int t = 0; t < commit; ++t) {
            for (int a = 0; a < n; ++a) {
                out.state(done + t, a) = sample.state(t, a);
                out.action(done + t, a) = sample.action(t, a);
            }
        }
        if (trace) {
            ReplanRecord rec;
            rec.start_step = done;
            rec.committed = commit;
            rec.sample = sample;
            rec.history_passed = scene.agents;
            trace->replans.push_back(std::move(rec));
        }

        // Shift the history window over the committed states.
        for (int a = 0; a < n; ++a) {
            auto& hist = scene.agents[a].history;
            for (int t = 0; t < commit; ++t) hist.push_back(sample.state(t, a));
            hist.erase(hist.begin(), hist.end() - scene0.history_len());
        }
        scene.t0 += commit;
        done += commit;
        ++replan_index;
    }
    return out;
}

std::vector<SceneResult> batch_evaluate(const std::vector<Scene>& scenes,
                                        const std::vector<Trajectory>& references,
                                        const Denoiser& denoiser, const NoiseSchedule& schedule,
                                        const BatchEvalConfig& cfg) {
    const int count = static_cast<int>(scenes.size());
    std::vector<SceneResult> results(count);
    const bool have_refs = !references.empty();
    if (have_refs && references.size() != scenes.size())
        throw CcdiffError(ErrorCode::BadParams, "batch_evaluate: reference count mismatch");

#ifdef _OPENMP
    const int threads = cfg.workers > 0 ? cfg.workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
#endif
    for (int s = 0; s < count; ++s) {
        SceneResult& row = results[s];
        row.scene_index = s;
        row.seed = mix_seed(cfg.loop.sampler.seed, static_cast<uint64_t>(s));
        try {
            ClosedLoopConfig loop = cfg.loop;
            loop.sampler.seed = row.seed;
            const Trajectory* ref = have_refs ? &references[s] : nullptr;
            row.traj = run_closed_loop(scenes[s], denoiser, schedule, loop, ref);

            const auto radii = row.traj.agent_radii();
            row.collided = trajectory_has_collision(row.traj, radii) ? 1 : 0;
            row.orr = orr(row.traj, scenes[s].map);
            if (have_refs && references[s].T >= row.traj.T) {
                const Trajectory ref_slice = slice_trajectory(references[s], 0, row.traj.T);
                row.fde = fde(row.traj, ref_slice);
                row.cfd = cfd(row.traj, ref_slice);
            }
            const DecisionCausalGraph g = build_dcg(
                ttc_mask(scenes[s], cfg.loop.sampler.c_ttc, cfg.loop.sampler.d_max),
                Mat(scenes[s].num_agents(), scenes[s].num_agents(), 0.0));
            row.clique_count = clique_count(g);
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
    }
    return results;
}

}  // namespace ccdiff
