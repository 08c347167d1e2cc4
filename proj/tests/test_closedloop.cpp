#include <doctest.h>

#include <cmath>

#include "ccdiff/closedloop.hpp"
#include "ccdiff/dynamics.hpp"
#include "ccdiff/rng.hpp"
#include "test_helpers.hpp"

using namespace ccdiff;
using ccdiff::testing::make_scene_from_states;
using ccdiff::testing::make_state;

namespace {

class ZeroDenoiser : public Denoiser {
public:
    DenoiseOutput denoise(const DenoiserInput& in) const override {
        DenoiseOutput out;
        out.pred = ActionTensor(in.noisy_actions->T, in.noisy_actions->N, 0.0);
        out.attn_logits = Mat(in.noisy_actions->N, in.noisy_actions->N, 0.0);
        return out;
    }
    const Normalizer& normalizer() const override { return norm_; }

private:
    Normalizer norm_;
};

SamplerConfig stub_sampler(int gen_steps, uint64_t seed) {
    SamplerConfig cfg;
    cfg.w = 1.0;
    cfg.n_c = 2;
    cfg.gen_steps = gen_steps;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_SUITE("closedloop") {

TEST_CASE("slice_trajectory keeps feasibility and initial state") {
    const auto gen = ccdiff::testing::random_generated_scene(4, 3, 8, 30);
    const Trajectory s = slice_trajectory(gen.future, 5, 10);
    CHECK(s.T == 10);
    CHECK(trajectory_violations(s).empty());
    CHECK(s.initial[0].x == gen.future.state(4, 0).x);
}

TEST_CASE("replan period equal to the horizon is one open-loop call") {
    const ZeroDenoiser denoiser;
    const NoiseSchedule schedule = NoiseSchedule::make(ScheduleKind::Cosine, 10);
    const Scene scene = make_scene_from_states(
        {make_state(5, 30, 0, 4), make_state(20, 30, 0, 6)}, 5);

    ClosedLoopConfig cfg;
    cfg.sampler = stub_sampler(20, 9);
    cfg.t_replan = 1.5;
    cfg.horizon = 1.5;
    const Trajectory closed = run_closed_loop(scene, denoiser, schedule, cfg);
    CHECK(closed.T == 15);

    SamplerConfig open_cfg = cfg.sampler;
    open_cfg.seed = mix_seed(cfg.sampler.seed, 0);  // replan 0 seed derivation
    const Trajectory open = guided_sample(scene, denoiser, schedule, open_cfg);
    for (int t = 0; t < 15; ++t)
        for (int n = 0; n < 2; ++n) {
            CHECK(closed.state(t, n).x == open.state(t, n).x);
            CHECK(closed.action(t, n).accel == open.action(t, n).accel);
        }
}

TEST_CASE("zero-action stub keeps agents straight at constant speed") {
    const ZeroDenoiser denoiser;
    const NoiseSchedule schedule = NoiseSchedule::make(ScheduleKind::Cosine, 8);
    const Scene scene = make_scene_from_states(
        {make_state(2, 30, 0, 4), make_state(10, 20, kPi / 2, 3)}, 5);

    ClosedLoopConfig cfg;
    cfg.sampler = stub_sampler(10, 3);
    cfg.t_replan = 0.5;
    cfg.horizon = 4.0;
    const Trajectory traj = run_closed_loop(scene, denoiser, schedule, cfg);
    CHECK(traj.T == 40);
    for (int t = 0; t < traj.T; ++t) {
        CHECK(traj.state(t, 0).speed == doctest::Approx(4.0));
        CHECK(traj.state(t, 0).y == doctest::Approx(30.0));
        CHECK(traj.state(t, 0).x == doctest::Approx(2.0 + 0.4 * (t + 1)).epsilon(1e-9));
        CHECK(traj.state(t, 1).speed == doctest::Approx(3.0));
    }
    CHECK(trajectory_violations(traj).empty());
}

TEST_CASE("committed prefixes appear bit-identical in the final trajectory") {
    const DenoiserArch arch = [] {
        DenoiserArch a;
        a.history_steps = 5;
        a.horizon = 8;
        a.d_model = 8;
        a.n_heads = 2;
        a.n_layers = 2;
        a.d_rel = 4;
        a.d_map = 4;
        return a;
    }();
    Rng prng(61);
    const LearnedDenoiser denoiser(arch, init_params(arch, prng), Normalizer{});
    const NoiseSchedule schedule = NoiseSchedule::make(ScheduleKind::Cosine, 10);
    const Scene scene = make_scene_from_states(
        {make_state(5, 30, 0, 5), make_state(25, 30, kPi, 5)}, 5);

    ClosedLoopConfig cfg;
    cfg.sampler = stub_sampler(arch.horizon, 17);
    cfg.sampler.w = 1.3;
    cfg.t_replan = 0.5;
    cfg.horizon = 2.0;
    ClosedLoopTrace trace;
    const Trajectory traj = run_closed_loop(scene, denoiser, schedule, cfg, nullptr, &trace);

    REQUIRE(trace.replans.size() == 4);
    for (const auto& rec : trace.replans) {
        for (int t = 0; t < rec.committed; ++t) {
            for (int n = 0; n < 2; ++n) {
                CHECK(traj.state(rec.start_step + t, n).x == rec.sample.state(t, n).x);
                CHECK(traj.state(rec.start_step + t, n).y == rec.sample.state(t, n).y);
                CHECK(traj.action(rec.start_step + t, n).accel == rec.sample.action(t, n).accel);
            }
        }
    }
    CHECK(trajectory_violations(traj).empty());
}

TEST_CASE("the history window is exactly the last H committed states") {
    const ZeroDenoiser denoiser;
    const NoiseSchedule schedule = NoiseSchedule::make(ScheduleKind::Cosine, 8);
    const Scene scene = make_scene_from_states(
        {make_state(2, 30, 0, 4), make_state(40, 30, kPi, 5)}, 6);

    ClosedLoopConfig cfg;
    cfg.sampler = stub_sampler(10, 3);
    cfg.t_replan = 0.4;
    cfg.horizon = 2.0;
    ClosedLoopTrace trace;
    run_closed_loop(scene, denoiser, schedule, cfg, nullptr, &trace);
    REQUIRE(trace.replans.size() == 5);

    for (size_t r = 1; r < trace.replans.size(); ++r) {
        const auto& prev = trace.replans[r - 1];
        const auto& cur = trace.replans[r];
        for (int n = 0; n < 2; ++n) {
            // previous history shifted by the committed states
            std::vector<AgentState> expect = prev.history_passed[n].history;
            for (int t = 0; t < prev.committed; ++t)
                expect.push_back(prev.sample.state(t, n));
            expect.erase(expect.begin(), expect.end() - 6);
            REQUIRE(cur.history_passed[n].history.size() == 6);
            for (int h = 0; h < 6; ++h) {
                CHECK(cur.history_passed[n].history[h].x == expect[h].x);
                CHECK(cur.history_passed[n].history[h].speed == expect[h].speed);
            }
        }
    }
}

TEST_CASE("log replay pins non-controlled agents to the reference") {
    const ZeroDenoiser denoiser;
    const NoiseSchedule schedule = NoiseSchedule::make(ScheduleKind::Cosine, 8);
    const Scene scene = make_scene_from_states(
        {make_state(2, 30, 0, 4), make_state(30, 25, 0, 5)}, 5);

    // reference: agent 1 brakes steadily
    ActionTensor ref_actions(30, 2, 0.0);
    for (int t = 0; t < 30; ++t) ref_actions.at(t, 1, 0) = -1.0;
    const Trajectory reference = rollout(scene.current_states(), ref_actions, scene.dt);

    ClosedLoopConfig cfg;
    cfg.sampler = stub_sampler(10, 3);
    cfg.t_replan = 0.5;
    cfg.horizon = 3.0;
    cfg.controlled = {0};
    const Trajectory traj = run_closed_loop(scene, denoiser, schedule, cfg, &reference);
    for (int t = 0; t < traj.T; ++t) {
        CHECK(traj.action(t, 1).accel == doctest::Approx(-1.0));
        CHECK(traj.state(t, 1).x == doctest::Approx(reference.state(t, 1).x).epsilon(1e-12));
        CHECK(traj.action(t, 0).accel == 0.0);  // stub still drives agent 0
    }
}

TEST_CASE("batch_evaluate: empty input gives an empty table") {
    const ZeroDenoiser denoiser;
    const NoiseSchedule schedule = NoiseSchedule::make(ScheduleKind::Cosine, 8);
    BatchEvalConfig cfg;
    cfg.loop.sampler = stub_sampler(10, 3);
    cfg.loop.t_replan = 0.5;
    cfg.loop.horizon = 1.0;
    const auto rows = batch_evaluate({}, {}, denoiser, schedule, cfg);
    CHECK(rows.empty());
}

TEST_CASE("batch_evaluate: same scene list twice gives identical rows") {
    const ZeroDenoiser denoiser;
    const NoiseSchedule schedule = NoiseSchedule::make(ScheduleKind::Cosine, 8);
    const auto gen = ccdiff::testing::random_generated_scene(12, 3, 5, 40);

    BatchEvalConfig cfg;
    cfg.loop.sampler = stub_sampler(10, 21);
    cfg.loop.t_replan = 0.5;
    cfg.loop.horizon = 2.0;
    const auto a = batch_evaluate({gen.scene}, {gen.future}, denoiser, schedule, cfg);
    const auto b = batch_evaluate({gen.scene}, {gen.future}, denoiser, schedule, cfg);
    REQUIRE(a.size() == 1);
    REQUIRE(b.size() == 1);
    CHECK(a[0].ok);
    CHECK(a[0].seed == b[0].seed);
    CHECK(a[0].orr == b[0].orr);
    CHECK(a[0].fde == b[0].fde);
    CHECK(a[0].cfd == b[0].cfd);
    CHECK(a[0].collided == b[0].collided);
}

TEST_CASE("batch_evaluate smoke: every row finite and ok") {
    const ZeroDenoiser denoiser;
    const NoiseSchedule schedule = NoiseSchedule::make(ScheduleKind::Cosine, 8);
    std::vector<Scene> scenes;
    std::vector<Trajectory> refs;
    for (int i = 0; i < 20; ++i) {
        const auto gen = ccdiff::testing::random_generated_scene(300 + i, 3, 5, 30);
        scenes.push_back(gen.scene);
        refs.push_back(gen.future);
    }
    BatchEvalConfig cfg;
    cfg.loop.sampler = stub_sampler(10, 5);
    cfg.loop.t_replan = 1.0;
    cfg.loop.horizon = 3.0;
    const auto rows = batch_evaluate(scenes, refs, denoiser, schedule, cfg);
    REQUIRE(rows.size() == 20);
    for (const auto& r : rows) {
        CHECK(r.ok);
        CHECK(std::isfinite(r.orr));
        CHECK(std::isfinite(r.fde));
        CHECK(std::isfinite(r.cfd));
        CHECK((r.collided == 0 || r.collided == 1));
    }
}

}  // TEST_SUITE
