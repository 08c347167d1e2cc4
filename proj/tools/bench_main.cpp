// Benchmark comparing the OpenMP kernels against their serial references.

#include <chrono>
#include <cstdio>
#include <vector>

#include "../tests/reference/reference.hpp"
#include "ccdiff/datagen.hpp"
#include "ccdiff/denoiser.hpp"
#include "ccdiff/diffusion.hpp"
#include "ccdiff/dynamics.hpp"
#include "ccdiff/guidance.hpp"
#include "ccdiff/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace ccdiff;

namespace {

double now_ms() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

template <typename F>
double time_ms(F&& f, int reps) {
    const double t0 = now_ms();
    for (int r = 0; r < reps; ++r) f();
    return (now_ms() - t0) / reps;
}

void set_threads(int t) {
#ifdef _OPENMP
    omp_set_num_threads(t);
#else
    (void)t;
#endif
}

// captured before any set_threads call; omp_get_max_threads reflects the last setting
int hardware_threads() {
#ifdef _OPENMP
    static const int hw = omp_get_max_threads();
    return hw;
#else
    return 1;
#endif
}

void bench_attention(int n, int d) {
    Rng rng(7);
    Mat q(n, d);
    Cube k(n, n, d), v(n, n, d);
    BoolMat mask(n, n, false);
    for (auto& x : q.v) x = rng.normal();
    for (auto& x : k.v) x = rng.normal();
    for (auto& x : v.v) x = rng.normal();
    for (int i = 0; i < n; ++i) {
        mask.set(i, i, true);
        for (int j = 0; j < n; ++j)
            if (rng.uniform() < 0.25) mask.set(i, j, true);
    }

    const Mat ref = reference::masked_attention_two_loop(q, k, v, mask);
    const Mat par = masked_attention(q, k, v, mask);
    double max_diff = 0.0;
    for (size_t i = 0; i < ref.v.size(); ++i)
        max_diff = std::max(max_diff, std::fabs(ref.v[i] - par.v[i]));

    const int reps = n <= 256 ? 20 : 5;
    const double t_ref =
        time_ms([&] { reference::masked_attention_two_loop(q, k, v, mask); }, reps);
    set_threads(1);
    const double t_1 = time_ms([&] { masked_attention(q, k, v, mask); }, reps);
    set_threads(hardware_threads());
    const double t_p = time_ms([&] { masked_attention(q, k, v, mask); }, reps);
    std::printf("attention  N=%4d d=%3d  ref %8.2f ms  omp(1) %8.2f ms  omp(%d) %8.2f ms  "
                "speedup %4.2fx  max|diff| %.2e\n",
                n, d, t_ref, t_1, hardware_threads(), t_p, t_1 / t_p, max_diff);
}

void bench_collision(int T, int n) {
    Rng rng(11);
    std::vector<AgentState> initial(n);
    for (int i = 0; i < n; ++i) {
        initial[i].x = rng.uniform(0.0, 80.0);
        initial[i].y = rng.uniform(0.0, 80.0);
        initial[i].heading = rng.uniform(-kPi, kPi);
        initial[i].speed = rng.uniform(2.0, 10.0);
    }
    ActionTensor actions(T, n, 0.0);
    for (auto& a : actions.v) a = rng.normal() * 0.5;
    const Trajectory traj = rollout(initial, actions, 0.1);
    const auto radii = traj.agent_radii();

    const int reps = 20;
    set_threads(1);
    const double t1 = time_ms([&] { collision_cost(traj, radii, 0.99); }, reps);
    set_threads(hardware_threads());
    const double tp = time_ms([&] { collision_cost(traj, radii, 0.99); }, reps);
    std::printf("collision  T=%4d N=%3d  omp(1) %8.2f ms  omp(%d) %8.2f ms  speedup %4.2fx\n",
                T, n, t1, hardware_threads(), tp, t1 / tp);
}

void bench_training(int batch) {
    const MapModel map = make_map(MapLayout::Crossroads, 3.5, 120.0, 0.5);
    SceneGenConfig gcfg;
    gcfg.n_agents = 4;
    gcfg.history_steps = 31;
    gcfg.future_steps = 52;
    Rng rng(3);
    const GeneratedScene gen = make_scene(map, gcfg, rng);

    DenoiserArch arch;
    Rng prng(5);
    const auto params = init_params(arch, prng);
    const NoiseSchedule schedule = NoiseSchedule::make(ScheduleKind::Cosine, 100);
    Normalizer norm;

    std::vector<PreparedItem> items;
    for (int i = 0; i < batch; ++i) {
        ActionTensor noise(52, gcfg.n_agents, 0.0);
        for (auto& v : noise.v) v = rng.normal();
        items.push_back(prepare_train_item(gen.scene, gen.future, 1 + i % 100, i % 10 == 0,
                                           noise, schedule, norm, 3.0, 50.0));
    }

    const int reps = 3;
    set_threads(1);
    const double t1 = time_ms([&] { training_loss(arch, params.data(), items, 0.1); }, reps);
    set_threads(hardware_threads());
    const double tp = time_ms([&] { training_loss(arch, params.data(), items, 0.1); }, reps);
    std::printf("train-loss batch=%2d      omp(1) %8.2f ms  omp(%d) %8.2f ms  speedup %4.2fx\n",
                batch, t1, hardware_threads(), tp, t1 / tp);
}

}  // namespace

int main() {
    std::printf("ccdiff kernel benchmarks (%d hardware threads)\n", hardware_threads());
    bench_attention(128, 64);
    bench_attention(256, 64);
    bench_attention(512, 64);
    bench_collision(200, 32);
    bench_collision(400, 64);
    bench_training(8);
    bench_training(16);
    return 0;
}
