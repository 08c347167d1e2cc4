#include <doctest.h>

#include <cmath>

#include "ccdiff/dynamics.hpp"
#include "ccdiff/guidance.hpp"
#include "ccdiff/rng.hpp"
#include "reference/reference.hpp"
#include "test_helpers.hpp"

using namespace ccdiff;
using ccdiff::testing::make_state;
using ccdiff::testing::tiny_map;

namespace {

struct FdSetup {
    std::vector<AgentState> initial;
    ActionTensor actions;
    double dt = 0.1;
};

// Keeps speeds positive and actions well inside the clamp bounds so the cost is smooth
// at every probe point.
FdSetup random_fd_setup(Rng& rng, int n, int T, double spread = 12.0) {
    FdSetup s;
    for (int i = 0; i < n; ++i)
        s.initial.push_back(make_state(rng.uniform(0.0, spread), rng.uniform(0.0, spread),
                                       rng.uniform(-3.0, 3.0), rng.uniform(3.0, 7.0)));
    s.actions = ActionTensor(T, n, 0.0);
    for (size_t i = 0; i < s.actions.v.size(); ++i)
        s.actions.v[i] = i % 2 == 0 ? rng.uniform(-2.0, 2.0) : rng.uniform(-0.6, 0.6);
    return s;
}

std::vector<double> flat_grad(const ActionTensor& g) { return g.v; }

}  // namespace

TEST_SUITE("guidance") {

TEST_CASE("softplus and sigmoid basics") {
    CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(softplus(40.0) == doctest::Approx(40.0));
    CHECK(softplus(-40.0) == doctest::Approx(0.0));
    CHECK(sigmoid(0.0) == doctest::Approx(0.5));
}

TEST_CASE("sdf: positive inside, negative outside, boundary near zero") {
    const MapModel map = tiny_map(60.0, 1.0);
    const SignedDistanceField sdf = SignedDistanceField::build(map);
    const double center = sdf.sample(30.0, 30.0);
    CHECK(center > 20.0);  // ~29.5 m to the border
    CHECK(sdf.sample(-5.0, 30.0) < 0.0);
    CHECK(std::fabs(sdf.sample(0.0, 30.0)) < 1.0);

    // interpolated gradient matches finite differences away from cell crossings
    double gx = 0.0, gy = 0.0;
    sdf.sample(12.3, 18.7, &gx, &gy);
    const double h = 1e-6;
    CHECK(gx == doctest::Approx((sdf.sample(12.3 + h, 18.7) - sdf.sample(12.3 - h, 18.7)) /
                                (2 * h)).epsilon(1e-4));
    CHECK(gy == doctest::Approx((sdf.sample(12.3, 18.7 + h) - sdf.sample(12.3, 18.7 - h)) /
                                (2 * h)).epsilon(1e-4));
}

TEST_CASE("collision cost: flat deep in the softplus tail") {
    const Trajectory t = rollout({make_state(0, 0, 0, 1), make_state(40, 0, 0, 1)},
                                 ActionTensor(10, 2, 0.0), 0.1);
    const CostResult r = collision_cost(t, t.agent_radii());
    CHECK(r.cost < 1e-3);
    double norm = 0.0;
    for (double g : r.grad.v) norm += g * g;
    CHECK(std::sqrt(norm) < 1e-3);
}

TEST_CASE("collision cost: single agent is exactly zero") {
    const Trajectory t = rollout({make_state(0, 0, 0, 5)}, ActionTensor(10, 1, 0.0), 0.1);
    const CostResult r = collision_cost(t, t.agent_radii());
    CHECK(r.cost == 0.0);
    for (double g : r.grad.v) CHECK(g == 0.0);
}

TEST_CASE("collision cost gradient matches central finite differences") {
    Rng rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const FdSetup s = random_fd_setup(rng, 3, 8);
        const double gamma = 0.99;
        auto cost_of = [&](const std::vector<double>& flat) {
            ActionTensor a = s.actions;
            a.v = flat;
            const Trajectory t = rollout(s.initial, a, s.dt);
            return collision_cost(t, t.agent_radii(), gamma).cost;
        };
        const Trajectory t = rollout(s.initial, s.actions, s.dt);
        const CostResult r = collision_cost(t, t.agent_radii(), gamma);
        const auto fd = reference::central_diff(cost_of, s.actions.v, 1e-5);
        worst = std::max(worst, reference::norm_rel_err(flat_grad(r.grad), fd));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("offroad cost: near zero at the center of a deep drivable region") {
    const MapModel map = tiny_map(60.0, 1.0);
    const Trajectory t = rollout({make_state(30, 30, 0, 0)}, ActionTensor(10, 1, 0.0), 0.1);
    const CostResult r = offroad_cost(t, map, 0.99);
    CHECK(r.cost < 1e-3);
}

TEST_CASE("offroad cost: pinned outside costs at least ln2 per step") {
    const MapModel map = tiny_map(60.0, 1.0);
    const Trajectory t = rollout({make_state(-20, -20, 0, 0)}, ActionTensor(5, 1, 0.0), 0.1);
    const CostResult r = offroad_cost(t, map, 1.0);
    CHECK(r.cost >= 5 * std::log(2.0));
}

TEST_CASE("offroad cost gradient matches central finite differences") {
    MapModel map = tiny_map(60.0, 1.0);
    // carve a band so the sdf has structure near the agents
    for (int iy = 0; iy < map.height; ++iy)
        for (int ix = 0; ix < map.width; ++ix)
            map.drivable[static_cast<size_t>(iy) * map.width + ix] =
                (iy >= 20 && iy < 44) ? 1 : 0;
    const SignedDistanceField sdf = SignedDistanceField::build(map);
    Rng rng(103);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        FdSetup s = random_fd_setup(rng, 2, 8);
        for (auto& st : s.initial) st.y = rng.uniform(24.0, 40.0);
        auto cost_of = [&](const std::vector<double>& flat) {
            ActionTensor a = s.actions;
            a.v = flat;
            const Trajectory t = rollout(s.initial, a, s.dt);
            return offroad_cost(t, sdf, 0.99).cost;
        };
        const Trajectory t = rollout(s.initial, s.actions, s.dt);
        const CostResult r = offroad_cost(t, sdf, 0.99);
        const auto fd = reference::central_diff(cost_of, s.actions.v, 1e-5);
        worst = std::max(worst, reference::norm_rel_err(flat_grad(r.grad), fd));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("overspeed cost: zero speeds cost nothing, closed form above the limit") {
    const Trajectory still = rollout({make_state(0, 0, 0, 0)}, ActionTensor(10, 1, 0.0), 0.1);
    CHECK(std::fabs(overspeed_cost(still, 10.0).cost) < 1e-3);

    const int T = 12;
    const double v_limit = 6.0;
    const Trajectory fast = rollout({make_state(0, 0, 0, v_limit + 1.0)},
                                    ActionTensor(T, 1, 0.0), 0.1);
    const CostResult r = overspeed_cost(fast, v_limit, 1.0);
    CHECK(r.cost == doctest::Approx(-T * softplus(1.0)).epsilon(1e-12));
}

TEST_CASE("overspeed cost gradient matches central finite differences") {
    Rng rng(107);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const FdSetup s = random_fd_setup(rng, 2, 8);
        auto cost_of = [&](const std::vector<double>& flat) {
            ActionTensor a = s.actions;
            a.v = flat;
            const Trajectory t = rollout(s.initial, a, s.dt);
            return overspeed_cost(t, 5.0, 0.99).cost;
        };
        const Trajectory t = rollout(s.initial, s.actions, s.dt);
        const CostResult r = overspeed_cost(t, 5.0, 0.99);
        const auto fd = reference::central_diff(cost_of, s.actions.v, 1e-5);
        worst = std::max(worst, reference::norm_rel_err(flat_grad(r.grad), fd));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("scope masking zeroes gradients outside the scope") {
    Rng rng(109);
    const FdSetup s = random_fd_setup(rng, 4, 6, 8.0);
    const Trajectory t = rollout(s.initial, s.actions, s.dt);
    const std::vector<int> scope = {0, 2};
    const CostResult r = collision_cost(t, t.agent_radii(), 0.99, scope);
    for (int step = 0; step < t.T; ++step)
        for (int c = 0; c < 2; ++c) {
            CHECK(r.grad.at(step, 1, c) == 0.0);
            CHECK(r.grad.at(step, 3, c) == 0.0);
        }
}

TEST_CASE("masked update: all-zero rho returns the input bit-identically") {
    Rng rng(113);
    const FdSetup s = random_fd_setup(rng, 3, 10);
    GuidanceSpec spec;
    spec.terms.push_back({CostId::Collision, -50.0, {}, 10.0});
    spec.grad_steps = 10;
    const GuidanceContext ctx{s.initial, s.dt, nullptr, {}};
    const ActionTensor out =
        masked_guidance_update(s.actions, std::vector<uint8_t>(3, 0), spec, ctx);
    CHECK(out.v == s.actions.v);
}

TEST_CASE("masked update: grad_steps 0 is the identity") {
    Rng rng(127);
    const FdSetup s = random_fd_setup(rng, 2, 6);
    GuidanceSpec spec;
    spec.terms.push_back({CostId::Collision, -50.0, {}, 10.0});
    spec.grad_steps = 0;
    const GuidanceContext ctx{s.initial, s.dt, nullptr, {}};
    const ActionTensor out =
        masked_guidance_update(s.actions, std::vector<uint8_t>(2, 1), spec, ctx);
    CHECK(out.v == s.actions.v);
}

TEST_CASE("masked update with collision weight -50 closes the gap head-on") {
    const std::vector<AgentState> initial = {make_state(0, 0, 0, 5),
                                             make_state(40, 0, kPi, 5)};
    const ActionTensor actions(30, 2, 0.0);
    GuidanceSpec spec;
    spec.terms.push_back({CostId::Collision, -50.0, {}, 10.0});
    spec.grad_steps = 30;
    const GuidanceContext ctx{initial, 0.1, nullptr, {}};
    const ActionTensor guided =
        masked_guidance_update(actions, std::vector<uint8_t>(2, 1), spec, ctx);

    auto min_gap = [&](const ActionTensor& a) {
        const Trajectory t = rollout(initial, a, 0.1);
        double best = 1e300;
        for (int step = 0; step < t.T; ++step)
            best = std::min(best, std::hypot(t.state(step, 0).x - t.state(step, 1).x,
                                             t.state(step, 0).y - t.state(step, 1).y));
        return best;
    };
    CHECK(min_gap(guided) <= min_gap(actions));
}

TEST_CASE("costs are exactly invariant under rigid dyadic translation") {
    // dyadic positions, speeds, and dt keep every float op exact under +64
    const std::vector<AgentState> initial = {make_state(2.0, 4.0, 0, 1.0),
                                             make_state(6.0, 4.0, 0, 1.0)};
    ActionTensor actions(6, 2, 0.0);
    const Trajectory t = rollout(initial, actions, 0.125);

    std::vector<AgentState> moved = initial;
    for (auto& s : moved) {
        s.x += 64.0;
        s.y += 64.0;
    }
    const Trajectory t2 = rollout(moved, actions, 0.125);

    CHECK(collision_cost(t, t.agent_radii(), 0.99).cost ==
          collision_cost(t2, t2.agent_radii(), 0.99).cost);
    CHECK(overspeed_cost(t, 0.5, 0.99).cost == overspeed_cost(t2, 0.5, 0.99).cost);

    MapModel map = tiny_map(60.0, 1.0);
    MapModel map2 = map;
    map2.origin_x += 64.0;
    map2.origin_y += 64.0;
    CHECK(offroad_cost(t, map, 0.99).cost == offroad_cost(t2, map2, 0.99).cost);
}

}  // TEST_SUITE
