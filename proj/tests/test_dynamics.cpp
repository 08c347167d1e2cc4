#include <doctest.h>

#include <cmath>

#include "ccdiff/dynamics.hpp"
#include "ccdiff/errors.hpp"
#include "ccdiff/rng.hpp"
#include "test_helpers.hpp"

using namespace ccdiff;
using ccdiff::testing::make_state;

TEST_SUITE("dynamics") {

TEST_CASE("straight constant velocity") {
    const AgentState next = step_unicycle(make_state(0, 0, 0, 10), {0.0, 0.0}, 0.1);
    CHECK(next.x == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(next.y == doctest::Approx(0.0));
    CHECK(next.heading == doctest::Approx(0.0));
    CHECK(next.speed == doctest::Approx(10.0));
}

TEST_CASE("discrete circle returns to start") {
    const int n = 126;
    const double dt = 0.1;
    const double omega = 2.0 * kPi / (n * dt);
    AgentState s = make_state(0, 0, 0, 5);
    for (int i = 0; i < n; ++i) s = step_unicycle(s, {0.0, omega}, dt);
    CHECK(std::hypot(s.x, s.y) < 5 * dt);
    CHECK(s.speed == doctest::Approx(5.0));
}

TEST_CASE("accel clamps to a_max before integrating") {
    const AgentState next = step_unicycle(make_state(0, 0, 0, 1), {-20.0, 0.0}, 0.1);
    CHECK(next.speed == doctest::Approx(0.4));
}

TEST_CASE("speed floors at zero") {
    const AgentState next = step_unicycle(make_state(0, 0, 0, 0.1), {-6.0, 0.0}, 0.1);
    CHECK(next.speed == 0.0);
    CHECK(next.x == 0.0);  // semi-implicit: new speed is applied, so no motion
}

TEST_CASE("reverse allowed when configured") {
    ActionBounds bounds;
    bounds.allow_reverse = true;
    const AgentState next = step_unicycle(make_state(0, 0, 0, 0.1), {-6.0, 0.0}, 0.1, bounds);
    CHECK(next.speed == doctest::Approx(-0.5));
}

TEST_CASE("non-finite input raises NonFiniteState") {
    CHECK_THROWS_AS(step_unicycle(make_state(NAN, 0, 0, 1), {0, 0}, 0.1), CcdiffError);
    try {
        step_unicycle(make_state(0, 0, 0, 1), {NAN, 0}, 0.1);
        FAIL("expected throw");
    } catch (const CcdiffError& e) {
        CHECK(e.code() == ErrorCode::NonFiniteState);
    }
}

TEST_CASE("zero actions advance along initial headings") {
    const std::vector<AgentState> initial = {make_state(0, 0, 0, 4),
                                             make_state(10, 5, kPi / 2, 2)};
    const ActionTensor actions(8, 2, 0.0);
    const Trajectory traj = rollout(initial, actions, 0.1);
    CHECK(traj.state(7, 0).x == doctest::Approx(0.4 * 8));
    CHECK(traj.state(7, 0).y == doctest::Approx(0.0));
    CHECK(traj.state(7, 1).y == doctest::Approx(5.0 + 0.2 * 8).epsilon(1e-9));
    CHECK(trajectory_violations(traj).empty());
}

TEST_CASE("single-step rollout equals step_unicycle") {
    const AgentState s0 = make_state(2, 3, 0.4, 6);
    ActionTensor actions(1, 1, 0.0);
    actions.at(0, 0, 0) = 1.5;
    actions.at(0, 0, 1) = -0.3;
    const Trajectory traj = rollout({s0}, actions, 0.1);
    const AgentState direct = step_unicycle(s0, {1.5, -0.3}, 0.1);
    CHECK(traj.state(0, 0).x == direct.x);
    CHECK(traj.state(0, 0).y == direct.y);
    CHECK(traj.state(0, 0).heading == direct.heading);
    CHECK(traj.state(0, 0).speed == direct.speed);
}

TEST_CASE("rollout is bit-deterministic and prefix-consistent") {
    Rng rng(9);
    std::vector<AgentState> initial;
    for (int i = 0; i < 3; ++i)
        initial.push_back(make_state(rng.uniform(0, 50), rng.uniform(0, 50),
                                     rng.uniform(-3, 3), rng.uniform(0, 10)));
    ActionTensor actions(20, 3, 0.0);
    for (auto& a : actions.v) a = rng.normal() * 2.0;

    const Trajectory t1 = rollout(initial, actions, 0.1);
    const Trajectory t2 = rollout(initial, actions, 0.1);
    for (size_t i = 0; i < t1.states.size(); ++i) {
        CHECK(t1.states[i].x == t2.states[i].x);
        CHECK(t1.states[i].y == t2.states[i].y);
        CHECK(t1.states[i].heading == t2.states[i].heading);
        CHECK(t1.states[i].speed == t2.states[i].speed);
    }

    ActionTensor prefix(12, 3, 0.0);
    for (int t = 0; t < 12; ++t)
        for (int n = 0; n < 3; ++n)
            for (int c = 0; c < 2; ++c) prefix.at(t, n, c) = actions.at(t, n, c);
    const Trajectory tp = rollout(initial, prefix, 0.1);
    for (int t = 0; t < 12; ++t)
        for (int n = 0; n < 3; ++n) {
            CHECK(tp.state(t, n).x == t1.state(t, n).x);
            CHECK(tp.state(t, n).y == t1.state(t, n).y);
        }
}

TEST_CASE("rollout keeps speed nonnegative and heading normalized") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<AgentState> initial = {make_state(0, 0, rng.uniform(-3, 3), rng.uniform(0, 8))};
        ActionTensor actions(30, 1, 0.0);
        for (auto& a : actions.v) a = rng.normal() * 5.0;
        const Trajectory traj = rollout(initial, actions, 0.1);
        for (const auto& s : traj.states) {
            CHECK(s.speed >= 0.0);
            CHECK(s.heading > -kPi);
            CHECK(s.heading <= kPi);
        }
    }
}

TEST_CASE("trajectory_violations catches edits") {
    const auto gen = ccdiff::testing::random_generated_scene(3, 2, 8, 15);
    Trajectory traj = gen.future;
    CHECK(trajectory_violations(traj).empty());
    traj.state(7, 1).x += 0.01;
    const auto violations = trajectory_violations(traj);
    REQUIRE(!violations.empty());
    CHECK(violations[0].code == "dynamics-infeasible");
}

}  // TEST_SUITE
