#include <doctest.h>

#include <cmath>

#include "ccdiff/dynamics.hpp"
#include "ccdiff/errors.hpp"
#include "ccdiff/metrics.hpp"
#include "ccdiff/rng.hpp"
#include "test_helpers.hpp"

using namespace ccdiff;
using ccdiff::testing::make_state;
using ccdiff::testing::tiny_map;

namespace {

Trajectory coast(const std::vector<AgentState>& initial, int steps, double dt = 0.1) {
    return rollout(initial, ActionTensor(steps, static_cast<int>(initial.size()), 0.0), dt);
}

Trajectory constant_accel(const AgentState& initial, double accel, int steps, double dt = 0.1) {
    ActionTensor actions(steps, 1, 0.0);
    for (int t = 0; t < steps; ++t) actions.at(t, 0, 0) = accel;
    return rollout({initial}, actions, dt);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("scr: static far-apart agents never collide") {
    const Trajectory t = coast({make_state(0, 0, 0, 0), make_state(40, 0, 0, 0)}, 10);
    CHECK(scr({t}, {t.agent_radii()}) == 0.0);
}

TEST_CASE("scr: engineered crossing pair collides") {
    // both reach (25, 25) at the same time
    const Trajectory t = coast({make_state(0, 25, 0, 5), make_state(25, 0, kPi / 2, 5)}, 60);
    CHECK(trajectory_has_collision(t, t.agent_radii()));
    const Trajectory safe = coast({make_state(0, 0, 0, 1), make_state(40, 40, 0, 1)}, 10);
    CHECK(scr({t, safe}, {t.agent_radii(), safe.agent_radii()}) == doctest::Approx(0.5));
}

TEST_CASE("orr: fully drivable map scores zero") {
    const Trajectory t = coast({make_state(20, 30, 0, 3)}, 20);
    CHECK(orr(t, tiny_map()) == 0.0);
}

TEST_CASE("orr: agent pinned outside the grid contributes 100/N") {
    const Trajectory t =
        coast({make_state(-500, -500, 0, 0), make_state(20, 30, 0, 0)}, 15);
    CHECK(orr(t, tiny_map()) == doctest::Approx(100.0 / 2));
}

TEST_CASE("orr: diagonal drive off a straight road matches a hand count") {
    MapModel map = tiny_map(60.0, 1.0);
    // drivable only for y in [28, 32)
    for (int iy = 0; iy < map.height; ++iy)
        for (int ix = 0; ix < map.width; ++ix)
            map.drivable[static_cast<size_t>(iy) * map.width + ix] =
                (iy >= 28 && iy < 32) ? 1 : 0;
    // 10 steps at 45 degrees, 1 m per step starting at (5, 30.5): y = 30.5 + 0.7071 t
    const double heading = kPi / 4;
    const Trajectory t = coast({make_state(5, 30.5, heading, 10)}, 10);
    int off_by_hand = 0;
    for (int step = 0; step < 10; ++step)
        if (t.state(step, 0).y >= 32.0) ++off_by_hand;
    CHECK(orr(t, map) == doctest::Approx(100.0 * off_by_hand / 10.0));
    CHECK(off_by_hand > 0);
}

TEST_CASE("fde: zero for identical, exact for translations") {
    const Trajectory ref = coast({make_state(0, 0, 0, 5), make_state(10, 0, 0, 4)}, 12);
    CHECK(fde(ref, ref) == 0.0);

    Trajectory moved = ref;
    for (auto& s : moved.states) s.y += 3.0;
    CHECK(fde(moved, ref) == doctest::Approx(3.0));

    Trajectory offset = ref;
    offset.state(11, 0).y += 3.0;
    offset.state(11, 1).y += 4.0;
    CHECK(fde(offset, ref) == doctest::Approx(3.5));
}

TEST_CASE("cfd: zero for matched smoothness, |a| for constant accel") {
    const Trajectory ref = coast({make_state(0, 0, 0, 5)}, 20);
    CHECK(cfd(ref, ref) == 0.0);

    const Trajectory faster = coast({make_state(0, 0, 0, 8)}, 20);
    CHECK(cfd(faster, ref) == doctest::Approx(0.0).epsilon(1e-9));

    const Trajectory accel = constant_accel(make_state(0, 0, 0, 5), 1.5, 20);
    CHECK(cfd(accel, ref) == doctest::Approx(1.5).epsilon(1e-6));
}

TEST_CASE("standardize_scores reproduces the formulas") {
    std::map<std::string, RawMetrics> table;
    table["a"] = {0.1, 2.0, 5.0, 3.0};
    table["b"] = {0.5, 1.0, 3.0, 1.0};
    table["c"] = {0.3, 4.0, 9.0, 2.0};
    const auto scores = standardize_scores(table);

    // method at SCR max has CS 1; method at every realism minimum has RS 1
    CHECK(scores.at("b").cs == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(scores.at("b").rs == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(scores.at("a").cs == doctest::Approx(0.0).epsilon(1e-12));

    // hand-computed: a: orr (2-1)/3, fde (5-3)/6, cfd (3-1)/2
    const double rs_a = 1.0 - (1.0 / 3 + 2.0 / 6 + 2.0 / 2) / 3.0;
    CHECK(scores.at("a").rs == doctest::Approx(rs_a).epsilon(1e-12));
    const double rs_c = 1.0 - (3.0 / 3 + 6.0 / 6 + 1.0 / 2) / 3.0;
    CHECK(scores.at("c").rs == doctest::Approx(rs_c).epsilon(1e-12));
    CHECK(scores.at("c").cs == doctest::Approx(0.5).epsilon(1e-12));

    for (const auto& [name, s] : scores) {
        CHECK(s.cs >= 0.0);
        CHECK(s.cs <= 1.0);
        CHECK(s.rs >= 0.0);
        CHECK(s.rs <= 1.0);
    }
}

TEST_CASE("standardize_scores: improving interior SCR cannot lower CS") {
    std::map<std::string, RawMetrics> table;
    table["lo"] = {0.0, 1.0, 1.0, 1.0};
    table["mid"] = {0.4, 2.0, 2.0, 2.0};
    table["hi"] = {1.0, 3.0, 3.0, 3.0};
    const double before = standardize_scores(table).at("mid").cs;
    table["mid"].scr = 0.6;  // still interior
    const double after = standardize_scores(table).at("mid").cs;
    CHECK(after >= before);
}

TEST_CASE("standardize_scores rejects degenerate columns") {
    std::map<std::string, RawMetrics> table;
    table["a"] = {0.1, 2.0, 5.0, 3.0};
    table["b"] = {0.5, 2.0, 3.0, 1.0};  // ORR column constant
    try {
        standardize_scores(table);
        FAIL("expected throw");
    } catch (const CcdiffError& e) {
        CHECK(e.code() == ErrorCode::DegenerateColumn);
    }
}

TEST_CASE("gd_igd: containment and the hand-computed corner") {
    const std::vector<std::pair<double, double>> front = {{0, 1}, {1, 0}};
    auto [gd, igd] = gd_igd(front, front);
    CHECK(gd == doctest::Approx(0.0));
    CHECK(igd == doctest::Approx(0.0));

    std::tie(gd, igd) = gd_igd({{0, 0}}, front);
    CHECK(gd == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(igd == doctest::Approx(1.0).epsilon(1e-12));

    // subset of the front: GD 0, IGD > 0
    std::tie(gd, igd) = gd_igd({{0, 1}}, front);
    CHECK(gd == doctest::Approx(0.0));
    CHECK(igd == doctest::Approx(std::sqrt(2.0 / 2)).epsilon(1e-12));
}

TEST_CASE("gd_igd nonnegative, zero iff contained") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::pair<double, double>> sols, front;
        for (int i = 0; i < 4; ++i) front.push_back({rng.uniform(0, 1), rng.uniform(0, 1)});
        for (int i = 0; i < 3; ++i) sols.push_back({rng.uniform(0, 1), rng.uniform(0, 1)});
        const auto [gd, igd] = gd_igd(sols, front);
        CHECK(gd >= 0.0);
        CHECK(igd >= 0.0);
        // random continuous draws are almost surely not contained in the front
        CHECK(gd > 1e-12);
        CHECK(igd > 1e-12);
        const auto [gd2, igd2] = gd_igd({front[0]}, front);
        CHECK(gd2 <= 1e-12);
        (void)igd2;
    }
}

TEST_CASE("pareto_front keeps exactly the nondominated points") {
    using P = std::pair<double, double>;
    CHECK(pareto_front({{0.4, 0.7}}) == std::vector<P>{{0.4, 0.7}});
    const auto all3 = pareto_front({{1, 0}, {0, 1}, {0.5, 0.5}});
    CHECK(all3.size() == 3);
    const auto dominated = pareto_front({{1, 1}, {0.5, 0.5}});
    CHECK(dominated == std::vector<P>{{1, 1}});
}

TEST_CASE("scr and orr are invariant under agent permutation") {
    const Trajectory t = coast({make_state(0, 25, 0, 5), make_state(25, 0, kPi / 2, 5),
                                make_state(50, 50, 0, 1)},
                               40);
    Trajectory perm(t.T, t.N, t.dt);
    const int p[3] = {2, 0, 1};
    perm.initial.resize(3);
    for (int n = 0; n < 3; ++n) perm.initial[p[n]] = t.initial[n];
    for (int step = 0; step < t.T; ++step)
        for (int n = 0; n < 3; ++n) {
            perm.state(step, p[n]) = t.state(step, n);
            perm.action(step, p[n]) = t.action(step, n);
        }
    CHECK(scr({t}, {t.agent_radii()}) == scr({perm}, {perm.agent_radii()}));
    CHECK(orr(t, tiny_map()) == orr(perm, tiny_map()));
}

}  // TEST_SUITE
