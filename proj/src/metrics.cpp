#include "ccdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ccdiff/errors.hpp"

namespace ccdiff {

bool trajectory_has_collision(const Trajectory& traj, const std::vector<double>& radii) {
    for (int t = 0; t < traj.T; ++t) {
        for (int i = 0; i < traj.N; ++i) {
            for (int j = i + 1; j < traj.N; ++j) {
                const AgentState& a = traj.state(t, i);
                const AgentState& b = traj.state(t, j);
                const double rs = radii[i] + radii[j];
                const double dx = a.x - b.x, dy = a.y - b.y;
                if (dx * dx + dy * dy <= rs * rs) return true;
            }
        }
    }
    return false;
}

double scr(const std::vector<Trajectory>& batch, const std::vector<std::vector<double>>& radii) {
    if (batch.empty()) throw CcdiffError(ErrorCode::BadParams, "scr: empty batch");
    int hits = 0;
    for (size_t s = 0; s < batch.size(); ++s)
        if (trajectory_has_collision(batch[s], radii[s])) ++hits;
    return static_cast<double>(hits) / batch.size();
}

double orr(const Trajectory& traj, const MapModel& map) {
    if (traj.T == 0 || traj.N == 0) return 0.0;
    int off = 0;
    for (int t = 0; t < traj.T; ++t)
        for (int n = 0; n < traj.N; ++n)
            if (!map.point_drivable(traj.state(t, n).x, traj.state(t, n).y)) ++off;
    return 100.0 * off / (static_cast<double>(traj.T) * traj.N);
}

double fde(const Trajectory& generated, const Trajectory& reference) {
    if (generated.N != reference.N)
        throw CcdiffError(ErrorCode::BadParams, "fde: agent count mismatch");
    if (generated.N == 0) return 0.0;
    double sum = 0.0;
    for (int n = 0; n < generated.N; ++n) {
        const AgentState& a = generated.state(generated.T - 1, n);
        const AgentState& b = reference.state(reference.T - 1, n);
        sum += std::hypot(a.x - b.x, a.y - b.y);
    }
    return sum / generated.N;
}

namespace {

// (mean |accel|, mean |jerk|) from position differences.
std::pair<double, double> comfort_features(const Trajectory& traj, int agent) {
    const int T = traj.T;
    const double dt = traj.dt;
    double acc_sum = 0.0;
    int acc_n = 0;
    double jerk_sum = 0.0;
    int jerk_n = 0;
    auto px = [&](int t) { return traj.state(t, agent).x; };
    auto py = [&](int t) { return traj.state(t, agent).y; };
    for (int t = 1; t + 1 < T; ++t) {
        const double ax = (px(t + 1) - 2.0 * px(t) + px(t - 1)) / (dt * dt);
        const double ay = (py(t + 1) - 2.0 * py(t) + py(t - 1)) / (dt * dt);
        acc_sum += std::hypot(ax, ay);
        ++acc_n;
        if (t + 2 < T) {
            const double jx = (px(t + 2) - 3.0 * px(t + 1) + 3.0 * px(t) - px(t - 1)) / (dt * dt * dt);
            const double jy = (py(t + 2) - 3.0 * py(t + 1) + 3.0 * py(t) - py(t - 1)) / (dt * dt * dt);
            jerk_sum += std::hypot(jx, jy);
            ++jerk_n;
        }
    }
    return {acc_n > 0 ? acc_sum / acc_n : 0.0, jerk_n > 0 ? jerk_sum / jerk_n : 0.0};
}

}  // namespace

double cfd(const Trajectory& generated, const Trajectory& reference) {
    if (generated.N != reference.N)
        throw CcdiffError(ErrorCode::BadParams, "cfd: agent count mismatch");
    if (generated.N == 0) return 0.0;
    double sum = 0.0;
    for (int n = 0; n < generated.N; ++n) {
        const auto g = comfort_features(generated, n);
        const auto r = comfort_features(reference, n);
        sum += std::hypot(g.first - r.first, g.second - r.second);
    }
    return sum / generated.N;
}

namespace {

double standardize(double v, double lo, double hi, const char* name) {
    if (hi == lo) throw CcdiffError(ErrorCode::DegenerateColumn, name);
    return (v - lo) / (hi - lo);
}

}  // namespace

std::map<std::string, Scores> standardize_scores(const std::map<std::string, RawMetrics>& table) {
    if (table.size() < 2)
        throw CcdiffError(ErrorCode::BadParams, "standardize_scores needs >= 2 methods");
    const double inf = std::numeric_limits<double>::infinity();
    double lo_scr = inf, hi_scr = -inf, lo_orr = inf, hi_orr = -inf;
    double lo_fde = inf, hi_fde = -inf, lo_cfd = inf, hi_cfd = -inf;
    for (const auto& [name, m] : table) {
        lo_scr = std::min(lo_scr, m.scr);
        hi_scr = std::max(hi_scr, m.scr);
        lo_orr = std::min(lo_orr, m.orr);
        hi_orr = std::max(hi_orr, m.orr);
        lo_fde = std::min(lo_fde, m.fde);
        hi_fde = std::max(hi_fde, m.fde);
        lo_cfd = std::min(lo_cfd, m.cfd);
        hi_cfd = std::max(hi_cfd, m.cfd);
    }
    std::map<std::string, Scores> out;
    for (const auto& [name, m] : table) {
        Scores s;
        s.cs = standardize(m.scr, lo_scr, hi_scr, "SCR");
        s.rs = 1.0 - (standardize(m.orr, lo_orr, hi_orr, "ORR") +
                      standardize(m.fde, lo_fde, hi_fde, "FDE") +
                      standardize(m.cfd, lo_cfd, hi_cfd, "CFD")) /
                         3.0;
        out[name] = s;
    }
    return out;
}

namespace {

double min_dist(const std::pair<double, double>& p,
                const std::vector<std::pair<double, double>>& set) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : set)
        best = std::min(best, std::hypot(p.first - q.first, p.second - q.second));
    return best;
}

double power_mean_min_dist(const std::vector<std::pair<double, double>>& from,
                           const std::vector<std::pair<double, double>>& to, double q) {
    double sum = 0.0;
    for (const auto& p : from) sum += std::pow(min_dist(p, to), q);
    return std::pow(sum / from.size(), 1.0 / q);
}

}  // namespace

std::pair<double, double> gd_igd(const std::vector<std::pair<double, double>>& solutions,
                                 const std::vector<std::pair<double, double>>& front, double q) {
    if (solutions.empty() || front.empty())
        throw CcdiffError(ErrorCode::BadParams, "gd_igd: empty set");
    return {power_mean_min_dist(solutions, front, q), power_mean_min_dist(front, solutions, q)};
}

std::vector<std::pair<double, double>> pareto_front(
    const std::vector<std::pair<double, double>>& points) {
    std::vector<std::pair<double, double>> out;
    for (size_t i = 0; i < points.size(); ++i) {
        bool dominated = false;
        for (size_t j = 0; j < points.size() && !dominated; ++j) {
            if (i == j) continue;
            const bool geq = points[j].first >= points[i].first && points[j].second >= points[i].second;
            const bool gt = points[j].first > points[i].first || points[j].second > points[i].second;
            if (geq && gt) dominated = true;
        }
        if (!dominated) out.push_back(points[i]);
    }
    return out;
}

}  // namespace ccdiff
