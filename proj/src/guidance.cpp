#include "ccdiff/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ccdiff/dynamics.hpp"
#include "ccdiff/errors.hpp"

namespace ccdiff {

double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace {

constexpr double kEdtInf = 1e18;

// Felzenszwalb-Huttenlocher 1D squared distance transform.
void dt1d(const std::vector<double>& f, std::vector<double>& d, int n) {
    std::vector<int> v(n, 0);
    std::vector<double> z(n + 1, 0.0);
    int k = 0;
    z[0] = -kEdtInf;
    z[1] = kEdtInf;
    for (int q = 1; q < n; ++q) {
        double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        while (s <= z[k]) {
            --k;
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kEdtInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]];
    }
}

// Squared distance in cell units from every cell to the nearest seed cell.
std::vector<double> edt_sq(const std::vector<uint8_t>& seed, int w, int h) {
    std::vector<double> grid(static_cast<size_t>(w) * h);
    for (size_t i = 0; i < grid.size(); ++i) grid[i] = seed[i] ? 0.0 : kEdtInf;

    std::vector<double> f(std::max(w, h)), d(std::max(w, h));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f[x] = grid[static_cast<size_t>(y) * w + x];
        dt1d(f, d, w);
        for (int x = 0; x < w; ++x) grid[static_cast<size_t>(y) * w + x] = d[x];
    }
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) f[y] = grid[static_cast<size_t>(y) * w + x];
        dt1d(f, d, h);
        for (int y = 0; y < h; ++y) grid[static_cast<size_t>(y) * w + x] = d[y];
    }
    return grid;
}

}  // namespace

SignedDistanceField SignedDistanceField::build(const MapModel& map) {
    const int w = map.width, h = map.height;
    // Pad with a one-cell non-drivable ring so the grid border is a boundary too.
    const int pw = w + 2, ph = h + 2;
    std::vector<uint8_t> nondriv(static_cast<size_t>(pw) * ph, 1);
    std::vector<uint8_t> driv(static_cast<size_t>(pw) * ph, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool d = map.drivable[static_cast<size_t>(y) * w + x] != 0;
            nondriv[static_cast<size_t>(y + 1) * pw + (x + 1)] = d ? 0 : 1;
            driv[static_cast<size_t>(y + 1) * pw + (x + 1)] = d ? 1 : 0;
        }
    }
    const auto dist_to_nondriv = edt_sq(nondriv, pw, ph);
    const auto dist_to_driv = edt_sq(driv, pw, ph);

    SignedDistanceField sdf;
    sdf.width = w;
    sdf.height = h;
    sdf.origin_x = map.origin_x;
    sdf.origin_y = map.origin_y;
    sdf.resolution = map.resolution;
    sdf.values.resize(static_cast<size_t>(w) * h);
    const double cap = (w + h) * map.resolution;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t p = static_cast<size_t>(y + 1) * pw + (x + 1);
            const bool d = map.drivable[static_cast<size_t>(y) * w + x] != 0;
            // Half-cell shift puts the zero level on the region boundary.
            double v = d ? (std::sqrt(dist_to_nondriv[p]) - 0.5) * map.resolution
                         : -(std::sqrt(dist_to_driv[p]) - 0.5) * map.resolution;
            sdf.values[static_cast<size_t>(y) * w + x] = std::clamp(v, -cap, cap);
        }
    }
    return sdf;
}

double SignedDistanceField::sample(double x, double y, double* gx, double* gy) const {
    // Continuous cell-center coordinates.
    const double u = (x - origin_x) / resolution - 0.5;
    const double v = (y - origin_y) / resolution - 0.5;
    const double uc = std::clamp(u, 0.0, static_cast<double>(width - 1));
    const double vc = std::clamp(v, 0.0, static_cast<double>(height - 1));

    int i0 = static_cast<int>(std::floor(uc));
    int j0 = static_cast<int>(std::floor(vc));
    i0 = std::clamp(i0, 0, std::max(0, width - 2));
    j0 = std::clamp(j0, 0, std::max(0, height - 2));
    const int i1 = std::min(i0 + 1, width - 1);
    const int j1 = std::min(j0 + 1, height - 1);
    const double fu = uc - i0;
    const double fv = vc - j0;

    auto val = [&](int i, int j) { return values[static_cast<size_t>(j) * width + i]; };
    const double v00 = val(i0, j0), v10 = val(i1, j0), v01 = val(i0, j1), v11 = val(i1, j1);
    const double vlo = v00 * (1.0 - fu) + v10 * fu;
    const double vhi = v01 * (1.0 - fu) + v11 * fu;
    double out = vlo * (1.0 - fv) + vhi * fv;

    double dvdx = 0.0, dvdy = 0.0;
    const bool in_u = (u > 0.0 && u < width - 1);
    const bool in_v = (v > 0.0 && v < height - 1);
    if (in_u) dvdx = ((v10 - v00) * (1.0 - fv) + (v11 - v01) * fv) / resolution;
    if (in_v) dvdy = ((v01 - v00) * (1.0 - fu) + (v11 - v10) * fu) / resolution;

    // Linear continuation beyond the cell-center hull keeps outside points off-road.
    const double du = u - uc, dv_ = v - vc;
    const double ext = std::sqrt(du * du + dv_ * dv_);
    if (ext > 0.0) {
        out -= ext * resolution;
        dvdx += -du / ext;
        dvdy += -dv_ / ext;
    }
    if (gx) *gx = dvdx;
    if (gy) *gy = dvdy;
    return out;
}

ActionTensor backprop_through_rollout(const Trajectory& traj, const StateGrads& grads,
                                      const ActionBounds& bounds) {
    if (traj.initial.size() != static_cast<size_t>(traj.N))
        throw CcdiffError(ErrorCode::BadParams, "backprop_through_rollout: trajectory lacks initial states");
    ActionTensor out(traj.T, traj.N, 0.0);
    const double dt = traj.dt;
    for (int n = 0; n < traj.N; ++n) {
        double gx = 0.0, gy = 0.0, gv = 0.0, gth = 0.0;
        for (int t = traj.T - 1; t >= 0; --t) {
            const size_t k = grads.idx(t, n);
            gx += grads.x[k];
            gy += grads.y[k];
            gv += grads.speed[k];
            gth += grads.heading[k];

            const AgentState& s = traj.state(t, n);
            const Action& a = traj.action(t, n);
            const double prev_speed = t > 0 ? traj.state(t - 1, n).speed : traj.initial[n].speed;

            const double gv_t = gv + (gx * std::cos(s.heading) + gy * std::sin(s.heading)) * dt;
            const double gth_t =
                gth + (-gx * std::sin(s.heading) + gy * std::cos(s.heading)) * s.speed * dt;

            const bool speed_active =
                bounds.allow_reverse || (prev_speed + a.accel * dt) > 0.0;
            const double gpre = speed_active ? gv_t : 0.0;
            const bool accel_interior = std::fabs(a.accel) < bounds.a_max;
            const bool yaw_interior = std::fabs(a.yaw_rate) < bounds.r_max;

            out.at(t, n, 0) = accel_interior ? gpre * dt : 0.0;
            out.at(t, n, 1) = yaw_interior ? gth_t * dt : 0.0;

            gv = gpre;
            gth = gth_t;
        }
    }
    return out;
}

namespace {

std::vector<int> resolve_scope(const std::vector<int>& scope, int n) {
    if (!scope.empty()) return scope;
    std::vector<int> all(n);
    for (int i = 0; i < n; ++i) all[i] = i;
    return all;
}

}  // namespace

CostResult collision_cost(const Trajectory& traj, const std::vector<double>& radii,
                          double discount, const std::vector<int>& scope, double margin,
                          const ActionBounds& bounds) {
    const auto agents = resolve_scope(scope, traj.N);
    StateGrads grads(traj.T, traj.N);
    std::vector<double> per_t(traj.T, 0.0);

#pragma omp parallel for schedule(static)
    for (int t = 0; t < traj.T; ++t) {
        const double gamma = std::pow(discount, t);
        for (size_t ai = 0; ai < agents.size(); ++ai) {
            for (size_t aj = ai + 1; aj < agents.size(); ++aj) {
                const int i = agents[ai], j = agents[aj];
                const AgentState& a = traj.state(t, i);
                const AgentState& b = traj.state(t, j);
                const double dx = a.x - b.x, dy = a.y - b.y;
                const double d = std::hypot(dx, dy);
                const double d_safe = radii[i] + radii[j] + margin;
                per_t[t] += gamma * softplus(d_safe - d);
                if (d > 0.0) {
                    const double s = gamma * sigmoid(d_safe - d);
                    grads.x[grads.idx(t, i)] += -s * dx / d;
                    grads.y[grads.idx(t, i)] += -s * dy / d;
                    grads.x[grads.idx(t, j)] += s * dx / d;
                    grads.y[grads.idx(t, j)] += s * dy / d;
                }
            }
        }
    }
    CostResult res;
    for (int t = 0; t < traj.T; ++t) res.cost += per_t[t];
    res.grad = backprop_through_rollout(traj, grads, bounds);
    return res;
}

CostResult offroad_cost(const Trajectory& traj, const SignedDistanceField& sdf, double discount,
                        const std::vector<int>& scope, const ActionBounds& bounds) {
    const auto agents = resolve_scope(scope, traj.N);
    StateGrads grads(traj.T, traj.N);
    std::vector<double> per_t(traj.T, 0.0);

#pragma omp parallel for schedule(static)
    for (int t = 0; t < traj.T; ++t) {
        const double gamma = std::pow(discount, t);
        for (int i : agents) {
            const AgentState& s = traj.state(t, i);
            double gx = 0.0, gy = 0.0;
            const double d = sdf.sample(s.x, s.y, &gx, &gy);
            per_t[t] += gamma * softplus(-d);
            const double w = -gamma * sigmoid(-d);
            grads.x[grads.idx(t, i)] += w * gx;
            grads.y[grads.idx(t, i)] += w * gy;
        }
    }
    CostResult res;
    for (int t = 0; t < traj.T; ++t) res.cost += per_t[t];
    res.grad = backprop_through_rollout(traj, grads, bounds);
    return res;
}

CostResult offroad_cost(const Trajectory& traj, const MapModel& map, double discount,
                        const std::vector<int>& scope, const ActionBounds& bounds) {
    return offroad_cost(traj, SignedDistanceField::build(map), discount, scope, bounds);
}

CostResult overspeed_cost(const Trajectory& traj, double v_limit, double discount,
                          const std::vector<int>& scope, const ActionBounds& bounds) {
    const auto agents = resolve_scope(scope, traj.N);
    StateGrads grads(traj.T, traj.N);
    CostResult res;
    for (int t = 0; t < traj.T; ++t) {
        const double gamma = std::pow(discount, t);
        for (int i : agents) {
            const double v = traj.state(t, i).speed;
            res.cost -= gamma * softplus(v - v_limit);
            grads.speed[grads.idx(t, i)] -= gamma * sigmoid(v - v_limit);
        }
    }
    res.grad = backprop_through_rollout(traj, grads, bounds);
    return res;
}

GuidanceEval evaluate_guidance(const GuidanceContext& ctx, const ActionTensor& actions,
                               const GuidanceSpec& spec) {
    const Trajectory traj = rollout(ctx.initial, actions, ctx.dt, ctx.bounds);
    const auto radii = traj.agent_radii();

    GuidanceEval eval;
    eval.grad = ActionTensor(actions.T, actions.N, 0.0);
    for (const auto& term : spec.terms) {
        CostResult r;
        switch (term.cost) {
            case CostId::Collision:
                r = collision_cost(traj, radii, spec.discount, term.scope, 0.5, ctx.bounds);
                break;
            case CostId::Offroad:
                if (!ctx.sdf)
                    throw CcdiffError(ErrorCode::BadParams, "offroad guidance needs an SDF");
                r = offroad_cost(traj, *ctx.sdf, spec.discount, term.scope, ctx.bounds);
                break;
            case CostId::Overspeed:
                r = overspeed_cost(traj, term.v_limit, spec.discount, term.scope, ctx.bounds);
                break;
        }
        eval.per_term.push_back(r.cost);
        eval.total += term.weight * r.cost;
        for (size_t k = 0; k < eval.grad.v.size(); ++k) eval.grad.v[k] += term.weight * r.grad.v[k];
    }
    return eval;
}

ActionTensor masked_guidance_update(const ActionTensor& actions, const std::vector<uint8_t>& rho,
                                    const GuidanceSpec& spec, const GuidanceContext& ctx) {
    ActionTensor a = actions;
    if (spec.empty()) return a;

    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    std::vector<double> m(a.v.size(), 0.0), v(a.v.size(), 0.0);

    for (int step = 1; step <= spec.grad_steps; ++step) {
        GuidanceEval eval = evaluate_guidance(ctx, a, spec);
        auto& g = eval.grad;
        for (int t = 0; t < a.T; ++t)
            for (int n = 0; n < a.N; ++n)
                if (!rho[n]) g.at(t, n, 0) = g.at(t, n, 1) = 0.0;

        double norm_sq = 0.0;
        for (double x : g.v) norm_sq += x * x;
        const double norm = std::sqrt(norm_sq);
        if (norm > spec.grad_norm_clip) {
            const double scale = spec.grad_norm_clip / norm;
            for (double& x : g.v) x *= scale;
        }

        const double bc1 = 1.0 - std::pow(kBeta1, step);
        const double bc2 = 1.0 - std::pow(kBeta2, step);
        for (size_t k = 0; k < a.v.size(); ++k) {
            m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g.v[k];
            v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g.v[k] * g.v[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            a.v[k] -= spec.grad_lr * mhat / (std::sqrt(vhat) + kEps);
        }
    }
    for (double x : a.v)
        if (!std::isfinite(x))
            throw CcdiffError(ErrorCode::NonFiniteState, "guidance update diverged");
    return a;
}

}  // namespace ccdiff
