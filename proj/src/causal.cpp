#include "ccdiff/causal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ccdiff/errors.hpp"

namespace ccdiff {

DecisionCausalGraph DecisionCausalGraph::identity(int n) {
    DecisionCausalGraph g;
    g.mask = BoolMat::identity(n);
    g.weights = Mat(n, n, 0.0);
    for (int i = 0; i < n; ++i) g.weights.at(i, i) = 1.0;
    return g;
}

int DecisionCausalGraph::edge_count() const {
    int count = 0;
    for (int i = 0; i < mask.rows; ++i)
        for (int j = 0; j < mask.cols; ++j)
            if (i != j && mask.at(i, j)) ++count;
    return count;
}

double compute_ttc(const AgentState& a, const AgentState& b) {
    const double px = b.x - a.x, py = b.y - a.y;
    const double vx = b.vx() - a.vx(), vy = b.vy() - a.vy();
    const double radius = footprint_radius(a) + footprint_radius(b);

    const double c = px * px + py * py - radius * radius;
    if (c <= 0.0) return 0.0;  // already overlapping
    const double qa = vx * vx + vy * vy;
    const double qb = 2.0 * (px * vx + py * vy);
    if (qa == 0.0) return kInfTtc;
    const double disc = qb * qb - 4.0 * qa * c;
    if (disc < 0.0) return kInfTtc;
    const double t = (-qb - std::sqrt(disc)) / (2.0 * qa);
    return t >= 0.0 ? t : kInfTtc;
}

BoolMat ttc_mask(const std::vector<AgentState>& states, double c_ttc, double d_max) {
    const int n = static_cast<int>(states.size());
    BoolMat m(n, n, false);
    for (int i = 0; i < n; ++i) {
        m.set(i, i, true);
        for (int j = i + 1; j < n; ++j) {
            const double dist = std::hypot(states[i].x - states[j].x, states[i].y - states[j].y);
            const bool edge = compute_ttc(states[i], states[j]) <= c_ttc && dist <= d_max;
            m.set(i, j, edge);
            m.set(j, i, edge);
        }
    }
    return m;
}

BoolMat ttc_mask(const Scene& scene, double c_ttc, double d_max) {
    return ttc_mask(scene.current_states(), c_ttc, d_max);
}

DecisionCausalGraph build_dcg(const BoolMat& mask, const Mat& attn_logits) {
    if (mask.rows != attn_logits.rows || mask.cols != attn_logits.cols)
        throw CcdiffError(ErrorCode::BadParams, "build_dcg: shape mismatch");
    const int n = mask.rows;
    DecisionCausalGraph g;
    g.mask = mask;
    for (int i = 0; i < n; ++i) g.mask.set(i, i, true);
    g.weights = Mat(n, n, 0.0);
    for (int i = 0; i < n; ++i) {
        double maxlogit = -kInfTtc;
        for (int j = 0; j < n; ++j)
            if (g.mask.at(i, j)) maxlogit = std::max(maxlogit, attn_logits.at(i, j));
        double denom = 0.0;
        for (int j = 0; j < n; ++j)
            if (g.mask.at(i, j)) denom += std::exp(attn_logits.at(i, j) - maxlogit);
        for (int j = 0; j < n; ++j)
            if (g.mask.at(i, j))
                g.weights.at(i, j) = std::exp(attn_logits.at(i, j) - maxlogit) / denom;
    }
    return g;
}

namespace {

struct GrownClique {
    std::vector<int> members;  // ascending ids
    double weight = 0.0;
};

bool clique_adjacent(const DecisionCausalGraph& g, int a, int b) {
    return a != b && g.mask.at(a, b) && g.mask.at(b, a);
}

double clique_edge_weight(const DecisionCausalGraph& g, int a, int b) {
    return g.weights.at(a, b) + g.weights.at(b, a);
}

// One clique per seed: scan candidates in ascending id, admit a node iff adjacent to
// every current member. The admission weight sums edge weights over members in
// ascending id; that order is part of the documented definition so independent
// implementations agree bit-for-bit.
std::vector<GrownClique> grow_cliques(const DecisionCausalGraph& g) {
    const int n = g.size();
    std::vector<GrownClique> cliques(n);
    for (int seed = 0; seed < n; ++seed) {
        GrownClique& c = cliques[seed];
        c.members = {seed};
        for (int cand = 0; cand < n; ++cand) {
            if (cand == seed) continue;
            bool ok = true;
            for (int m : c.members) {
                if (!clique_adjacent(g, cand, m)) {
                    ok = false;
                    break;
                }
            }
            if (!ok) continue;
            for (int m : c.members) c.weight += clique_edge_weight(g, cand, m);
            c.members.insert(std::lower_bound(c.members.begin(), c.members.end(), cand), cand);
        }
    }
    return cliques;
}

}  // namespace

CausalRank causal_rank(const DecisionCausalGraph& g, int n_c) {
    const int n = g.size();
    const auto cliques = grow_cliques(g);

    CausalRank rank;
    rank.occurrences.assign(n, 0);
    rank.clique_weight.assign(n, 0.0);
    for (int seed = 0; seed < n; ++seed) {
        rank.clique_weight[seed] = cliques[seed].weight;
        for (int m : cliques[seed].members) rank.occurrences[m] += 1;
    }

    rank.order.resize(n);
    std::iota(rank.order.begin(), rank.order.end(), 0);
    std::sort(rank.order.begin(), rank.order.end(), [&](int a, int b) {
        if (rank.occurrences[a] != rank.occurrences[b])
            return rank.occurrences[a] > rank.occurrences[b];
        if (rank.clique_weight[a] != rank.clique_weight[b])
            return rank.clique_weight[a] > rank.clique_weight[b];
        return a < b;
    });

    rank.rho.assign(n, 0);
    const int top = std::min(n_c, n);
    for (int p = 0; p < top; ++p) rank.rho[rank.order[p]] = 1;
    return rank;
}

int clique_count(const DecisionCausalGraph& g) {
    std::set<std::vector<int>> distinct;
    for (const auto& c : grow_cliques(g))
        if (c.members.size() >= 2) distinct.insert(c.members);
    return static_cast<int>(distinct.size());
}

std::pair<double, double> conflict_diagnostics(const Mat& realism_grads, const Mat& reward_grads) {
    if (realism_grads.rows != reward_grads.rows || realism_grads.cols != reward_grads.cols)
        throw CcdiffError(ErrorCode::BadParams, "conflict_diagnostics: shape mismatch");
    const int n = realism_grads.rows, d = realism_grads.cols;
    int counted = 0, conflicted = 0;
    double cos_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int k = 0; k < d; ++k) {
            const double a = realism_grads.at(i, k), b = reward_grads.at(i, k);
            dot += a * b;
            na += a * a;
            nb += b * b;
        }
        if (na == 0.0 || nb == 0.0) continue;
        ++counted;
        if (dot < 0.0) {
            ++conflicted;
            cos_sum += dot / std::sqrt(na * nb);
        }
    }
    const double frac = counted > 0 ? static_cast<double>(conflicted) / counted : 0.0;
    const double mean_cos = conflicted > 0 ? cos_sum / conflicted : 0.0;
    return {frac, mean_cos};
}

namespace {

// Continued fraction for the regularized incomplete beta (Lentz's method).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-14, kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                      b * std::log(1.0 - x);
    const double front = std::exp(ln);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

std::pair<double, double> clique_collision_correlation(
    const std::vector<std::pair<double, int>>& samples) {
    const int n = static_cast<int>(samples.size());
    if (n < 3) throw CcdiffError(ErrorCode::BadParams, "correlation needs >= 3 samples");

    double mx = 0.0, my = 0.0;
    for (const auto& s : samples) {
        mx += s.first;
        my += s.second;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (const auto& s : samples) {
        const double dx = s.first - mx, dy = s.second - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw CcdiffError(ErrorCode::DegenerateFeature, "zero-variance column");

    const double r = sxy / std::sqrt(sxx * syy);
    const double r2 = r * r;
    const double dof = n - 2;
    double p;
    if (r2 >= 1.0) {
        p = 0.0;
    } else {
        // two-sided p for t = r * sqrt(dof / (1 - r^2))
        p = reg_inc_beta(dof / 2.0, 0.5, dof / (dof + r2 * dof / (1.0 - r2)));
    }
    return {r2, p};
}

}  // namespace ccdiff
