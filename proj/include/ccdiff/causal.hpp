#pragma once

#include <limits>
#include <utility>
#include <vector>

#include "ccdiff/tensor.hpp"
#include "ccdiff/types.hpp"

namespace ccdiff {

constexpr double kInfTtc = std::numeric_limits<double>::infinity();

// Who influences whose next action: mask from TTC/distance gating, weights from
// masked-softmax attention. weights[i][j] is 0 wherever mask is false; every row sums
// to 1 over its masked support (the diagonal is always kept).
struct DecisionCausalGraph {
    BoolMat mask;
    Mat weights;

    int size() const { return mask.rows; }

    static DecisionCausalGraph identity(int n);

    // Off-diagonal masked edge count (the diagonal does not count toward sparsity).
    int edge_count() const;
};

struct CausalRank {
    std::vector<int> order;          // agent ids, most important first
    std::vector<uint8_t> rho;        // rho[i] = 1 iff i ranks in the top N_c
    std::vector<int> occurrences;    // cliques containing each node
    std::vector<double> clique_weight;  // accumulated edge weight of the clique seeded at each node
};

// Earliest t >= 0 at which two constant-velocity disc agents overlap; +inf if never.
// Exactly symmetric in its arguments.
double compute_ttc(const AgentState& a, const AgentState& b);

// M[i][j] = (TTC(i,j) <= c_ttc and dist(i,j) <= d_max) or i == j.
BoolMat ttc_mask(const Scene& scene, double c_ttc, double d_max);
BoolMat ttc_mask(const std::vector<AgentState>& states, double c_ttc, double d_max);

// Row-wise softmax of attn_logits restricted to masked-true entries.
DecisionCausalGraph build_dcg(const BoolMat& mask, const Mat& attn_logits);

// Appendix-style greedy clique growth from every seed node (candidates visited in
// ascending id), then sort by (occurrences desc, seeded clique weight desc, id asc).
CausalRank causal_rank(const DecisionCausalGraph& g, int n_c);

// Distinct greedy cliques of size >= 2; the per-scene interaction feature correlated
// against collision outcomes.
int clique_count(const DecisionCausalGraph& g);

// Fraction of agents whose (realism, reward) gradient rows have negative inner
// product, and the mean cosine over that conflicted subset. Zero-norm rows are
// excluded from both statistics.
std::pair<double, double> conflict_diagnostics(const Mat& realism_grads, const Mat& reward_grads);

// Pearson R^2 between the feature and the 0/1 label plus a two-sided p-value from the
// t-distribution. Throws DegenerateFeature when either column has zero variance.
std::pair<double, double> clique_collision_correlation(
    const std::vector<std::pair<double, int>>& samples);

}  // namespace ccdiff
