#pragma once

#include <array>
#include <memory>
#include <vector>

#include "ccdiff/causal.hpp"
#include "ccdiff/rng.hpp"
#include "ccdiff/tensor.hpp"
#include "ccdiff/types.hpp"

namespace ccdiff {

// Per-channel standardization of the diffused action space; statistics come from the
// training set and travel with the checkpoint.
struct Normalizer {
    std::array<double, 2> mean{0.0, 0.0};
    std::array<double, 2> stdev{1.0, 1.0};

    double normalize(double raw, int c) const { return (raw - mean[c]) / stdev[c]; }
    double denormalize(double x, int c) const { return x * stdev[c] + mean[c]; }

    ActionTensor normalize(const ActionTensor& raw) const;
    ActionTensor denormalize(const ActionTensor& x) const;
};

// Desk-scale scene encoder. Per-agent history MLP (temporal path), masked spatial
// cross-attention over pair tokens built from the other agents' history embeddings and
// relative features, sinusoidal diffusion-step conditioning, map context injected at
// the output head. Predicts clean actions.
struct DenoiserArch {
    int history_steps = 31;
    int horizon = 52;  // predicted action steps
    int state_dim = 4;
    int d_model = 64;
    int n_heads = 2;
    int n_layers = 2;
    int d_rel = 32;
    int map_dim = 15;
    int d_map = 32;

    int hist_in() const { return history_steps * state_dim; }
    int act_in() const { return horizon * 2; }
    int head_dim() const { return d_model / n_heads; }
};

struct DenoiserInput {
    const ActionTensor* noisy_actions = nullptr;        // normalized, [T][N][2]
    const std::vector<AgentTrack>* agents = nullptr;    // histories, H states each
    const Mat* map_ctx = nullptr;                       // [N][map_dim]
    int k = 0;                                          // diffusion step
    const BoolMat* graph_mask = nullptr;                // nullptr = identity conditioning
};

struct DenoiseOutput {
    ActionTensor pred;  // normalized clean-action prediction, [T][N][2]
    Mat attn_logits;    // [N][N] history-only first-layer scores, mean over heads
};

class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual DenoiseOutput denoise(const DenoiserInput& input) const = 0;
    virtual const Normalizer& normalizer() const = 0;
};

// Relative position/velocity rotated into agent i's frame, scalar distance, and TTC
// clamped to kTtcCap. All zeros for i == j. Computed from the current states.
constexpr double kTtcCap = 20.0;
std::array<double, 6> relative_features(const std::vector<AgentTrack>& agents, int i, int j);

// Per row i: softmax over masked-true j of q_i . k_ij / sqrt(d), mixing values v_ij.
// Mask rows must be nonempty (the diagonal is always a valid support).
Mat masked_attention(const Mat& queries, const Cube& keys, const Cube& values,
                     const BoolMat& mask);

// Mean-pooled drivable-occupancy patch under each agent (3x3 pooled from 6x6 samples)
// plus nearest-lane offsets (longitudinal, lateral, heading error in the agent frame).
Mat map_context_features(const Scene& scene);

// Flat parameter vector layout.
struct ParamLayout {
    struct Seg {
        size_t off = 0;
        int rows = 0, cols = 0;  // bias: cols == 1
        size_t size() const { return static_cast<size_t>(rows) * cols; }
    };

    DenoiserArch arch;
    Seg w1h, b1h, w2h, b2h;  // history MLP
    Seg w1a, b1a;            // noisy-action embedding
    Seg w1k, b1k;            // diffusion-step embedding
    Seg wc, bc;              // temporal fuse
    Seg wr, br;              // relative-feature embedding
    Seg wp, bp;              // pair token
    std::vector<std::array<Seg, 4>> attn;  // per layer: wq, wk, wv, wo
    Seg wm, bm;              // map encoder
    Seg w1o, b1o, w2o, b2o;  // output head
    size_t total = 0;

    explicit ParamLayout(const DenoiserArch& a);
    std::vector<Seg> all_segments() const;
};

std::vector<double> init_params(const DenoiserArch& arch, Rng& rng);

// Scratch space reused by the backward pass.
struct NetCache;

DenoiseOutput net_forward(const DenoiserArch& arch, const double* params,
                          const DenoiserInput& input, NetCache* cache = nullptr);

// Accumulates d(loss)/d(params) into grad (size ParamLayout::total) given
// d(loss)/d(output) as a [N][T*2] matrix.
void net_backward(const DenoiserArch& arch, const double* params, const DenoiserInput& input,
                  const NetCache& cache, const Mat& dloss_dout, double* grad);

struct NetCache {
    int N = 0;
    std::vector<double> histfeat, actflat, kembed;
    std::vector<double> h1h, eh, ae, ke, h0;
    Cube relf, rel, pair;
    std::vector<std::vector<double>> q, kk, vv, attn_out, alpha, h_in;
    std::vector<double> me, z, out;
};

class LearnedDenoiser : public Denoiser {
public:
    LearnedDenoiser(DenoiserArch arch, std::vector<double> params, Normalizer norm);

    DenoiseOutput denoise(const DenoiserInput& input) const override;
    const Normalizer& normalizer() const override { return norm_; }

    const DenoiserArch& arch() const { return arch_; }
    const std::vector<double>& params() const { return params_; }

private:
    DenoiserArch arch_;
    std::vector<double> params_;
    Normalizer norm_;
};

// Closed-form conjugate-Gaussian posterior mean, the analytic stand-in used to check
// the sampler end to end: E[x0 | xk] for x0 ~ N(mu, sigma0^2) per coordinate.
class GaussianOracleDenoiser : public Denoiser {
public:
    GaussianOracleDenoiser(ActionTensor mu, double sigma0, std::vector<double> alpha_bars);

    DenoiseOutput denoise(const DenoiserInput& input) const override;
    const Normalizer& normalizer() const override { return norm_; }

private:
    ActionTensor mu_;
    double sigma0_;
    std::vector<double> alpha_bars_;
    Normalizer norm_;
};

}  // namespace ccdiff
