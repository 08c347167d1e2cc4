#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "ccdiff/causal.hpp"
#include "ccdiff/denoiser.hpp"
#include "ccdiff/guidance.hpp"
#include "ccdiff/rng.hpp"
#include "ccdiff/types.hpp"

namespace ccdiff {

enum class ScheduleKind { Cosine, Linear };

// DDPM variance schedule, index 0..K with the identity step at 0 (beta 0, alpha_bar 1).
struct NoiseSchedule {
    int K = 0;
    std::vector<double> betas, alphas, alpha_bars, sigmas;

    static NoiseSchedule make(ScheduleKind kind, int steps);
};

// x_k = sqrt(alpha_bar_k) x0 + sqrt(1 - alpha_bar_k) noise, elementwise.
ActionTensor forward_noise(const ActionTensor& x0, int k, const NoiseSchedule& schedule,
                           const ActionTensor& noise);

// Classifier-free mixing: rows with rho = 1 get (1-w)*uncond + w*cond, rows with
// rho = 0 pass cond unchanged. w == 1 returns cond exactly.
ActionTensor cfg_combine(const ActionTensor& cond, const ActionTensor& uncond, double w,
                         const std::vector<uint8_t>& rho);
ActionTensor cfg_combine(const ActionTensor& cond, const ActionTensor& uncond, double w);

enum class RankingMode { Causal, Distance, Random, All };
enum class MaskMode { Ttc, None };

RankingMode ranking_mode_from_name(const std::string& name);
MaskMode mask_mode_from_name(const std::string& name);
const char* ranking_mode_name(RankingMode m);
const char* mask_mode_name(MaskMode m);

struct SamplerConfig {
    double w = 1.5;        // guidance scale, paper range [1, 2)
    int n_c = 5;           // controllable-agent budget
    double c_ttc = 3.0;    // s
    double d_max = 50.0;   // m
    GuidanceSpec guidance;
    uint64_t seed = 0;
    int gen_steps = 52;
    RankingMode ranking = RankingMode::Causal;
    MaskMode mask_mode = MaskMode::Ttc;
    bool guidance_masking = true;  // false = dense guidance over all agents
    bool freeze_graph = false;     // reuse the step-K graph/ranking for all steps
    ActionBounds bounds;
};

struct SampleTrace {
    std::vector<std::vector<uint8_t>> rho_per_step;  // newest (k = K) first
    DecisionCausalGraph graph;
    int guidance_applications = 0;
};

// Reverse diffusion with causal conditioning, classifier-free mixing over the top-N_c
// agents, and masked classifier guidance. Deterministic given cfg.seed.
Trajectory guided_sample(const Scene& scene, const Denoiser& denoiser,
                         const NoiseSchedule& schedule, const SamplerConfig& cfg,
                         SampleTrace* trace = nullptr);

struct TrainConfig {
    double p_uncond = 0.1;
    double lr = 1e-4;
    int batch = 100;
    double ema_decay = 0.995;
    int steps = 1000;
    double yaw_reg = 0.1;
    double c_ttc = 3.0;
    double d_max = 50.0;
};

struct TrainItem {
    const Scene* scene = nullptr;
    const Trajectory* future = nullptr;
};

// One noised training example with its conditioning graph and normalized targets.
struct PreparedItem {
    ActionTensor noisy;
    Mat target;  // [N][T*2]
    Mat map_ctx;
    BoolMat graph_mask;
    bool identity_graph = false;
    int k = 1;
    const Scene* scene = nullptr;
};

PreparedItem prepare_train_item(const Scene& scene, const Trajectory& future, int k,
                                bool identity_graph, const ActionTensor& noise,
                                const NoiseSchedule& schedule, const Normalizer& norm,
                                double c_ttc, double d_max);

struct BatchLossResult {
    double loss = 0.0;
    std::vector<double> grads;
};

// Mean squared clean-action prediction error plus yaw-rate regularization, with
// parameter gradients. Items evaluate in parallel; gradients merge in item order.
BatchLossResult training_loss(const DenoiserArch& arch, const double* params,
                              const std::vector<PreparedItem>& items, double yaw_reg);

struct TrainStepTrace {
    int identity_graphs = 0;
    int dcg_graphs = 0;
    std::vector<int> ks;
};

Normalizer fit_normalizer(const std::vector<const Trajectory*>& futures);

// Owns the parameter vector, Adam state, and the EMA shadow.
class Trainer {
public:
    Trainer(DenoiserArch arch, TrainConfig cfg, NoiseSchedule schedule, Normalizer norm,
            uint64_t seed);

    // Noises the batch, builds conditioning graphs (identity with prob p_uncond),
    // applies one Adam update and the EMA shadow update. Returns the batch loss.
    double train_step(const std::vector<TrainItem>& batch, TrainStepTrace* trace = nullptr);

    const DenoiserArch& arch() const { return arch_; }
    const TrainConfig& config() const { return cfg_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    const Normalizer& normalizer() const { return norm_; }
    const std::vector<double>& params() const { return params_; }
    const std::vector<double>& ema_params() const { return ema_; }
    long step_count() const { return step_count_; }

private:
    DenoiserArch arch_;
    TrainConfig cfg_;
    NoiseSchedule schedule_;
    Normalizer norm_;
    std::vector<double> params_, ema_, adam_m_, adam_v_;
    long step_count_ = 0;
    Rng rng_;
};

}  // namespace ccdiff
