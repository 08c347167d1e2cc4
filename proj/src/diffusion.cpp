#include "ccdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ccdiff/dynamics.hpp"
#include "ccdiff/errors.hpp"

namespace ccdiff {

NoiseSchedule NoiseSchedule::make(ScheduleKind kind, int steps) {
    if (steps < 1) throw CcdiffError(ErrorCode::BadParams, "schedule needs >= 1 step");
    NoiseSchedule s;
    s.K = steps;
    s.betas.assign(steps + 1, 0.0);
    if (kind == ScheduleKind::Cosine) {
        constexpr double kShift = 0.008;
        auto f = [&](int k) {
            const double x = (static_cast<double>(k) / steps + kShift) / (1.0 + kShift);
            const double c = std::cos(x * kPi / 2.0);
            return c * c;
        };
        double prev = 1.0;
        for (int k = 1; k <= steps; ++k) {
            const double ab = f(k) / f(0);
            s.betas[k] = std::clamp(1.0 - ab / prev, 1e-8, 0.999);
            prev = ab;
        }
    } else {
        const double lo = 1e-4, hi = 0.05;
        for (int k = 1; k <= steps; ++k)
            s.betas[k] = steps > 1 ? lo + (hi - lo) * (k - 1) / (steps - 1) : lo;
    }
    s.alphas.assign(steps + 1, 1.0);
    s.alpha_bars.assign(steps + 1, 1.0);
    s.sigmas.assign(steps + 1, 0.0);
    for (int k = 1; k <= steps; ++k) {
        s.alphas[k] = 1.0 - s.betas[k];
        s.alpha_bars[k] = s.alpha_bars[k - 1] * s.alphas[k];
        s.sigmas[k] = std::sqrt(s.betas[k]);
    }
    return s;
}

ActionTensor forward_noise(const ActionTensor& x0, int k, const NoiseSchedule& schedule,
                           const ActionTensor& noise) {
    if (k < 0 || k > schedule.K)
        throw CcdiffError(ErrorCode::BadParams, "forward_noise: step out of range");
    if (noise.v.size() != x0.v.size())
        throw CcdiffError(ErrorCode::BadParams, "forward_noise: noise shape mismatch");
    const double a = std::sqrt(schedule.alpha_bars[k]);
    const double b = std::sqrt(1.0 - schedule.alpha_bars[k]);
    ActionTensor out = x0;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a * x0.v[i] + b * noise.v[i];
    return out;
}

ActionTensor cfg_combine(const ActionTensor& cond, const ActionTensor& uncond, double w,
                         const std::vector<uint8_t>& rho) {
    if (cond.v.size() != uncond.v.size())
        throw CcdiffError(ErrorCode::BadParams, "cfg_combine: shape mismatch");
    if (w == 1.0) return cond;
    ActionTensor out = cond;
    for (int t = 0; t < out.T; ++t)
        for (int n = 0; n < out.N; ++n)
            if (rho[n])
                for (int c = 0; c < 2; ++c)
                    out.at(t, n, c) = (1.0 - w) * uncond.at(t, n, c) + w * cond.at(t, n, c);
    return out;
}

ActionTensor cfg_combine(const ActionTensor& cond, const ActionTensor& uncond, double w) {
    return cfg_combine(cond, uncond, w, std::vector<uint8_t>(cond.N, 1));
}

RankingMode ranking_mode_from_name(const std::string& name) {
    if (name == "causal") return RankingMode::Causal;
    if (name == "distance") return RankingMode::Distance;
    if (name == "random") return RankingMode::Random;
    if (name == "all") return RankingMode::All;
    throw CcdiffError(ErrorCode::BadConfig, "unknown ranking mode '" + name + "'");
}

MaskMode mask_mode_from_name(const std::string& name) {
    if (name == "ttc") return MaskMode::Ttc;
    if (name == "none") return MaskMode::None;
    throw CcdiffError(ErrorCode::BadConfig, "unknown mask mode '" + name + "'");
}

const char* ranking_mode_name(RankingMode m) {
    switch (m) {
        case RankingMode::Causal: return "causal";
        case RankingMode::Distance: return "distance";
        case RankingMode::Random: return "random";
        case RankingMode::All: return "all";
    }
    return "?";
}

const char* mask_mode_name(MaskMode m) {
    return m == MaskMode::Ttc ? "ttc" : "none";
}

namespace {

std::vector<uint8_t> rank_agents(const DecisionCausalGraph& g, const Scene& scene,
                                 const SamplerConfig& cfg, int k, CausalRank* rank_out) {
    const int n = scene.num_agents();
    CausalRank rank;
    switch (cfg.ranking) {
        case RankingMode::Causal:
            rank = causal_rank(g, cfg.n_c);
            break;
        case RankingMode::Distance: {
            // closest-to-anyone first
            std::vector<double> min_dist(n, 1e300);
            const auto states = scene.current_states();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    if (i != j)
                        min_dist[i] = std::min(
                            min_dist[i], std::hypot(states[i].x - states[j].x,
                                                    states[i].y - states[j].y));
            rank.order.resize(n);
            std::iota(rank.order.begin(), rank.order.end(), 0);
            std::sort(rank.order.begin(), rank.order.end(), [&](int a, int b) {
                if (min_dist[a] != min_dist[b]) return min_dist[a] < min_dist[b];
                return a < b;
            });
            rank.rho.assign(n, 0);
            for (int p = 0; p < std::min(cfg.n_c, n); ++p) rank.rho[rank.order[p]] = 1;
            break;
        }
        case RankingMode::Random: {
            Rng shuffle_rng(mix_seed(cfg.seed, 0xA11C + static_cast<uint64_t>(k)));
            rank.order.resize(n);
            std::iota(rank.order.begin(), rank.order.end(), 0);
            for (int i = n - 1; i > 0; --i)
                std::swap(rank.order[i], rank.order[shuffle_rng.uniform_int(0, i)]);
            rank.rho.assign(n, 0);
            for (int p = 0; p < std::min(cfg.n_c, n); ++p) rank.rho[rank.order[p]] = 1;
            break;
        }
        case RankingMode::All: {
            rank.order.resize(n);
            std::iota(rank.order.begin(), rank.order.end(), 0);
            rank.rho.assign(n, 1);
            break;
        }
    }
    if (rank_out) *rank_out = rank;
    return rank.rho;
}

}  // namespace

Trajectory guided_sample(const Scene& scene, const Denoiser& denoiser,
                         const NoiseSchedule& schedule, const SamplerConfig& cfg,
                         SampleTrace* trace) {
    const int n = scene.num_agents();
    const int T = cfg.gen_steps;
    if (n < 1) throw CcdiffError(ErrorCode::BadParams, "guided_sample: empty scene");

    Rng rng(cfg.seed);
    const Normalizer& norm = denoiser.normalizer();
    const Mat map_ctx = map_context_features(scene);
    const auto initial = scene.current_states();

    const bool use_guidance = !cfg.guidance.empty();
    SignedDistanceField sdf;
    GuidanceContext gctx;
    if (use_guidance) {
        bool needs_sdf = false;
        for (const auto& t : cfg.guidance.terms)
            if (t.cost == CostId::Offroad) needs_sdf = true;
        if (needs_sdf) sdf = SignedDistanceField::build(scene.map);
        gctx = GuidanceContext{initial, scene.dt, needs_sdf ? &sdf : nullptr, cfg.bounds};
    }

    const BoolMat ttc = cfg.mask_mode == MaskMode::Ttc ? ttc_mask(scene, cfg.c_ttc, cfg.d_max)
                                                       : BoolMat::identity(n);

    ActionTensor x(T, n, 0.0);
    for (auto& v : x.v) v = rng.normal();

    DecisionCausalGraph graph = DecisionCausalGraph::identity(n);
    std::vector<uint8_t> rho(n, 1);
    bool graph_ready = false;

    for (int k = schedule.K; k >= 1; --k) {
        DenoiserInput uncond_in{&x, &scene.agents, &map_ctx, k, nullptr};
        const DenoiseOutput uncond = denoiser.denoise(uncond_in);

        if (!graph_ready || !cfg.freeze_graph) {
            graph = cfg.mask_mode == MaskMode::Ttc ? build_dcg(ttc, uncond.attn_logits)
                                                   : DecisionCausalGraph::identity(n);
            rho = rank_agents(graph, scene, cfg, k, nullptr);
            graph_ready = true;
        }
        if (trace) trace->rho_per_step.push_back(rho);

        DenoiserInput cond_in{&x, &scene.agents, &map_ctx, k, &graph.mask};
        const DenoiseOutput cond = denoiser.denoise(cond_in);

        const ActionTensor combined = cfg_combine(cond.pred, uncond.pred, cfg.w, rho);

        // DDPM posterior step under sample prediction, sigma_k^2 = beta_k.
        const double ab_k = schedule.alpha_bars[k];
        const double ab_prev = schedule.alpha_bars[k - 1];
        const double c1 = std::sqrt(ab_prev) * schedule.betas[k] / (1.0 - ab_k);
        const double c2 = std::sqrt(schedule.alphas[k]) * (1.0 - ab_prev) / (1.0 - ab_k);
        for (size_t i = 0; i < x.v.size(); ++i) x.v[i] = c1 * combined.v[i] + c2 * x.v[i];
        if (k > 1) {
            const double sigma = schedule.sigmas[k];
            for (auto& v : x.v) v += sigma * rng.normal();
        }

        if (use_guidance) {
            const std::vector<uint8_t> rho_eff =
                cfg.guidance_masking ? rho : std::vector<uint8_t>(n, 1);
            ActionTensor raw = norm.denormalize(x);
            try {
                raw = masked_guidance_update(raw, rho_eff, cfg.guidance, gctx);
            } catch (const CcdiffError& e) {
                throw CcdiffError(e.code(), "at denoising step " + std::to_string(k) + ": " +
                                                e.what());
            }
            x = norm.normalize(raw);
            if (trace) trace->guidance_applications += 1;
        }

        for (double v : x.v)
            if (!std::isfinite(v))
                throw CcdiffError(ErrorCode::NonFiniteState,
                                  "sampler diverged at step " + std::to_string(k));
    }

    if (trace) trace->graph = graph;
    return rollout(initial, norm.denormalize(x), scene.dt, cfg.bounds);
}

PreparedItem prepare_train_item(const Scene& scene, const Trajectory& future, int k,
                                bool identity_graph, const ActionTensor& noise,
                                const NoiseSchedule& schedule, const Normalizer& norm,
                                double c_ttc, double d_max) {
    const int n = scene.num_agents();
    const int T = future.T;
    PreparedItem item;
    item.scene = &scene;
    item.k = k;
    item.identity_graph = identity_graph;

    ActionTensor clean(T, n, 0.0);
    for (int t = 0; t < T; ++t)
        for (int a = 0; a < n; ++a) {
            clean.at(t, a, 0) = norm.normalize(future.action(t, a).accel, 0);
            clean.at(t, a, 1) = norm.normalize(future.action(t, a).yaw_rate, 1);
        }
    item.noisy = forward_noise(clean, k, schedule, noise);

    item.target = Mat(n, T * 2, 0.0);
    for (int a = 0; a < n; ++a)
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < 2; ++c) item.target.at(a, t * 2 + c) = clean.at(t, a, c);

    item.map_ctx = map_context_features(scene);
    item.graph_mask = identity_graph ? BoolMat::identity(n) : ttc_mask(scene, c_ttc, d_max);
    return item;
}

BatchLossResult training_loss(const DenoiserArch& arch, const double* params,
                              const std::vector<PreparedItem>& items, double yaw_reg) {
    const ParamLayout layout(arch);
    const int b = static_cast<int>(items.size());
    if (b == 0) throw CcdiffError(ErrorCode::BadParams, "training_loss: empty batch");

    std::vector<double> losses(b, 0.0);
    std::vector<std::vector<double>> grads(b);

#pragma omp parallel for schedule(static)
    for (int it = 0; it < b; ++it) {
        const PreparedItem& item = items[it];
        const int n = item.scene->num_agents();
        const int act_in = arch.act_in();
        DenoiserInput in{&item.noisy, &item.scene->agents, &item.map_ctx, item.k,
                         &item.graph_mask};
        NetCache cache;
        const DenoiseOutput out = net_forward(arch, params, in, &cache);

        const double coord_count = static_cast<double>(n) * act_in;
        const double yaw_count = static_cast<double>(n) * arch.horizon;
        double mse = 0.0, yaw_sq = 0.0;
        Mat dout(n, act_in, 0.0);
        for (int a = 0; a < n; ++a) {
            for (int t = 0; t < arch.horizon; ++t) {
                for (int c = 0; c < 2; ++c) {
                    const double pred = out.pred.at(t, a, c);
                    const double diff = pred - item.target.at(a, t * 2 + c);
                    mse += diff * diff;
                    double g = 2.0 * diff / coord_count;
                    if (c == 1) {
                        yaw_sq += pred * pred;
                        g += 2.0 * yaw_reg * pred / yaw_count;
                    }
                    dout.at(a, t * 2 + c) = g;
                }
            }
        }
        losses[it] = mse / coord_count + yaw_reg * yaw_sq / yaw_count;

        grads[it].assign(layout.total, 0.0);
        net_backward(arch, params, in, cache, dout, grads[it].data());
    }

    BatchLossResult res;
    res.grads.assign(layout.total, 0.0);
    for (int it = 0; it < b; ++it) {
        res.loss += losses[it] / b;
        for (size_t i = 0; i < layout.total; ++i) res.grads[i] += grads[it][i] / b;
    }
    return res;
}

Normalizer fit_normalizer(const std::vector<const Trajectory*>& futures) {
    Normalizer norm;
    for (int c = 0; c < 2; ++c) {
        double sum = 0.0, sq = 0.0;
        long count = 0;
        for (const Trajectory* f : futures) {
            for (int t = 0; t < f->T; ++t) {
                for (int n = 0; n < f->N; ++n) {
                    const double v = c == 0 ? f->action(t, n).accel : f->action(t, n).yaw_rate;
                    sum += v;
                    sq += v * v;
                    ++count;
                }
            }
        }
        if (count == 0) continue;
        norm.mean[c] = sum / count;
        const double var = std::max(0.0, sq / count - norm.mean[c] * norm.mean[c]);
        norm.stdev[c] = std::max(std::sqrt(var), 1e-3);
    }
    return norm;
}

Trainer::Trainer(DenoiserArch arch, TrainConfig cfg, NoiseSchedule schedule, Normalizer norm,
                 uint64_t seed)
    : arch_(arch), cfg_(cfg), schedule_(std::move(schedule)), norm_(norm),
      rng_(mix_seed(seed, 0x7261)) {
    Rng init_rng(mix_seed(seed, 0x1217));
    params_ = init_params(arch_, init_rng);
    ema_ = params_;
    adam_m_.assign(params_.size(), 0.0);
    adam_v_.assign(params_.size(), 0.0);
}

double Trainer::train_step(const std::vector<TrainItem>& batch, TrainStepTrace* trace) {
    if (batch.empty()) throw CcdiffError(ErrorCode::BadParams, "train_step: empty batch");

    std::vector<PreparedItem> items;
    items.reserve(batch.size());
    for (const auto& b : batch) {
        const int k = static_cast<int>(rng_.uniform_int(1, schedule_.K));
        const bool identity = rng_.uniform() < cfg_.p_uncond;
        ActionTensor noise(b.future->T, b.future->N, 0.0);
        for (auto& v : noise.v) v = rng_.normal();
        items.push_back(prepare_train_item(*b.scene, *b.future, k, identity, noise, schedule_,
                                           norm_, cfg_.c_ttc, cfg_.d_max));
        if (trace) {
            trace->ks.push_back(k);
            if (identity)
                trace->identity_graphs += 1;
            else
                trace->dcg_graphs += 1;
        }
    }

    const BatchLossResult res = training_loss(arch_, params_.data(), items, cfg_.yaw_reg);
    if (!std::isfinite(res.loss))
        throw CcdiffError(ErrorCode::BadParams, "non-finite training loss");

    ++step_count_;
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_count_));
    for (size_t i = 0; i < params_.size(); ++i) {
        adam_m_[i] = kBeta1 * adam_m_[i] + (1.0 - kBeta1) * res.grads[i];
        adam_v_[i] = kBeta2 * adam_v_[i] + (1.0 - kBeta2) * res.grads[i] * res.grads[i];
        params_[i] -= cfg_.lr * (adam_m_[i] / bc1) / (std::sqrt(adam_v_[i] / bc2) + kEps);
        ema_[i] = cfg_.ema_decay * ema_[i] + (1.0 - cfg_.ema_decay) * params_[i];
    }
    return res.loss;
}

}  // namespace ccdiff
