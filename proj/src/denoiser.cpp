#include "ccdiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "ccdiff/errors.hpp"

namespace ccdiff {

ActionTensor Normalizer::normalize(const ActionTensor& raw) const {
    ActionTensor out = raw;
    for (int t = 0; t < out.T; ++t)
        for (int n = 0; n < out.N; ++n)
            for (int c = 0; c < 2; ++c) out.at(t, n, c) = normalize(raw.at(t, n, c), c);
    return out;
}

ActionTensor Normalizer::denormalize(const ActionTensor& x) const {
    ActionTensor out = x;
    for (int t = 0; t < out.T; ++t)
        for (int n = 0; n < out.N; ++n)
            for (int c = 0; c < 2; ++c) out.at(t, n, c) = denormalize(x.at(t, n, c), c);
    return out;
}

std::array<double, 6> relative_features(const std::vector<AgentTrack>& agents, int i, int j) {
    if (i == j) return {0, 0, 0, 0, 0, 0};
    const AgentState& a = agents[i].history.back();
    const AgentState& b = agents[j].history.back();
    const double c = std::cos(-a.heading), s = std::sin(-a.heading);
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double dvx = b.vx() - a.vx(), dvy = b.vy() - a.vy();
    return {c * dx - s * dy,  c * dy + s * dx,
            c * dvx - s * dvy, c * dvy + s * dvx,
            std::hypot(dx, dy), std::min(compute_ttc(a, b), kTtcCap)};
}

Mat masked_attention(const Mat& queries, const Cube& keys, const Cube& values,
                     const BoolMat& mask) {
    const int n = queries.rows, d = queries.cols;
    if (keys.a != n || keys.b != n || keys.c != d || values.a != n || values.b != n ||
        values.c != d || mask.rows != n || mask.cols != n)
        throw CcdiffError(ErrorCode::BadParams, "masked_attention: shape mismatch");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    Mat out(n, d, 0.0);
#pragma omp parallel for schedule(static) if (n >= 16)
    for (int i = 0; i < n; ++i) {
        double maxlogit = -1e300;
        bool any = false;
        std::vector<double> logits(n, 0.0);
        for (int j = 0; j < n; ++j) {
            if (!mask.at(i, j)) continue;
            double dot = 0.0;
            const double* kp = keys.ptr(i, j);
            for (int c = 0; c < d; ++c) dot += queries.at(i, c) * kp[c];
            logits[j] = dot * inv_sqrt_d;
            maxlogit = std::max(maxlogit, logits[j]);
            any = true;
        }
        if (!any) throw CcdiffError(ErrorCode::BadParams, "masked_attention: empty mask row");
        double denom = 0.0;
        for (int j = 0; j < n; ++j)
            if (mask.at(i, j)) denom += std::exp(logits[j] - maxlogit);
        for (int j = 0; j < n; ++j) {
            if (!mask.at(i, j)) continue;
            const double alpha = std::exp(logits[j] - maxlogit) / denom;
            const double* vp = values.ptr(i, j);
            for (int c = 0; c < d; ++c) out.at(i, c) += alpha * vp[c];
        }
    }
    return out;
}

namespace {

constexpr double kMapPatchSpacing = 2.0;  // m between occupancy samples
constexpr double kLaneRange = 30.0;       // m clamp on lane offsets
constexpr double kClearanceCap = 50.0;    // m forward ray march limit

// Relative-feature scaling into O(1) net inputs.
constexpr std::array<double, 6> kRelScale = {1.0 / 20.0, 1.0 / 20.0, 1.0 / 10.0,
                                             1.0 / 10.0, 1.0 / 50.0, 1.0 / 20.0};

void nearest_lane_point(const MapModel& map, double x, double y, double* lx, double* ly,
                        double* lheading, bool* found) {
    *found = false;
    double best = 1e300;
    for (const auto& lane : map.lanes) {
        for (size_t s = 0; s + 1 < lane.size(); ++s) {
            const double ax = lane[s][0], ay = lane[s][1];
            const double bx = lane[s + 1][0], by = lane[s + 1][1];
            const double ux = bx - ax, uy = by - ay;
            const double len_sq = ux * ux + uy * uy;
            double t = len_sq > 0.0 ? ((x - ax) * ux + (y - ay) * uy) / len_sq : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double px = ax + t * ux, py = ay + t * uy;
            const double d = std::hypot(x - px, y - py);
            if (d < best) {
                best = d;
                *lx = px;
                *ly = py;
                *lheading = std::atan2(uy, ux);
                *found = true;
            }
        }
    }
}

}  // namespace

Mat map_context_features(const Scene& scene) {
    const int n = scene.num_agents();
    Mat out(n, 15, 0.0);
    for (int i = 0; i < n; ++i) {
        const AgentState& s = scene.current(i);
        const double c = std::cos(s.heading), sn = std::sin(s.heading);
        // 6x6 occupancy samples mean-pooled to 3x3
        for (int bi = 0; bi < 3; ++bi) {
            for (int bj = 0; bj < 3; ++bj) {
                double acc = 0.0;
                for (int si = 0; si < 2; ++si) {
                    for (int sj = 0; sj < 2; ++sj) {
                        const double ox = (2 * bi + si) * kMapPatchSpacing - 5.0;
                        const double oy = (2 * bj + sj) * kMapPatchSpacing - 5.0;
                        const double wx = s.x + c * ox - sn * oy;
                        const double wy = s.y + sn * ox + c * oy;
                        acc += scene.map.point_drivable(wx, wy) ? 1.0 : 0.0;
                    }
                }
                out.at(i, bi * 3 + bj) = acc / 4.0;
            }
        }
        double lx = 0.0, ly = 0.0, lh = 0.0;
        bool found = false;
        nearest_lane_point(scene.map, s.x, s.y, &lx, &ly, &lh, &found);
        if (found) {
            const double dx = lx - s.x, dy = ly - s.y;
            const double fx = std::clamp(c * dx + sn * dy, -kLaneRange, kLaneRange);
            const double fy = std::clamp(c * dy - sn * dx, -kLaneRange, kLaneRange);
            out.at(i, 9) = fx / kLaneRange;
            out.at(i, 10) = fy / kLaneRange;
            out.at(i, 11) = wrap_angle(lh - s.heading) / kPi;
        }
        // drivable clearance ray-marched along three forward bearings; this is what
        // tells the policy the road is about to run out
        for (int r = 0; r < 3; ++r) {
            const double bearing = s.heading + (r - 1) * 0.25;
            const double bx = std::cos(bearing), by = std::sin(bearing);
            double clearance = kClearanceCap;
            for (double d = 1.0; d <= kClearanceCap; d += 1.0) {
                if (!scene.map.point_drivable(s.x + d * bx, s.y + d * by)) {
                    clearance = d;
                    break;
                }
            }
            out.at(i, 12 + r) = clearance / kClearanceCap;
        }
    }
    return out;
}

ParamLayout::ParamLayout(const DenoiserArch& a) : arch(a) {
    size_t off = 0;
    auto seg = [&off](int rows, int cols) {
        Seg s{off, rows, cols};
        off += s.size();
        return s;
    };
    const int d = a.d_model;
    w1h = seg(d, a.hist_in());
    b1h = seg(d, 1);
    w2h = seg(d, d);
    b2h = seg(d, 1);
    w1a = seg(d, a.act_in());
    b1a = seg(d, 1);
    w1k = seg(d, d);
    b1k = seg(d, 1);
    wc = seg(d, 3 * d);
    bc = seg(d, 1);
    wr = seg(a.d_rel, 6);
    br = seg(a.d_rel, 1);
    wp = seg(d, d + a.d_rel);
    bp = seg(d, 1);
    for (int l = 0; l < a.n_layers; ++l)
        attn.push_back({seg(d, d), seg(d, d), seg(d, d), seg(d, d)});
    wm = seg(a.d_map, a.map_dim);
    bm = seg(a.d_map, 1);
    w1o = seg(d, d + a.d_map);
    b1o = seg(d, 1);
    w2o = seg(a.act_in(), d);
    b2o = seg(a.act_in(), 1);
    total = off;
}

std::vector<ParamLayout::Seg> ParamLayout::all_segments() const {
    std::vector<Seg> segs = {w1h, b1h, w2h, b2h, w1a, b1a, w1k, b1k, wc, bc,
                             wr,  br,  wp,  bp};
    for (const auto& l : attn) segs.insert(segs.end(), l.begin(), l.end());
    segs.insert(segs.end(), {wm, bm, w1o, b1o, w2o, b2o});
    return segs;
}

std::vector<double> init_params(const DenoiserArch& arch, Rng& rng) {
    const ParamLayout layout(arch);
    std::vector<double> params(layout.total, 0.0);
    for (const auto& seg : layout.all_segments()) {
        if (seg.cols == 1) continue;  // biases start at zero
        const double s = 1.0 / std::sqrt(static_cast<double>(seg.cols));
        for (size_t i = 0; i < seg.size(); ++i) params[seg.off + i] = rng.uniform(-s, s);
    }
    return params;
}

namespace {

void affine(const double* W, const double* b, const double* x, int out, int in, double* y) {
    for (int o = 0; o < out; ++o) {
        double acc = b ? b[o] : 0.0;
        const double* row = W + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

void affine_tanh(const double* W, const double* b, const double* x, int out, int in, double* y) {
    affine(W, b, x, out, in, y);
    for (int o = 0; o < out; ++o) y[o] = std::tanh(y[o]);
}

// y = tanh(Wx + b): accumulate gW, gb and (optionally) gx from gy.
void affine_tanh_backward(const double* W, const double* x, const double* y, const double* gy,
                          int out, int in, double* gW, double* gb, double* gx) {
    for (int o = 0; o < out; ++o) {
        const double gpre = gy[o] * (1.0 - y[o] * y[o]);
        gb[o] += gpre;
        double* grow = gW + static_cast<size_t>(o) * in;
        const double* row = W + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) {
            grow[i] += gpre * x[i];
            if (gx) gx[i] += gpre * row[i];
        }
    }
}

void linear_backward(const double* W, const double* x, const double* gy, int out, int in,
                     double* gW, double* gb, double* gx) {
    for (int o = 0; o < out; ++o) {
        const double gpre = gy[o];
        if (gb) gb[o] += gpre;
        double* grow = gW + static_cast<size_t>(o) * in;
        const double* row = W + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) {
            grow[i] += gpre * x[i];
            if (gx) gx[i] += gpre * row[i];
        }
    }
}

std::vector<double> sinusoidal_embed(int k, int dim) {
    std::vector<double> e(dim, 0.0);
    for (int i = 0; i < dim / 2; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / dim);
        e[2 * i] = std::sin(k * freq);
        e[2 * i + 1] = std::cos(k * freq);
    }
    return e;
}

void validate_input(const DenoiserArch& arch, const double* params, size_t n_params,
                    const DenoiserInput& in) {
    if (!in.noisy_actions || !in.agents || !in.map_ctx)
        throw CcdiffError(ErrorCode::BadParams, "denoiser input incomplete");
    const int n = static_cast<int>(in.agents->size());
    if (n < 1) throw CcdiffError(ErrorCode::BadParams, "denoiser needs >= 1 agent");
    if (in.noisy_actions->T != arch.horizon || in.noisy_actions->N != n)
        throw CcdiffError(ErrorCode::BadParams, "noisy action tensor shape mismatch");
    if (in.map_ctx->rows != n || in.map_ctx->cols != arch.map_dim)
        throw CcdiffError(ErrorCode::BadParams, "map context shape mismatch");
    if (in.graph_mask && (in.graph_mask->rows != n || in.graph_mask->cols != n))
        throw CcdiffError(ErrorCode::BadParams, "graph mask shape mismatch");
    if (in.k < 0) throw CcdiffError(ErrorCode::BadParams, "negative diffusion step");
    for (const auto& a : *in.agents)
        if (static_cast<int>(a.history.size()) != arch.history_steps)
            throw CcdiffError(ErrorCode::BadParams, "history length mismatch");
    for (size_t i = 0; i < n_params; ++i)
        if (!std::isfinite(params[i])) throw CcdiffError(ErrorCode::BadParams, "non-finite parameter");
}

// Ego history in the agent's current frame: per step (dx', dy', dheading, speed/10).
void ego_history_features(const AgentTrack& track, int hist_steps, int state_dim, double* out) {
    const AgentState& cur = track.history.back();
    const double c = std::cos(-cur.heading), s = std::sin(-cur.heading);
    for (int h = 0; h < hist_steps; ++h) {
        const AgentState& st = track.history[h];
        const double dx = st.x - cur.x, dy = st.y - cur.y;
        out[h * state_dim + 0] = (c * dx - s * dy) / 10.0;
        out[h * state_dim + 1] = (c * dy + s * dx) / 10.0;
        out[h * state_dim + 2] = wrap_angle(st.heading - cur.heading);
        out[h * state_dim + 3] = st.speed / 10.0;
    }
}

}  // namespace

DenoiseOutput net_forward(const DenoiserArch& arch, const double* params,
                          const DenoiserInput& input, NetCache* cache) {
    const ParamLayout L(arch);
    validate_input(arch, params, L.total, input);

    const int n = static_cast<int>(input.agents->size());
    const int d = arch.d_model;
    const int heads = arch.n_heads, dh = arch.head_dim();
    const int hist_in = arch.hist_in(), act_in = arch.act_in();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    NetCache local;
    NetCache& C = cache ? *cache : local;
    C.N = n;

    const BoolMat identity_mask = BoolMat::identity(n);
    const BoolMat& mask = input.graph_mask ? *input.graph_mask : identity_mask;

    auto P = [&](const ParamLayout::Seg& s) { return params + s.off; };

    // Input features.
    C.histfeat.assign(static_cast<size_t>(n) * hist_in, 0.0);
    for (int i = 0; i < n; ++i)
        ego_history_features((*input.agents)[i], arch.history_steps, arch.state_dim,
                             &C.histfeat[static_cast<size_t>(i) * hist_in]);
    C.actflat.assign(static_cast<size_t>(n) * act_in, 0.0);
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < arch.horizon; ++t)
            for (int c = 0; c < 2; ++c)
                C.actflat[static_cast<size_t>(i) * act_in + t * 2 + c] =
                    input.noisy_actions->at(t, i, c);
    C.kembed = sinusoidal_embed(input.k, d);

    // Temporal path.
    C.h1h.assign(static_cast<size_t>(n) * d, 0.0);
    C.eh.assign(static_cast<size_t>(n) * d, 0.0);
    C.ae.assign(static_cast<size_t>(n) * d, 0.0);
    C.ke.assign(d, 0.0);
    C.h0.assign(static_cast<size_t>(n) * d, 0.0);
    affine_tanh(P(L.w1k), P(L.b1k), C.kembed.data(), d, d, C.ke.data());
#pragma omp parallel for schedule(static) if (n >= 16)
    for (int i = 0; i < n; ++i) {
        affine_tanh(P(L.w1h), P(L.b1h), &C.histfeat[static_cast<size_t>(i) * hist_in], d, hist_in,
                    &C.h1h[static_cast<size_t>(i) * d]);
        affine_tanh(P(L.w2h), P(L.b2h), &C.h1h[static_cast<size_t>(i) * d], d, d,
                    &C.eh[static_cast<size_t>(i) * d]);
        affine_tanh(P(L.w1a), P(L.b1a), &C.actflat[static_cast<size_t>(i) * act_in], d, act_in,
                    &C.ae[static_cast<size_t>(i) * d]);
        std::vector<double> fuse(3 * d, 0.0);
        std::memcpy(fuse.data(), &C.eh[static_cast<size_t>(i) * d], d * sizeof(double));
        std::memcpy(fuse.data() + d, &C.ae[static_cast<size_t>(i) * d], d * sizeof(double));
        std::memcpy(fuse.data() + 2 * d, C.ke.data(), d * sizeof(double));
        affine_tanh(P(L.wc), P(L.bc), fuse.data(), d, 3 * d, &C.h0[static_cast<size_t>(i) * d]);
    }

    // Pair tokens.
    C.relf = Cube(n, n, 6, 0.0);
    C.rel = Cube(n, n, arch.d_rel, 0.0);
    C.pair = Cube(n, n, d, 0.0);
#pragma omp parallel for schedule(static) if (n >= 16)
    for (int i = 0; i < n; ++i) {
        std::vector<double> cat(d + arch.d_rel, 0.0);
        for (int j = 0; j < n; ++j) {
            const auto rf = relative_features(*input.agents, i, j);
            for (int c = 0; c < 6; ++c) C.relf.at(i, j, c) = rf[c] * kRelScale[c];
            affine_tanh(P(L.wr), P(L.br), C.relf.ptr(i, j), arch.d_rel, 6, C.rel.ptr(i, j));
            std::memcpy(cat.data(), &C.eh[static_cast<size_t>(j) * d], d * sizeof(double));
            std::memcpy(cat.data() + d, C.rel.ptr(i, j), arch.d_rel * sizeof(double));
            affine_tanh(P(L.wp), P(L.bp), cat.data(), d, d + arch.d_rel, C.pair.ptr(i, j));
        }
    }

    // Spatial attention stack.
    C.q.assign(arch.n_layers, {});
    C.kk.assign(arch.n_layers, {});
    C.vv.assign(arch.n_layers, {});
    C.alpha.assign(arch.n_layers, {});
    C.attn_out.assign(arch.n_layers, {});
    C.h_in.assign(arch.n_layers + 1, {});
    C.h_in[0] = C.h0;
    for (int l = 0; l < arch.n_layers; ++l) {
        C.q[l].assign(static_cast<size_t>(n) * d, 0.0);
        C.kk[l].assign(static_cast<size_t>(n) * n * d, 0.0);
        C.vv[l].assign(static_cast<size_t>(n) * n * d, 0.0);
        C.alpha[l].assign(static_cast<size_t>(n) * n * heads, 0.0);
        C.attn_out[l].assign(static_cast<size_t>(n) * d, 0.0);
        C.h_in[l + 1].assign(static_cast<size_t>(n) * d, 0.0);
        const double* wq = P(L.attn[l][0]);
        const double* wk = P(L.attn[l][1]);
        const double* wv = P(L.attn[l][2]);
        const double* wo = P(L.attn[l][3]);
#pragma omp parallel for schedule(static) if (n >= 16)
        for (int i = 0; i < n; ++i) {
            affine(wq, nullptr, &C.h_in[l][static_cast<size_t>(i) * d], d, d,
                   &C.q[l][static_cast<size_t>(i) * d]);
            for (int j = 0; j < n; ++j) {
                if (!mask.at(i, j)) continue;
                affine(wk, nullptr, C.pair.ptr(i, j), d, d,
                       &C.kk[l][(static_cast<size_t>(i) * n + j) * d]);
                affine(wv, nullptr, C.pair.ptr(i, j), d, d,
                       &C.vv[l][(static_cast<size_t>(i) * n + j) * d]);
            }
            for (int h = 0; h < heads; ++h) {
                const double* qh = &C.q[l][static_cast<size_t>(i) * d + h * dh];
                double maxlogit = -1e300;
                bool any = false;
                std::vector<double> logits(n, 0.0);
                for (int j = 0; j < n; ++j) {
                    if (!mask.at(i, j)) continue;
                    const double* kh = &C.kk[l][(static_cast<size_t>(i) * n + j) * d + h * dh];
                    double dot = 0.0;
                    for (int c = 0; c < dh; ++c) dot += qh[c] * kh[c];
                    logits[j] = dot * inv_sqrt_dh;
                    maxlogit = std::max(maxlogit, logits[j]);
                    any = true;
                }
                if (!any)
                    throw CcdiffError(ErrorCode::BadParams, "attention mask row is empty");
                double denom = 0.0;
                for (int j = 0; j < n; ++j)
                    if (mask.at(i, j)) denom += std::exp(logits[j] - maxlogit);
                for (int j = 0; j < n; ++j) {
                    if (!mask.at(i, j)) continue;
                    const double a = std::exp(logits[j] - maxlogit) / denom;
                    C.alpha[l][(static_cast<size_t>(i) * n + j) * heads + h] = a;
                    const double* vh = &C.vv[l][(static_cast<size_t>(i) * n + j) * d + h * dh];
                    double* oh = &C.attn_out[l][static_cast<size_t>(i) * d + h * dh];
                    for (int c = 0; c < dh; ++c) oh[c] += a * vh[c];
                }
            }
            double* hnext = &C.h_in[l + 1][static_cast<size_t>(i) * d];
            affine(wo, nullptr, &C.attn_out[l][static_cast<size_t>(i) * d], d, d, hnext);
            for (int c = 0; c < d; ++c) hnext[c] += C.h_in[l][static_cast<size_t>(i) * d + c];
        }
    }

    // Map context and output head.
    C.me.assign(static_cast<size_t>(n) * arch.d_map, 0.0);
    C.z.assign(static_cast<size_t>(n) * d, 0.0);
    C.out.assign(static_cast<size_t>(n) * act_in, 0.0);
    const std::vector<double>& hfin = C.h_in[arch.n_layers];
#pragma omp parallel for schedule(static) if (n >= 16)
    for (int i = 0; i < n; ++i) {
        std::vector<double> mrow(arch.map_dim, 0.0);
        for (int c = 0; c < arch.map_dim; ++c) mrow[c] = input.map_ctx->at(i, c);
        affine_tanh(P(L.wm), P(L.bm), mrow.data(), arch.d_map, arch.map_dim,
                    &C.me[static_cast<size_t>(i) * arch.d_map]);
        std::vector<double> cat(d + arch.d_map, 0.0);
        std::memcpy(cat.data(), &hfin[static_cast<size_t>(i) * d], d * sizeof(double));
        std::memcpy(cat.data() + d, &C.me[static_cast<size_t>(i) * arch.d_map],
                    arch.d_map * sizeof(double));
        affine_tanh(P(L.w1o), P(L.b1o), cat.data(), d, d + arch.d_map,
                    &C.z[static_cast<size_t>(i) * d]);
        affine(P(L.w2o), P(L.b2o), &C.z[static_cast<size_t>(i) * d], act_in, d,
               &C.out[static_cast<size_t>(i) * act_in]);
    }

    DenoiseOutput out;
    out.pred = ActionTensor(arch.horizon, n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < arch.horizon; ++t)
            for (int c = 0; c < 2; ++c)
                out.pred.at(t, i, c) = C.out[static_cast<size_t>(i) * act_in + t * 2 + c];

    // History-only first-layer attention scores: the graph-discovery byproduct. Kept
    // independent of the noisy actions so the extracted DCG is a function of the scene.
    out.attn_logits = Mat(n, n, 0.0);
    const double* wq0 = P(L.attn[0][0]);
    const double* wk0 = P(L.attn[0][1]);
    std::vector<double> qh(static_cast<size_t>(n) * d, 0.0);
    std::vector<double> kh(d, 0.0);
    for (int i = 0; i < n; ++i)
        affine(wq0, nullptr, &C.eh[static_cast<size_t>(i) * d], d, d,
               &qh[static_cast<size_t>(i) * d]);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            affine(wk0, nullptr, C.pair.ptr(i, j), d, d, kh.data());
            double acc = 0.0;
            for (int h = 0; h < heads; ++h) {
                double dot = 0.0;
                for (int c = 0; c < dh; ++c)
                    dot += qh[static_cast<size_t>(i) * d + h * dh + c] * kh[h * dh + c];
                acc += dot * inv_sqrt_dh;
            }
            out.attn_logits.at(i, j) = acc / heads;
        }
    }
    return out;
}

void net_backward(const DenoiserArch& arch, const double* params, const DenoiserInput& input,
                  const NetCache& C, const Mat& dloss_dout, double* grad) {
    const ParamLayout L(arch);
    const int n = C.N;
    const int d = arch.d_model;
    const int heads = arch.n_heads, dh = arch.head_dim();
    const int hist_in = arch.hist_in(), act_in = arch.act_in();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    if (dloss_dout.rows != n || dloss_dout.cols != act_in)
        throw CcdiffError(ErrorCode::BadParams, "net_backward: output grad shape mismatch");

    const BoolMat identity_mask = BoolMat::identity(n);
    const BoolMat& mask = input.graph_mask ? *input.graph_mask : identity_mask;

    auto P = [&](const ParamLayout::Seg& s) { return params + s.off; };
    auto G = [&](const ParamLayout::Seg& s) { return grad + s.off; };

    std::vector<double> gh(static_cast<size_t>(n) * d, 0.0);  // grad w.r.t. h_in[final]

    // Output head.
    for (int i = 0; i < n; ++i) {
        std::vector<double> gz(d, 0.0);
        linear_backward(P(L.w2o), &C.z[static_cast<size_t>(i) * d],
                        &dloss_dout.v[static_cast<size_t>(i) * act_in], act_in, d, G(L.w2o),
                        G(L.b2o), gz.data());
        std::vector<double> cat(d + arch.d_map, 0.0);
        std::memcpy(cat.data(), &C.h_in[arch.n_layers][static_cast<size_t>(i) * d],
                    d * sizeof(double));
        std::memcpy(cat.data() + d, &C.me[static_cast<size_t>(i) * arch.d_map],
                    arch.d_map * sizeof(double));
        std::vector<double> gcat(d + arch.d_map, 0.0);
        affine_tanh_backward(P(L.w1o), cat.data(), &C.z[static_cast<size_t>(i) * d], gz.data(), d,
                             d + arch.d_map, G(L.w1o), G(L.b1o), gcat.data());
        for (int c = 0; c < d; ++c) gh[static_cast<size_t>(i) * d + c] += gcat[c];
        std::vector<double> mrow(arch.map_dim, 0.0);
        for (int c = 0; c < arch.map_dim; ++c) mrow[c] = input.map_ctx->at(i, c);
        affine_tanh_backward(P(L.wm), mrow.data(), &C.me[static_cast<size_t>(i) * arch.d_map],
                             gcat.data() + d, arch.d_map, arch.map_dim, G(L.wm), G(L.bm), nullptr);
    }

    // Attention stack, reversed. g_pair accumulates across layers.
    Cube g_pair(n, n, d, 0.0);
    for (int l = arch.n_layers - 1; l >= 0; --l) {
        const double* wq = P(L.attn[l][0]);
        const double* wk = P(L.attn[l][1]);
        const double* wv = P(L.attn[l][2]);
        const double* wo = P(L.attn[l][3]);
        std::vector<double> gh_prev(static_cast<size_t>(n) * d, 0.0);
        for (int i = 0; i < n; ++i) {
            const double* ghi = &gh[static_cast<size_t>(i) * d];
            // residual
            for (int c = 0; c < d; ++c) gh_prev[static_cast<size_t>(i) * d + c] += ghi[c];
            std::vector<double> gattn(d, 0.0);
            linear_backward(wo, &C.attn_out[l][static_cast<size_t>(i) * d], ghi, d, d,
                            G(L.attn[l][3]), nullptr, gattn.data());
            std::vector<double> gq(d, 0.0);
            // Softmax-logit grads per (j, head).
            std::vector<double> gs(static_cast<size_t>(n) * heads, 0.0);
            for (int h = 0; h < heads; ++h) {
                const double* go = &gattn[h * dh];
                double dot_sum = 0.0;
                std::vector<double> galpha(n, 0.0);
                for (int j = 0; j < n; ++j) {
                    if (!mask.at(i, j)) continue;
                    const double a = C.alpha[l][(static_cast<size_t>(i) * n + j) * heads + h];
                    const double* vh = &C.vv[l][(static_cast<size_t>(i) * n + j) * d + h * dh];
                    double s = 0.0;
                    for (int c = 0; c < dh; ++c) s += go[c] * vh[c];
                    galpha[j] = s;
                    dot_sum += a * s;
                }
                for (int j = 0; j < n; ++j) {
                    if (!mask.at(i, j)) continue;
                    const double a = C.alpha[l][(static_cast<size_t>(i) * n + j) * heads + h];
                    gs[static_cast<size_t>(j) * heads + h] = a * (galpha[j] - dot_sum);
                }
            }
            std::vector<double> gvv(d, 0.0), gkk(d, 0.0);
            for (int j = 0; j < n; ++j) {
                if (!mask.at(i, j)) continue;
                for (int h = 0; h < heads; ++h) {
                    const double a = C.alpha[l][(static_cast<size_t>(i) * n + j) * heads + h];
                    const double gsj = gs[static_cast<size_t>(j) * heads + h];
                    const double* qh = &C.q[l][static_cast<size_t>(i) * d + h * dh];
                    const double* khj = &C.kk[l][(static_cast<size_t>(i) * n + j) * d + h * dh];
                    for (int c = 0; c < dh; ++c) {
                        gvv[h * dh + c] = a * gattn[h * dh + c];
                        gkk[h * dh + c] = gsj * qh[c] * inv_sqrt_dh;
                        gq[h * dh + c] += gsj * khj[c] * inv_sqrt_dh;
                    }
                }
                linear_backward(wv, C.pair.ptr(i, j), gvv.data(), d, d, G(L.attn[l][2]), nullptr,
                                g_pair.ptr(i, j));
                linear_backward(wk, C.pair.ptr(i, j), gkk.data(), d, d, G(L.attn[l][1]), nullptr,
                                g_pair.ptr(i, j));
            }
            linear_backward(wq, &C.h_in[l][static_cast<size_t>(i) * d], gq.data(), d, d,
                            G(L.attn[l][0]), nullptr, &gh_prev[static_cast<size_t>(i) * d]);
        }
        gh = std::move(gh_prev);
    }

    // Pair tokens; g_eh accumulates grads into history embeddings.
    std::vector<double> g_eh(static_cast<size_t>(n) * d, 0.0);
    for (int i = 0; i < n; ++i) {
        std::vector<double> cat(d + arch.d_rel, 0.0);
        std::vector<double> gcat(d + arch.d_rel, 0.0);
        for (int j = 0; j < n; ++j) {
            bool all_zero = true;
            for (int c = 0; c < d && all_zero; ++c)
                if (g_pair.at(i, j, c) != 0.0) all_zero = false;
            if (all_zero) continue;
            std::memcpy(cat.data(), &C.eh[static_cast<size_t>(j) * d], d * sizeof(double));
            std::memcpy(cat.data() + d, C.rel.ptr(i, j), arch.d_rel * sizeof(double));
            std::fill(gcat.begin(), gcat.end(), 0.0);
            affine_tanh_backward(P(L.wp), cat.data(), C.pair.ptr(i, j), g_pair.ptr(i, j), d,
                                 d + arch.d_rel, G(L.wp), G(L.bp), gcat.data());
            for (int c = 0; c < d; ++c) g_eh[static_cast<size_t>(j) * d + c] += gcat[c];
            affine_tanh_backward(P(L.wr), C.relf.ptr(i, j), C.rel.ptr(i, j), gcat.data() + d,
                                 arch.d_rel, 6, G(L.wr), G(L.br), nullptr);
        }
    }

    // Temporal fuse and the per-agent MLPs. gh now holds grads w.r.t. h0.
    std::vector<double> g_ke(d, 0.0);
    for (int i = 0; i < n; ++i) {
        std::vector<double> fuse(3 * d, 0.0);
        std::memcpy(fuse.data(), &C.eh[static_cast<size_t>(i) * d], d * sizeof(double));
        std::memcpy(fuse.data() + d, &C.ae[static_cast<size_t>(i) * d], d * sizeof(double));
        std::memcpy(fuse.data() + 2 * d, C.ke.data(), d * sizeof(double));
        std::vector<double> gfuse(3 * d, 0.0);
        affine_tanh_backward(P(L.wc), fuse.data(), &C.h0[static_cast<size_t>(i) * d],
                             &gh[static_cast<size_t>(i) * d], d, 3 * d, G(L.wc), G(L.bc),
                             gfuse.data());
        for (int c = 0; c < d; ++c) {
            g_eh[static_cast<size_t>(i) * d + c] += gfuse[c];
            g_ke[c] += gfuse[2 * d + c];
        }
        affine_tanh_backward(P(L.w1a), &C.actflat[static_cast<size_t>(i) * act_in],
                             &C.ae[static_cast<size_t>(i) * d], gfuse.data() + d, d, act_in,
                             G(L.w1a), G(L.b1a), nullptr);
    }
    affine_tanh_backward(P(L.w1k), C.kembed.data(), C.ke.data(), g_ke.data(), d, d, G(L.w1k),
                         G(L.b1k), nullptr);
    for (int i = 0; i < n; ++i) {
        std::vector<double> gh1h(d, 0.0);
        affine_tanh_backward(P(L.w2h), &C.h1h[static_cast<size_t>(i) * d],
                             &C.eh[static_cast<size_t>(i) * d], &g_eh[static_cast<size_t>(i) * d],
                             d, d, G(L.w2h), G(L.b2h), gh1h.data());
        affine_tanh_backward(P(L.w1h), &C.histfeat[static_cast<size_t>(i) * hist_in],
                             &C.h1h[static_cast<size_t>(i) * d], gh1h.data(), d, hist_in,
                             G(L.w1h), G(L.b1h), nullptr);
    }
}

LearnedDenoiser::LearnedDenoiser(DenoiserArch arch, std::vector<double> params, Normalizer norm)
    : arch_(arch), params_(std::move(params)), norm_(norm) {
    if (params_.size() != ParamLayout(arch_).total)
        throw CcdiffError(ErrorCode::BadParams, "parameter vector size mismatch");
}

DenoiseOutput LearnedDenoiser::denoise(const DenoiserInput& input) const {
    return net_forward(arch_, params_.data(), input, nullptr);
}

GaussianOracleDenoiser::GaussianOracleDenoiser(ActionTensor mu, double sigma0,
                                               std::vector<double> alpha_bars)
    : mu_(std::move(mu)), sigma0_(sigma0), alpha_bars_(std::move(alpha_bars)) {}

DenoiseOutput GaussianOracleDenoiser::denoise(const DenoiserInput& input) const {
    const ActionTensor& xk = *input.noisy_actions;
    if (xk.T != mu_.T || xk.N != mu_.N)
        throw CcdiffError(ErrorCode::BadParams, "oracle shape mismatch");
    if (input.k < 0 || input.k >= static_cast<int>(alpha_bars_.size()))
        throw CcdiffError(ErrorCode::BadParams, "oracle step out of range");
    const double ab = alpha_bars_[input.k];
    const double var0 = sigma0_ * sigma0_;
    const double gain = std::sqrt(ab) * var0 / (ab * var0 + (1.0 - ab));

    DenoiseOutput out;
    out.pred = mu_;
    for (size_t i = 0; i < out.pred.v.size(); ++i)
        out.pred.v[i] = mu_.v[i] + gain * (xk.v[i] - std::sqrt(ab) * mu_.v[i]);
    out.attn_logits = Mat(xk.N, xk.N, 0.0);
    return out;
}

}  // namespace ccdiff
