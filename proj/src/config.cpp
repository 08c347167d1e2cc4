#include "ccdiff/config.hpp"

#include <cstdio>

#include "ccdiff/errors.hpp"
#include "ccdiff/json_io.hpp"

namespace ccdiff {

using nlohmann::json;

RunConfig default_config() {
    RunConfig cfg;
    cfg.sampler.guidance.terms = {
        {CostId::Collision, -50.0, {}, 10.0},
        {CostId::Offroad, 1.0, {}, 10.0},
    };
    return cfg;
}

json config_to_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["datagen"] = {{"layout", cfg.datagen.layout},
                    {"n_scenes", cfg.datagen.n_scenes},
                    {"n_agents", cfg.datagen.gen.n_agents},
                    {"history_steps", cfg.datagen.gen.history_steps},
                    {"future_steps", cfg.datagen.gen.future_steps},
                    {"dt", cfg.datagen.gen.dt},
                    {"v_des", cfg.datagen.gen.v_des},
                    {"lane_width", cfg.datagen.lane_width},
                    {"extent", cfg.datagen.extent},
                    {"resolution", cfg.datagen.resolution},
                    {"train_fraction", cfg.datagen.train_fraction}};
    j["model"] = {{"history_steps", cfg.arch.history_steps},
                  {"horizon", cfg.arch.horizon},
                  {"d_model", cfg.arch.d_model},
                  {"n_heads", cfg.arch.n_heads},
                  {"n_layers", cfg.arch.n_layers},
                  {"d_rel", cfg.arch.d_rel},
                  {"d_map", cfg.arch.d_map}};
    j["train"] = {{"p_uncond", cfg.train.p_uncond},
                  {"lr", cfg.train.lr},
                  {"batch", cfg.train.batch},
                  {"ema_decay", cfg.train.ema_decay},
                  {"steps", cfg.train.steps},
                  {"yaw_reg", cfg.train.yaw_reg},
                  {"ttc_threshold", cfg.train.c_ttc},
                  {"distance_threshold", cfg.train.d_max}};
    j["schedule"] = {{"kind", cfg.schedule_kind}, {"steps", cfg.schedule_steps}};
    j["sample"] = {{"guidance_scale", cfg.sampler.w},
                   {"nc", cfg.sampler.n_c},
                   {"ttc_threshold", cfg.sampler.c_ttc},
                   {"distance_threshold", cfg.sampler.d_max},
                   {"gen_steps", cfg.sampler.gen_steps},
                   {"ranking", ranking_mode_name(cfg.sampler.ranking)},
                   {"mask", mask_mode_name(cfg.sampler.mask_mode)},
                   {"guidance_masking", cfg.sampler.guidance_masking},
                   {"freeze_graph", cfg.sampler.freeze_graph},
                   {"guidance", guidance_spec_to_json(cfg.sampler.guidance)}};
    j["eval"] = {{"replan_period", cfg.eval.replan_period},
                 {"horizon", cfg.eval.horizon},
                 {"workers", cfg.eval.workers}};
    return j;
}

namespace {

template <typename T>
void read_into(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig config_from_json(const json& j) {
    RunConfig cfg = default_config();
    try {
        read_into(j, "seed", cfg.seed);
        if (j.contains("datagen")) {
            const auto& d = j.at("datagen");
            read_into(d, "layout", cfg.datagen.layout);
            layout_from_name(cfg.datagen.layout);  // validate
            read_into(d, "n_scenes", cfg.datagen.n_scenes);
            read_into(d, "n_agents", cfg.datagen.gen.n_agents);
            read_into(d, "history_steps", cfg.datagen.gen.history_steps);
            read_into(d, "future_steps", cfg.datagen.gen.future_steps);
            read_into(d, "dt", cfg.datagen.gen.dt);
            read_into(d, "v_des", cfg.datagen.gen.v_des);
            read_into(d, "lane_width", cfg.datagen.lane_width);
            read_into(d, "extent", cfg.datagen.extent);
            read_into(d, "resolution", cfg.datagen.resolution);
            read_into(d, "train_fraction", cfg.datagen.train_fraction);
        }
        if (j.contains("model")) {
            const auto& m = j.at("model");
            read_into(m, "history_steps", cfg.arch.history_steps);
            read_into(m, "horizon", cfg.arch.horizon);
            read_into(m, "d_model", cfg.arch.d_model);
            read_into(m, "n_heads", cfg.arch.n_heads);
            read_into(m, "n_layers", cfg.arch.n_layers);
            read_into(m, "d_rel", cfg.arch.d_rel);
            read_into(m, "d_map", cfg.arch.d_map);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            read_into(t, "p_uncond", cfg.train.p_uncond);
            read_into(t, "lr", cfg.train.lr);
            read_into(t, "batch", cfg.train.batch);
            read_into(t, "ema_decay", cfg.train.ema_decay);
            read_into(t, "steps", cfg.train.steps);
            read_into(t, "yaw_reg", cfg.train.yaw_reg);
            read_into(t, "ttc_threshold", cfg.train.c_ttc);
            read_into(t, "distance_threshold", cfg.train.d_max);
        }
        if (j.contains("schedule")) {
            read_into(j.at("schedule"), "kind", cfg.schedule_kind);
            read_into(j.at("schedule"), "steps", cfg.schedule_steps);
        }
        if (j.contains("sample")) {
            const auto& s = j.at("sample");
            read_into(s, "guidance_scale", cfg.sampler.w);
            read_into(s, "nc", cfg.sampler.n_c);
            read_into(s, "ttc_threshold", cfg.sampler.c_ttc);
            read_into(s, "distance_threshold", cfg.sampler.d_max);
            read_into(s, "gen_steps", cfg.sampler.gen_steps);
            std::string ranking = ranking_mode_name(cfg.sampler.ranking);
            std::string mask = mask_mode_name(cfg.sampler.mask_mode);
            read_into(s, "ranking", ranking);
            read_into(s, "mask", mask);
            cfg.sampler.ranking = ranking_mode_from_name(ranking);
            cfg.sampler.mask_mode = mask_mode_from_name(mask);
            read_into(s, "guidance_masking", cfg.sampler.guidance_masking);
            read_into(s, "freeze_graph", cfg.sampler.freeze_graph);
            if (s.contains("guidance"))
                cfg.sampler.guidance = guidance_spec_from_json(s.at("guidance"));
        }
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            read_into(e, "replan_period", cfg.eval.replan_period);
            read_into(e, "horizon", cfg.eval.horizon);
            read_into(e, "workers", cfg.eval.workers);
        }
    } catch (const json::exception& e) {
        throw CcdiffError(ErrorCode::BadConfig, e.what());
    }
    cfg.sampler.seed = cfg.seed;

    if (cfg.datagen.gen.dt <= 0.0) throw CcdiffError(ErrorCode::BadConfig, "dt must be > 0");
    if (cfg.schedule_steps < 1)
        throw CcdiffError(ErrorCode::BadConfig, "schedule.steps must be >= 1");
    if (cfg.sampler.w < 1.0 || cfg.sampler.w >= 2.0)
        throw CcdiffError(ErrorCode::BadConfig, "sample.guidance_scale must lie in [1, 2)");
    if (cfg.sampler.n_c < 0) throw CcdiffError(ErrorCode::BadConfig, "sample.nc must be >= 0");
    if (cfg.train.p_uncond < 0.0 || cfg.train.p_uncond > 1.0)
        throw CcdiffError(ErrorCode::BadConfig, "train.p_uncond must lie in [0, 1]");
    const auto spec_violations =
        validate_guidance_spec(cfg.sampler.guidance, cfg.datagen.gen.n_agents);
    for (const auto& v : spec_violations) {
        if (v.code != "scope-out-of-range")  // scopes are validated against real scenes later
            throw CcdiffError(ErrorCode::BadConfig, "guidance spec: " + v.str());
    }
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    return config_from_json(read_json_file(path));
}

NoiseSchedule make_schedule(const RunConfig& cfg) {
    if (cfg.schedule_kind == "cosine")
        return NoiseSchedule::make(ScheduleKind::Cosine, cfg.schedule_steps);
    if (cfg.schedule_kind == "linear")
        return NoiseSchedule::make(ScheduleKind::Linear, cfg.schedule_steps);
    throw CcdiffError(ErrorCode::BadConfig, "unknown schedule kind '" + cfg.schedule_kind + "'");
}

std::string config_hash(const RunConfig& cfg) {
    const std::string dump = config_to_json(cfg).dump();
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a:%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace ccdiff
