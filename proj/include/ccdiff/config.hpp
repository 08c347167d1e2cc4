#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "ccdiff/datagen.hpp"
#include "ccdiff/denoiser.hpp"
#include "ccdiff/diffusion.hpp"

namespace ccdiff {

// One declarative run document; file values override defaults, CLI flags override the
// file. Defaults follow the standard hyperparameter table.
struct RunConfig {
    uint64_t seed = 0;

    struct Datagen {
        std::string layout = "crossroads";
        int n_scenes = 20;
        SceneGenConfig gen;
        double lane_width = 3.5;
        double extent = 120.0;
        double resolution = 0.5;
        double train_fraction = 0.8;
    } datagen;

    DenoiserArch arch;
    TrainConfig train;

    std::string schedule_kind = "cosine";
    int schedule_steps = 100;

    SamplerConfig sampler;

    struct Eval {
        double replan_period = 0.5;  // s
        double horizon = 10.0;       // s
        int workers = 0;
    } eval;
};

RunConfig default_config();

nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config_file(const std::string& path);

NoiseSchedule make_schedule(const RunConfig& cfg);

// FNV-1a over the canonical dump; stamped into every run manifest.
std::string config_hash(const RunConfig& cfg);

}  // namespace ccdiff
