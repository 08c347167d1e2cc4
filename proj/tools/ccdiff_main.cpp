#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ccdiff/commands.hpp"
#include "ccdiff/config.hpp"
#include "ccdiff/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

struct CommonFlags {
    std::string config_file;
    uint64_t seed = 0;
    bool seed_set = false;
    int workers = -1;
    std::string ranking, mask;
    double guidance_scale = -1.0;
    int nc = -1;
    double replan_period = -1.0;
    int guidance_masking = -1;  // -1 unset, 0 dense, 1 masked
};

void add_common(CLI::App* app, CommonFlags& f) {
    app->add_option("--config", f.config_file, "run config JSON (flags override file values)");
    app->add_option("--seed", f.seed, "base seed")->each([&](const std::string&) {
        f.seed_set = true;
    });
    app->add_option("--workers", f.workers, "worker threads for scene-parallel stages");
    app->add_option("--ranking", f.ranking, "agent ranking: causal|distance|random|all");
    app->add_option("--mask", f.mask, "conditioning mask: ttc|none");
    app->add_option("--guidance-scale", f.guidance_scale, "classifier-free guidance scale w");
    app->add_option("--nc", f.nc, "controllable-agent budget N_c");
    app->add_option("--replan-period", f.replan_period, "closed-loop replan period (s)");
    app->add_option("--guidance-masking", f.guidance_masking,
                    "1 = mask classifier guidance to ranked agents, 0 = dense guidance");
}

ccdiff::RunConfig resolve_config(const CommonFlags& f) {
    ccdiff::RunConfig cfg =
        f.config_file.empty() ? ccdiff::default_config() : ccdiff::load_config_file(f.config_file);
    if (f.seed_set) cfg.seed = f.seed;
    cfg.sampler.seed = cfg.seed;
    if (f.workers >= 0) cfg.eval.workers = f.workers;
    if (!f.ranking.empty()) cfg.sampler.ranking = ccdiff::ranking_mode_from_name(f.ranking);
    if (!f.mask.empty()) cfg.sampler.mask_mode = ccdiff::mask_mode_from_name(f.mask);
    if (f.guidance_scale >= 0.0) {
        if (f.guidance_scale < 1.0 || f.guidance_scale >= 2.0)
            throw ccdiff::CcdiffError(ccdiff::ErrorCode::BadConfig,
                                      "--guidance-scale must lie in [1, 2)");
        cfg.sampler.w = f.guidance_scale;
    }
    if (f.nc >= 0) cfg.sampler.n_c = f.nc;
    if (f.replan_period > 0.0) cfg.eval.replan_period = f.replan_period;
    if (f.guidance_masking >= 0) cfg.sampler.guidance_masking = f.guidance_masking != 0;
#ifdef _OPENMP
    if (cfg.eval.workers > 0) omp_set_num_threads(cfg.eval.workers);
#endif
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ccdiff: causal-structure-guided diffusion for safety-critical traffic scenarios"};
    app.require_subcommand(1);

    CommonFlags f;
    std::string out, dataset, checkpoint, reference_dir, scene_file, traj_file;
    std::vector<std::string> generated_dirs;

    auto* datagen = app.add_subcommand("datagen", "generate a synthetic scenario dataset");
    add_common(datagen, f);
    datagen->add_option("--out", out, "output dataset directory")->required();

    auto* train = app.add_subcommand("train", "train the denoiser on a dataset");
    add_common(train, f);
    train->add_option("--dataset", dataset, "dataset directory")->required();
    train->add_option("--out", out, "output checkpoint path")->required();

    auto* generate = app.add_subcommand("generate", "closed-loop guided generation");
    add_common(generate, f);
    generate->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    generate->add_option("--dataset", dataset, "dataset directory (val split drives scenes)")
        ->required();
    generate->add_option("--out", out, "output directory")->required();

    auto* evaluate = app.add_subcommand("evaluate", "score generated trajectories");
    add_common(evaluate, f);
    evaluate->add_option("--references", reference_dir, "reference dataset directory")
        ->required();
    evaluate->add_option("--out", out, "output directory")->required();
    evaluate->add_option("dirs", generated_dirs, "generated output directories (one per method)")
        ->required();

    auto* plot = app.add_subcommand("plot", "render an overhead SVG");
    plot->add_option("--scene", scene_file, "scene JSON")->required();
    plot->add_option("--trajectory", traj_file, "trajectory JSON");
    plot->add_option("--out", out, "output SVG path")->required();

    auto* inspect = app.add_subcommand("inspect", "dump TTC mask, DCG, and causal ranking");
    add_common(inspect, f);
    inspect->add_option("--scene", scene_file, "scene JSON")->required();
    inspect->add_option("--checkpoint", checkpoint, "checkpoint for learned attention weights");
    inspect->add_option("--out", out, "output JSON path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (datagen->parsed()) return ccdiff::cmd_datagen(resolve_config(f), out);
        if (train->parsed()) return ccdiff::cmd_train(resolve_config(f), dataset, out);
        if (generate->parsed())
            return ccdiff::cmd_generate(resolve_config(f), checkpoint, dataset, out);
        if (evaluate->parsed())
            return ccdiff::cmd_evaluate(resolve_config(f), generated_dirs, reference_dir, out);
        if (plot->parsed()) return ccdiff::cmd_plot(scene_file, traj_file, out);
        if (inspect->parsed())
            return ccdiff::cmd_inspect(resolve_config(f), scene_file, checkpoint, out);
    } catch (const ccdiff::CcdiffError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        switch (e.code()) {
            case ccdiff::ErrorCode::BadConfig: return 1;
            case ccdiff::ErrorCode::BadFile: return 2;
            default: return 3;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
