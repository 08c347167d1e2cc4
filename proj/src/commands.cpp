#include "ccdiff/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ccdiff/dynamics.hpp"
#include "ccdiff/errors.hpp"
#include "ccdiff/json_io.hpp"
#include "ccdiff/metrics.hpp"

namespace fs = std::filesystem;

namespace ccdiff {

using nlohmann::json;

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    json j;
    j["format"] = "ccdiff-checkpoint.v1";
    j["arch"] = {{"history_steps", ckpt.arch.history_steps}, {"horizon", ckpt.arch.horizon},
                 {"state_dim", ckpt.arch.state_dim},         {"d_model", ckpt.arch.d_model},
                 {"n_heads", ckpt.arch.n_heads},             {"n_layers", ckpt.arch.n_layers},
                 {"d_rel", ckpt.arch.d_rel},                 {"map_dim", ckpt.arch.map_dim},
                 {"d_map", ckpt.arch.d_map}};
    j["normalizer"] = {{"mean", ckpt.norm.mean}, {"stdev", ckpt.norm.stdev}};
    j["schedule"] = {{"kind", ckpt.schedule_kind}, {"steps", ckpt.schedule_steps}};
    j["param_count"] = ckpt.params.size();
    j["params"] = ckpt.params;
    j["ema_params"] = ckpt.ema_params;
    j["train_steps"] = ckpt.train_steps;
    j["first_loss"] = ckpt.first_loss;
    j["last_loss"] = ckpt.last_loss;
    write_json_file(path, j);
}

Checkpoint read_checkpoint(const std::string& path) {
    const json j = read_json_file(path);
    if (!j.contains("format") || j["format"] != "ccdiff-checkpoint.v1")
        throw CcdiffError(ErrorCode::BadFile, "not a checkpoint: " + path);
    Checkpoint c;
    const auto& a = j.at("arch");
    c.arch.history_steps = a.at("history_steps").get<int>();
    c.arch.horizon = a.at("horizon").get<int>();
    c.arch.state_dim = a.at("state_dim").get<int>();
    c.arch.d_model = a.at("d_model").get<int>();
    c.arch.n_heads = a.at("n_heads").get<int>();
    c.arch.n_layers = a.at("n_layers").get<int>();
    c.arch.d_rel = a.at("d_rel").get<int>();
    c.arch.map_dim = a.at("map_dim").get<int>();
    c.arch.d_map = a.at("d_map").get<int>();
    c.norm.mean = j.at("normalizer").at("mean").get<std::array<double, 2>>();
    c.norm.stdev = j.at("normalizer").at("stdev").get<std::array<double, 2>>();
    c.schedule_kind = j.at("schedule").at("kind").get<std::string>();
    c.schedule_steps = j.at("schedule").at("steps").get<int>();
    c.params = j.at("params").get<std::vector<double>>();
    c.ema_params = j.at("ema_params").get<std::vector<double>>();
    c.train_steps = j.at("train_steps").get<long>();
    c.first_loss = j.value("first_loss", 0.0);
    c.last_loss = j.value("last_loss", 0.0);
    const size_t expect = ParamLayout(c.arch).total;
    if (c.params.size() != expect || c.ema_params.size() != expect)
        throw CcdiffError(ErrorCode::BadFile, "checkpoint parameter count mismatch");
    return c;
}

std::vector<DatasetRecord> load_dataset(const std::string& dir) {
    const fs::path root(dir);
    const json manifest = read_json_file((root / "dataset.json").string());
    if (!manifest.contains("format") || manifest["format"] != "dataset.v1")
        throw CcdiffError(ErrorCode::BadFile, "not a dataset manifest: " + dir);
    std::vector<DatasetRecord> records;
    for (const auto& entry : manifest.at("scenes")) {
        DatasetRecord rec;
        rec.file = entry.at("file").get<std::string>();
        rec.split = entry.at("split").get<std::string>();
        rec.seed = entry.at("seed").get<uint64_t>();
        const json j = read_json_file((root / rec.file).string());
        if (!j.contains("format") || j["format"] != "scene_record.v1")
            throw CcdiffError(ErrorCode::BadFile, "not a scene record: " + rec.file);
        rec.scene = scene_from_json(j.at("scene"));
        rec.future = trajectory_from_json(j.at("future"));
        records.push_back(std::move(rec));
    }
    return records;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const RunConfig& cfg) {
    json j;
    j["format"] = "manifest.v1";
    j["version"] = "0.1.0";
    j["command"] = command;
    j["seed"] = cfg.seed;
    j["config_hash"] = config_hash(cfg);
    j["config"] = config_to_json(cfg);
    write_json_file((fs::path(out_dir) / "manifest.json").string(), j);
}

int cmd_datagen(const RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const MapModel map = make_map(layout_from_name(cfg.datagen.layout), cfg.datagen.lane_width,
                                  cfg.datagen.extent, cfg.datagen.resolution);

    json scenes = json::array();
    const int n_train = static_cast<int>(std::lround(cfg.datagen.n_scenes *
                                                     cfg.datagen.train_fraction));
    for (int i = 0; i < cfg.datagen.n_scenes; ++i) {
        const uint64_t scene_seed = mix_seed(cfg.seed, 0xD5 + static_cast<uint64_t>(i));
        Rng rng(scene_seed);
        const GeneratedScene gen = make_scene(map, cfg.datagen.gen, rng);

        char name[32];
        std::snprintf(name, sizeof(name), "scene_%04d.json", i);
        json record;
        record["format"] = "scene_record.v1";
        record["scene"] = scene_to_json(gen.scene);
        record["future"] = trajectory_to_json(gen.future);
        write_json_file((fs::path(out_dir) / name).string(), record);

        scenes.push_back(json{{"file", name},
                              {"seed", scene_seed},
                              {"split", i < n_train ? "train" : "val"}});
    }
    json manifest;
    manifest["format"] = "dataset.v1";
    manifest["seed"] = cfg.seed;
    manifest["layout"] = cfg.datagen.layout;
    manifest["scenes"] = scenes;
    write_json_file((fs::path(out_dir) / "dataset.json").string(), manifest);
    write_manifest(out_dir, "datagen", cfg);
    std::printf("datagen: wrote %d scenes to %s\n", cfg.datagen.n_scenes, out_dir.c_str());
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& dataset_dir,
              const std::string& out_checkpoint) {
    const auto records = load_dataset(dataset_dir);
    std::vector<const DatasetRecord*> train_set;
    for (const auto& r : records)
        if (r.split == "train") train_set.push_back(&r);
    if (train_set.empty()) throw CcdiffError(ErrorCode::BadFile, "dataset has no train split");

    // Slice futures to the model horizon.
    std::vector<Trajectory> futures;
    futures.reserve(train_set.size());
    for (const auto* r : train_set) {
        if (r->future.T < cfg.arch.horizon)
            throw CcdiffError(ErrorCode::BadFile, "future shorter than the model horizon");
        futures.push_back(slice_trajectory(r->future, 0, cfg.arch.horizon));
    }
    std::vector<const Trajectory*> future_ptrs;
    for (const auto& f : futures) future_ptrs.push_back(&f);
    const Normalizer norm = fit_normalizer(future_ptrs);

    Trainer trainer(cfg.arch, cfg.train, make_schedule(cfg), norm, cfg.seed);
    Rng batch_rng(mix_seed(cfg.seed, 0xBA7C4));
    double first_loss = 0.0, last_loss = 0.0;
    for (int step = 0; step < cfg.train.steps; ++step) {
        std::vector<TrainItem> batch;
        const int b = std::min<int>(cfg.train.batch, static_cast<int>(train_set.size()));
        for (int i = 0; i < b; ++i) {
            const int pick =
                static_cast<int>(batch_rng.uniform_int(0, static_cast<int>(train_set.size()) - 1));
            batch.push_back({&train_set[pick]->scene, &futures[pick]});
        }
        const double loss = trainer.train_step(batch);
        if (step == 0) first_loss = loss;
        last_loss = loss;
        if (step % 50 == 0 || step + 1 == cfg.train.steps)
            std::printf("train: step %d loss %.6f\n", step, loss);
    }

    Checkpoint ckpt;
    ckpt.arch = cfg.arch;
    ckpt.norm = norm;
    ckpt.schedule_kind = cfg.schedule_kind;
    ckpt.schedule_steps = cfg.schedule_steps;
    ckpt.params = trainer.params();
    ckpt.ema_params = trainer.ema_params();
    ckpt.train_steps = trainer.step_count();
    ckpt.first_loss = first_loss;
    ckpt.last_loss = last_loss;
    if (const auto parent = fs::path(out_checkpoint).parent_path(); !parent.empty())
        fs::create_directories(parent);
    write_checkpoint(out_checkpoint, ckpt);
    std::printf("train: %ld steps, loss %.6f -> %.6f, checkpoint %s\n", ckpt.train_steps,
                first_loss, last_loss, out_checkpoint.c_str());
    return 0;
}

namespace {

std::vector<int> select_eval_indices(const std::vector<DatasetRecord>& records) {
    std::vector<int> idx;
    for (size_t i = 0; i < records.size(); ++i)
        if (records[i].split == "val") idx.push_back(static_cast<int>(i));
    if (idx.empty())
        for (size_t i = 0; i < records.size(); ++i) idx.push_back(static_cast<int>(i));
    return idx;
}

}  // namespace

int cmd_generate(const RunConfig& cfg, const std::string& checkpoint_path,
                 const std::string& dataset_dir, const std::string& out_dir) {
    const Checkpoint ckpt = read_checkpoint(checkpoint_path);
    const LearnedDenoiser denoiser(ckpt.arch, ckpt.ema_params, ckpt.norm);
    const NoiseSchedule schedule =
        NoiseSchedule::make(ckpt.schedule_kind == "linear" ? ScheduleKind::Linear
                                                           : ScheduleKind::Cosine,
                            ckpt.schedule_steps);

    const auto records = load_dataset(dataset_dir);
    const auto indices = select_eval_indices(records);
    std::vector<Scene> scenes;
    std::vector<Trajectory> references;
    for (int i : indices) {
        scenes.push_back(records[i].scene);
        references.push_back(records[i].future);
    }

    BatchEvalConfig bcfg;
    bcfg.loop.sampler = cfg.sampler;
    bcfg.loop.sampler.gen_steps = ckpt.arch.horizon;
    bcfg.loop.t_replan = cfg.eval.replan_period;
    bcfg.loop.horizon = cfg.eval.horizon;
    bcfg.workers = cfg.eval.workers;

    const auto results = batch_evaluate(scenes, references, denoiser, schedule, bcfg);

    fs::create_directories(out_dir);
    json rows = json::array();
    int failures = 0;
    for (size_t s = 0; s < results.size(); ++s) {
        const SceneResult& r = results[s];
        json row{{"scene_index", indices[s]}, {"seed", r.seed}, {"ok", r.ok}};
        if (r.ok) {
            char name[32];
            std::snprintf(name, sizeof(name), "gen_%04d.json", indices[s]);
            json traj = trajectory_to_json(r.traj);
            traj["scene_index"] = indices[s];
            write_json_file((fs::path(out_dir) / name).string(), traj);
            row["file"] = name;
            row["collided"] = r.collided;
            row["orr"] = r.orr;
            row["fde"] = r.fde;
            row["cfd"] = r.cfd;
            row["clique_count"] = r.clique_count;
        } else {
            row["error"] = r.error;
            ++failures;
        }
        rows.push_back(row);
    }
    write_json_file((fs::path(out_dir) / "results.json").string(),
                    json{{"format", "generation-results.v1"}, {"rows", rows}});
    write_manifest(out_dir, "generate", cfg);
    std::printf("generate: %zu scenes, %d failures, outputs in %s\n", results.size(), failures,
                out_dir.c_str());
    return failures == 0 ? 0 : 3;
}

int cmd_evaluate(const RunConfig& cfg, const std::vector<std::string>& generated_dirs,
                 const std::string& reference_dir, const std::string& out_dir) {
    const auto records = load_dataset(reference_dir);
    fs::create_directories(out_dir);

    std::ofstream csv(fs::path(out_dir) / "metrics.csv");
    csv << "# metric conventions v1: scr = scenario disc-overlap rate; orr = percent "
           "offroad agent-steps; fde = mean final displacement (m); cfd = (mean|accel|, "
           "mean|jerk|) feature distance\n";
    csv << "method,scene_index,collided,orr,fde,cfd\n";

    std::map<std::string, RawMetrics> table;
    std::map<std::string, json> correlations;
    for (const auto& dir : generated_dirs) {
        const std::string method = fs::path(dir).filename().string().empty()
                                       ? fs::path(dir).parent_path().filename().string()
                                       : fs::path(dir).filename().string();
        double scr_sum = 0.0, orr_sum = 0.0, fde_sum = 0.0, cfd_sum = 0.0;
        int count = 0;
        std::vector<std::pair<double, int>> corr_samples;
        for (const auto& entry : fs::directory_iterator(dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("gen_", 0) != 0 || entry.path().extension() != ".json") continue;
            const json j = read_json_file(entry.path().string());
            const Trajectory traj = trajectory_from_json(j);
            const int scene_index = j.at("scene_index").get<int>();
            if (scene_index < 0 || scene_index >= static_cast<int>(records.size()))
                throw CcdiffError(ErrorCode::BadFile, "scene index out of range in " + name);
            const DatasetRecord& ref = records[scene_index];
            if (ref.future.T < traj.T)
                throw CcdiffError(ErrorCode::BadFile, "reference shorter than generation");
            const Trajectory ref_slice = slice_trajectory(ref.future, 0, traj.T);

            const int collided = trajectory_has_collision(traj, traj.agent_radii()) ? 1 : 0;
            const double orr_v = orr(traj, ref.scene.map);
            const double fde_v = fde(traj, ref_slice);
            const double cfd_v = cfd(traj, ref_slice);
            csv << method << "," << scene_index << "," << collided << "," << orr_v << ","
                << fde_v << "," << cfd_v << "\n";
            scr_sum += collided;
            orr_sum += orr_v;
            fde_sum += fde_v;
            cfd_sum += cfd_v;
            ++count;

            const DecisionCausalGraph g =
                build_dcg(ttc_mask(ref.scene, cfg.sampler.c_ttc, cfg.sampler.d_max),
                          Mat(ref.scene.num_agents(), ref.scene.num_agents(), 0.0));
            corr_samples.push_back({static_cast<double>(clique_count(g)), collided});
        }
        if (count == 0)
            throw CcdiffError(ErrorCode::BadFile, "no gen_*.json files in " + dir);
        table[method] = {scr_sum / count, orr_sum / count, fde_sum / count, cfd_sum / count};
        json corr = nullptr;
        if (corr_samples.size() >= 3) {
            try {
                const auto [r2, p] = clique_collision_correlation(corr_samples);
                corr = json{{"r2", r2}, {"p_value", p}};
            } catch (const CcdiffError&) {
                corr = json{{"degenerate", true}};
            }
        }
        correlations[method] = corr;
    }

    json summary;
    summary["format"] = "evaluation-summary.v1";
    json methods = json::object();
    for (const auto& [name, m] : table)
        methods[name] = {{"scr", m.scr}, {"orr", m.orr}, {"fde", m.fde}, {"cfd", m.cfd},
                         {"clique_collision_correlation", correlations[name]}};

    std::ofstream scsv(fs::path(out_dir) / "summary.csv");
    scsv << "method,scr,orr,fde,cfd,cs,rs\n";
    if (table.size() >= 2) {
        try {
            const auto scores = standardize_scores(table);
            std::vector<std::pair<double, double>> points;
            for (const auto& [name, s] : scores) {
                methods[name]["cs"] = s.cs;
                methods[name]["rs"] = s.rs;
                points.push_back({s.cs, s.rs});
            }
            const auto front = pareto_front(points);
            const auto [gd, igd] = gd_igd(points, front);
            summary["pareto_front"] = front;
            summary["gd"] = gd;
            summary["igd"] = igd;
            for (const auto& [name, s] : scores) {
                const RawMetrics& m = table[name];
                scsv << name << "," << m.scr << "," << m.orr << "," << m.fde << "," << m.cfd
                     << "," << s.cs << "," << s.rs << "\n";
            }
        } catch (const CcdiffError& e) {
            summary["standardization_error"] = e.what();
            for (const auto& [name, m] : table)
                scsv << name << "," << m.scr << "," << m.orr << "," << m.fde << "," << m.cfd
                     << ",,\n";
        }
    } else {
        for (const auto& [name, m] : table)
            scsv << name << "," << m.scr << "," << m.orr << "," << m.fde << "," << m.cfd
                 << ",,\n";
    }
    summary["methods"] = methods;
    write_json_file((fs::path(out_dir) / "summary.json").string(), summary);
    write_manifest(out_dir, "evaluate", cfg);
    std::printf("evaluate: %zu methods -> %s\n", table.size(), out_dir.c_str());
    return 0;
}

namespace {

constexpr double kPxPerMeter = 5.0;  // 1 px = 0.2 m

struct SvgMapper {
    double min_x, max_y;
    double px(double x) const { return (x - min_x) * kPxPerMeter; }
    double py(double y) const { return (max_y - y) * kPxPerMeter; }
};

const char* kPalette[] = {"#e41a1c", "#377eb8", "#4daf4a", "#984ea3",
                          "#ff7f00", "#a65628", "#f781bf", "#00ced1"};

}  // namespace

std::string render_svg(const Scene& scene, const Trajectory* traj) {
    const MapModel& map = scene.map;
    const double min_x = map.origin_x, min_y = map.origin_y;
    const double max_x = map.origin_x + map.width * map.resolution;
    const double max_y = map.origin_y + map.height * map.resolution;
    const SvgMapper m{min_x, max_y};
    const int w_px = static_cast<int>(std::ceil((max_x - min_x) * kPxPerMeter));
    const int h_px = static_cast<int>(std::ceil((max_y - min_y) * kPxPerMeter));

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_px << "\" height=\""
        << h_px << "\" viewBox=\"0 0 " << w_px << " " << h_px << "\">\n";
    svg << "<!-- overhead scene render: 1 px = 0.2 m, origin top-left, world y points up "
           "(flipped). gray = history, colored = generated, red circles = collisions -->\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";

    // drivable cells, row runs merged
    svg << "<g fill=\"#d9d9d9\">\n";
    for (int iy = 0; iy < map.height; ++iy) {
        int run_start = -1;
        for (int ix = 0; ix <= map.width; ++ix) {
            const bool driv = ix < map.width && map.cell_drivable(ix, iy);
            if (driv && run_start < 0) run_start = ix;
            if (!driv && run_start >= 0) {
                const double x0 = map.origin_x + run_start * map.resolution;
                const double y1 = map.origin_y + (iy + 1) * map.resolution;
                svg << "<rect x=\"" << m.px(x0) << "\" y=\"" << m.py(y1) << "\" width=\""
                    << (ix - run_start) * map.resolution * kPxPerMeter << "\" height=\""
                    << map.resolution * kPxPerMeter << "\"/>\n";
                run_start = -1;
            }
        }
    }
    svg << "</g>\n";

    // lane centerlines
    svg << "<g stroke=\"#9c9c9c\" stroke-dasharray=\"6,4\" fill=\"none\">\n";
    for (const auto& lane : map.lanes) {
        svg << "<polyline points=\"";
        for (const auto& p : lane) svg << m.px(p[0]) << "," << m.py(p[1]) << " ";
        svg << "\"/>\n";
    }
    svg << "</g>\n";

    // histories
    svg << "<g stroke=\"#808080\" stroke-width=\"1.5\" fill=\"none\">\n";
    for (const auto& agent : scene.agents) {
        svg << "<polyline points=\"";
        for (const auto& s : agent.history) svg << m.px(s.x) << "," << m.py(s.y) << " ";
        svg << "\"/>\n";
    }
    svg << "</g>\n";

    if (traj) {
        for (int a = 0; a < traj->N; ++a) {
            const char* color = kPalette[a % 8];
            svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
            for (int t = 0; t < traj->T; ++t)
                svg << m.px(traj->state(t, a).x) << "," << m.py(traj->state(t, a).y) << " ";
            svg << "\"/>\n";
        }
        // collision markers
        const auto radii = traj->agent_radii();
        svg << "<g fill=\"none\" stroke=\"#ff0000\" stroke-width=\"2\">\n";
        for (int t = 0; t < traj->T; ++t) {
            for (int i = 0; i < traj->N; ++i) {
                for (int j = i + 1; j < traj->N; ++j) {
                    const AgentState& a = traj->state(t, i);
                    const AgentState& b = traj->state(t, j);
                    const double rs = radii[i] + radii[j];
                    const double dx = a.x - b.x, dy = a.y - b.y;
                    if (dx * dx + dy * dy <= rs * rs) {
                        svg << "<circle cx=\"" << m.px((a.x + b.x) / 2) << "\" cy=\""
                            << m.py((a.y + b.y) / 2) << "\" r=\"" << 0.5 * rs * kPxPerMeter
                            << "\"/>\n";
                    }
                }
            }
        }
        svg << "</g>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

int cmd_plot(const std::string& scene_file, const std::string& trajectory_file,
             const std::string& out_svg) {
    const Scene scene = read_scene_file(scene_file);
    Trajectory traj;
    const bool have_traj = !trajectory_file.empty();
    if (have_traj) traj = read_trajectory_file(trajectory_file);
    std::ofstream f(out_svg);
    if (!f) throw CcdiffError(ErrorCode::BadFile, "cannot open for write: " + out_svg);
    f << render_svg(scene, have_traj ? &traj : nullptr);
    std::printf("plot: wrote %s\n", out_svg.c_str());
    return 0;
}

int cmd_inspect(const RunConfig& cfg, const std::string& scene_file,
                const std::string& checkpoint_path, const std::string& out_json) {
    const Scene scene = read_scene_file(scene_file);
    const int n = scene.num_agents();

    Mat logits(n, n, 0.0);
    if (!checkpoint_path.empty()) {
        const Checkpoint ckpt = read_checkpoint(checkpoint_path);
        const LearnedDenoiser denoiser(ckpt.arch, ckpt.ema_params, ckpt.norm);
        ActionTensor zeros(ckpt.arch.horizon, n, 0.0);
        const Mat map_ctx = map_context_features(scene);
        DenoiserInput in{&zeros, &scene.agents, &map_ctx, ckpt.schedule_steps, nullptr};
        logits = denoiser.denoise(in).attn_logits;
    }

    const BoolMat mask = ttc_mask(scene, cfg.sampler.c_ttc, cfg.sampler.d_max);
    const DecisionCausalGraph g = build_dcg(mask, logits);
    const CausalRank rank = causal_rank(g, cfg.sampler.n_c);

    json out;
    out["format"] = "inspect.v1";
    out["num_agents"] = n;
    out["ttc_threshold"] = cfg.sampler.c_ttc;
    out["distance_threshold"] = cfg.sampler.d_max;
    json ttc = json::array();
    for (int i = 0; i < n; ++i) {
        json row = json::array();
        for (int j = 0; j < n; ++j) {
            const double t = i == j ? 0.0 : compute_ttc(scene.current(i), scene.current(j));
            row.push_back(std::isfinite(t) ? json(t) : json(nullptr));
        }
        ttc.push_back(row);
    }
    out["ttc"] = ttc;
    out["mask"] = json::array();
    out["weights"] = json::array();
    for (int i = 0; i < n; ++i) {
        json mrow = json::array(), wrow = json::array();
        for (int j = 0; j < n; ++j) {
            mrow.push_back(g.mask.at(i, j) ? 1 : 0);
            wrow.push_back(g.weights.at(i, j));
        }
        out["mask"].push_back(mrow);
        out["weights"].push_back(wrow);
    }
    out["edge_count"] = g.edge_count();
    out["clique_count"] = clique_count(g);
    out["order"] = rank.order;
    out["rho"] = rank.rho;
    out["occurrences"] = rank.occurrences;
    out["clique_weight"] = rank.clique_weight;
    write_json_file(out_json, out);
    std::printf("inspect: wrote %s\n", out_json.c_str());
    return 0;
}

}  // namespace ccdiff
