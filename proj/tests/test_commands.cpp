#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ccdiff/commands.hpp"
#include "ccdiff/errors.hpp"
#include "ccdiff/json_io.hpp"

namespace fs = std::filesystem;
using namespace ccdiff;

namespace {

// Small end-to-end configuration shared by the command tests.
RunConfig mini_config() {
    RunConfig cfg = default_config();
    cfg.seed = 7;
    cfg.sampler.seed = 7;
    cfg.datagen.n_scenes = 4;
    cfg.datagen.gen.n_agents = 3;
    cfg.datagen.gen.history_steps = 6;
    cfg.datagen.gen.future_steps = 24;
    cfg.datagen.train_fraction = 0.5;
    cfg.arch.history_steps = 6;
    cfg.arch.horizon = 16;
    cfg.arch.d_model = 16;
    cfg.arch.d_rel = 8;
    cfg.arch.d_map = 8;
    cfg.train.steps = 3;
    cfg.train.batch = 2;
    cfg.schedule_steps = 8;
    cfg.sampler.gen_steps = 16;
    cfg.sampler.guidance.grad_steps = 2;
    cfg.eval.replan_period = 0.5;
    cfg.eval.horizon = 1.0;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& sub = "") const { return (path / sub).string(); }
};

}  // namespace

TEST_SUITE("commands") {

TEST_CASE("config json round-trips through the same hash") {
    const RunConfig cfg = mini_config();
    const RunConfig back = config_from_json(config_to_json(cfg));
    CHECK(config_hash(cfg) == config_hash(back));
}

TEST_CASE("config validation rejects out-of-range values") {
    nlohmann::json j = config_to_json(default_config());
    j["sample"]["guidance_scale"] = 2.5;
    CHECK_THROWS_AS(config_from_json(j), CcdiffError);
    j = config_to_json(default_config());
    j["train"]["p_uncond"] = -0.2;
    CHECK_THROWS_AS(config_from_json(j), CcdiffError);
    j = config_to_json(default_config());
    j["sample"]["ranking"] = "alphabetical";
    CHECK_THROWS_AS(config_from_json(j), CcdiffError);
}

TEST_CASE("default config carries the standard table values") {
    const RunConfig cfg = default_config();
    CHECK(cfg.train.lr == 1e-4);
    CHECK(cfg.train.batch == 100);
    CHECK(cfg.train.ema_decay == 0.995);
    CHECK(cfg.train.yaw_reg == 0.1);
    CHECK(cfg.schedule_steps == 100);
    CHECK(cfg.sampler.c_ttc == 3.0);
    CHECK(cfg.sampler.d_max == 50.0);
    CHECK(cfg.sampler.guidance.grad_steps == 30);
    CHECK(cfg.sampler.guidance.grad_lr == 1e-3);
    CHECK(cfg.sampler.guidance.grad_norm_clip == 100.0);
    CHECK(cfg.sampler.guidance.discount == 0.99);
    CHECK(cfg.arch.history_steps == 31);
    CHECK(cfg.arch.horizon == 52);
    CHECK(cfg.datagen.gen.dt == 0.1);
    REQUIRE(cfg.sampler.guidance.terms.size() == 2);
    CHECK(cfg.sampler.guidance.terms[0].weight == -50.0);
    CHECK(cfg.sampler.guidance.terms[1].weight == 1.0);
}

TEST_CASE("full pipeline: datagen, train, generate, evaluate, plot, inspect") {
    const RunConfig cfg = mini_config();
    TempDir tmp("ccdiff_cmd_test");

    // datagen
    REQUIRE(cmd_datagen(cfg, tmp.str("data")) == 0);
    const auto records = load_dataset(tmp.str("data"));
    REQUIRE(records.size() == 4);
    int train_count = 0, val_count = 0;
    for (const auto& r : records) {
        CHECK(validate_scene(r.scene).empty());
        if (r.split == "train") ++train_count;
        if (r.split == "val") ++val_count;
    }
    CHECK(train_count == 2);
    CHECK(val_count == 2);
    CHECK(fs::exists(tmp.path / "data" / "manifest.json"));

    // train
    REQUIRE(cmd_train(cfg, tmp.str("data"), tmp.str("model.json")) == 0);
    const Checkpoint ckpt = read_checkpoint(tmp.str("model.json"));
    CHECK(ckpt.train_steps == 3);
    CHECK(ckpt.params.size() == ParamLayout(cfg.arch).total);

    // generate twice: byte-identical outputs
    REQUIRE(cmd_generate(cfg, tmp.str("model.json"), tmp.str("data"), tmp.str("gen_a")) == 0);
    REQUIRE(cmd_generate(cfg, tmp.str("model.json"), tmp.str("data"), tmp.str("gen_b")) == 0);
    int compared = 0;
    for (const auto& entry : fs::directory_iterator(tmp.str("gen_a"))) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("gen_", 0) != 0) continue;
        CHECK(slurp(entry.path()) == slurp(tmp.path / "gen_b" / name));
        ++compared;
    }
    CHECK(compared == 2);  // the two val scenes

    // worker-count invariance at the library level
    RunConfig cfg2 = cfg;
    cfg2.eval.workers = 2;
    REQUIRE(cmd_generate(cfg2, tmp.str("model.json"), tmp.str("data"), tmp.str("gen_w2")) == 0);
    for (const auto& entry : fs::directory_iterator(tmp.str("gen_a"))) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("gen_", 0) != 0) continue;
        CHECK(slurp(entry.path()) == slurp(tmp.path / "gen_w2" / name));
    }

    // evaluate the generation against references
    REQUIRE(cmd_evaluate(cfg, {tmp.str("gen_a")}, tmp.str("data"), tmp.str("eval")) == 0);
    CHECK(fs::exists(tmp.path / "eval" / "metrics.csv"));
    CHECK(fs::exists(tmp.path / "eval" / "summary.json"));

    // a "method" that replays the references scores FDE exactly 0
    fs::create_directories(tmp.str("ref_method"));
    int i = 0;
    for (const auto& r : records) {
        if (r.split == "val") {
            const Trajectory sliced = slice_trajectory(r.future, 0, 10);
            nlohmann::json j = trajectory_to_json(sliced);
            j["scene_index"] = i;
            char name[32];
            std::snprintf(name, sizeof(name), "gen_%04d.json", i);
            write_json_file((tmp.path / "ref_method" / name).string(), j);
        }
        ++i;
    }
    REQUIRE(cmd_evaluate(cfg, {tmp.str("ref_method")}, tmp.str("data"), tmp.str("eval_ref")) ==
            0);
    const std::string csv = slurp(tmp.path / "eval_ref" / "metrics.csv");
    std::istringstream lines(csv);
    std::string line;
    int data_rows = 0;
    while (std::getline(lines, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("method,", 0) == 0) continue;
        ++data_rows;
        const auto last_comma = line.find_last_of(',');
        const auto second_last = line.find_last_of(',', last_comma - 1);
        const double fde_val = std::stod(line.substr(second_last + 1,
                                                     last_comma - second_last - 1));
        CHECK(fde_val == 0.0);
    }
    CHECK(data_rows == 2);

    // plot one record
    {
        const nlohmann::json rec = read_json_file(tmp.str("data") + "/scene_0002.json");
        write_json_file(tmp.str("scene.json"), rec.at("scene"));
    }
    const auto gen_files = [&] {
        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(tmp.str("gen_a")))
            if (entry.path().filename().string().rfind("gen_", 0) == 0)
                files.push_back(entry.path().string());
        return files;
    }();
    REQUIRE(cmd_plot(tmp.str("scene.json"), gen_files.front(), tmp.str("plot.svg")) == 0);
    const std::string svg = slurp(tmp.path / "plot.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("1 px = 0.2 m") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);

    // inspect
    REQUIRE(cmd_inspect(cfg, tmp.str("scene.json"), tmp.str("model.json"),
                        tmp.str("inspect.json")) == 0);
    const nlohmann::json insp = read_json_file(tmp.str("inspect.json"));
    CHECK(insp.at("num_agents") == 3);
    CHECK(insp.at("mask").size() == 3);
    CHECK(insp.at("order").size() == 3);
    CHECK(insp.at("weights")[0].size() == 3);

    // manifest reproducibility stamp
    const nlohmann::json manifest = read_json_file(tmp.str("gen_a") + "/manifest.json");
    CHECK(manifest.at("config_hash") == config_hash(cfg));
    CHECK(manifest.at("command") == "generate");
}

TEST_CASE("missing files produce BadFile errors") {
    const RunConfig cfg = mini_config();
    CHECK_THROWS_AS(load_dataset("/nonexistent/dir"), CcdiffError);
    CHECK_THROWS_AS(read_checkpoint("/nonexistent/ckpt.json"), CcdiffError);
    CHECK_THROWS_AS(cmd_train(cfg, "/nonexistent/dir", "/tmp/x.json"), CcdiffError);
}

}  // TEST_SUITE
