#pragma once

#include <string>
#include <vector>

#include "ccdiff/closedloop.hpp"
#include "ccdiff/config.hpp"
#include "ccdiff/types.hpp"

namespace ccdiff {

struct Checkpoint {
    DenoiserArch arch;
    Normalizer norm;
    std::string schedule_kind = "cosine";
    int schedule_steps = 100;
    std::vector<double> params;
    std::vector<double> ema_params;
    long train_steps = 0;
    double first_loss = 0.0;
    double last_loss = 0.0;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

struct DatasetRecord {
    Scene scene;
    Trajectory future;
    std::string split;
    uint64_t seed = 0;
    std::string file;
};

std::vector<DatasetRecord> load_dataset(const std::string& dir);

// Every command writes <out>/manifest.json with the resolved config, its hash, and the
// seed; outputs are byte-reproducible from the manifest.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const RunConfig& cfg);

// Overhead SVG, 1 px = 0.2 m, origin top-left: drivable area, lane centerlines, agent
// histories in gray, generated trajectories colored, collisions marked.
std::string render_svg(const Scene& scene, const Trajectory* traj);

int cmd_datagen(const RunConfig& cfg, const std::string& out_dir);
int cmd_train(const RunConfig& cfg, const std::string& dataset_dir,
              const std::string& out_checkpoint);
int cmd_generate(const RunConfig& cfg, const std::string& checkpoint_path,
                 const std::string& dataset_dir, const std::string& out_dir);
int cmd_evaluate(const RunConfig& cfg, const std::vector<std::string>& generated_dirs,
                 const std::string& reference_dir, const std::string& out_dir);
int cmd_plot(const std::string& scene_file, const std::string& trajectory_file,
             const std::string& out_svg);
int cmd_inspect(const RunConfig& cfg, const std::string& scene_file,
                const std::string& checkpoint_path, const std::string& out_json);

}  // namespace ccdiff
