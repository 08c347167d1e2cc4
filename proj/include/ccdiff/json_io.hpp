#pragma once

#include <string>

#include <json.hpp>

#include "ccdiff/types.hpp"

namespace ccdiff {

// File formats. All geometry is meters / seconds / radians; grids are row-major with
// an origin + resolution header. Doubles round-trip exactly (shortest representation).
//   scene.v1        a Scene: map + per-agent histories
//   trajectory.v1   a Trajectory: [T][N] states and actions
//   scene_record.v1 dataset entry: {"scene": scene.v1 body, "future": trajectory.v1 body}

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

nlohmann::json trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const nlohmann::json& j);

nlohmann::json map_to_json(const MapModel& map);
MapModel map_from_json(const nlohmann::json& j);

nlohmann::json guidance_spec_to_json(const GuidanceSpec& spec);
GuidanceSpec guidance_spec_from_json(const nlohmann::json& j);

void write_json_file(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::string& path);

void write_scene_file(const std::string& path, const Scene& scene);
Scene read_scene_file(const std::string& path);

void write_trajectory_file(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory_file(const std::string& path);

}  // namespace ccdiff
