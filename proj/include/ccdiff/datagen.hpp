#pragma once

#include <string>
#include <vector>

#include "ccdiff/rng.hpp"
#include "ccdiff/types.hpp"

namespace ccdiff {

enum class MapLayout { Straight, TJunction, Crossroads };

MapLayout layout_from_name(const std::string& name);
const char* layout_name(MapLayout l);

// Deterministic synthetic layouts: drivable bands plus directed lane centerlines.
MapModel make_map(MapLayout layout, double lane_width = 3.5, double extent = 120.0,
                  double resolution = 0.5);

struct SceneGenConfig {
    int n_agents = 4;
    int history_steps = 31;
    int future_steps = 100;
    double dt = 0.1;
    double v_des = 8.0;    // m/s
    double k_v = 0.5;      // speed tracking gain
    double k_g = 0.2;      // gap tracking gain
    double gap_des = 8.0;  // m
    double sense_range = 30.0;  // leader search range, m
    int max_attempts = 100;
    ActionBounds bounds;
};

struct GeneratedScene {
    Scene scene;
    Trajectory future;
};

// Places agents on lanes without overlap and simulates a car-following +
// lane-keeping rule for history + future. Futures are collision-free by rejection
// (PlacementFailure after max_attempts).
GeneratedScene make_scene(const MapModel& map, const SceneGenConfig& cfg, Rng& rng);

}  // namespace ccdiff
