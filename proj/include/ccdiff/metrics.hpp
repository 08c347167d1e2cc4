#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ccdiff/types.hpp"

namespace ccdiff {

// Raw per-method metric means. SCR higher = more collisions (controllability proxy);
// the other three lower = more realistic.
struct RawMetrics {
    double scr = 0.0;  // scenario collision rate, [0,1]
    double orr = 0.0;  // off-road rate, percent of agent-timesteps
    double fde = 0.0;  // final displacement error, m
    double cfd = 0.0;  // comfort feature distance (|accel|, |jerk|)
};

struct Scores {
    double cs = 0.0;
    double rs = 0.0;
};

// True when any two distinct agents' discs overlap at any stored step.
bool trajectory_has_collision(const Trajectory& traj, const std::vector<double>& radii);

// Fraction of scenarios with at least one collision event.
double scr(const std::vector<Trajectory>& batch, const std::vector<std::vector<double>>& radii);

// 100 * offroad agent-timesteps / (N*T); centers outside the grid count as off-road.
double orr(const Trajectory& traj, const MapModel& map);

// Mean over agents of the Euclidean distance between final positions.
double fde(const Trajectory& generated, const Trajectory& reference);

// Mean over agents of the distance between (mean |accel|, mean |jerk|) features,
// accel/jerk by finite-differencing positions at dt.
double cfd(const Trajectory& generated, const Trajectory& reference);

// CS = standardized SCR; RS = 1 - mean of standardized ORR/FDE/CFD. Throws
// DegenerateColumn when any column has max == min.
std::map<std::string, Scores> standardize_scores(const std::map<std::string, RawMetrics>& table);

// Generational distance and inverted generational distance between a solution set and
// a reference front, with q-power mean (q = 2 unless stated otherwise).
std::pair<double, double> gd_igd(const std::vector<std::pair<double, double>>& solutions,
                                 const std::vector<std::pair<double, double>>& front,
                                 double q = 2.0);

// Nondominated subset under (CS, RS), both higher-better.
std::vector<std::pair<double, double>> pareto_front(
    const std::vector<std::pair<double, double>>& points);

}  // namespace ccdiff
