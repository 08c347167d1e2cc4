#include "ccdiff/json_io.hpp"

#include <fstream>

#include "ccdiff/errors.hpp"

namespace ccdiff {

using nlohmann::json;

namespace {

json state_to_json(const AgentState& s) {
    return json::array({s.x, s.y, s.heading, s.speed, s.length, s.width});
}

AgentState state_from_json(const json& j) {
    if (!j.is_array() || j.size() != 6)
        throw CcdiffError(ErrorCode::BadFile, "agent state must be [x,y,heading,speed,length,width]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
            j[3].get<double>(), j[4].get<double>(), j[5].get<double>()};
}

void expect_format(const json& j, const std::string& fmt) {
    if (!j.contains("format") || j["format"].get<std::string>() != fmt)
        throw CcdiffError(ErrorCode::BadFile, "expected format '" + fmt + "'");
}

}  // namespace

json map_to_json(const MapModel& map) {
    json lanes = json::array();
    for (const auto& lane : map.lanes) {
        json pl = json::array();
        for (const auto& p : lane) pl.push_back(json::array({p[0], p[1]}));
        lanes.push_back(pl);
    }
    return json{{"origin", {map.origin_x, map.origin_y}},
                {"resolution", map.resolution},
                {"width", map.width},
                {"height", map.height},
                {"drivable", map.drivable},
                {"lanes", lanes}};
}

MapModel map_from_json(const json& j) {
    MapModel m;
    m.origin_x = j.at("origin")[0].get<double>();
    m.origin_y = j.at("origin")[1].get<double>();
    m.resolution = j.at("resolution").get<double>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.drivable = j.at("drivable").get<std::vector<uint8_t>>();
    if (m.drivable.size() != static_cast<size_t>(m.width) * m.height)
        throw CcdiffError(ErrorCode::BadFile, "drivable grid size mismatch");
    for (const auto& lane : j.at("lanes")) {
        std::vector<std::array<double, 2>> pl;
        for (const auto& p : lane) pl.push_back({p[0].get<double>(), p[1].get<double>()});
        m.lanes.push_back(std::move(pl));
    }
    return m;
}

json scene_to_json(const Scene& scene) {
    json agents = json::array();
    for (const auto& a : scene.agents) {
        json hist = json::array();
        for (const auto& s : a.history) hist.push_back(state_to_json(s));
        agents.push_back(json{{"id", a.id}, {"history", hist}});
    }
    return json{{"format", "scene.v1"},
                {"dt", scene.dt},
                {"t0", scene.t0},
                {"map", map_to_json(scene.map)},
                {"agents", agents}};
}

Scene scene_from_json(const json& j) {
    expect_format(j, "scene.v1");
    Scene s;
    s.dt = j.at("dt").get<double>();
    s.t0 = j.at("t0").get<int>();
    s.map = map_from_json(j.at("map"));
    for (const auto& a : j.at("agents")) {
        AgentTrack track;
        track.id = a.at("id").get<int>();
        for (const auto& st : a.at("history")) track.history.push_back(state_from_json(st));
        s.agents.push_back(std::move(track));
    }
    return s;
}

json trajectory_to_json(const Trajectory& traj) {
    json initial = json::array();
    for (const auto& s : traj.initial) initial.push_back(state_to_json(s));
    json states = json::array();
    json actions = json::array();
    for (int t = 0; t < traj.T; ++t) {
        json srow = json::array();
        json arow = json::array();
        for (int n = 0; n < traj.N; ++n) {
            srow.push_back(state_to_json(traj.state(t, n)));
            const Action& a = traj.action(t, n);
            arow.push_back(json::array({a.accel, a.yaw_rate}));
        }
        states.push_back(srow);
        actions.push_back(arow);
    }
    return json{{"format", "trajectory.v1"},
                {"dt", traj.dt},
                {"num_steps", traj.T},
                {"num_agents", traj.N},
                {"initial", initial},
                {"states", states},
                {"actions", actions}};
}

Trajectory trajectory_from_json(const json& j) {
    expect_format(j, "trajectory.v1");
    const int T = j.at("num_steps").get<int>();
    const int N = j.at("num_agents").get<int>();
    Trajectory traj(T, N, j.at("dt").get<double>());
    for (const auto& st : j.at("initial")) traj.initial.push_back(state_from_json(st));
    const auto& states = j.at("states");
    const auto& actions = j.at("actions");
    if (static_cast<int>(states.size()) != T || static_cast<int>(actions.size()) != T)
        throw CcdiffError(ErrorCode::BadFile, "trajectory step count mismatch");
    for (int t = 0; t < T; ++t) {
        if (static_cast<int>(states[t].size()) != N || static_cast<int>(actions[t].size()) != N)
            throw CcdiffError(ErrorCode::BadFile, "trajectory agent count mismatch");
        for (int n = 0; n < N; ++n) {
            traj.state(t, n) = state_from_json(states[t][n]);
            traj.action(t, n) = {actions[t][n][0].get<double>(), actions[t][n][1].get<double>()};
        }
    }
    return traj;
}

json guidance_spec_to_json(const GuidanceSpec& spec) {
    json terms = json::array();
    for (const auto& t : spec.terms) {
        json jt{{"cost", cost_id_name(t.cost)}, {"weight", t.weight}};
        if (!t.scope.empty()) jt["scope"] = t.scope;
        if (t.cost == CostId::Overspeed) jt["v_limit"] = t.v_limit;
        terms.push_back(jt);
    }
    return json{{"terms", terms},
                {"grad_steps", spec.grad_steps},
                {"grad_lr", spec.grad_lr},
                {"grad_norm_clip", spec.grad_norm_clip},
                {"discount", spec.discount}};
}

GuidanceSpec guidance_spec_from_json(const json& j) {
    GuidanceSpec spec;
    spec.grad_steps = j.value("grad_steps", spec.grad_steps);
    spec.grad_lr = j.value("grad_lr", spec.grad_lr);
    spec.grad_norm_clip = j.value("grad_norm_clip", spec.grad_norm_clip);
    spec.discount = j.value("discount", spec.discount);
    if (j.contains("terms")) {
        for (const auto& jt : j.at("terms")) {
            GuidanceTerm t;
            t.cost = cost_id_from_name(jt.at("cost").get<std::string>());
            t.weight = jt.at("weight").get<double>();
            if (jt.contains("scope")) t.scope = jt.at("scope").get<std::vector<int>>();
            t.v_limit = jt.value("v_limit", t.v_limit);
            spec.terms.push_back(std::move(t));
        }
    }
    return spec;
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw CcdiffError(ErrorCode::BadFile, "cannot open for write: " + path);
    f << j.dump(1) << "\n";
    if (!f) throw CcdiffError(ErrorCode::BadFile, "write failed: " + path);
}

json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw CcdiffError(ErrorCode::BadFile, "cannot open: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::parse_error& e) {
        throw CcdiffError(ErrorCode::BadFile, path + ": " + e.what());
    }
    return j;
}

void write_scene_file(const std::string& path, const Scene& scene) {
    write_json_file(path, scene_to_json(scene));
}

Scene read_scene_file(const std::string& path) { return scene_from_json(read_json_file(path)); }

void write_trajectory_file(const std::string& path, const Trajectory& traj) {
    write_json_file(path, trajectory_to_json(traj));
}

Trajectory read_trajectory_file(const std::string& path) {
    return trajectory_from_json(read_json_file(path));
}

}  // namespace ccdiff
