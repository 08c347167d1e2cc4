#include "ccdiff/types.hpp"

#include <cmath>
#include <set>

#include "ccdiff/errors.hpp"

namespace ccdiff {

const char* cost_id_name(CostId id) {
    switch (id) {
        case CostId::Collision: return "collision";
        case CostId::Offroad: return "offroad";
        case CostId::Overspeed: return "overspeed";
    }
    return "unknown";
}

CostId cost_id_from_name(const std::string& name) {
    if (name == "collision") return CostId::Collision;
    if (name == "offroad") return CostId::Offroad;
    if (name == "overspeed") return CostId::Overspeed;
    throw CcdiffError(ErrorCode::BadConfig, "unknown cost id '" + name + "'");
}

std::string Violation::str() const {
    std::string s = code + "(";
    if (agent >= 0) s += std::to_string(agent);
    if (!detail.empty()) {
        if (agent >= 0) s += ",";
        s += detail;
    }
    s += ")";
    return s;
}

namespace {

bool finite_state(const AgentState& s) {
    return std::isfinite(s.x) && std::isfinite(s.y) && std::isfinite(s.heading) &&
           std::isfinite(s.speed) && std::isfinite(s.length) && std::isfinite(s.width);
}

void check_state(std::vector<Violation>& out, const AgentState& s, int agent, int step) {
    const std::string at = "h[" + std::to_string(step) + "]";
    if (!finite_state(s)) {
        out.push_back({"non-finite", agent, at});
        return;
    }
    if (s.speed < 0.0) out.push_back({"negative-speed", agent, at});
    if (s.length <= 0.0) out.push_back({"nonpositive-length", agent, at});
    if (s.width <= 0.0) out.push_back({"nonpositive-width", agent, at});
    if (!(s.heading > -kPi && s.heading <= kPi)) out.push_back({"heading-unnormalized", agent, at});
}

}  // namespace

std::vector<Violation> validate_scene(const Scene& scene) {
    std::vector<Violation> out;

    if (scene.dt <= 0.0) out.push_back({"nonpositive-dt", -1, ""});

    if (scene.map.resolution <= 0.0) out.push_back({"nonpositive-resolution", -1, "map"});
    if (scene.map.width < 0 || scene.map.height < 0 ||
        scene.map.drivable.size() != static_cast<size_t>(scene.map.width) * scene.map.height) {
        out.push_back({"grid-size-mismatch", -1, "map"});
    }
    for (size_t li = 0; li < scene.map.lanes.size(); ++li) {
        const auto& lane = scene.map.lanes[li];
        if (lane.size() < 2) {
            out.push_back({"lane-too-short", -1, "lane " + std::to_string(li)});
            continue;
        }
        for (const auto& p : lane) {
            if (!scene.map.contains(p[0], p[1])) {
                out.push_back({"lane-point-outside", -1, "lane " + std::to_string(li)});
                break;
            }
        }
    }

    std::set<int> ids;
    const int n = scene.num_agents();
    const size_t hist_len = scene.agents.empty() ? 0 : scene.agents[0].history.size();
    for (const auto& agent : scene.agents) {
        if (ids.count(agent.id)) out.push_back({"duplicate-id", agent.id, ""});
        ids.insert(agent.id);
        if (agent.history.empty()) {
            out.push_back({"empty-history", agent.id, ""});
            continue;
        }
        if (agent.history.size() != hist_len)
            out.push_back({"history-length-mismatch", agent.id, ""});
        for (size_t s = 0; s < agent.history.size(); ++s)
            check_state(out, agent.history[s], agent.id, static_cast<int>(s));
    }
    for (int i = 0; i < n; ++i) {
        if (!ids.count(i)) {
            out.push_back({"ids-not-dense", -1, "missing " + std::to_string(i)});
            break;
        }
    }

    return out;
}

std::vector<Violation> validate_guidance_spec(const GuidanceSpec& spec, int num_agents) {
    std::vector<Violation> out;
    if (spec.grad_steps < 0) out.push_back({"negative-grad-steps", -1, ""});
    if (spec.grad_lr <= 0.0) out.push_back({"nonpositive-grad-lr", -1, ""});
    if (spec.grad_norm_clip <= 0.0) out.push_back({"nonpositive-grad-norm-clip", -1, ""});
    if (!(spec.discount > 0.0 && spec.discount <= 1.0)) out.push_back({"discount-out-of-range", -1, ""});
    for (size_t j = 0; j < spec.terms.size(); ++j) {
        for (int a : spec.terms[j].scope) {
            if (a < 0 || a >= num_agents) {
                out.push_back({"scope-out-of-range", a, "term " + std::to_string(j)});
            }
        }
        if (spec.terms[j].cost == CostId::Overspeed && spec.terms[j].v_limit <= 0.0)
            out.push_back({"nonpositive-v-limit", -1, "term " + std::to_string(j)});
    }
    return out;
}

}  // namespace ccdiff
