#include "dtwin/kinematics/config.hpp"

#include <fstream>
#include <stdexcept>

namespace dtwin::kin {

IkProblem SolverDefaults::problem(const Pose& target, const JointConfig& seed) const {
    IkProblem p;
    p.target = target;
    p.seed = seed;
    p.weights_task = weights_task;
    p.damping_bias = damping_bias;
    p.learning_rate = learning_rate;
    p.tol_pos = tol_pos;
    p.tol_orient = tol_orient;
    p.max_iters = max_iters;
    return p;
}

DhTable dh_table_from_json(const nlohmann::json& j) {
    DhTable dh = DhTable::irb120();
    if (j.contains("dh")) {
        const auto& rows = j.at("dh");
        if (!rows.is_array() || rows.size() != kJoints) {
            throw std::invalid_argument("config: \"dh\" must hold exactly 6 rows");
        }
        for (std::size_t i = 0; i < kJoints; ++i) {
            const auto& r = rows[i];
            dh.rows[i].theta_offset = deg2rad(r.value("theta_offset_deg", 0.0));
            dh.rows[i].d = r.value("d_mm", 0.0);
            dh.rows[i].a = r.value("a_mm", 0.0);
            dh.rows[i].alpha = deg2rad(r.value("alpha_deg", 0.0));
        }
    }
    if (j.contains("joint_limits_deg")) {
        const auto& lim = j.at("joint_limits_deg");
        if (!lim.is_array() || lim.size() != kJoints) {
            throw std::invalid_argument("config: \"joint_limits_deg\" must hold 6 pairs");
        }
        for (std::size_t i = 0; i < kJoints; ++i) {
            dh.limits[i] = {deg2rad(lim[i].at(0).get<double>()), deg2rad(lim[i].at(1).get<double>())};
        }
    }
    if (j.contains("speed_limits_deg_s")) {
        const auto& sp = j.at("speed_limits_deg_s");
        if (!sp.is_array() || sp.size() != kJoints) {
            throw std::invalid_argument("config: \"speed_limits_deg_s\" must hold 6 values");
        }
        for (std::size_t i = 0; i < kJoints; ++i) dh.speed_limits[i] = deg2rad(sp[i].get<double>());
    }
    dh.validate();
    return dh;
}

nlohmann::json dh_table_to_json(const DhTable& dh) {
    nlohmann::json rows = nlohmann::json::array();
    nlohmann::json limits = nlohmann::json::array();
    nlohmann::json speeds = nlohmann::json::array();
    for (std::size_t i = 0; i < kJoints; ++i) {
        const auto& r = dh.rows[i];
        rows.push_back({{"theta_offset_deg", rad2deg(r.theta_offset)},
                        {"d_mm", r.d},
                        {"a_mm", r.a},
                        {"alpha_deg", rad2deg(r.alpha)}});
        limits.push_back({rad2deg(dh.limits[i].min), rad2deg(dh.limits[i].max)});
        speeds.push_back(rad2deg(dh.speed_limits[i]));
    }
    return {{"dh", rows}, {"joint_limits_deg", limits}, {"speed_limits_deg_s", speeds}};
}

SolverDefaults solver_defaults_from_json(const nlohmann::json& j) {
    SolverDefaults s;
    if (!j.contains("solver")) return s;
    const auto& c = j.at("solver");
    if (c.contains("weights_task")) {
        const auto w = c.at("weights_task").get<std::vector<double>>();
        if (w.size() != kJoints) throw std::invalid_argument("config: solver.weights_task needs 6 values");
        for (std::size_t i = 0; i < kJoints; ++i) s.weights_task[static_cast<Eigen::Index>(i)] = w[i];
    }
    s.damping_bias = c.value("damping_bias", s.damping_bias);
    s.learning_rate = c.value("learning_rate", s.learning_rate);
    s.tol_pos = c.value("tol_pos_mm", s.tol_pos);
    s.tol_orient = c.value("tol_orient_rad", s.tol_orient);
    s.max_iters = c.value("max_iters", s.max_iters);
    // reuse the problem validator for the solver half
    s.problem(Pose{}, JointConfig{}).validate();
    return s;
}

nlohmann::json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path.string());
    try {
        return nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("config file " + path.string() + ": " + e.what());
    }
}

}  // namespace dtwin::kin
