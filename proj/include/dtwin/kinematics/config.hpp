#pragma once

#include "dtwin/kinematics/dh_table.hpp"
#include "dtwin/kinematics/kinematics.hpp"

#include <json.hpp>

#include <filesystem>

namespace dtwin::kin {

// Solver parameters that do not depend on the request.
struct SolverDefaults {
    Vec6 weights_task = (Vec6() << 1.0, 1.0, 1.0, 100.0, 100.0, 100.0).finished();
    double damping_bias = 1e-3;
    double learning_rate = 1.0;
    double tol_pos = 0.01;
    double tol_orient = 1e-3;
    int max_iters = 200;

    IkProblem problem(const Pose& target, const JointConfig& seed) const;
};

// Config files use operator units: mm, degrees, degrees/s.
//
//   "dh": [{"theta_offset_deg":0,"d_mm":290,"a_mm":0,"alpha_deg":-90}, ...6],
//   "joint_limits_deg": [[-165,165], ...6],
//   "speed_limits_deg_s": [250, ...6],
//   "solver": {"weights_task":[...6], "damping_bias":1e-3, "learning_rate":1,
//              "tol_pos_mm":0.01, "tol_orient_rad":1e-3, "max_iters":200}
//
// Every key is optional; missing keys keep the IRB120 / solver defaults.
DhTable dh_table_from_json(const nlohmann::json& j);
nlohmann::json dh_table_to_json(const DhTable& dh);
SolverDefaults solver_defaults_from_json(const nlohmann::json& j);

nlohmann::json load_json_file(const std::filesystem::path& path);

}  // namespace dtwin::kin
