#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gnssbench/align.hpp"
#include "gnssbench/error.hpp"

namespace gnssbench {

inline nlohmann::json matrix_to_json(const Eigen::Matrix3d &m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < 3; ++i)
    rows.push_back({m(i, 0), m(i, 1), m(i, 2)});
  return rows;
}

inline Eigen::Matrix3d matrix_from_json(const nlohmann::json &j) {
  Eigen::Matrix3d m;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k)
      m(i, k) = j.at(i).at(k).get<double>();
  return m;
}

inline nlohmann::json vector_to_json(const LocalVector &v) {
  return {v.north, v.east, v.down};
}

inline LocalVector vector_from_json(const nlohmann::json &j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

/// Every estimated quantity plus diagnostics; the rotation is written both
/// raw and orthonormalized.
inline nlohmann::json to_json(const AlignmentSolution &s) {
  nlohmann::json j;
  j["model"] = std::string(to_string(s.model));
  j["rotation_raw"] = matrix_to_json(s.r_eval_ref.m);
  j["rotation_orthonormalized"] = matrix_to_json(s.r_orthonormalized.m);
  j["y_body_m"] = vector_to_json(s.y_body);
  j["y_eval_m"] = vector_to_json(s.y_eval);
  const auto z = s.parameters();
  j["parameters"] = std::vector<double>(z.data(), z.data() + z.size());
  j["n_points"] = s.n_points;
  j["rms_residual_m"] = s.rms_residual;
  j["singular_values"] = s.singular_values;
  j["condition_number"] = s.condition_number;
  j["standard_errors"] = s.standard_errors;
  j["warnings"] = s.warnings;
  return j;
}

inline AlignmentSolution alignment_from_json(const nlohmann::json &j) {
  try {
    AlignmentSolution s;
    s.model = parse_alignment_model(j.at("model").get<std::string>());
    s.r_eval_ref.m = matrix_from_json(j.at("rotation_raw"));
    s.r_orthonormalized.m = matrix_from_json(j.at("rotation_orthonormalized"));
    s.y_body = vector_from_json(j.at("y_body_m"));
    s.y_eval = vector_from_json(j.at("y_eval_m"));
    s.n_points = j.value("n_points", std::size_t{0});
    s.rms_residual = j.value("rms_residual_m", 0.0);
    s.singular_values = j.value("singular_values", std::vector<double>{});
    s.condition_number = j.value("condition_number", 0.0);
    s.standard_errors = j.value("standard_errors", std::vector<double>{});
    s.warnings = j.value("warnings", std::vector<std::string>{});
    return s;
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorKind::Format, std::string("alignment JSON: ") + e.what());
  }
}

/// Pins R = I and zero offsets; used when residuals are wanted without
/// estimating any alignment.
inline AlignmentSolution identity_alignment() {
  AlignmentSolution s;
  s.model = AlignmentModel::TranslationOnly;
  s.warnings.push_back("identity alignment assumed; nothing estimated");
  return s;
}

} // namespace gnssbench
