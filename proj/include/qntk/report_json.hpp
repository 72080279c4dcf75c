#pragma once

#include "qntk/qsim.hpp"

#include <json.hpp>

#include <limits>

namespace qntk {

inline nlohmann::json pipeline_report_json(const PipelineCostReport& r) {
  nlohmann::json j;
  j["n"] = r.n;
  j["mode"] = to_string(r.mode);
  j["depth"] = r.depth;
  j["P"] = r.p_norm;
  j["postselect_shots"] = r.postselect_shots;
  j["kappa"] = r.kappa;
  j["s"] = r.sparsity;
  j["cg_iters"] = r.cg_iterations;
  j["hhl_queries"] = r.hhl_queries;
  j["overlap"] = r.overlap;
  if (std::isinf(r.readout_shots_needed))
    j["readout_shots"] = "inf";
  else
    j["readout_shots"] = r.readout_shots_needed;
  j["sign"] = r.predicted_sign;
  return j;
}

}  // namespace qntk
