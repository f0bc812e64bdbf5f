#pragma once

#include <random>
#include <string>
#include <vector>

#include "acegrpo/context_buffer.hpp"

namespace test_support {

inline std::vector<acegrpo::TaskInstance> instances(std::size_t n, std::size_t dim = 4) {
  std::vector<acegrpo::TaskInstance> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].id = "inst-" + std::to_string(i);
    out[i].description_features.assign(dim, 0.1 * static_cast<double>(i));
    out[i].difficulty = static_cast<double>(i % 10) / 10.0;
    out[i].metric_id = "m";
    out[i].leaderboard_id = "b-" + std::to_string(i);
  }
  return out;
}

inline acegrpo::ContextState draft(std::string id = "x", double difficulty = 0.5) {
  acegrpo::TaskInstance inst;
  inst.id = std::move(id);
  inst.difficulty = difficulty;
  acegrpo::ContextState s;
  s.instance = std::make_shared<const acegrpo::TaskInstance>(std::move(inst));
  s.kind = acegrpo::TaskKind::Draft;
  s.potential = 0.05;
  return s;
}

inline acegrpo::ExecFeedback fail(int code = 3) {
  return acegrpo::ExecFeedback::failure(acegrpo::ErrorClass::RuntimeError, code);
}

inline acegrpo::ExecFeedback ok() { return acegrpo::ExecFeedback::success(); }

}  // namespace test_support
