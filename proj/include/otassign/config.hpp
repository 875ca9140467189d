#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "otassign/assignment.hpp"
#include "otassign/dpg.hpp"
#include "otassign/simulate.hpp"

namespace otassign {

struct SimulateKeys {
  int m = 5;
  int n = 100;
  int K = 80;
  int seeds = 1;
  std::uint64_t seed = 0;  ///< first seed; run i uses seed + i
  double sigma_max = 0.1;
  int per_gt = 5;
  double score_width = 0.5;
};

/// Sinkhorn settings used when a run is compared against the exact oracle;
/// iteration limits and tolerance come from the solver section.
struct CompareKeys {
  double epsilon = 0.01;
  int anneal_halvings = 3;
};

/// Flat `section.key=value` configuration. Unknown keys are rejected.
struct EngineConfig {
  AssignConfig solver;  ///< solver.* and cost.* keys
  dpg::DpgConfig dpg;
  SimulateKeys simulate;
  CompareKeys compare;

  void validate() const;
  sim::SimConfig sim_config() const;
  /// Solver settings with the compare.* Sinkhorn overrides applied.
  AssignConfig compare_solver() const;
};

/// Parses `key=value` lines; `#` starts a comment. Errors name the line and key.
EngineConfig parse_config(std::string_view text);
EngineConfig load_config(const std::string& path);
std::string format_config(const EngineConfig& cfg);

}  // namespace otassign
