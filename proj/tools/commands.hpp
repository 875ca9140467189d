#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "otassign/config.hpp"

namespace otassign::cli {

enum ExitCode : int { kOk = 0, kInputError = 1, kNotConverged = 2 };

/// Ground truths and predictions read from a scene file, boxes normalized
/// by the image size.
struct SceneFile {
  double image_w = 0, image_h = 0;
  GroundTruth gts;
  Predictions preds;
};

/// Schema: {"image_size":[W,H],"gts":[{"box":[x1,y1,x2,y2],"label":int}],
///          "preds":[{"box":[...],"scores":[K floats]}]}
SceneFile parse_scene(const nlohmann::json& j);
SceneFile load_scene(const std::string& path);
nlohmann::json scene_to_json(const SceneFile& s);

/// Worker count from OTA_ASSIGN_THREADS (unset or 0 = hardware concurrency).
unsigned worker_count();

struct AssignArgs {
  std::string scene, config, out;
};
struct SimulateArgs {
  std::string config, report;
  std::optional<int> seeds;
  bool timing = false;
};
struct CompareArgs {
  std::string scene, config;
};
struct DpgDemoArgs {
  std::string config, params, out;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
};

int cmd_assign(const AssignArgs& a, std::ostream& out, std::ostream& err);
int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err);
int cmd_compare(const CompareArgs& a, std::ostream& out, std::ostream& err);
int cmd_dpg_demo(const DpgDemoArgs& a, std::ostream& out, std::ostream& err);

}  // namespace otassign::cli
