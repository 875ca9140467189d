#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "otassign/assignment.hpp"

namespace otassign::sim {

/// Ground-truth objects of one synthetic image, boxes in normalized units.
struct Scene {
  GroundTruth gt;
  double image_w = 1.0;
  double image_h = 1.0;
  std::uint64_t seed = 0;
};

struct NoiseSchedule {
  double sigma_max = 0.1;    ///< coordinate noise at t = 1, relative to GT size
  int per_gt = 5;            ///< clustered predictions per ground truth
  double score_width = 0.5;  ///< displacement scale of the true-class score decay
};

struct StagePredictions {
  int stage = 0;
  Predictions preds;
  std::vector<int> cluster_of;  ///< source GT per prediction, kBackground for distractors
};

struct SimConfig {
  int m = 5;
  int n = 100;
  int num_classes = 80;
  int stages = 6;
  NoiseSchedule noise;
  AssignConfig assign;
};

struct StageStats {
  int stage = 0;
  double positives_mean = 0.0;
  int positives_min = 0;
  int positives_max = 0;
  double mean_matched_iou = 0.0;
  double total_cost = 0.0;
  double background_fraction = 0.0;
  double wall_seconds = 0.0;
};

struct SimulationReport {
  std::vector<StageStats> stages;
};

Scene generate_scene(std::uint64_t seed, int m, int num_classes, double image_w = 1.0,
                     double image_h = 1.0);

/// Noise at stage t: sigma_max * (T - t + 1) / T.
double stage_sigma(const NoiseSchedule& noise, int t, int num_stages);

StagePredictions simulate_stage_predictions(const Scene& scene, int t, int num_stages, int n,
                                            int num_classes, const NoiseSchedule& noise);

StageStats stage_statistics(int stage, const AssignResult& r, int n);

SimulationReport run_iterative_assignment(const Scene& scene, const SimConfig& cfg);

/// Per-stage mean over runs of every statistic; min/max positives are the
/// extremes over runs.
SimulationReport aggregate(const std::vector<SimulationReport>& runs);

/// CSV with header; `with_timing` appends a wall_seconds column.
std::string report_csv(const SimulationReport& r, bool with_timing = false);
nlohmann::json report_json(const SimulationReport& r, bool with_timing = false);

}  // namespace otassign::sim
