#include "otassign/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

namespace otassign::sim {

namespace {

Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> size(0.05, 0.3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double w = size(rng);
  const double h = size(rng);
  const double x1 = unit(rng) * (1.0 - w);
  const double y1 = unit(rng) * (1.0 - h);
  return {x1, y1, x1 + w, y1 + h};
}

Box clip_unit(Box b) {
  b.x1 = std::clamp(b.x1, 0.0, 1.0);
  b.y1 = std::clamp(b.y1, 0.0, 1.0);
  b.x2 = std::clamp(b.x2, b.x1, 1.0);
  b.y2 = std::clamp(b.y2, b.y1, 1.0);
  return b;
}

/// True class gets `p`, the remaining mass is spread over the other classes.
void fill_scores(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row, int true_class, double p) {
  const auto k = row.size();
  row.setConstant(k > 1 ? (1.0 - p) / static_cast<double>(k - 1) : 0.0);
  row[true_class] = p;
}

}  // namespace

Scene generate_scene(std::uint64_t seed, int m, int num_classes, double image_w,
                     double image_h) {
  if (m < 0) throw std::invalid_argument("generate_scene: m must be >= 0");
  if (m > 0 && num_classes < 1) throw std::invalid_argument("generate_scene: need >= 1 class");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> label(0, std::max(0, num_classes - 1));
  Scene s;
  s.seed = seed;
  s.image_w = image_w;
  s.image_h = image_h;
  s.gt.boxes.units = Units::normalized;
  for (int i = 0; i < m; ++i) {
    s.gt.boxes.boxes.push_back(random_box(rng));
    s.gt.labels.push_back(label(rng));
  }
  return s;
}

double stage_sigma(const NoiseSchedule& noise, int t, int num_stages) {
  if (num_stages < 1 || t < 1 || t > num_stages) {
    throw std::out_of_range("stage " + std::to_string(t) + " outside [1, " +
                            std::to_string(num_stages) + "]");
  }
  return noise.sigma_max * (num_stages - t + 1) / num_stages;
}

StagePredictions simulate_stage_predictions(const Scene& scene, int t, int num_stages, int n,
                                            int num_classes, const NoiseSchedule& noise) {
  const double sigma = stage_sigma(noise, t, num_stages);
  const auto m = static_cast<int>(scene.gt.size());
  if (n < m) {
    throw std::invalid_argument("simulate: n=" + std::to_string(n) + " is smaller than m=" +
                                std::to_string(m));
  }
  if (num_classes < 1) throw std::invalid_argument("simulate: need >= 1 class");
  if (noise.per_gt < 1 || noise.sigma_max < 0.0 || !(noise.score_width > 0.0)) {
    throw std::invalid_argument("simulate: invalid noise schedule");
  }

  std::seed_seq seq{static_cast<std::uint32_t>(scene.seed), static_cast<std::uint32_t>(scene.seed >> 32),
                    static_cast<std::uint32_t>(t)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, num_classes - 1);

  const int per_gt = m > 0 ? std::min(noise.per_gt, n / m) : 0;
  StagePredictions out;
  out.stage = t;
  out.preds.boxes.units = Units::normalized;
  out.preds.scores.scores.resize(n, num_classes);
  out.cluster_of.assign(static_cast<std::size_t>(n), kBackground);

  int j = 0;
  for (int i = 0; i < m; ++i) {
    const Box& gt = scene.gt.boxes[static_cast<std::size_t>(i)];
    const CxCyWh g = gt.to_cxcywh();
    for (int c = 0; c < per_gt; ++c, ++j) {
      const double dx = sigma * z(rng), dy = sigma * z(rng);
      const double dw = sigma * z(rng), dh = sigma * z(rng);
      Box b = gt;
      if (sigma > 0.0) {
        b = clip_unit(Box::from_cxcywh(
            {g.cx + dx * g.w, g.cy + dy * g.h, g.w * std::exp(dw), g.h * std::exp(dh)}));
      }
      const double d2 = dx * dx + dy * dy + dw * dw + dh * dh;
      const double p = std::exp(-d2 / (2.0 * noise.score_width * noise.score_width));
      out.preds.boxes.boxes.push_back(b);
      fill_scores(out.preds.scores.scores.row(j), scene.gt.labels[static_cast<std::size_t>(i)], p);
      out.cluster_of[static_cast<std::size_t>(j)] = i;
    }
  }
  for (; j < n; ++j) {
    out.preds.boxes.boxes.push_back(random_box(rng));
    fill_scores(out.preds.scores.scores.row(j), cls(rng), 0.3 * unit(rng));
  }
  return out;
}

StageStats stage_statistics(int stage, const AssignResult& r, int n) {
  StageStats s;
  s.stage = stage;
  const auto& pos = r.assignment.positives_per_gt;
  if (!pos.empty()) {
    s.positives_mean = static_cast<double>(r.assignment.total_positives()) / static_cast<double>(pos.size());
    s.positives_min = *std::min_element(pos.begin(), pos.end());
    s.positives_max = *std::max_element(pos.begin(), pos.end());
  }
  double iou_sum = 0.0;
  int matched = 0;
  for (std::size_t j = 0; j < r.assignment.label.size(); ++j) {
    const int l = r.assignment.label[j];
    if (l == kBackground) continue;
    iou_sum += r.ious(l, static_cast<Eigen::Index>(j));
    ++matched;
  }
  s.mean_matched_iou = matched > 0 ? iou_sum / matched : 0.0;
  s.total_cost = r.total_cost;
  s.background_fraction = n > 0 ? static_cast<double>(static_cast<int>(r.assignment.label.size()) - matched) / n : 0.0;
  return s;
}

SimulationReport run_iterative_assignment(const Scene& scene, const SimConfig& cfg) {
  if (cfg.stages < 1) throw std::invalid_argument("simulate: stages must be >= 1");
  SimulationReport report;
  AssignConfig acfg = cfg.assign;
  acfg.stages = cfg.stages;
  for (int t = 1; t <= cfg.stages; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const StagePredictions sp =
        simulate_stage_predictions(scene, t, cfg.stages, cfg.n, cfg.num_classes, cfg.noise);
    acfg.stage = t;
    const AssignResult r = assign(scene.gt, sp.preds, acfg);
    StageStats stats = stage_statistics(t, r, cfg.n);
    stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.stages.push_back(stats);
  }
  return report;
}

SimulationReport aggregate(const std::vector<SimulationReport>& runs) {
  SimulationReport out;
  if (runs.empty()) return out;
  const std::size_t stages = runs.front().stages.size();
  const auto count = static_cast<double>(runs.size());
  for (std::size_t t = 0; t < stages; ++t) {
    StageStats a;
    a.stage = runs.front().stages[t].stage;
    a.positives_min = runs.front().stages[t].positives_min;
    a.positives_max = runs.front().stages[t].positives_max;
    for (const auto& run : runs) {
      if (run.stages.size() != stages) throw std::invalid_argument("aggregate: stage count differs");
      const StageStats& s = run.stages[t];
      a.positives_mean += s.positives_mean / count;
      a.positives_min = std::min(a.positives_min, s.positives_min);
      a.positives_max = std::max(a.positives_max, s.positives_max);
      a.mean_matched_iou += s.mean_matched_iou / count;
      a.total_cost += s.total_cost / count;
      a.background_fraction += s.background_fraction / count;
      a.wall_seconds += s.wall_seconds;
    }
    out.stages.push_back(a);
  }
  return out;
}

std::string report_csv(const SimulationReport& r, bool with_timing) {
  std::string out =
      "stage,positives_mean,positives_min,positives_max,mean_matched_iou,total_cost,"
      "background_fraction";
  out += with_timing ? ",wall_seconds\n" : "\n";
  for (const auto& s : r.stages) {
    out += fmt::format("{},{},{},{},{},{},{}", s.stage, s.positives_mean, s.positives_min,
                       s.positives_max, s.mean_matched_iou, s.total_cost, s.background_fraction);
    out += with_timing ? fmt::format(",{}\n", s.wall_seconds) : "\n";
  }
  return out;
}

nlohmann::json report_json(const SimulationReport& r, bool with_timing) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : r.stages) {
    nlohmann::json j = {{"stage", s.stage},
                        {"positives_mean", s.positives_mean},
                        {"positives_min", s.positives_min},
                        {"positives_max", s.positives_max},
                        {"mean_matched_iou", s.mean_matched_iou},
                        {"total_cost", s.total_cost},
                        {"background_fraction", s.background_fraction}};
    if (with_timing) j["wall_seconds"] = s.wall_seconds;
    stages.push_back(std::move(j));
  }
  return {{"stages", std::move(stages)}};
}

}  // namespace otassign::sim
