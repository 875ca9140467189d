#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "otassign/geometry.hpp"

namespace otassign {

/// n x K per-prediction class probabilities, every entry in [0, 1].
struct ClassScores {
  Eigen::MatrixXd scores;

  ClassScores() = default;
  explicit ClassScores(Eigen::MatrixXd s);

  Eigen::Index num_predictions() const { return scores.rows(); }
  Eigen::Index num_classes() const { return scores.cols(); }
};

struct CostWeights {
  double alpha = 1.0;  ///< overall multiplier on the regression cost
  double lambda_cls = 2.0;
  double lambda_l1 = 5.0;
  double lambda_giou = 2.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;

  void validate() const;
};

struct GroundTruth {
  BoxList boxes;
  std::vector<int> labels;

  std::size_t size() const { return boxes.size(); }
};

struct Predictions {
  BoxList boxes;
  ClassScores scores;

  std::size_t size() const { return boxes.size(); }
};

/// (m + 1) x n; rows 0..m-1 are ground truths, row m is the background.
struct CostMatrix {
  Eigen::MatrixXd values;

  Eigen::Index num_gts() const { return values.rows() - 1; }
  Eigen::Index num_predictions() const { return values.cols(); }
  Eigen::Index background_row() const { return values.rows() - 1; }
};

inline constexpr double kLogFloor = 1e-12;

/// Focal positive term for the ground-truth class:
/// focal_alpha * (1 - p)^gamma * -log(p), with p clamped to >= 1e-12.
double classification_cost(int gt_label, const Eigen::Ref<const Eigen::RowVectorXd>& pred_scores,
                           const CostWeights& w);

/// Focal negative term on the maximum foreground score:
/// (1 - focal_alpha) * p^gamma * -log(1 - p).
double background_cost(const Eigen::Ref<const Eigen::RowVectorXd>& pred_scores,
                       const CostWeights& w);

/// lambda_l1 * L1(cxcywh) + lambda_giou * (1 - GIoU).
double regression_cost(const Box& gt, const Box& pred, const CostWeights& w);
double regression_cost(const Box& gt, Units gt_units, const Box& pred, Units pred_units,
                       const CostWeights& w);

CostMatrix build_cost_matrix(const GroundTruth& gts, const Predictions& preds,
                             const CostWeights& w);

/// m x n IoU between every ground truth and every prediction.
Eigen::MatrixXd iou_matrix(const BoxList& gts, const BoxList& preds);

}  // namespace otassign
