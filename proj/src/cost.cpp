#include "otassign/cost.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace otassign {

ClassScores::ClassScores(Eigen::MatrixXd s) : scores(std::move(s)) {
  if (!scores.allFinite() || (scores.size() > 0 && (scores.minCoeff() < 0.0 ||
                                                    scores.maxCoeff() > 1.0))) {
    throw std::invalid_argument("class scores must lie in [0, 1]");
  }
}

void CostWeights::validate() const {
  const double vals[] = {alpha, lambda_cls, lambda_l1, lambda_giou, focal_gamma};
  for (double v : vals) {
    if (!(std::isfinite(v) && v >= 0.0)) {
      throw std::invalid_argument("cost weights must be finite and non-negative");
    }
  }
  if (!(focal_alpha > 0.0 && focal_alpha < 1.0)) {
    throw std::invalid_argument("cost.focal_alpha must lie in (0, 1)");
  }
}

namespace {

double safe_neg_log(double x) { return -std::log(std::max(x, kLogFloor)); }

}  // namespace

double classification_cost(int gt_label, const Eigen::Ref<const Eigen::RowVectorXd>& pred_scores,
                           const CostWeights& w) {
  if (gt_label < 0 || gt_label >= pred_scores.size()) {
    throw std::out_of_range("ground-truth label " + std::to_string(gt_label) +
                            " outside [0, " + std::to_string(pred_scores.size()) + ")");
  }
  const double p = pred_scores[gt_label];
  return w.focal_alpha * std::pow(1.0 - p, w.focal_gamma) * safe_neg_log(p);
}

double background_cost(const Eigen::Ref<const Eigen::RowVectorXd>& pred_scores,
                       const CostWeights& w) {
  if (pred_scores.size() == 0) return 0.0;
  const double p = pred_scores.maxCoeff();
  return (1.0 - w.focal_alpha) * std::pow(p, w.focal_gamma) * safe_neg_log(1.0 - p);
}

double regression_cost(const Box& gt, const Box& pred, const CostWeights& w) {
  return w.lambda_l1 * l1_box_distance(gt, pred) + w.lambda_giou * (1.0 - giou(gt, pred));
}

double regression_cost(const Box& gt, Units gt_units, const Box& pred, Units pred_units,
                       const CostWeights& w) {
  require_same_units(gt_units, pred_units);
  return regression_cost(gt, pred, w);
}

Eigen::MatrixXd iou_matrix(const BoxList& gts, const BoxList& preds) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(gts.size()),
                      static_cast<Eigen::Index>(preds.size()));
  for (std::size_t i = 0; i < gts.size(); ++i) {
    for (std::size_t j = 0; j < preds.size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = iou(gts[i], preds[j]);
    }
  }
  return out;
}

CostMatrix build_cost_matrix(const GroundTruth& gts, const Predictions& preds,
                             const CostWeights& w) {
  w.validate();
  const auto m = static_cast<Eigen::Index>(gts.size());
  const auto n = static_cast<Eigen::Index>(preds.size());
  if (n == 0) throw std::invalid_argument("cost matrix needs at least one prediction");
  if (gts.labels.size() != gts.boxes.size()) {
    throw std::invalid_argument("ground truth has " + std::to_string(gts.boxes.size()) +
                                " boxes but " + std::to_string(gts.labels.size()) + " labels");
  }
  if (preds.scores.num_predictions() != n) {
    throw std::invalid_argument("predictions have " + std::to_string(n) + " boxes but " +
                                std::to_string(preds.scores.num_predictions()) + " score rows");
  }
  if (m > 0) require_same_units(gts.boxes.units, preds.boxes.units);

  CostMatrix c{Eigen::MatrixXd(m + 1, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto row = preds.scores.scores.row(j);
    const Box& pb = preds.boxes[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto gi = static_cast<std::size_t>(i);
      c.values(i, j) = w.lambda_cls * classification_cost(gts.labels[gi], row, w) +
                       w.alpha * regression_cost(gts.boxes[gi], pb, w);
    }
    c.values(m, j) = w.lambda_cls * background_cost(row, w);
  }
  if (!c.values.allFinite()) throw std::domain_error("cost matrix has non-finite entries");
  return c;
}

}  // namespace otassign
