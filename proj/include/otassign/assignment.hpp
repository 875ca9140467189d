#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "otassign/cost.hpp"

namespace otassign {

inline constexpr int kBackground = -1;

/// Units offered by every supplier. Ground truths come first, the background
/// row last; the totals always equal the number of demanders n.
struct SupplyPlan {
  std::vector<int> gt_units;
  int background_units = 0;
  int n = 0;

  int total_gt_units() const;
  /// Supplies as an (m + 1) vector, background last.
  Eigen::VectorXd as_vector() const;
  /// Throws std::logic_error when the feasibility equality or positivity fails.
  void validate() const;
};

struct TransportPlan {
  Eigen::MatrixXd pi;  ///< (m + 1) x n, background row last
  double marginal_error = 0.0;
  int iterations = 0;    ///< Sinkhorn sweeps over all annealing steps
  int newton_steps = 0;
  bool converged = true;

  double transported_cost(const CostMatrix& c) const;
  /// Max deviation of the row sums from `supply` and of the column sums from 1.
  double measure_marginal_error(const SupplyPlan& supply) const;
};

struct HardAssignment {
  std::vector<int> label;  ///< per prediction: GT index or kBackground
  std::vector<int> positives_per_gt;

  int total_positives() const;
};

/// One-to-one matching result: gt_to_pred[i] is the prediction matched to GT i.
struct Matching {
  std::vector<int> gt_to_pred;
  double total_cost = 0.0;
};

/// Minimum-cost injection of the m rows into the n columns (m <= n), O(m^2 n).
Matching hungarian_match(const Eigen::Ref<const Eigen::MatrixXd>& cost);

/// k = max(1, floor(sum of the q largest IoUs)).
int dynamic_k_estimate(std::span<const double> ious, int q);

/// Stage-dependent supply: max(1, floor(k - 0.5 (T - t))).
int apply_unit_increase(int k, int t, int num_stages);

/// Scales every supply by the same factor so that at least 20% of the n
/// demanders go to the background, whenever the ground truths allow it.
SupplyPlan cap_supplies(std::span<const int> k, int n);

struct SinkhornConfig {
  double epsilon = 0.1;     ///< final entropic regularization
  int anneal_halvings = 0;  ///< start at epsilon * 2^h and halve down to epsilon
  int max_iters = 500;      ///< per annealing step
  double tol = 1e-6;
  int newton_steps = 50;    ///< Newton refinement of the final duals when sweeps stall

  void validate() const;
};

/// Log-domain Sinkhorn-Knopp on the (m + 1) x n problem: rows carry the
/// supplies, every column demands one unit. If the sweeps stop short of
/// `tol`, Newton steps on the same entropic dual finish the solve.
TransportPlan sinkhorn_transport(const CostMatrix& cost, const SupplyPlan& supply,
                                 const SinkhornConfig& cfg);

inline constexpr double kOracleEnumerationLimit = 2'000'000.0;

/// Exhaustive minimum over integral plans. Refuses instances with
/// (m + 1)^n > kOracleEnumerationLimit.
TransportPlan exact_transport_oracle(const CostMatrix& cost, const SupplyPlan& supply);

/// Labels every demander by the argmax supplier of its column, ties toward
/// the lower row index.
HardAssignment harden(const TransportPlan& plan, const SupplyPlan& supply);

/// Hard labels as a one-hot (m + 1) x n plan.
TransportPlan one_hot_plan(const HardAssignment& a);

/// Cost of a hard labelling under `cost`, background labels charged the
/// background row.
double assignment_cost(const CostMatrix& cost, const HardAssignment& a);

enum class Matcher { hungarian, ota };

std::string_view to_string(Matcher m);
Matcher matcher_from_string(std::string_view s);

struct AssignConfig {
  Matcher matcher = Matcher::ota;
  int q = 8;
  int stages = 6;
  int stage = 6;  ///< 1-based stage index t
  SinkhornConfig sinkhorn;
  CostWeights cost;
};

/// Every intermediate artifact of one assignment call.
struct AssignResult {
  Eigen::MatrixXd ious;     ///< m x n
  std::vector<int> base_k;  ///< dynamic-k estimate per GT
  std::vector<int> stage_k; ///< after the unit-increase schedule
  SupplyPlan supply;
  CostMatrix cost;
  TransportPlan plan;
  HardAssignment assignment;
  double total_cost = 0.0;  ///< <C, pi>
};

AssignResult assign_ota(const GroundTruth& gts, const Predictions& preds,
                        const AssignConfig& cfg);

/// One-to-one baseline: every GT gets exactly one prediction, all others go
/// to the background.
AssignResult assign_hungarian(const GroundTruth& gts, const Predictions& preds,
                              const AssignConfig& cfg);

AssignResult assign(const GroundTruth& gts, const Predictions& preds, const AssignConfig& cfg);

}  // namespace otassign
