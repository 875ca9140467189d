#include "otassign/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace otassign {

int SupplyPlan::total_gt_units() const {
  return std::accumulate(gt_units.begin(), gt_units.end(), 0);
}

Eigen::VectorXd SupplyPlan::as_vector() const {
  Eigen::VectorXd a(static_cast<Eigen::Index>(gt_units.size()) + 1);
  for (std::size_t i = 0; i < gt_units.size(); ++i) {
    a[static_cast<Eigen::Index>(i)] = gt_units[i];
  }
  a[a.size() - 1] = background_units;
  return a;
}

void SupplyPlan::validate() const {
  for (int s : gt_units) {
    if (s < 1) throw std::logic_error("supply plan: every ground truth needs >= 1 unit");
  }
  if (background_units < 0) throw std::logic_error("supply plan: negative background units");
  if (total_gt_units() + background_units != n) {
    throw std::logic_error("supply plan: units sum to " +
                           std::to_string(total_gt_units() + background_units) + ", expected " +
                           std::to_string(n));
  }
}

double TransportPlan::transported_cost(const CostMatrix& c) const {
  return (c.values.array() * pi.array()).sum();
}

double TransportPlan::measure_marginal_error(const SupplyPlan& supply) const {
  const Eigen::VectorXd rows = pi.rowwise().sum();
  const Eigen::RowVectorXd cols = pi.colwise().sum();
  double err = (rows - supply.as_vector()).cwiseAbs().maxCoeff();
  if (cols.size() > 0) err = std::max(err, (cols.array() - 1.0).abs().maxCoeff());
  return err;
}

int HardAssignment::total_positives() const {
  return std::accumulate(positives_per_gt.begin(), positives_per_gt.end(), 0);
}

// ---------------------------------------------------------------------------
// Hungarian (shortest augmenting path with row/column potentials).

Matching hungarian_match(const Eigen::Ref<const Eigen::MatrixXd>& cost) {
  const auto m = static_cast<int>(cost.rows());
  const auto n = static_cast<int>(cost.cols());
  if (m > n) {
    throw std::invalid_argument("hungarian_match: " + std::to_string(m) +
                                " ground truths but only " + std::to_string(n) + " predictions");
  }
  if (!cost.allFinite()) throw std::domain_error("hungarian_match: non-finite cost");

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based; column 0 is a virtual column holding the row being inserted.
  std::vector<double> u(m + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> row_of(n + 1, 0), way(n + 1, 0);

  for (int i = 1; i <= m; ++i) {
    row_of[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = row_of[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[j0] != 0);
    do {
      const int j1 = way[j0];
      row_of[j0] = row_of[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Matching out;
  out.gt_to_pred.assign(static_cast<std::size_t>(m), -1);
  for (int j = 1; j <= n; ++j) {
    if (row_of[j] != 0) out.gt_to_pred[static_cast<std::size_t>(row_of[j] - 1)] = j - 1;
  }
  for (int i = 0; i < m; ++i) out.total_cost += cost(i, out.gt_to_pred[static_cast<std::size_t>(i)]);
  return out;
}

// ---------------------------------------------------------------------------
// Supplies

int dynamic_k_estimate(std::span<const double> ious, int q) {
  if (ious.empty()) throw std::invalid_argument("dynamic_k_estimate: empty IoU row");
  if (q < 1) throw std::invalid_argument("dynamic_k_estimate: q must be >= 1");
  std::vector<double> top(ious.begin(), ious.end());
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(q), top.size());
  std::partial_sort(top.begin(), top.begin() + static_cast<std::ptrdiff_t>(take), top.end(),
                    std::greater<>());
  const double sum = std::accumulate(top.begin(), top.begin() + static_cast<std::ptrdiff_t>(take), 0.0);
  return std::max(1, static_cast<int>(std::floor(sum)));
}

int apply_unit_increase(int k, int t, int num_stages) {
  if (num_stages < 1 || t < 1 || t > num_stages) {
    throw std::out_of_range("stage " + std::to_string(t) + " outside [1, " +
                            std::to_string(num_stages) + "]");
  }
  if (k < 1) throw std::invalid_argument("apply_unit_increase: k must be >= 1");
  return std::max(1, static_cast<int>(std::floor(k - 0.5 * (num_stages - t))));
}

SupplyPlan cap_supplies(std::span<const int> k, int n) {
  const auto m = static_cast<int>(k.size());
  if (n < m) {
    throw std::invalid_argument("cap_supplies: " + std::to_string(m) +
                                " ground truths cannot each receive a unit from " +
                                std::to_string(n) + " predictions");
  }
  SupplyPlan plan;
  plan.n = n;
  plan.gt_units.assign(k.begin(), k.end());
  std::int64_t sum = 0;
  for (int v : plan.gt_units) {
    if (v < 1) throw std::invalid_argument("cap_supplies: every k must be >= 1");
    sum += v;
  }
  // Positive units may use at most floor(0.8 n) demanders.
  const std::int64_t cap = (4 * static_cast<std::int64_t>(n)) / 5;
  if (5 * sum > 4 * static_cast<std::int64_t>(n)) {
    std::int64_t scaled_sum = 0;
    for (int& v : plan.gt_units) {
      const std::int64_t s = (static_cast<std::int64_t>(v) * 4 * n) / (5 * sum);
      v = static_cast<int>(std::max<std::int64_t>(1, s));
      scaled_sum += v;
    }
    // The >= 1 clamp can overshoot the cap; trim the largest supplies.
    while (scaled_sum > cap) {
      auto it = std::max_element(plan.gt_units.begin(), plan.gt_units.end());
      if (*it <= 1) break;
      --*it;
      --scaled_sum;
    }
  }
  plan.background_units = n - plan.total_gt_units();
  plan.validate();
  return plan;
}

// ---------------------------------------------------------------------------
// Sinkhorn

void SinkhornConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("sinkhorn: epsilon must be > 0");
  }
  if (anneal_halvings < 0) throw std::invalid_argument("sinkhorn: anneal_halvings must be >= 0");
  if (max_iters < 1) throw std::invalid_argument("sinkhorn: max_iters must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("sinkhorn: tol must be > 0");
  if (newton_steps < 0) throw std::invalid_argument("sinkhorn: newton_steps must be >= 0");
}

namespace {

void check_shapes(const CostMatrix& cost, const SupplyPlan& supply) {
  supply.validate();
  if (static_cast<Eigen::Index>(supply.gt_units.size()) != cost.num_gts() ||
      supply.n != cost.num_predictions()) {
    throw std::invalid_argument("supply plan (" + std::to_string(supply.gt_units.size()) +
                                " gts, n=" + std::to_string(supply.n) +
                                ") does not match cost matrix " +
                                std::to_string(cost.values.rows()) + "x" +
                                std::to_string(cost.values.cols()));
  }
  if (!cost.values.allFinite()) throw std::domain_error("transport: non-finite cost entries");
}

}  // namespace

namespace {

/// Dual potentials of the entropic problem restricted to rows with positive
/// supply. The plan is pi_ij = exp((f_i + g_j - C_ij) / eps).
class EntropicDual {
 public:
  EntropicDual(const Eigen::MatrixXd& c, const Eigen::VectorXd& a) : c_(c), a_(a) {
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      if (a[i] > 0.0) active_.push_back(i);
    }
    f_ = Eigen::VectorXd::Zero(c.rows());
    g_ = Eigen::VectorXd::Zero(c.cols());
    buf_.resize(static_cast<std::size_t>(std::max(c.rows(), c.cols())));
  }

  /// One row update followed by one column update; columns are exact afterwards.
  void sweep(double eps) {
    const Eigen::Index cols = c_.cols();
    for (Eigen::Index i : active_) {
      for (Eigen::Index j = 0; j < cols; ++j) buf_[static_cast<std::size_t>(j)] = (g_[j] - c_(i, j)) / eps;
      f_[i] = eps * std::log(a_[i]) - eps * lse(static_cast<std::size_t>(cols));
    }
    update_columns(eps);
  }

  void update_columns(double eps) {
    for (Eigen::Index j = 0; j < c_.cols(); ++j) {
      std::size_t len = 0;
      for (Eigen::Index i : active_) buf_[len++] = (f_[i] - c_(i, j)) / eps;
      g_[j] = -eps * lse(len);
    }
  }

  /// |A| x n block of the plan over the active rows.
  Eigen::MatrixXd active_plan(double eps, const Eigen::VectorXd& f, const Eigen::VectorXd& g) const {
    Eigen::MatrixXd p(static_cast<Eigen::Index>(active_.size()), c_.cols());
    for (std::size_t r = 0; r < active_.size(); ++r) {
      const Eigen::Index i = active_[r];
      for (Eigen::Index j = 0; j < c_.cols(); ++j) {
        p(static_cast<Eigen::Index>(r), j) = std::exp((f[i] + g[j] - c_(i, j)) / eps);
      }
    }
    return p;
  }

  /// Marginal residual (rows, then columns) of a plan block.
  Eigen::VectorXd residual(const Eigen::MatrixXd& p) const {
    const auto k = static_cast<Eigen::Index>(active_.size());
    Eigen::VectorXd r(k + c_.cols());
    const Eigen::VectorXd rs = p.rowwise().sum();
    for (Eigen::Index q = 0; q < k; ++q) r[q] = rs[q] - a_[active_[static_cast<std::size_t>(q)]];
    r.tail(c_.cols()) = p.colwise().sum().transpose().array() - 1.0;
    return r;
  }

  double error(double eps) const {
    return residual(active_plan(eps, f_, g_)).cwiseAbs().maxCoeff();
  }

  /// Newton steps on the concave dual. The last column potential is pinned
  /// to remove the additive gauge freedom.
  int newton(double eps, double tol, int max_steps) {
    const auto k = static_cast<Eigen::Index>(active_.size());
    const Eigen::Index n = c_.cols();
    const Eigen::Index dim = k + n - 1;
    int steps = 0;
    Eigen::MatrixXd p = active_plan(eps, f_, g_);
    Eigen::VectorXd r = residual(p);
    while (steps < max_steps && r.cwiseAbs().maxCoeff() > tol) {
      ++steps;
      Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
      const Eigen::VectorXd rs = p.rowwise().sum();
      const Eigen::VectorXd cs = p.colwise().sum().transpose();
      h.topLeftCorner(k, k).diagonal() = rs;
      h.topRightCorner(k, n - 1) = p.leftCols(n - 1);
      h.bottomLeftCorner(n - 1, k) = p.leftCols(n - 1).transpose();
      h.bottomRightCorner(n - 1, n - 1).diagonal() = cs.head(n - 1);
      h /= eps;
      h.diagonal().array() += 1e-14 * h.diagonal().maxCoeff();
      const Eigen::VectorXd step = h.ldlt().solve(-r.head(dim));
      if (!step.allFinite()) break;

      const double r_norm = r.norm();
      double alpha = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 40; ++ls, alpha *= 0.5) {
        Eigen::VectorXd f = f_, g = g_;
        for (Eigen::Index q = 0; q < k; ++q) f[active_[static_cast<std::size_t>(q)]] += alpha * step[q];
        g.head(n - 1) += alpha * step.tail(n - 1);
        Eigen::MatrixXd p_new = active_plan(eps, f, g);
        Eigen::VectorXd r_new = residual(p_new);
        if (r_new.allFinite() && r_new.norm() < r_norm) {
          f_ = std::move(f);
          g_ = std::move(g);
          p = std::move(p_new);
          r = std::move(r_new);
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
    }
    return steps;
  }

  Eigen::MatrixXd full_plan(double eps) const {
    Eigen::MatrixXd pi = Eigen::MatrixXd::Zero(c_.rows(), c_.cols());
    const Eigen::MatrixXd p = active_plan(eps, f_, g_);
    for (std::size_t r = 0; r < active_.size(); ++r) pi.row(active_[r]) = p.row(static_cast<Eigen::Index>(r));
    return pi;
  }

 private:
  double lse(std::size_t len) const {
    const double mx = *std::max_element(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(len));
    double s = 0.0;
    for (std::size_t q = 0; q < len; ++q) s += std::exp(buf_[q] - mx);
    return mx + std::log(s);
  }

  const Eigen::MatrixXd& c_;
  const Eigen::VectorXd& a_;
  std::vector<Eigen::Index> active_;
  Eigen::VectorXd f_, g_;
  mutable std::vector<double> buf_;
};

}  // namespace

TransportPlan sinkhorn_transport(const CostMatrix& cost, const SupplyPlan& supply,
                                 const SinkhornConfig& cfg) {
  cfg.validate();
  check_shapes(cost, supply);
  const Eigen::VectorXd a = supply.as_vector();
  EntropicDual dual(cost.values, a);

  TransportPlan out;
  double eps = cfg.epsilon;
  for (int step = cfg.anneal_halvings; step >= 0; --step) {
    eps = std::ldexp(cfg.epsilon, step);
    for (int it = 0; it < cfg.max_iters; ++it) {
      ++out.iterations;
      dual.sweep(eps);
      if (dual.error(eps) <= cfg.tol) break;
    }
  }
  if (cfg.newton_steps > 0 && dual.error(eps) > cfg.tol) {
    out.newton_steps = dual.newton(eps, cfg.tol, cfg.newton_steps);
  }

  out.pi = dual.full_plan(eps);
  out.marginal_error = out.measure_marginal_error(supply);
  out.converged = out.marginal_error <= cfg.tol;
  return out;
}

// ---------------------------------------------------------------------------
// Exact enumeration

TransportPlan exact_transport_oracle(const CostMatrix& cost, const SupplyPlan& supply) {
  check_shapes(cost, supply);
  const Eigen::MatrixXd& c = cost.values;
  const auto rows = static_cast<int>(c.rows());
  const auto cols = static_cast<int>(c.cols());
  if (std::pow(static_cast<double>(rows), cols) > kOracleEnumerationLimit) {
    throw std::length_error("exact transport oracle refuses (m+1)^n = " + std::to_string(rows) +
                            "^" + std::to_string(cols) + " > 2000000 (enumeration guard)");
  }

  // suffix_min[j]: lower bound on the cost of columns j..n-1.
  std::vector<double> suffix_min(static_cast<std::size_t>(cols) + 1, 0.0);
  for (int j = cols - 1; j >= 0; --j) {
    suffix_min[static_cast<std::size_t>(j)] = suffix_min[static_cast<std::size_t>(j) + 1] + c.col(j).minCoeff();
  }

  std::vector<int> remaining(static_cast<std::size_t>(rows));
  const Eigen::VectorXd a = supply.as_vector();
  for (int i = 0; i < rows; ++i) remaining[static_cast<std::size_t>(i)] = static_cast<int>(a[i]);

  std::vector<int> current(static_cast<std::size_t>(cols), 0), best_labels;
  double best = std::numeric_limits<double>::infinity();

  std::function<void(int, double)> visit = [&](int j, double partial) {
    if (partial + suffix_min[static_cast<std::size_t>(j)] >= best) return;
    if (j == cols) {
      best = partial;
      best_labels = current;
      return;
    }
    for (int i = 0; i < rows; ++i) {
      auto& r = remaining[static_cast<std::size_t>(i)];
      if (r == 0) continue;
      --r;
      current[static_cast<std::size_t>(j)] = i;
      visit(j + 1, partial + c(i, j));
      ++r;
    }
  };
  visit(0, 0.0);

  TransportPlan out;
  out.pi = Eigen::MatrixXd::Zero(rows, cols);
  for (int j = 0; j < cols; ++j) out.pi(best_labels[static_cast<std::size_t>(j)], j) = 1.0;
  out.marginal_error = 0.0;
  return out;
}

// ---------------------------------------------------------------------------

HardAssignment harden(const TransportPlan& plan, const SupplyPlan& supply) {
  const Eigen::Index rows = plan.pi.rows();
  const Eigen::Index m = rows - 1;
  if (m != static_cast<Eigen::Index>(supply.gt_units.size())) {
    throw std::invalid_argument("harden: plan rows do not match the supply plan");
  }
  HardAssignment out;
  out.label.assign(static_cast<std::size_t>(plan.pi.cols()), kBackground);
  out.positives_per_gt.assign(static_cast<std::size_t>(m), 0);
  for (Eigen::Index j = 0; j < plan.pi.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < rows; ++i) {
      if (plan.pi(i, j) > plan.pi(best, j)) best = i;
    }
    if (best < m) {
      out.label[static_cast<std::size_t>(j)] = static_cast<int>(best);
      ++out.positives_per_gt[static_cast<std::size_t>(best)];
    }
  }
  return out;
}

TransportPlan one_hot_plan(const HardAssignment& a) {
  const auto m = static_cast<Eigen::Index>(a.positives_per_gt.size());
  const auto n = static_cast<Eigen::Index>(a.label.size());
  TransportPlan out;
  out.pi = Eigen::MatrixXd::Zero(m + 1, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const int l = a.label[static_cast<std::size_t>(j)];
    out.pi(l == kBackground ? m : l, j) = 1.0;
  }
  return out;
}

double assignment_cost(const CostMatrix& cost, const HardAssignment& a) {
  double total = 0.0;
  const Eigen::Index bg = cost.background_row();
  for (std::size_t j = 0; j < a.label.size(); ++j) {
    const int l = a.label[j];
    total += cost.values(l == kBackground ? bg : l, static_cast<Eigen::Index>(j));
  }
  return total;
}

std::string_view to_string(Matcher m) { return m == Matcher::ota ? "ota" : "hungarian"; }

Matcher matcher_from_string(std::string_view s) {
  if (s == "ota") return Matcher::ota;
  if (s == "hungarian") return Matcher::hungarian;
  throw std::invalid_argument("matcher: expected \"ota\" or \"hungarian\", got \"" +
                              std::string(s) + "\"");
}

// ---------------------------------------------------------------------------
// End-to-end pipelines

AssignResult assign_ota(const GroundTruth& gts, const Predictions& preds,
                        const AssignConfig& cfg) {
  const auto m = gts.size();
  const auto n = preds.size();
  AssignResult r;
  r.ious = iou_matrix(gts.boxes, preds.boxes);
  for (std::size_t i = 0; i < m; ++i) {
    const Eigen::RowVectorXd row = r.ious.row(static_cast<Eigen::Index>(i));
    r.base_k.push_back(dynamic_k_estimate(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), cfg.q));
    r.stage_k.push_back(apply_unit_increase(r.base_k.back(), cfg.stage, cfg.stages));
  }
  // Stage range is validated even without ground truths.
  if (m == 0) apply_unit_increase(1, cfg.stage, cfg.stages);
  r.supply = cap_supplies(r.stage_k, static_cast<int>(n));
  r.cost = build_cost_matrix(gts, preds, cfg.cost);
  r.plan = sinkhorn_transport(r.cost, r.supply, cfg.sinkhorn);
  r.assignment = harden(r.plan, r.supply);
  r.total_cost = r.plan.transported_cost(r.cost);
  return r;
}

AssignResult assign_hungarian(const GroundTruth& gts, const Predictions& preds,
                              const AssignConfig& cfg) {
  const auto m = static_cast<int>(gts.size());
  const auto n = static_cast<int>(preds.size());
  AssignResult r;
  r.ious = iou_matrix(gts.boxes, preds.boxes);
  r.base_k.assign(static_cast<std::size_t>(m), 1);
  r.stage_k = r.base_k;
  r.cost = build_cost_matrix(gts, preds, cfg.cost);
  if (m > n) {
    throw std::invalid_argument("hungarian matcher needs n >= m (" + std::to_string(m) + " > " +
                                std::to_string(n) + ")");
  }
  r.supply.gt_units = r.base_k;
  r.supply.background_units = n - m;
  r.supply.n = n;

  const Matching match = hungarian_match(r.cost.values.topRows(m));
  r.assignment.label.assign(static_cast<std::size_t>(n), kBackground);
  r.assignment.positives_per_gt.assign(static_cast<std::size_t>(m), 1);
  for (int i = 0; i < m; ++i) {
    r.assignment.label[static_cast<std::size_t>(match.gt_to_pred[static_cast<std::size_t>(i)])] = i;
  }
  r.plan = one_hot_plan(r.assignment);
  r.total_cost = r.plan.transported_cost(r.cost);
  return r;
}

AssignResult assign(const GroundTruth& gts, const Predictions& preds, const AssignConfig& cfg) {
  return cfg.matcher == Matcher::ota ? assign_ota(gts, preds, cfg)
                                     : assign_hungarian(gts, preds, cfg);
}

}  // namespace otassign
