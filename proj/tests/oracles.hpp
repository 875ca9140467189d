#pragma once

// Test-only reference implementations. These deliberately avoid the library
// code paths they are compared against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "otassign/assignment.hpp"
#include "otassign/dpg.hpp"
#include "otassign/geometry.hpp"

namespace oracle {

/// Minimum over all injections rows -> columns, summed in row order.
inline double brute_force_assignment(const Eigen::MatrixXd& c) {
  const auto m = static_cast<int>(c.rows());
  const auto n = static_cast<int>(c.cols());
  std::vector<int> cols(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) cols[static_cast<std::size_t>(j)] = j;
  double best = std::numeric_limits<double>::infinity();
  // Every permutation of the columns; the first m positions form the injection.
  do {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += c(i, cols[static_cast<std::size_t>(i)]);
    best = std::min(best, s);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

struct BruteTransport {
  double cost = std::numeric_limits<double>::infinity();
  std::vector<std::vector<int>> optimal_labelings;  ///< row index per column
};

/// Enumerates all (m+1)^n labelings, keeps the supply-feasible ones and
/// records every labeling within `tie_tol` of the minimum.
inline BruteTransport brute_force_transport(const Eigen::MatrixXd& c, const Eigen::VectorXd& supply,
                                            double tie_tol = 1e-9) {
  const auto rows = static_cast<int>(c.rows());
  const auto n = static_cast<int>(c.cols());
  std::uint64_t total = 1;
  for (int j = 0; j < n; ++j) total *= static_cast<std::uint64_t>(rows);
  std::vector<std::pair<double, std::vector<int>>> feasible;
  std::vector<int> lab(static_cast<std::size_t>(n));
  for (std::uint64_t code = 0; code < total; ++code) {
    std::uint64_t x = code;
    std::vector<int> count(static_cast<std::size_t>(rows), 0);
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
      lab[static_cast<std::size_t>(j)] = static_cast<int>(x % static_cast<std::uint64_t>(rows));
      x /= static_cast<std::uint64_t>(rows);
      ++count[static_cast<std::size_t>(lab[static_cast<std::size_t>(j)])];
      s += c(lab[static_cast<std::size_t>(j)], j);
    }
    bool ok = true;
    for (int i = 0; i < rows; ++i) ok = ok && count[static_cast<std::size_t>(i)] == static_cast<int>(supply[i]);
    if (ok) feasible.emplace_back(s, lab);
  }
  BruteTransport out;
  for (const auto& [s, l] : feasible) out.cost = std::min(out.cost, s);
  for (const auto& [s, l] : feasible) {
    if (s <= out.cost + tie_tol) out.optimal_labelings.push_back(l);
  }
  return out;
}

/// Random valid box in [0, scale]^2 with positive area.
inline otassign::Box random_box(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(0.0, scale);
  double x1 = u(rng), x2 = u(rng), y1 = u(rng), y2 = u(rng);
  if (x1 > x2) std::swap(x1, x2);
  if (y1 > y2) std::swap(y1, y2);
  if (x2 - x1 < 1e-3 * scale) x2 = x1 + 1e-3 * scale;
  if (y2 - y1 < 1e-3 * scale) y2 = y1 + 1e-3 * scale;
  return {x1, y1, x2, y2};
}

// ---------------------------------------------------------------------------
// Straight-line staircase re-implementation on nested vectors.

using Volume = std::vector<std::vector<std::vector<double>>>;  // [c][y][x]

inline Volume to_volume(const otassign::dpg::FeatureMap& f) {
  Volume v(static_cast<std::size_t>(f.channels),
           std::vector<std::vector<double>>(static_cast<std::size_t>(f.height),
                                            std::vector<double>(static_cast<std::size_t>(f.width))));
  for (int c = 0; c < f.channels; ++c)
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) v[c][y][x] = f.at(c, y, x);
  return v;
}

inline Volume stride2_dw(const Volume& in, const Eigen::MatrixXd& k) {
  const int h = static_cast<int>(in[0].size()), w = static_cast<int>(in[0][0].size());
  Volume out(in.size(), std::vector<std::vector<double>>(static_cast<std::size_t>(h / 2),
                                                         std::vector<double>(static_cast<std::size_t>(w / 2), 0.0)));
  for (std::size_t c = 0; c < in.size(); ++c)
    for (int oy = 0; oy < h / 2; ++oy)
      for (int ox = 0; ox < w / 2; ++ox)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int y = std::min(std::max(2 * oy + dy, 0), h - 1);
            const int x = std::min(std::max(2 * ox + dx, 0), w - 1);
            out[c][oy][ox] += k(static_cast<Eigen::Index>(c), (dy + 1) * 3 + (dx + 1)) * in[c][y][x];
          }
  return out;
}

inline Volume stack(const Volume& a, const Volume& b) {
  Volume out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline double sample(const std::vector<std::vector<double>>& plane, double fy, double fx) {
  const int h = static_cast<int>(plane.size()), w = static_cast<int>(plane[0].size());
  fy = std::max(fy, 0.0);
  fx = std::max(fx, 0.0);
  const int y0 = std::min(static_cast<int>(std::floor(fy)), h - 1), x0 = std::min(static_cast<int>(std::floor(fx)), w - 1);
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double wy = fy - y0, wx = fx - x0;
  return plane[y0][x0] * (1 - wy) * (1 - wx) + plane[y0][x1] * (1 - wy) * wx +
         plane[y1][x0] * wy * (1 - wx) + plane[y1][x1] * wy * wx;
}

inline std::vector<double> staircase(const otassign::dpg::FeaturePyramid& pyr,
                                     const otassign::dpg::StaircaseParams& p) {
  const Volume p2 = to_volume(pyr.levels[0]), p3 = to_volume(pyr.levels[1]);
  const Volume p4 = to_volume(pyr.levels[2]), p5 = to_volume(pyr.levels[3]);
  const Volume o2 = stride2_dw(p2, p.dw2);
  const Volume o3 = stride2_dw(stack(p3, o2), p.dw3);
  const Volume o4 = stride2_dw(stack(p4, o3), p.dw4);
  const Volume top = stack(p5, o4);
  const int s = p.dims.gate_size;
  const double h = static_cast<double>(top[0].size()), w = static_cast<double>(top[0][0].size());
  std::vector<double> flat(static_cast<std::size_t>(s * s), 0.0);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x)
      for (const auto& plane : top)
        flat[static_cast<std::size_t>(y * s + x)] +=
            sample(plane, (y + 0.5) * h / s - 0.5, (x + 0.5) * w / s - 0.5);
  return flat;
}

}  // namespace oracle
