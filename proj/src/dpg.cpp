#include "otassign/dpg.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace otassign::dpg {

namespace {

std::string shape_str(int c, int h, int w) {
  return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

}  // namespace

FeatureMap::FeatureMap(int c, int h, int w, double fill)
    : channels(c), height(h), width(w),
      data(static_cast<std::size_t>(c) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w),
           fill) {
  if (c < 1 || h < 1 || w < 1) throw std::invalid_argument("feature map dimensions must be >= 1");
}

void FeaturePyramid::validate() const {
  const int c = levels[0].channels;
  for (int l = 0; l < 4; ++l) {
    const FeatureMap& f = levels[static_cast<std::size_t>(l)];
    const std::string name = "P" + std::to_string(l + 2);
    if (f.channels != c) {
      throw std::invalid_argument(name + " has " + std::to_string(f.channels) +
                                  " channels, expected " + std::to_string(c));
    }
    if (f.data.size() != static_cast<std::size_t>(f.channels) * static_cast<std::size_t>(f.height) *
                             static_cast<std::size_t>(f.width) || f.height < 1 || f.width < 1) {
      throw std::invalid_argument(name + " storage does not match its shape");
    }
    if (l > 0) {
      const FeatureMap& prev = levels[static_cast<std::size_t>(l - 1)];
      if (prev.height != 2 * f.height || prev.width != 2 * f.width) {
        throw std::invalid_argument(name + " is " + shape_str(f.channels, f.height, f.width) +
                                    ", expected half of P" + std::to_string(l + 1) + " (" +
                                    shape_str(prev.channels, prev.height, prev.width) + ")");
      }
    }
  }
}

std::string_view to_string(Gating g) {
  return g == Gating::per_proposal ? "per_proposal" : "per_expert";
}

Gating gating_from_string(std::string_view s) {
  if (s == "per_proposal") return Gating::per_proposal;
  if (s == "per_expert") return Gating::per_expert;
  throw std::invalid_argument("gating: expected per_proposal or per_expert, got \"" +
                              std::string(s) + "\"");
}

std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("activation: expected relu or identity, got \"" + std::string(s) +
                              "\"");
}

void DpgConfig::validate() const {
  if (num_experts < 1 || num_proposals < 1 || channels < 1 || gate_size < 1 || hidden < 1) {
    throw std::invalid_argument("dpg: N_e, N_p, C, S and D_h must be >= 1");
  }
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("dpg: tau must be > 0");
  if (p2_size < 8 || p2_size % 8 != 0) {
    throw std::invalid_argument("dpg: p2_size must be a positive multiple of 8");
  }
}

namespace {

void expect_shape(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                  const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw std::invalid_argument(name + " is " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()) + ", expected " + std::to_string(rows) +
                                "x" + std::to_string(cols));
  }
}

}  // namespace

void StaircaseParams::validate() const {
  dims.validate();
  const int c = dims.channels;
  expect_shape(dw2, c, 9, "dw2");
  expect_shape(dw3, 2 * c, 9, "dw3");
  expect_shape(dw4, 3 * c, 9, "dw4");
  expect_shape(fc1, static_cast<Eigen::Index>(dims.gate_size) * dims.gate_size, dims.hidden, "fc1");
  expect_shape(fc2, dims.hidden, dims.logits_per_image(), "fc2");
}

void ExpertBank::validate() const {
  if (boxes.empty() || boxes.size() != features.size()) {
    throw std::invalid_argument("expert bank: need the same positive number of box and feature sets");
  }
  const Eigen::Index np = boxes[0].rows();
  const Eigen::Index c = features[0].cols();
  for (std::size_t e = 0; e < boxes.size(); ++e) {
    expect_shape(boxes[e], np, 4, "boxes[" + std::to_string(e) + "]");
    expect_shape(features[e], np, c, "features[" + std::to_string(e) + "]");
    if ((boxes[e].col(2).array() < 0.0).any() || (boxes[e].col(3).array() < 0.0).any()) {
      throw std::invalid_argument("boxes[" + std::to_string(e) + "] has a negative width or height");
    }
  }
}

FeatureMap depthwise_conv_s2(const FeatureMap& in, const Eigen::MatrixXd& kernels) {
  if (kernels.rows() != in.channels || kernels.cols() != 9) {
    throw std::invalid_argument("depthwise kernels are " + std::to_string(kernels.rows()) + "x" +
                                std::to_string(kernels.cols()) + ", input has " +
                                std::to_string(in.channels) + " channels");
  }
  const int oh = (in.height - 1) / 2 + 1;
  const int ow = (in.width - 1) / 2 + 1;
  FeatureMap out(in.channels, oh, ow);
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = std::clamp(2 * y - 1 + ky, 0, in.height - 1);
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = std::clamp(2 * x - 1 + kx, 0, in.width - 1);
            acc += kernels(c, ky * 3 + kx) * in.at(c, sy, sx);
          }
        }
        out.at(c, y, x) = acc;
      }
    }
  }
  return out;
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument("cannot concatenate " + shape_str(a.channels, a.height, a.width) +
                                " with " + shape_str(b.channels, b.height, b.width));
  }
  FeatureMap out(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

FeatureMap bilinear_resize(const FeatureMap& in, int out_h, int out_w) {
  FeatureMap out(in.channels, out_h, out_w);
  const double sy = static_cast<double>(in.height) / out_h;
  const double sx = static_cast<double>(in.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    const int y0 = std::min(static_cast<int>(fy), in.height - 1);
    const int y1 = std::min(y0 + 1, in.height - 1);
    const double ly = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const int x0 = std::min(static_cast<int>(fx), in.width - 1);
      const int x1 = std::min(x0 + 1, in.width - 1);
      const double lx = fx - x0;
      for (int c = 0; c < in.channels; ++c) {
        const double top = (1.0 - lx) * in.at(c, y0, x0) + lx * in.at(c, y0, x1);
        const double bot = (1.0 - lx) * in.at(c, y1, x0) + lx * in.at(c, y1, x1);
        out.at(c, y, x) = (1.0 - ly) * top + ly * bot;
      }
    }
  }
  return out;
}

Eigen::VectorXd staircase_forward(const FeaturePyramid& pyr, const StaircaseParams& p) {
  pyr.validate();
  p.validate();
  if (pyr.levels[0].channels != p.dims.channels) {
    throw std::invalid_argument("P2 has " + std::to_string(pyr.levels[0].channels) +
                                " channels but the staircase expects C=" +
                                std::to_string(p.dims.channels));
  }
  const std::array<const Eigen::MatrixXd*, 3> kernels = {&p.dw2, &p.dw3, &p.dw4};

  FeatureMap carry = depthwise_conv_s2(pyr.levels[0], p.dw2);
  for (std::size_t level = 1; level < 4; ++level) {
    const FeatureMap& pl = pyr.levels[level];
    if (carry.height != pl.height || carry.width != pl.width) {
      throw std::invalid_argument("stair output into P" + std::to_string(level + 2) + " is " +
                                  shape_str(carry.channels, carry.height, carry.width) +
                                  ", level is " + shape_str(pl.channels, pl.height, pl.width));
    }
    FeatureMap joined = concat_channels(pl, carry);
    carry = level < 3 ? depthwise_conv_s2(joined, *kernels[level]) : std::move(joined);
  }

  const int s = p.dims.gate_size;
  const FeatureMap resized = bilinear_resize(carry, s, s);
  Eigen::VectorXd flat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s) * s);
  for (int c = 0; c < resized.channels; ++c) {
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) flat[y * s + x] += resized.at(c, y, x);
    }
  }
  return flat;
}

ExpertWeights weight_head_forward(const Eigen::VectorXd& flat, const StaircaseParams& p) {
  p.validate();
  const auto s2 = static_cast<Eigen::Index>(p.dims.gate_size) * p.dims.gate_size;
  if (flat.size() != s2) {
    throw std::invalid_argument("gating input has length " + std::to_string(flat.size()) +
                                ", expected S^2 = " + std::to_string(s2));
  }
  Eigen::VectorXd hidden = p.fc1.transpose() * flat;
  if (p.dims.activation == Activation::relu) hidden = hidden.cwiseMax(0.0);
  const Eigen::VectorXd logits = p.fc2.transpose() * hidden;

  const int ne = p.dims.num_experts;
  const int np = p.dims.num_proposals;
  ExpertWeights out{Eigen::MatrixXd(np, ne)};
  for (int r = 0; r < np; ++r) {
    const Eigen::Index base = p.dims.gating == Gating::per_proposal ? static_cast<Eigen::Index>(r) * ne : 0;
    const Eigen::RowVectorXd z = logits.segment(base, ne).transpose() / p.dims.tau;
    const Eigen::RowVectorXd e = (z.array() - z.maxCoeff()).exp();
    out.w.row(r) = e / e.sum();
  }
  return out;
}

MixedProposals mix_proposals(const ExpertBank& bank, const ExpertWeights& w) {
  bank.validate();
  if (w.w.rows() != bank.num_proposals() || w.w.cols() != bank.num_experts()) {
    throw std::invalid_argument("expert weights are " + std::to_string(w.w.rows()) + "x" +
                                std::to_string(w.w.cols()) + ", bank has " +
                                std::to_string(bank.num_proposals()) + " proposals and " +
                                std::to_string(bank.num_experts()) + " experts");
  }
  MixedProposals out{Eigen::MatrixXd::Zero(bank.num_proposals(), 4),
                     Eigen::MatrixXd::Zero(bank.num_proposals(), bank.channels())};
  for (int e = 0; e < bank.num_experts(); ++e) {
    const auto col = w.w.col(e);
    out.boxes += col.asDiagonal() * bank.boxes[static_cast<std::size_t>(e)];
    out.features += col.asDiagonal() * bank.features[static_cast<std::size_t>(e)];
  }
  return out;
}

DynamicProposals generate_dynamic_proposals(const FeaturePyramid& pyr, const ExpertBank& bank,
                                            const StaircaseParams& p) {
  if (bank.num_experts() != p.dims.num_experts || bank.num_proposals() != p.dims.num_proposals) {
    throw std::invalid_argument("expert bank does not match the gating network's N_e/N_p");
  }
  DynamicProposals out;
  out.weights = weight_head_forward(staircase_forward(pyr, p), p);
  out.proposals = mix_proposals(bank, out.weights);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, double limit,
                               std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-limit, limit);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = u(rng);
  }
  return m;
}

double xavier_limit(Eigen::Index fan_in, Eigen::Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

StaircaseParams random_params(const DpgConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  StaircaseParams p;
  p.dims = cfg;
  const int c = cfg.channels;
  const double k = xavier_limit(9, 9);
  p.dw2 = uniform_matrix(c, 9, k, rng);
  p.dw3 = uniform_matrix(2 * c, 9, k, rng);
  p.dw4 = uniform_matrix(3 * c, 9, k, rng);
  const Eigen::Index s2 = static_cast<Eigen::Index>(cfg.gate_size) * cfg.gate_size;
  p.fc1 = uniform_matrix(s2, cfg.hidden, xavier_limit(s2, cfg.hidden), rng);
  p.fc2 = uniform_matrix(cfg.hidden, cfg.logits_per_image(),
                         xavier_limit(cfg.hidden, cfg.logits_per_image()), rng);
  return p;
}

ExpertBank random_bank(const DpgConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> centre(0.0, 1.0);
  std::uniform_real_distribution<double> size(0.05, 0.5);
  std::normal_distribution<double> feat(0.0, 1.0);
  ExpertBank bank;
  for (int e = 0; e < cfg.num_experts; ++e) {
    Eigen::MatrixXd b(cfg.num_proposals, 4);
    for (int r = 0; r < cfg.num_proposals; ++r) {
      b(r, 0) = centre(rng);
      b(r, 1) = centre(rng);
      b(r, 2) = size(rng);
      b(r, 3) = size(rng);
    }
    Eigen::MatrixXd f(cfg.num_proposals, cfg.channels);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = feat(rng);
    bank.boxes.push_back(std::move(b));
    bank.features.push_back(std::move(f));
  }
  return bank;
}

FeaturePyramid random_pyramid(int channels, int p2_size, std::uint64_t seed) {
  if (p2_size < 8 || p2_size % 8 != 0) {
    throw std::invalid_argument("P2 size must be a positive multiple of 8");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  FeaturePyramid pyr;
  int size = p2_size;
  for (auto& level : pyr.levels) {
    level = FeatureMap(channels, size, size);
    for (double& v : level.data) v = nd(rng);
    size /= 2;
  }
  return pyr;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json tensor_json(std::vector<int> shape, std::vector<double> data) {
  return {{"shape", std::move(shape)}, {"data", std::move(data)}};
}

std::vector<double> row_major(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
};

Tensor read_tensor(const nlohmann::json& j, const std::string& name, std::vector<int> expected) {
  if (!j.contains(name)) throw std::invalid_argument("parameter file is missing tensor " + name);
  const auto& t = j.at(name);
  if (!t.is_object() || !t.contains("shape") || !t.contains("data")) {
    throw std::invalid_argument("tensor " + name + " needs \"shape\" and \"data\"");
  }
  Tensor out{t.at("shape").get<std::vector<int>>(), t.at("data").get<std::vector<double>>()};
  if (out.shape != expected) {
    std::string got, want;
    for (int d : out.shape) got += (got.empty() ? "" : "x") + std::to_string(d);
    for (int d : expected) want += (want.empty() ? "" : "x") + std::to_string(d);
    throw std::invalid_argument("tensor " + name + " has shape " + got + ", expected " + want);
  }
  std::size_t count = 1;
  for (int d : expected) count *= static_cast<std::size_t>(d);
  if (out.data.size() != count) {
    throw std::invalid_argument("tensor " + name + " has " + std::to_string(out.data.size()) +
                                " values, shape needs " + std::to_string(count));
  }
  return out;
}

Eigen::MatrixXd to_matrix(const double* data, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[r * cols + c];
  }
  return m;
}

}  // namespace

nlohmann::json params_to_json(const StaircaseParams& p, const ExpertBank& bank) {
  const int c = p.dims.channels;
  nlohmann::json j;
  j["dw2"] = tensor_json({c, 3, 3}, row_major(p.dw2));
  j["dw3"] = tensor_json({2 * c, 3, 3}, row_major(p.dw3));
  j["dw4"] = tensor_json({3 * c, 3, 3}, row_major(p.dw4));
  j["fc1"] = tensor_json({static_cast<int>(p.fc1.rows()), static_cast<int>(p.fc1.cols())},
                         row_major(p.fc1));
  j["fc2"] = tensor_json({static_cast<int>(p.fc2.rows()), static_cast<int>(p.fc2.cols())},
                         row_major(p.fc2));
  std::vector<double> boxes, feats;
  for (int e = 0; e < bank.num_experts(); ++e) {
    auto b = row_major(bank.boxes[static_cast<std::size_t>(e)]);
    auto f = row_major(bank.features[static_cast<std::size_t>(e)]);
    boxes.insert(boxes.end(), b.begin(), b.end());
    feats.insert(feats.end(), f.begin(), f.end());
  }
  j["boxes"] = tensor_json({bank.num_experts(), bank.num_proposals(), 4}, std::move(boxes));
  j["features"] = tensor_json({bank.num_experts(), bank.num_proposals(), bank.channels()},
                              std::move(feats));
  return j;
}

ParamFile params_from_json(const nlohmann::json& j, const DpgConfig& cfg) {
  cfg.validate();
  const int c = cfg.channels;
  const int s2 = cfg.gate_size * cfg.gate_size;
  ParamFile out;
  out.params.dims = cfg;
  auto dw2 = read_tensor(j, "dw2", {c, 3, 3});
  auto dw3 = read_tensor(j, "dw3", {2 * c, 3, 3});
  auto dw4 = read_tensor(j, "dw4", {3 * c, 3, 3});
  auto fc1 = read_tensor(j, "fc1", {s2, cfg.hidden});
  auto fc2 = read_tensor(j, "fc2", {cfg.hidden, cfg.logits_per_image()});
  auto boxes = read_tensor(j, "boxes", {cfg.num_experts, cfg.num_proposals, 4});
  auto feats = read_tensor(j, "features", {cfg.num_experts, cfg.num_proposals, c});
  out.params.dw2 = to_matrix(dw2.data.data(), c, 9);
  out.params.dw3 = to_matrix(dw3.data.data(), 2 * c, 9);
  out.params.dw4 = to_matrix(dw4.data.data(), 3 * c, 9);
  out.params.fc1 = to_matrix(fc1.data.data(), s2, cfg.hidden);
  out.params.fc2 = to_matrix(fc2.data.data(), cfg.hidden, cfg.logits_per_image());
  const auto box_stride = static_cast<std::size_t>(cfg.num_proposals) * 4;
  const auto feat_stride = static_cast<std::size_t>(cfg.num_proposals) * static_cast<std::size_t>(c);
  for (int e = 0; e < cfg.num_experts; ++e) {
    const auto ue = static_cast<std::size_t>(e);
    out.bank.boxes.push_back(to_matrix(boxes.data.data() + ue * box_stride, cfg.num_proposals, 4));
    out.bank.features.push_back(
        to_matrix(feats.data.data() + ue * feat_stride, cfg.num_proposals, c));
  }
  out.params.validate();
  out.bank.validate();
  return out;
}

}  // namespace otassign::dpg
