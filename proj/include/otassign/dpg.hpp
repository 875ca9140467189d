#pragma once

// Dynamic proposal generation: a gating network over the feature pyramid
// produces per-proposal expert weights, and the output proposals are convex
// combinations of the expert proposal sets.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace otassign::dpg {

/// Dense C x H x W tensor, channel-major.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w, double fill = 0.0);

  double& at(int c, int y, int x) { return data[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data[index(c, y, x)]; }

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * static_cast<std::size_t>(height) +
            static_cast<std::size_t>(y)) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }
};

/// Levels P2..P5; every level has C channels and half the spatial size of
/// the previous one.
struct FeaturePyramid {
  std::array<FeatureMap, 4> levels;

  void validate() const;
};

enum class Gating {
  per_proposal,  ///< fc2 emits N_e * N_p logits, one weight row per proposal
  per_expert,    ///< fc2 emits N_e logits shared by every proposal
};
enum class Activation { relu, identity };

std::string_view to_string(Gating g);
Gating gating_from_string(std::string_view s);
std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

struct DpgConfig {
  int num_experts = 4;      // N_e
  int num_proposals = 300;  // N_p
  int channels = 256;       // C
  int gate_size = 30;       // S
  int hidden = 1500;        // D_h
  double tau = 1.0;
  Gating gating = Gating::per_proposal;
  Activation activation = Activation::relu;
  int p2_size = 64;  ///< spatial size of P2 for generated pyramids

  void validate() const;
  int logits_per_image() const {
    return gating == Gating::per_proposal ? num_experts * num_proposals : num_experts;
  }
};

struct StaircaseParams {
  DpgConfig dims;
  Eigen::MatrixXd dw2;  ///< C x 9 depthwise kernels (row-major 3x3)
  Eigen::MatrixXd dw3;  ///< 2C x 9
  Eigen::MatrixXd dw4;  ///< 3C x 9
  Eigen::MatrixXd fc1;  ///< S^2 x D_h
  Eigen::MatrixXd fc2;  ///< D_h x logits_per_image()

  void validate() const;
};

struct ExpertBank {
  std::vector<Eigen::MatrixXd> boxes;     ///< N_e of N_p x 4, cxcywh
  std::vector<Eigen::MatrixXd> features;  ///< N_e of N_p x C

  int num_experts() const { return static_cast<int>(boxes.size()); }
  int num_proposals() const { return boxes.empty() ? 0 : static_cast<int>(boxes[0].rows()); }
  int channels() const { return features.empty() ? 0 : static_cast<int>(features[0].cols()); }
  void validate() const;
};

/// N_p x N_e, rows on the probability simplex.
struct ExpertWeights {
  Eigen::MatrixXd w;
};

struct MixedProposals {
  Eigen::MatrixXd boxes;     ///< N_p x 4, cxcywh
  Eigen::MatrixXd features;  ///< N_p x C
};

struct DynamicProposals {
  MixedProposals proposals;
  ExpertWeights weights;
};

/// 3x3 depthwise convolution, stride 2, one pixel of edge-replicated padding.
FeatureMap depthwise_conv_s2(const FeatureMap& in, const Eigen::MatrixXd& kernels);
FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b);
/// Bilinear resize with half-pixel centers.
FeatureMap bilinear_resize(const FeatureMap& in, int out_h, int out_w);

/// Staircase aggregation P2..P5 -> 4C x S x S -> channel sum -> flat S^2.
Eigen::VectorXd staircase_forward(const FeaturePyramid& pyr, const StaircaseParams& p);

/// softmax(fc2(act(fc1(flat))) / tau), one row per proposal.
ExpertWeights weight_head_forward(const Eigen::VectorXd& flat, const StaircaseParams& p);

MixedProposals mix_proposals(const ExpertBank& bank, const ExpertWeights& w);

DynamicProposals generate_dynamic_proposals(const FeaturePyramid& pyr, const ExpertBank& bank,
                                            const StaircaseParams& p);

// Seeded generators for demos and tests.
StaircaseParams random_params(const DpgConfig& cfg, std::uint64_t seed);
ExpertBank random_bank(const DpgConfig& cfg, std::uint64_t seed);
FeaturePyramid random_pyramid(int channels, int p2_size, std::uint64_t seed);

/// Parameter file: {"dw2": {"shape": [...], "data": [...]}, ...} with tensors
/// dw2, dw3, dw4, fc1, fc2, boxes, features. Shapes are checked against `cfg`.
struct ParamFile {
  StaircaseParams params;
  ExpertBank bank;
};
nlohmann::json params_to_json(const StaircaseParams& p, const ExpertBank& bank);
ParamFile params_from_json(const nlohmann::json& j, const DpgConfig& cfg);

}  // namespace otassign::dpg
