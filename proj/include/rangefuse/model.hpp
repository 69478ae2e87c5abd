#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rangefuse/fusion.hpp"
#include "rangefuse/tensor.hpp"

namespace rangefuse {

/// Encoder-decoder backbone: three stages with 2x pooling between them,
/// skip connections, and a return to full resolution. Columns pad
/// circularly (azimuth is periodic), rows with zeros.
struct BackboneConfig {
  std::array<int, 3> widths{32, 64, 128};
  int out_channels = 32;
};

struct ModelConfig {
  FusionKind kind = FusionKind::Incremental;
  int num_sweeps = 6;
  int num_classes = 2;
  int extractor_width = 16;  // includes one occupancy passthrough channel
  int head_hidden = 64;
  BackboneConfig backbone;
  bool displacement = true;
  std::uint64_t seed = 0;
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

/// The learned pipeline: fusion-stage extractors, the multi-scale
/// backbone, and the per-point prediction heads. Parameters are created
/// deterministically from the config seed.
class Model {
 public:
  Model(ModelConfig config, RvGeometry geometry);

  struct Forward {
    Tensor fused;     // backbone input [H, W, Cin]
    Tensor features;  // backbone output [H, W, F]
    Tensor logits;    // [N, num_classes]
    Tensor encoding;  // [N, kEncodingDim]
  };
  Forward forward(const FusionPlan& plan);

  /// Fusion stages only: the tensor entering the backbone.
  Tensor fused_tensor(const FusionPlan& plan);
  /// Backbone on an arbitrary [H, W, Cin] tensor (shape must match config).
  Tensor backbone_forward(const Tensor& x);

  std::vector<NamedParam>& params() { return params_; }
  const std::vector<NamedParam>& params() const { return params_; }
  void zero_grads();
  std::int64_t parameter_count() const;

  int backbone_input_channels() const { return backbone_in_; }
  const ModelConfig& config() const { return config_; }
  const RvGeometry& geometry() const { return geometry_; }

  /// One "name shape offset count" line per parameter, checkpoint order.
  std::string parameter_manifest() const;
  /// Flat binary of doubles in manifest order.
  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

 private:
  Tensor param(const std::string& name, std::vector<int> shape, double init_std,
               double bias_fill = 0.0);
  Tensor conv_block(const Tensor& x, const std::string& prefix);
  Tensor extractor(const Tensor& x, const Tensor& occupancy, const std::string& prefix);
  Tensor find(const std::string& name) const;

  ModelConfig config_;
  RvGeometry geometry_;
  int backbone_in_ = 0;
  std::vector<NamedParam> params_;
  std::uint64_t init_state_ = 0;
};

struct SgdConfig {
  double lr_start = 2e-3;
  double lr_end = 2e-5;
  int iterations = 2000;
  double momentum = 0.9;
};

/// Plain SGD with momentum and a per-iteration exponential learning-rate
/// decay from lr_start to lr_end.
class SgdMomentum {
 public:
  SgdMomentum(SgdConfig config, std::vector<NamedParam>* params);
  double learning_rate(int iter) const;
  void step(int iter);

 private:
  SgdConfig config_;
  std::vector<NamedParam>* params_;
  std::vector<std::vector<double>> velocity_;
};

/// Fixed normalization constants applied to hand-crafted channels before
/// any learned layer (identity for learned channels).
void normalization_constants(const std::vector<ChannelInfo>& layout, std::vector<double>* shift,
                             std::vector<double>* scale);

}  // namespace rangefuse
