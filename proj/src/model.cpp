#include "rangefuse/model.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>

#include "rangefuse/config.hpp"

namespace rangefuse {

namespace {

Tensor grid_tensor(const Grid& g) {
  return Tensor::from_values({g.rows, g.cols, g.channels}, g.data);
}

Tensor grid_channel(const Grid& g, int ch) {
  std::vector<double> data(static_cast<std::size_t>(g.cells()));
  for (int cell = 0; cell < g.cells(); ++cell) data[cell] = g.at(cell, ch);
  return Tensor::from_values({g.rows, g.cols, 1}, std::move(data));
}

Tensor normalize(const Tensor& x, const std::vector<ChannelInfo>& layout) {
  std::vector<double> shift, scale;
  normalization_constants(layout, &shift, &scale);
  return affine_channels(x, shift, scale);
}

std::vector<ChannelInfo> hand_layout_for_norm() {
  return {{ChannelRole::RangeNative, 0, ""},    {ChannelRole::AzimuthNative, 0, ""},
          {ChannelRole::Intensity, 0, ""},      {ChannelRole::RangeCurrent, 0, ""},
          {ChannelRole::AzimuthCurrent, 0, ""}, {ChannelRole::Occupancy, 0, ""}};
}

std::vector<ChannelInfo> displacement_layout_for_norm() {
  return {{ChannelRole::Displacement, 0, ""},
          {ChannelRole::Displacement, 0, ""},
          {ChannelRole::Displacement, 0, ""}};
}

}  // namespace

void normalization_constants(const std::vector<ChannelInfo>& layout, std::vector<double>* shift,
                             std::vector<double>* scale) {
  shift->clear();
  scale->clear();
  for (const ChannelInfo& ch : layout) {
    switch (ch.role) {
      case ChannelRole::RangeNative:
      case ChannelRole::RangeCurrent:
        shift->push_back(30.0);
        scale->push_back(1.0 / 30.0);
        break;
      case ChannelRole::AzimuthNative:
      case ChannelRole::AzimuthCurrent:
        shift->push_back(kPi);
        scale->push_back(1.0 / kPi);
        break;
      case ChannelRole::Intensity:
        shift->push_back(0.5);
        scale->push_back(2.0);
        break;
      case ChannelRole::Displacement:
        shift->push_back(0.0);
        scale->push_back(0.5);
        break;
      case ChannelRole::Occupancy:
      case ChannelRole::Learned:
        shift->push_back(0.0);
        scale->push_back(1.0);
        break;
    }
  }
}

Model::Model(ModelConfig config, RvGeometry geometry)
    : config_(config), geometry_(geometry) {
  if (geometry_.n_rows % 4 != 0 || geometry_.n_cols % 4 != 0) {
    throw ConfigError("backbone needs row/col counts divisible by 4");
  }
  if (config_.extractor_width < 2) throw ConfigError("extractor_width must be at least 2");
  if (config_.num_sweeps < 1) throw ConfigError("num_sweeps must be at least 1");
  init_state_ = config_.seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL;

  const int K = config_.num_sweeps;
  const int W = config_.extractor_width;
  const int hand = kHandChannels;
  const int disp = config_.displacement ? 3 : 0;

  switch (config_.kind) {
    case FusionKind::Early: {
      const int stack = K * hand + (K - 1) * disp;
      param("early_enc.conv1.w", {3, 3, stack, W - 1}, std::sqrt(2.0 / (9.0 * stack)));
      param("early_enc.conv1.b", {W - 1}, 0.0);
      param("early_enc.conv2.w", {3, 3, W - 1, W - 1}, std::sqrt(2.0 / (9.0 * (W - 1))));
      param("early_enc.conv2.b", {W - 1}, 0.0);
      backbone_in_ = W;
      break;
    }
    case FusionKind::Late: {
      param("sweep_enc.conv1.w", {3, 3, hand, W - 1}, std::sqrt(2.0 / (9.0 * hand)));
      param("sweep_enc.conv1.b", {W - 1}, 0.0);
      param("sweep_enc.conv2.w", {3, 3, W - 1, W - 1}, std::sqrt(2.0 / (9.0 * (W - 1))));
      param("sweep_enc.conv2.b", {W - 1}, 0.0);
      backbone_in_ = K * W + (K - 1) * disp;
      break;
    }
    case FusionKind::Incremental: {
      param("sweep_enc.conv1.w", {3, 3, hand, W - 1}, std::sqrt(2.0 / (9.0 * hand)));
      param("sweep_enc.conv1.b", {W - 1}, 0.0);
      param("sweep_enc.conv2.w", {3, 3, W - 1, W - 1}, std::sqrt(2.0 / (9.0 * (W - 1))));
      param("sweep_enc.conv2.b", {W - 1}, 0.0);
      const int fused = hand + W + disp;
      param("step_fuse.conv1.w", {3, 3, fused, W - 1}, std::sqrt(2.0 / (9.0 * fused)));
      param("step_fuse.conv1.b", {W - 1}, 0.0);
      param("step_fuse.conv2.w", {3, 3, W - 1, W - 1}, std::sqrt(2.0 / (9.0 * (W - 1))));
      param("step_fuse.conv2.b", {W - 1}, 0.0);
      backbone_in_ = W;
      break;
    }
  }

  const auto& bw = config_.backbone.widths;
  const int F = config_.backbone.out_channels;
  auto conv = [&](const std::string& name, int cin, int cout) {
    param(name + ".w", {3, 3, cin, cout}, std::sqrt(2.0 / (9.0 * cin)));
    param(name + ".b", {cout}, 0.0);
  };
  conv("backbone.enc0", backbone_in_, bw[0]);
  conv("backbone.enc0b", bw[0], bw[0]);
  conv("backbone.enc1", bw[0], bw[1]);
  conv("backbone.enc2", bw[1], bw[2]);
  conv("backbone.dec1", bw[2] + bw[1], bw[1]);
  conv("backbone.dec2", bw[1] + bw[0], bw[0]);
  conv("backbone.out", bw[0], F);

  const int head_out = config_.num_classes + kEncodingDim;
  param("heads.fc1.w", {F, config_.head_hidden}, std::sqrt(2.0 / F));
  param("heads.fc1.b", {config_.head_hidden}, 0.0);
  param("heads.fc2.w", {config_.head_hidden, head_out}, std::sqrt(2.0 / config_.head_hidden));
  {
    // Orientation channels start at (cos, sin) = (1, 0): atan2 gradients
    // stay bounded instead of exploding at the origin.
    Tensor b = param("heads.fc2.b", {head_out}, 0.0);
    for (int t = 0; t < kHorizons; ++t) {
      b.values()[config_.num_classes + 2 + t * kEncPerStep + 2] = 1.0;
    }
  }
}

Tensor Model::param(const std::string& name, std::vector<int> shape, double init_std,
                    double bias_fill) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  std::vector<double> values(static_cast<std::size_t>(n), bias_fill);
  if (init_std > 0.0) {
    std::mt19937_64 rng(init_state_);
    init_state_ = rng();  // advance the stream once per tensor
    std::normal_distribution<double> dist(0.0, init_std);
    for (double& v : values) v = dist(rng);
  }
  Tensor t = Tensor::from_values(std::move(shape), std::move(values), true);
  params_.push_back({name, t});
  return t;
}

Tensor Model::find(const std::string& name) const {
  for (const NamedParam& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ConfigError("unknown parameter: " + name);
}

Tensor Model::conv_block(const Tensor& x, const std::string& prefix) {
  Tensor h = relu(conv2d(x, find(prefix + ".conv1.w"), find(prefix + ".conv1.b")));
  return relu(conv2d(h, find(prefix + ".conv2.w"), find(prefix + ".conv2.b")));
}

Tensor Model::extractor(const Tensor& x, const Tensor& occupancy, const std::string& prefix) {
  return concat_channels({conv_block(x, prefix), occupancy});
}

Tensor Model::fused_tensor(const FusionPlan& plan) {
  if (plan.kind != config_.kind) throw ConfigError("plan/model fusion kind mismatch");
  if (plan.num_sweeps != config_.num_sweeps) throw ConfigError("plan/model sweep count mismatch");
  if (!(plan.geometry == geometry_)) throw ConfigError("plan/model geometry mismatch");
  const int K = plan.num_sweeps;
  const auto hand_norm = hand_layout_for_norm();
  const auto disp_norm = displacement_layout_for_norm();

  switch (config_.kind) {
    case FusionKind::Early: {
      const FusedImage img = materialize(plan);
      const Tensor stack = normalize(grid_tensor(img.channels), img.layout);
      return extractor(stack, grid_tensor(plan.union_occupancy), "early_enc");
    }
    case FusionKind::Late: {
      std::vector<Tensor> encoded(K);
      for (int s = 0; s < K; ++s) {
        const Tensor x = normalize(grid_tensor(plan.sweep_grids[s]), hand_norm);
        encoded[s] = extractor(x, grid_channel(plan.sweep_grids[s], kHandChannels - 1),
                               "sweep_enc");
      }
      std::vector<Tensor> parts{encoded[K - 1]};
      for (int s = K - 2; s >= 0; --s) {
        parts.push_back(gather_cells(encoded[s], plan.late_warps[s].src_cell));
        if (plan.displacement_enabled) {
          parts.push_back(normalize(grid_tensor(plan.pair_displacement[s]), disp_norm));
        }
      }
      return concat_channels(parts);
    }
    case FusionKind::Incremental: {
      const Tensor x0 = normalize(grid_tensor(plan.sweep_grids[0]), hand_norm);
      Tensor state =
          extractor(x0, grid_channel(plan.sweep_grids[0], kHandChannels - 1), "sweep_enc");
      for (const FusionStep& step : plan.steps) {
        std::vector<Tensor> parts{normalize(grid_tensor(step.next_hand), hand_norm),
                                  gather_cells(state, step.warp.src_cell)};
        if (plan.displacement_enabled) {
          parts.push_back(normalize(grid_tensor(step.displacement), disp_norm));
        }
        state = extractor(concat_channels(parts), grid_tensor(step.occupancy), "step_fuse");
      }
      return state;
    }
  }
  throw ConfigError("unreachable fusion kind");
}

Tensor Model::backbone_forward(const Tensor& x) {
  if (x.shape().size() != 3 || x.shape()[2] != backbone_in_) {
    throw ConfigError("backbone input channel mismatch");
  }
  auto conv = [this](const Tensor& in, const std::string& name) {
    return relu(conv2d(in, find(name + ".w"), find(name + ".b")));
  };
  const Tensor e0 = conv(x, "backbone.enc0");
  const Tensor e0b = conv(e0, "backbone.enc0b");
  const Tensor e1 = conv(avg_pool2(e0b), "backbone.enc1");
  const Tensor e2 = conv(avg_pool2(e1), "backbone.enc2");
  const Tensor d1 = conv(concat_channels({upsample2(e2), e1}), "backbone.dec1");
  const Tensor d2 = conv(concat_channels({upsample2(d1), e0b}), "backbone.dec2");
  return conv(d2, "backbone.out");
}

Model::Forward Model::forward(const FusionPlan& plan) {
  Forward out;
  out.fused = fused_tensor(plan);
  out.features = backbone_forward(out.fused);
  const Tensor pf = gather_points(out.features, plan.point_cells);
  const Tensor hidden = relu(linear(pf, find("heads.fc1.w"), find("heads.fc1.b")));
  const Tensor head = linear(hidden, find("heads.fc2.w"), find("heads.fc2.b"));
  out.logits = slice_channels(head, 0, config_.num_classes);
  out.encoding = slice_channels(head, config_.num_classes, config_.num_classes + kEncodingDim);
  return out;
}

void Model::zero_grads() {
  for (NamedParam& p : params_) p.tensor.zero_grad();
}

std::int64_t Model::parameter_count() const {
  std::int64_t n = 0;
  for (const NamedParam& p : params_) n += p.tensor.size();
  return n;
}

std::string Model::parameter_manifest() const {
  std::ostringstream out;
  out << "# name, shape, offset, count\n";
  std::int64_t offset = 0;
  for (const NamedParam& p : params_) {
    out << p.name << ", [";
    for (std::size_t i = 0; i < p.tensor.shape().size(); ++i) {
      out << (i ? " " : "") << p.tensor.shape()[i];
    }
    out << "], " << offset << ", " << p.tensor.size() << "\n";
    offset += p.tensor.size();
  }
  return out.str();
}

void Model::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  for (const NamedParam& p : params_) {
    out.write(reinterpret_cast<const char*>(p.tensor.values().data()),
              static_cast<std::streamsize>(p.tensor.values().size() * sizeof(double)));
  }
  if (!out) throw DataError("short write: " + path);
}

void Model::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::int64_t>(in.tellg());
  if (bytes != parameter_count() * static_cast<std::int64_t>(sizeof(double))) {
    throw DataError("checkpoint size does not match the model configuration: " + path);
  }
  in.seekg(0);
  for (NamedParam& p : params_) {
    in.read(reinterpret_cast<char*>(p.tensor.values().data()),
            static_cast<std::streamsize>(p.tensor.values().size() * sizeof(double)));
  }
  if (!in) throw DataError("truncated checkpoint: " + path);
}

SgdMomentum::SgdMomentum(SgdConfig config, std::vector<NamedParam>* params)
    : config_(config), params_(params) {
  velocity_.resize(params->size());
  for (std::size_t i = 0; i < params->size(); ++i) {
    velocity_[i].assign((*params)[i].tensor.values().size(), 0.0);
  }
}

double SgdMomentum::learning_rate(int iter) const {
  if (config_.iterations <= 1) return config_.lr_start;
  const double frac = static_cast<double>(iter) / (config_.iterations - 1);
  return config_.lr_start * std::pow(config_.lr_end / config_.lr_start, frac);
}

void SgdMomentum::step(int iter) {
  const double lr = learning_rate(iter);
  for (std::size_t i = 0; i < params_->size(); ++i) {
    Tensor& t = (*params_)[i].tensor;
    if (t.grad().empty()) continue;
    auto& v = velocity_[i];
    auto& values = t.values();
    const auto& g = t.grad();
    for (std::size_t j = 0; j < values.size(); ++j) {
      v[j] = config_.momentum * v[j] - lr * g[j];
      values[j] += v[j];
    }
  }
}

}  // namespace rangefuse
