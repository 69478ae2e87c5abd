#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace rangefuse {

namespace detail {

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated lazily, same size as values
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::int64_t size() const;
  void ensure_grad();
};

}  // namespace detail

/// Reverse-mode autodiff tensor: a value-semantics handle on a shared
/// graph node. Shapes are row-major; images are [H, W, C], per-point
/// matrices [N, C], scalars [].
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false);
  /// Graph-op constructor used by the op library and custom losses.
  static Tensor make_op(std::vector<int> shape, std::vector<double> values,
                        std::vector<Tensor> parents,
                        std::function<void(detail::TensorNode&)> backward);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  std::int64_t size() const { return node_->size(); }
  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& values() { return node_->values; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  double scalar() const;
  void zero_grad();

  /// Reverse pass from this scalar node through the whole graph.
  void backward();

  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Layer ops. Convolutions pad rows with zeros and wrap columns circularly,
// matching the 360° azimuth topology of range view images.

/// x: [H, W, Cin], w: [kh, kw, Cin, Cout] with odd kernel dims, b: [Cout].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor concat_channels(const std::vector<Tensor>& xs);
/// 2x2 mean pooling; H and W must be even.
Tensor avg_pool2(const Tensor& x);
/// Nearest-neighbor 2x upsampling.
Tensor upsample2(const Tensor& x);
/// Per destination cell, copy the source cell's channel vector (-1 → 0).
Tensor gather_cells(const Tensor& x, const std::vector<int>& src_cell);
/// Gather per-point channel vectors from image cells (-1 → zeros).
Tensor gather_points(const Tensor& x, const std::vector<int>& cells);
/// x: [N, Ci], w: [Ci, Co], b: [Co].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor slice_channels(const Tensor& x, int from, int to);
Tensor add(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x);
/// Fixed per-channel affine (x - shift) * scale; no gradient to the constants.
Tensor affine_channels(const Tensor& x, const std::vector<double>& shift,
                       const std::vector<double>& scale);

}  // namespace rangefuse
