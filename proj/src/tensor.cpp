#include "rangefuse/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "rangefuse/config.hpp"

namespace rangefuse {

namespace detail {

std::int64_t TensorNode::size() const {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

void TensorNode::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

}  // namespace detail

using detail::TensorNode;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

std::int64_t shape_size(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

void check_image(const Tensor& x, const char* who) {
  if (x.shape().size() != 3) throw ConfigError(std::string(who) + ": expected [H, W, C] input");
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return from_values(std::move(shape), {}, requires_grad);
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values,
                           bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  const std::int64_t n = shape_size(shape);
  node->shape = std::move(shape);
  if (values.empty()) {
    node->values.assign(static_cast<std::size_t>(n), 0.0);
  } else {
    if (static_cast<std::int64_t>(values.size()) != n) {
      throw ConfigError("tensor value count does not match shape");
    }
    node->values = std::move(values);
  }
  node->requires_grad = requires_grad;
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tensor Tensor::make_op(std::vector<int> shape, std::vector<double> values,
                       std::vector<Tensor> parents,
                       std::function<void(detail::TensorNode&)> backward) {
  Tensor t = from_values(std::move(shape), std::move(values), false);
  for (const Tensor& p : parents) {
    if (!p.defined()) throw ConfigError("op on undefined tensor");
    t.node_->parents.push_back(p.node_);
    t.node_->requires_grad = t.node_->requires_grad || p.node_->requires_grad;
  }
  if (t.node_->requires_grad) t.node_->backward_fn = std::move(backward);
  return t;
}

double Tensor::scalar() const {
  if (!node_ || node_->values.size() != 1) throw ConfigError("scalar() on non-scalar tensor");
  return node_->values[0];
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->values.size(), 0.0);
}

void Tensor::backward() {
  if (!node_ || node_->values.size() != 1) throw ConfigError("backward() needs a scalar root");
  // Post-order DFS, then run backward functions in reverse (topological) order.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_image(x, "conv2d");
  if (w.shape().size() != 4) throw ConfigError("conv2d: weight must be [kh, kw, Cin, Cout]");
  const int H = x.shape()[0], W = x.shape()[1], Cin = x.shape()[2];
  const int kh = w.shape()[0], kw = w.shape()[1], Cout = w.shape()[3];
  if (w.shape()[2] != Cin) throw ConfigError("conv2d: channel mismatch");
  if (kh % 2 == 0 || kw % 2 == 0) throw ConfigError("conv2d: kernel dims must be odd");
  if (b.shape() != std::vector<int>{Cout}) throw ConfigError("conv2d: bias shape mismatch");
  const int pad_r = kh / 2, pad_c = kw / 2;
  const int cells = H * W;
  const int patch = kh * kw * Cin;

  // im2col with zero row padding and circular column wrap, then one GEMM.
  auto patches = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(cells) * patch, 0.0);
  const double* xv = x.values().data();
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      double* row = patches->data() + static_cast<std::size_t>(r * W + c) * patch;
      for (int dr = 0; dr < kh; ++dr) {
        const int rr = r + dr - pad_r;
        if (rr < 0 || rr >= H) continue;
        for (int dc = 0; dc < kw; ++dc) {
          int cc = c + dc - pad_c;
          if (cc < 0) cc += W;
          if (cc >= W) cc -= W;
          const double* src = xv + (static_cast<std::size_t>(rr) * W + cc) * Cin;
          std::copy(src, src + Cin, row + (dr * kw + dc) * Cin);
        }
      }
    }
  }

  std::vector<double> out(static_cast<std::size_t>(cells) * Cout);
  {
    MapConstMat P(patches->data(), cells, patch);
    MapConstMat Wm(w.values().data(), patch, Cout);
    MapMat Y(out.data(), cells, Cout);
    Y.noalias() = P * Wm;
    Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.values().data(), Cout);
  }

  return Tensor::make_op(
      {H, W, Cout}, std::move(out), {x, w, b},
      [=](TensorNode& node) {
        auto& xp = *node.parents[0];
        auto& wp = *node.parents[1];
        auto& bp = *node.parents[2];
        MapConstMat dY(node.grad.data(), cells, Cout);
        if (bp.requires_grad) {
          bp.ensure_grad();
          Eigen::Map<Eigen::RowVectorXd>(bp.grad.data(), Cout) += dY.colwise().sum();
        }
        if (wp.requires_grad) {
          wp.ensure_grad();
          MapConstMat P(patches->data(), cells, patch);
          MapMat dW(wp.grad.data(), patch, Cout);
          dW.noalias() += P.transpose() * dY;
        }
        if (xp.requires_grad) {
          xp.ensure_grad();
          RowMat dP = dY * MapConstMat(wp.values.data(), patch, Cout).transpose();
          double* dx = xp.grad.data();
          for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c) {
              const double* row = dP.data() + static_cast<std::size_t>(r * W + c) * patch;
              for (int dr = 0; dr < kh; ++dr) {
                const int rr = r + dr - pad_r;
                if (rr < 0 || rr >= H) continue;
                for (int dc = 0; dc < kw; ++dc) {
                  int cc = c + dc - pad_c;
                  if (cc < 0) cc += W;
                  if (cc >= W) cc -= W;
                  double* dst = dx + (static_cast<std::size_t>(rr) * W + cc) * Cin;
                  const double* src = row + (dr * kw + dc) * Cin;
                  for (int ch = 0; ch < Cin; ++ch) dst[ch] += src[ch];
                }
              }
            }
          }
        }
      });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out = x.values();
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return Tensor::make_op(x.shape(), std::move(out), {x}, [](TensorNode& node) {
    auto& xp = *node.parents[0];
    if (!xp.requires_grad) return;
    xp.ensure_grad();
    for (std::size_t i = 0; i < node.values.size(); ++i) {
      if (xp.values[i] > 0.0) xp.grad[i] += node.grad[i];
    }
  });
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ConfigError("concat_channels: empty input");
  for (const Tensor& t : xs) check_image(t, "concat_channels");
  const int H = xs[0].shape()[0], W = xs[0].shape()[1];
  int Cout = 0;
  for (const Tensor& t : xs) {
    if (t.shape()[0] != H || t.shape()[1] != W) {
      throw ConfigError("concat_channels: spatial shape mismatch");
    }
    Cout += t.shape()[2];
  }
  const int cells = H * W;
  std::vector<double> out(static_cast<std::size_t>(cells) * Cout);
  int offset = 0;
  for (const Tensor& t : xs) {
    const int C = t.shape()[2];
    for (int cell = 0; cell < cells; ++cell) {
      std::copy(t.values().data() + static_cast<std::size_t>(cell) * C,
                t.values().data() + static_cast<std::size_t>(cell) * C + C,
                out.data() + static_cast<std::size_t>(cell) * Cout + offset);
    }
    offset += C;
  }
  return Tensor::make_op({H, W, Cout}, std::move(out), xs, [=](TensorNode& node) {
    int off = 0;
    for (auto& parent : node.parents) {
      const int C = parent->shape[2];
      if (parent->requires_grad) {
        parent->ensure_grad();
        for (int cell = 0; cell < cells; ++cell) {
          const double* src = node.grad.data() + static_cast<std::size_t>(cell) * Cout + off;
          double* dst = parent->grad.data() + static_cast<std::size_t>(cell) * C;
          for (int ch = 0; ch < C; ++ch) dst[ch] += src[ch];
        }
      }
      off += C;
    }
  });
}

Tensor avg_pool2(const Tensor& x) {
  check_image(x, "avg_pool2");
  const int H = x.shape()[0], W = x.shape()[1], C = x.shape()[2];
  if (H % 2 != 0 || W % 2 != 0) throw ConfigError("avg_pool2: H and W must be even");
  const int Ho = H / 2, Wo = W / 2;
  std::vector<double> out(static_cast<std::size_t>(Ho) * Wo * C, 0.0);
  const double* xv = x.values().data();
  for (int r = 0; r < Ho; ++r) {
    for (int c = 0; c < Wo; ++c) {
      double* dst = out.data() + (static_cast<std::size_t>(r) * Wo + c) * C;
      for (int dr = 0; dr < 2; ++dr) {
        for (int dc = 0; dc < 2; ++dc) {
          const double* src =
              xv + (static_cast<std::size_t>(2 * r + dr) * W + (2 * c + dc)) * C;
          for (int ch = 0; ch < C; ++ch) dst[ch] += 0.25 * src[ch];
        }
      }
    }
  }
  return Tensor::make_op({Ho, Wo, C}, std::move(out), {x}, [=](TensorNode& node) {
    auto& xp = *node.parents[0];
    if (!xp.requires_grad) return;
    xp.ensure_grad();
    for (int r = 0; r < Ho; ++r) {
      for (int c = 0; c < Wo; ++c) {
        const double* g = node.grad.data() + (static_cast<std::size_t>(r) * Wo + c) * C;
        for (int dr = 0; dr < 2; ++dr) {
          for (int dc = 0; dc < 2; ++dc) {
            double* dst =
                xp.grad.data() + (static_cast<std::size_t>(2 * r + dr) * W + (2 * c + dc)) * C;
            for (int ch = 0; ch < C; ++ch) dst[ch] += 0.25 * g[ch];
          }
        }
      }
    }
  });
}

Tensor upsample2(const Tensor& x) {
  check_image(x, "upsample2");
  const int H = x.shape()[0], W = x.shape()[1], C = x.shape()[2];
  const int Ho = 2 * H, Wo = 2 * W;
  std::vector<double> out(static_cast<std::size_t>(Ho) * Wo * C);
  const double* xv = x.values().data();
  for (int r = 0; r < Ho; ++r) {
    for (int c = 0; c < Wo; ++c) {
      const double* src = xv + (static_cast<std::size_t>(r / 2) * W + c / 2) * C;
      std::copy(src, src + C, out.data() + (static_cast<std::size_t>(r) * Wo + c) * C);
    }
  }
  return Tensor::make_op({Ho, Wo, C}, std::move(out), {x}, [=](TensorNode& node) {
    auto& xp = *node.parents[0];
    if (!xp.requires_grad) return;
    xp.ensure_grad();
    for (int r = 0; r < Ho; ++r) {
      for (int c = 0; c < Wo; ++c) {
        const double* g = node.grad.data() + (static_cast<std::size_t>(r) * Wo + c) * C;
        double* dst = xp.grad.data() + (static_cast<std::size_t>(r / 2) * W + c / 2) * C;
        for (int ch = 0; ch < C; ++ch) dst[ch] += g[ch];
      }
    }
  });
}

Tensor gather_cells(const Tensor& x, const std::vector<int>& src_cell) {
  check_image(x, "gather_cells");
  const int H = x.shape()[0], W = x.shape()[1], C = x.shape()[2];
  if (static_cast<int>(src_cell.size()) != H * W) {
    throw ConfigError("gather_cells: map size mismatch");
  }
  std::vector<double> out(static_cast<std::size_t>(H) * W * C, 0.0);
  for (int cell = 0; cell < H * W; ++cell) {
    const int s = src_cell[cell];
    if (s < 0) continue;
    std::copy(x.values().data() + static_cast<std::size_t>(s) * C,
              x.values().data() + static_cast<std::size_t>(s) * C + C,
              out.data() + static_cast<std::size_t>(cell) * C);
  }
  return Tensor::make_op(x.shape(), std::move(out), {x}, [=](TensorNode& node) {
    auto& xp = *node.parents[0];
    if (!xp.requires_grad) return;
    xp.ensure_grad();
    for (int cell = 0; cell < H * W; ++cell) {
      const int s = src_cell[cell];
      if (s < 0) continue;
      const double* g = node.grad.data() + static_cast<std::size_t>(cell) * C;
      double* dst = xp.grad.data() + static_cast<std::size_t>(s) * C;
      for (int ch = 0; ch < C; ++ch) dst[ch] += g[ch];
    }
  });
}

Tensor gather_points(const Tensor& x, const std::vector<int>& cells) {
  check_image(x, "gather_points");
  const int C = x.shape()[2];
  const int N = static_cast<int>(cells.size());
  std::vector<double> out(static_cast<std::size_t>(N) * C, 0.0);
  for (int i = 0; i < N; ++i) {
    const int s = cells[i];
    if (s < 0) continue;
    std::copy(x.values().data() + static_cast<std::size_t>(s) * C,
              x.values().data() + static_cast<std::size_t>(s) * C + C,
              out.data() + static_cast<std::size_t>(i) * C);
  }
  return Tensor::make_op({N, C}, std::move(out), {x}, [=](TensorNode& node) {
    auto& xp = *node.parents[0];
    if (!xp.requires_grad) return;
    xp.ensure_grad();
    for (int i = 0; i < N; ++i) {
      const int s = cells[i];
      if (s < 0) continue;
      const double* g = node.grad.data() + static_cast<std::size_t>(i) * C;
      double* dst = xp.grad.data() + static_cast<std::size_t>(s) * C;
      for (int ch = 0; ch < C; ++ch) dst[ch] += g[ch];
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.shape().size() != 2 || w.shape().size() != 2) {
    throw ConfigError("linear: expected [N, Ci] and [Ci, Co]");
  }
  const int N = x.shape()[0], Ci = x.shape()[1], Co = w.shape()[1];
  if (w.shape()[0] != Ci || b.shape() != std::vector<int>{Co}) {
    throw ConfigError("linear: shape mismatch");
  }
  std::vector<double> out(static_cast<std::size_t>(N) * Co);
  {
    MapConstMat X(x.values().data(), N, Ci);
    MapConstMat Wm(w.values().data(), Ci, Co);
    MapMat Y(out.data(), N, Co);
    Y.noalias() = X * Wm;
    Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.values().data(), Co);
  }
  return Tensor::make_op({N, Co}, std::move(out), {x, w, b}, [=](TensorNode& node) {
    auto& xp = *node.parents[0];
    auto& wp = *node.parents[1];
    auto& bp = *node.parents[2];
    MapConstMat dY(node.grad.data(), N, Co);
    if (bp.requires_grad) {
      bp.ensure_grad();
      Eigen::Map<Eigen::RowVectorXd>(bp.grad.data(), Co) += dY.colwise().sum();
    }
    if (wp.requires_grad) {
      wp.ensure_grad();
      MapConstMat X(xp.values.data(), N, Ci);
      MapMat dW(wp.grad.data(), Ci, Co);
      dW.noalias() += X.transpose() * dY;
    }
    if (xp.requires_grad) {
      xp.ensure_grad();
      MapConstMat Wm(wp.values.data(), Ci, Co);
      MapMat dX(xp.grad.data(), N, Ci);
      dX.noalias() += dY * Wm.transpose();
    }
  });
}

Tensor slice_channels(const Tensor& x, int from, int to) {
  if (x.shape().size() != 2) throw ConfigError("slice_channels: expected [N, C]");
  const int N = x.shape()[0], C = x.shape()[1];
  if (from < 0 || to > C || from >= to) throw ConfigError("slice_channels: bad range");
  const int Co = to - from;
  std::vector<double> out(static_cast<std::size_t>(N) * Co);
  for (int i = 0; i < N; ++i) {
    std::copy(x.values().data() + static_cast<std::size_t>(i) * C + from,
              x.values().data() + static_cast<std::size_t>(i) * C + to,
              out.data() + static_cast<std::size_t>(i) * Co);
  }
  return Tensor::make_op({N, Co}, std::move(out), {x}, [=](TensorNode& node) {
    auto& xp = *node.parents[0];
    if (!xp.requires_grad) return;
    xp.ensure_grad();
    for (int i = 0; i < N; ++i) {
      const double* g = node.grad.data() + static_cast<std::size_t>(i) * Co;
      double* dst = xp.grad.data() + static_cast<std::size_t>(i) * C + from;
      for (int ch = 0; ch < Co; ++ch) dst[ch] += g[ch];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ConfigError("add: shape mismatch");
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return Tensor::make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& node) {
    for (auto& parent : node.parents) {
      if (!parent->requires_grad) continue;
      parent->ensure_grad();
      for (std::size_t i = 0; i < node.grad.size(); ++i) parent->grad[i] += node.grad[i];
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  if (x.shape().size() != 2) throw ConfigError("softmax_rows: expected [N, C]");
  const int N = x.shape()[0], C = x.shape()[1];
  std::vector<double> out(x.values().size());
  for (int i = 0; i < N; ++i) {
    const double* row = x.values().data() + static_cast<std::size_t>(i) * C;
    double* o = out.data() + static_cast<std::size_t>(i) * C;
    double m = row[0];
    for (int ch = 1; ch < C; ++ch) m = std::max(m, row[ch]);
    double sum = 0.0;
    for (int ch = 0; ch < C; ++ch) {
      o[ch] = std::exp(row[ch] - m);
      sum += o[ch];
    }
    for (int ch = 0; ch < C; ++ch) o[ch] /= sum;
  }
  return Tensor::make_op(x.shape(), std::move(out), {x}, [=](TensorNode& node) {
    auto& xp = *node.parents[0];
    if (!xp.requires_grad) return;
    xp.ensure_grad();
    for (int i = 0; i < N; ++i) {
      const double* y = node.values.data() + static_cast<std::size_t>(i) * C;
      const double* g = node.grad.data() + static_cast<std::size_t>(i) * C;
      double dot = 0.0;
      for (int ch = 0; ch < C; ++ch) dot += y[ch] * g[ch];
      double* dst = xp.grad.data() + static_cast<std::size_t>(i) * C;
      for (int ch = 0; ch < C; ++ch) dst[ch] += y[ch] * (g[ch] - dot);
    }
  });
}

Tensor affine_channels(const Tensor& x, const std::vector<double>& shift,
                       const std::vector<double>& scale) {
  const int C = x.shape().back();
  if (static_cast<int>(shift.size()) != C || static_cast<int>(scale.size()) != C) {
    throw ConfigError("affine_channels: constant size mismatch");
  }
  const std::int64_t rows = x.size() / C;
  std::vector<double> out(x.values().size());
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* src = x.values().data() + i * C;
    double* dst = out.data() + i * C;
    for (int ch = 0; ch < C; ++ch) dst[ch] = (src[ch] - shift[ch]) * scale[ch];
  }
  return Tensor::make_op(x.shape(), std::move(out), {x}, [=](TensorNode& node) {
    auto& xp = *node.parents[0];
    if (!xp.requires_grad) return;
    xp.ensure_grad();
    for (std::int64_t i = 0; i < rows; ++i) {
      const double* g = node.grad.data() + i * C;
      double* dst = xp.grad.data() + i * C;
      for (int ch = 0; ch < C; ++ch) dst[ch] += g[ch] * scale[ch];
    }
  });
}

}  // namespace rangefuse
