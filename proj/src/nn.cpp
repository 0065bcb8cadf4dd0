#include "fwigan/nn.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "binary.hpp"
#include "fwigan/errors.hpp"

namespace fwigan::nn {

using detail::Node;
using Index = std::shared_ptr<const std::vector<std::size_t>>;
using Mask = std::shared_ptr<const std::vector<double>>;

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---- Tensor --------------------------------------------------------------

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw InvalidInput("tensor shape " + shape_string(shape) + " does not hold " + std::to_string(values.size()) +
                       " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

double Tensor::item() const {
  if (numel() != 1) throw InvalidInput("item() on a tensor of shape " + shape_string(shape()));
  return node_->values[0];
}

Tensor Tensor::detach() const { return from(shape(), node_->values, false); }

// ---- graph recording -----------------------------------------------------

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

GradMode::GradMode(bool enabled) : previous_(g_grad_enabled) { g_grad_enabled = enabled; }

GradMode::~GradMode() { g_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   std::shared_ptr<Function> fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  const bool track = g_grad_enabled && std::ranges::any_of(inputs, [](const Tensor& t) { return t.requires_grad(); });
  if (track) {
    fn->inputs = std::move(inputs);
    node->fn = std::move(fn);
    node->requires_grad = true;
  }
  return Tensor(std::move(node));
}

namespace {

void require_same_numel(const Tensor& a, const Tensor& b, const char* op) {
  if (a.numel() != b.numel()) {
    throw InvalidInput(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                       shape_string(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.dim() != rank) {
    throw InvalidInput(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                       shape_string(t.shape()));
  }
}

template <class F>
std::vector<double> zip(const Tensor& a, const Tensor& b, F f) {
  std::vector<double> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
  return out;
}

template <class F>
std::vector<double> map(const Tensor& a, F f) {
  std::vector<double> out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return out;
}

// ---- elementwise -----------------------------------------------------------

struct AddFn final : Function {
  const char* name() const override { return "add"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>&) const override { return {g, g}; }
};

struct SubFn final : Function {
  const char* name() const override { return "sub"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>& needed) const override {
    return {g, needed[1] ? scale(g, -1.0) : Tensor()};
  }
};

struct MulFn final : Function {
  const char* name() const override { return "mul"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>& needed) const override {
    return {needed[0] ? mul(g, inputs[1]) : Tensor(), needed[1] ? mul(g, inputs[0]) : Tensor()};
  }
};

struct ScaleFn final : Function {
  double s;
  explicit ScaleFn(double s_) : s(s_) {}
  const char* name() const override { return "scale"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>&) const override { return {scale(g, s)}; }
};

struct ShiftFn final : Function {
  const char* name() const override { return "shift"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>&) const override { return {g}; }
};

struct SumFn final : Function {
  Shape in_shape;
  explicit SumFn(Shape s) : in_shape(std::move(s)) {}
  const char* name() const override { return "sum"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>&) const override {
    return {expand(g, in_shape)};
  }
};

struct ExpandFn final : Function {
  const char* name() const override { return "expand"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>&) const override { return {sum(g)}; }
};

struct SqrtFn final : Function {
  const char* name() const override { return "sqrt"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>&) const override {
    // First-order only: the factor is a constant of the current values.
    auto factor = Tensor::from(inputs[0].shape(), map(inputs[0], [](double x) { return 0.5 / std::sqrt(x); }));
    return {mul(g, factor)};
  }
};

struct ReshapeFn final : Function {
  Shape in_shape;
  explicit ReshapeFn(Shape s) : in_shape(std::move(s)) {}
  const char* name() const override { return "reshape"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>&) const override {
    return {reshape(g, in_shape)};
  }
};

// ---- convolution ------------------------------------------------------------

// col[(c*9 + ky*3 + kx)][i*W + j] = x[c][i+ky-1][j+kx-1], zero outside.
std::vector<double> im2col(std::span<const double> x, std::size_t C, std::size_t H, std::size_t W) {
  const std::size_t hw = H * W;
  std::vector<double> col(C * 9 * hw, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double* xc = x.data() + c * hw;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        double* row = col.data() + (c * 9 + ky * 3 + kx) * hw;
        for (std::size_t i = 0; i < H; ++i) {
          const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i + ky) - 1;
          if (si < 0 || si >= static_cast<std::ptrdiff_t>(H)) continue;
          const double* src = xc + static_cast<std::size_t>(si) * W;
          double* dst = row + i * W;
          const std::size_t j_begin = kx == 0 ? 1 : 0;
          const std::size_t j_end = kx == 2 ? W - 1 : W;
          for (std::size_t j = j_begin; j < j_end; ++j) dst[j] = src[j + kx - 1];
        }
      }
    }
  }
  return col;
}

// Transpose of im2col (accumulating).
std::vector<double> col2im(std::span<const double> col, std::size_t C, std::size_t H, std::size_t W) {
  const std::size_t hw = H * W;
  std::vector<double> x(C * hw, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double* xc = x.data() + c * hw;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const double* row = col.data() + (c * 9 + ky * 3 + kx) * hw;
        for (std::size_t i = 0; i < H; ++i) {
          const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i + ky) - 1;
          if (si < 0 || si >= static_cast<std::ptrdiff_t>(H)) continue;
          double* dst = xc + static_cast<std::size_t>(si) * W;
          const double* src = row + i * W;
          const std::size_t j_begin = kx == 0 ? 1 : 0;
          const std::size_t j_end = kx == 2 ? W - 1 : W;
          for (std::size_t j = j_begin; j < j_end; ++j) dst[j + kx - 1] += src[j];
        }
      }
    }
  }
  return x;
}

void check_kernel(const Tensor& k, const char* op) {
  require_rank(k, 4, op);
  if (k.shape()[2] != 3 || k.shape()[3] != 3) throw InvalidInput(std::string(op) + ": kernel must be 3x3");
}

struct Conv2dFn final : Function {
  const char* name() const override { return "conv2d"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>& needed) const override {
    return {needed[0] ? conv2d_input_grad(g, inputs[1]) : Tensor(),
            needed[1] ? conv2d_kernel_grad(inputs[0], g) : Tensor()};
  }
};

struct Conv2dInputGradFn final : Function {
  const char* name() const override { return "conv2d_input_grad"; }
  std::vector<Tensor> backward(const Tensor& gz, const std::vector<bool>& needed) const override {
    // z = K^T g  =>  dg = conv(gz, K), dK = kernel_grad(gz, g)
    return {needed[0] ? conv2d(gz, inputs[1]) : Tensor(), needed[1] ? conv2d_kernel_grad(gz, inputs[0]) : Tensor()};
  }
};

struct Conv2dKernelGradFn final : Function {
  const char* name() const override { return "conv2d_kernel_grad"; }
  std::vector<Tensor> backward(const Tensor& gk, const std::vector<bool>& needed) const override {
    // <gk, kgrad(x, g)> = <conv(x, gk), g> = <x, conv^T(g, gk)>
    return {needed[0] ? conv2d_input_grad(inputs[1], gk) : Tensor(), needed[1] ? conv2d(inputs[0], gk) : Tensor()};
  }
};

struct AddChannelBiasFn final : Function {
  const char* name() const override { return "add_channel_bias"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>& needed) const override {
    return {g, needed[1] ? channel_sum(g) : Tensor()};
  }
};

struct ChannelSumFn final : Function {
  std::size_t h, w;
  ChannelSumFn(std::size_t h_, std::size_t w_) : h(h_), w(w_) {}
  const char* name() const override { return "channel_sum"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>&) const override {
    return {broadcast_channels(g, h, w)};
  }
};

struct BroadcastChannelsFn final : Function {
  const char* name() const override { return "broadcast_channels"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>&) const override { return {channel_sum(g)}; }
};

// ---- routing -----------------------------------------------------------------

struct GatherFn final : Function {
  Index index;
  Shape in_shape;
  GatherFn(Index i, Shape s) : index(std::move(i)), in_shape(std::move(s)) {}
  const char* name() const override { return "gather"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>&) const override {
    return {scatter(g, index, in_shape)};
  }
};

struct ScatterFn final : Function {
  Index index;
  Shape in_shape;
  ScatterFn(Index i, Shape s) : index(std::move(i)), in_shape(std::move(s)) {}
  const char* name() const override { return "scatter"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>&) const override {
    return {gather(g, index, in_shape)};
  }
};

struct MaskMulFn final : Function {
  Mask mask;
  explicit MaskMulFn(Mask m) : mask(std::move(m)) {}
  const char* name() const override { return "mask_mul"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>&) const override {
    return {mask_mul(g, mask)};
  }
};

// ---- dense ---------------------------------------------------------------------

struct MatVecFn final : Function {
  const char* name() const override { return "matvec"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>& needed) const override {
    return {needed[0] ? outer(g, inputs[1]) : Tensor(), needed[1] ? matvec_t(inputs[0], g) : Tensor()};
  }
};

struct MatVecTFn final : Function {
  const char* name() const override { return "matvec_t"; }
  std::vector<Tensor> backward(const Tensor& gz, const std::vector<bool>& needed) const override {
    return {needed[0] ? outer(inputs[1], gz) : Tensor(), needed[1] ? matvec(inputs[0], gz) : Tensor()};
  }
};

struct OuterFn final : Function {
  const char* name() const override { return "outer"; }
  std::vector<Tensor> backward(const Tensor& g, const std::vector<bool>& needed) const override {
    return {needed[0] ? matvec(g, inputs[1]) : Tensor(), needed[1] ? matvec_t(g, inputs[0]) : Tensor()};
  }
};

}  // namespace

// ---- op definitions ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_numel(a, b, "add");
  return make_result(a.shape(), zip(a, b, std::plus<>()), {a, b}, std::make_shared<AddFn>());
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_numel(a, b, "sub");
  return make_result(a.shape(), zip(a, b, std::minus<>()), {a, b}, std::make_shared<SubFn>());
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_numel(a, b, "mul");
  return make_result(a.shape(), zip(a, b, std::multiplies<>()), {a, b}, std::make_shared<MulFn>());
}

Tensor scale(const Tensor& a, double s) {
  return make_result(a.shape(), map(a, [s](double x) { return s * x; }), {a}, std::make_shared<ScaleFn>(s));
}

Tensor shift(const Tensor& a, double s) {
  return make_result(a.shape(), map(a, [s](double x) { return x + s; }), {a}, std::make_shared<ShiftFn>());
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return make_result({1}, {total}, {a}, std::make_shared<SumFn>(a.shape()));
}

Tensor expand(const Tensor& s, const Shape& shape) {
  if (s.numel() != 1) throw InvalidInput("expand: source must be a scalar");
  return make_result(shape, std::vector<double>(shape_numel(shape), s.values()[0]), {s}, std::make_shared<ExpandFn>());
}

Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

Tensor sqrt(const Tensor& a) {
  return make_result(a.shape(), map(a, [](double x) { return std::sqrt(x); }), {a}, std::make_shared<SqrtFn>());
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw InvalidInput("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  std::vector<double> v(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(v), {a}, std::make_shared<ReshapeFn>(a.shape()));
}

Tensor conv2d(const Tensor& x, const Tensor& k) {
  require_rank(x, 3, "conv2d");
  check_kernel(k, "conv2d");
  const std::size_t ci = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::size_t co = k.shape()[0];
  if (k.shape()[1] != ci) throw InvalidInput("conv2d: kernel expects " + std::to_string(k.shape()[1]) + " channels");
  const auto col = im2col(x.values(), ci, h, w);
  std::vector<double> y(co * h * w);
  const auto hw = static_cast<int>(h * w);
  const auto kdim = static_cast<int>(ci * 9);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(co), hw, kdim, 1.0, k.values().data(), kdim,
              col.data(), hw, 0.0, y.data(), hw);
  return make_result({co, h, w}, std::move(y), {x, k}, std::make_shared<Conv2dFn>());
}

Tensor conv2d_input_grad(const Tensor& g, const Tensor& k) {
  require_rank(g, 3, "conv2d_input_grad");
  check_kernel(k, "conv2d_input_grad");
  const std::size_t co = g.shape()[0], h = g.shape()[1], w = g.shape()[2];
  const std::size_t ci = k.shape()[1];
  if (k.shape()[0] != co) throw InvalidInput("conv2d_input_grad: channel mismatch");
  std::vector<double> col(ci * 9 * h * w);
  const auto hw = static_cast<int>(h * w);
  const auto kdim = static_cast<int>(ci * 9);
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kdim, hw, static_cast<int>(co), 1.0, k.values().data(), kdim,
              g.values().data(), hw, 0.0, col.data(), hw);
  return make_result({ci, h, w}, col2im(col, ci, h, w), {g, k}, std::make_shared<Conv2dInputGradFn>());
}

Tensor conv2d_kernel_grad(const Tensor& x, const Tensor& g) {
  require_rank(x, 3, "conv2d_kernel_grad");
  require_rank(g, 3, "conv2d_kernel_grad");
  const std::size_t ci = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::size_t co = g.shape()[0];
  if (g.shape()[1] != h || g.shape()[2] != w) throw InvalidInput("conv2d_kernel_grad: spatial mismatch");
  const auto col = im2col(x.values(), ci, h, w);
  std::vector<double> gk(co * ci * 9);
  const auto hw = static_cast<int>(h * w);
  const auto kdim = static_cast<int>(ci * 9);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(co), kdim, hw, 1.0, g.values().data(), hw,
              col.data(), hw, 0.0, gk.data(), kdim);
  return make_result({co, ci, 3, 3}, std::move(gk), {x, g}, std::make_shared<Conv2dKernelGradFn>());
}

Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& b) { return add_channel_bias(conv2d(x, k), b); }

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  require_rank(x, 3, "add_channel_bias");
  const std::size_t c = x.shape()[0], hw = x.shape()[1] * x.shape()[2];
  if (b.numel() != c) throw InvalidInput("add_channel_bias: bias length mismatch");
  std::vector<double> y(x.values().begin(), x.values().end());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double bv = b.values()[ch];
    for (std::size_t p = 0; p < hw; ++p) y[ch * hw + p] += bv;
  }
  return make_result(x.shape(), std::move(y), {x, b}, std::make_shared<AddChannelBiasFn>());
}

Tensor channel_sum(const Tensor& x) {
  require_rank(x, 3, "channel_sum");
  const std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  std::vector<double> y(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t p = 0; p < h * w; ++p) y[ch] += x.values()[ch * h * w + p];
  }
  return make_result({c}, std::move(y), {x}, std::make_shared<ChannelSumFn>(h, w));
}

Tensor broadcast_channels(const Tensor& b, std::size_t h, std::size_t w) {
  const std::size_t c = b.numel();
  std::vector<double> y(c * h * w);
  for (std::size_t ch = 0; ch < c; ++ch) std::fill_n(y.begin() + static_cast<std::ptrdiff_t>(ch * h * w), h * w, b.values()[ch]);
  return make_result({c, h, w}, std::move(y), {b}, std::make_shared<BroadcastChannelsFn>());
}

Tensor gather(const Tensor& x, Index index, Shape out_shape) {
  if (index->size() != shape_numel(out_shape)) throw InvalidInput("gather: index length mismatch");
  std::vector<double> y(index->size());
  const auto xv = x.values();
  for (std::size_t o = 0; o < y.size(); ++o) y[o] = xv[(*index)[o]];
  return make_result(std::move(out_shape), std::move(y), {x}, std::make_shared<GatherFn>(index, x.shape()));
}

Tensor scatter(const Tensor& x, Index index, Shape out_shape) {
  if (index->size() != x.numel()) throw InvalidInput("scatter: index length mismatch");
  std::vector<double> y(shape_numel(out_shape), 0.0);
  const auto xv = x.values();
  for (std::size_t o = 0; o < xv.size(); ++o) y[(*index)[o]] += xv[o];
  return make_result(std::move(out_shape), std::move(y), {x}, std::make_shared<ScatterFn>(index, x.shape()));
}

Tensor maxpool2d(const Tensor& x) {
  require_rank(x, 3, "maxpool2d");
  const std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  if (h % 2 != 0 || w % 2 != 0) throw InvalidInput("maxpool2d: spatial dims must be even, got " + shape_string(x.shape()));
  const std::size_t ho = h / 2, wo = w / 2;
  auto index = std::make_shared<std::vector<std::size_t>>(c * ho * wo);
  const auto xv = x.values();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        const std::size_t base = (ch * h + 2 * i) * w + 2 * j;
        const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = cand[0];
        for (std::size_t q = 1; q < 4; ++q) {
          if (xv[cand[q]] > xv[best]) best = cand[q];
        }
        (*index)[(ch * ho + i) * wo + j] = best;
      }
    }
  }
  return gather(x, std::move(index), {c, ho, wo});
}

Tensor mask_mul(const Tensor& x, Mask mask) {
  if (mask->size() != x.numel()) throw InvalidInput("mask_mul: mask length mismatch");
  std::vector<double> y(x.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.values()[i] * (*mask)[i];
  return make_result(x.shape(), std::move(y), {x}, std::make_shared<MaskMulFn>(std::move(mask)));
}

Tensor leaky_relu(const Tensor& x, double slope) {
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  for (std::size_t i = 0; i < mask->size(); ++i) (*mask)[i] = x.values()[i] > 0.0 ? 1.0 : slope;
  return mask_mul(x, std::move(mask));
}

Tensor matvec(const Tensor& w, const Tensor& x) {
  require_rank(w, 2, "matvec");
  const std::size_t m = w.shape()[0], n = w.shape()[1];
  if (x.numel() != n) throw InvalidInput("matvec: " + shape_string(w.shape()) + " x " + shape_string(x.shape()));
  std::vector<double> y(m);
  cblas_dgemv(CblasRowMajor, CblasNoTrans, static_cast<int>(m), static_cast<int>(n), 1.0, w.values().data(),
              static_cast<int>(n), x.values().data(), 1, 0.0, y.data(), 1);
  return make_result({m}, std::move(y), {w, x}, std::make_shared<MatVecFn>());
}

Tensor matvec_t(const Tensor& w, const Tensor& g) {
  require_rank(w, 2, "matvec_t");
  const std::size_t m = w.shape()[0], n = w.shape()[1];
  if (g.numel() != m) throw InvalidInput("matvec_t: " + shape_string(w.shape()) + "^T x " + shape_string(g.shape()));
  std::vector<double> y(n);
  cblas_dgemv(CblasRowMajor, CblasTrans, static_cast<int>(m), static_cast<int>(n), 1.0, w.values().data(),
              static_cast<int>(n), g.values().data(), 1, 0.0, y.data(), 1);
  return make_result({n}, std::move(y), {w, g}, std::make_shared<MatVecTFn>());
}

Tensor outer(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.numel(), n = b.numel();
  std::vector<double> y(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double ai = a.values()[i];
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = ai * b.values()[j];
  }
  return make_result({m, n}, std::move(y), {a, b}, std::make_shared<OuterFn>());
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) { return add(matvec(w, x), b); }

namespace {
Index block_index(std::size_t c, std::size_t h, std::size_t w, std::size_t big_h, std::size_t big_w) {
  auto index = std::make_shared<std::vector<std::size_t>>(c * h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) (*index)[(ch * h + i) * w + j] = (ch * big_h + i) * big_w + j;
    }
  }
  return index;
}
}  // namespace

Tensor pad2d(const Tensor& x, std::size_t h, std::size_t w) {
  require_rank(x, 3, "pad2d");
  const std::size_t c = x.shape()[0], xh = x.shape()[1], xw = x.shape()[2];
  if (h < xh || w < xw) throw InvalidInput("pad2d: target smaller than input");
  return scatter(x, block_index(c, xh, xw, h, w), {c, h, w});
}

Tensor crop2d(const Tensor& x, std::size_t h, std::size_t w) {
  require_rank(x, 3, "crop2d");
  const std::size_t c = x.shape()[0], xh = x.shape()[1], xw = x.shape()[2];
  if (h > xh || w > xw) throw InvalidInput("crop2d: target larger than input");
  return gather(x, block_index(c, h, w, xh, xw), {c, h, w});
}

// ---- differentiation ---------------------------------------------------------

namespace {

// Post-order over nodes that require grad: inputs appear before their consumers.
std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited{root};
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->fn && next < node->fn->inputs.size()) {
      Node* child = node->fn->inputs[next++].node().get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

void accumulate(std::unordered_map<Node*, Tensor>& grads, Node* node, const Tensor& g) {
  auto [it, inserted] = grads.try_emplace(node, g);
  if (!inserted) it->second = add(it->second, g);
}

// Shared reverse sweep. `needed` marks nodes whose gradient must be produced.
// Calls sink(node, grad) once per node with its complete gradient.
template <class Sink>
void reverse_sweep(const Tensor& out, const std::unordered_set<Node*>& needed, bool create_graph, Sink sink) {
  Node* root = out.node().get();
  const auto order = topo_order(root);
  GradMode mode(create_graph);
  std::unordered_map<Node*, Tensor> grads;
  grads.emplace(root, Tensor::full(out.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    Tensor g = std::move(found->second);
    grads.erase(found);
    sink(node, g);
    if (!node->fn) continue;
    const auto& inputs = node->fn->inputs;
    std::vector<bool> want(inputs.size());
    bool any = false;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      want[i] = inputs[i].requires_grad() && needed.contains(inputs[i].node().get());
      any = any || want[i];
    }
    if (!any) continue;
    auto results = node->fn->backward(g, want);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (want[i]) accumulate(grads, inputs[i].node().get(), results[i]);
    }
  }
}

}  // namespace

std::vector<Tensor> grad(const Tensor& out, const std::vector<Tensor>& inputs, bool create_graph) {
  if (out.numel() != 1) throw InvalidInput("grad: output must be a scalar");
  std::vector<Tensor> result(inputs.size());
  if (!out.requires_grad()) {
    for (std::size_t i = 0; i < inputs.size(); ++i) result[i] = Tensor::zeros(inputs[i].shape());
    return result;
  }
  std::unordered_set<Node*> targets;
  for (const auto& t : inputs) targets.insert(t.node().get());
  // A node is needed if some target is reachable from it.
  std::unordered_set<Node*> needed;
  for (Node* node : topo_order(out.node().get())) {
    bool need = targets.contains(node);
    if (!need && node->fn) {
      for (const auto& in : node->fn->inputs) {
        if (needed.contains(in.node().get())) {
          need = true;
          break;
        }
      }
    }
    if (need) needed.insert(node);
  }
  std::unordered_map<Node*, Tensor> found;
  reverse_sweep(out, needed, create_graph, [&](Node* node, const Tensor& g) {
    if (targets.contains(node)) found.emplace(node, g);
  });
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto it = found.find(inputs[i].node().get());
    if (it == found.end()) {
      result[i] = Tensor::zeros(inputs[i].shape());
    } else {
      // Without a graph, hand out private storage: the sweep may alias one node to several inputs.
      result[i] = create_graph ? it->second : it->second.detach();
    }
  }
  return result;
}

void backward(const Tensor& out) {
  if (out.numel() != 1) throw InvalidInput("backward: root must be a scalar, got " + shape_string(out.shape()));
  if (!out.requires_grad()) return;
  std::unordered_set<Node*> all;
  for (Node* node : topo_order(out.node().get())) all.insert(node);
  reverse_sweep(out, all, false, [](Node* node, const Tensor& g) {
    if (node->grad) {
      auto& acc = node->grad->values;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g.values()[i];
    } else {
      auto copy = std::make_shared<Node>();
      copy->shape = node->shape;
      copy->values.assign(g.values().begin(), g.values().end());
      node->grad = std::move(copy);
    }
  });
}

// ---- ParamStore ----------------------------------------------------------------

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw InvalidInput("duplicate parameter name " + name);
  value.set_requires_grad(true);
  entries_.emplace_back(name, std::move(value));
  return entries_.back().second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw InvalidInput("no parameter named " + name);
}

Tensor& ParamStore::get(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

bool ParamStore::contains(const std::string& name) const {
  return std::ranges::any_of(entries_, [&](const auto& e) { return e.first == name; });
}

std::size_t ParamStore::total_numel() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& [name, t] : entries_) out.add(name, t.detach());
  return out;
}

void ParamStore::save(const std::filesystem::path& stem) const {
  auto bin_path = stem;
  bin_path += ".bin";
  auto json_path = stem;
  json_path += ".json";
  nlohmann::json index;
  index["format_version"] = 1;
  index["params"] = nlohmann::json::object();
  auto out = fwigan::detail::open_for_write(bin_path, true);
  std::size_t offset = 0;
  for (const auto& [name, t] : entries_) {
    index["params"][name] = {{"shape", t.shape()}, {"offset", offset}};
    fwigan::detail::write_le<double>(out, t.values());
    offset += t.numel() * sizeof(double);
  }
  auto js = fwigan::detail::open_for_write(json_path, false);
  js << index.dump(2) << '\n';
}

void ParamStore::load(const std::filesystem::path& stem) {
  auto bin_path = stem;
  bin_path += ".bin";
  auto json_path = stem;
  json_path += ".json";
  std::ifstream js(json_path);
  if (!js) throw InvalidInput("cannot open " + json_path.string());
  nlohmann::json index;
  try {
    js >> index;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed checkpoint index: " + std::string(e.what()));
  }
  const auto bytes = fwigan::detail::read_file_bytes(bin_path);
  const auto& params = index.at("params");
  for (auto& [name, t] : entries_) {
    if (!params.contains(name)) throw InvalidInput("checkpoint lacks parameter " + name);
    const auto shape = params[name].at("shape").get<Shape>();
    const auto offset = params[name].at("offset").get<std::size_t>();
    if (shape != t.shape()) {
      throw InvalidInput("checkpoint shape " + shape_string(shape) + " for " + name + " does not match " +
                         shape_string(t.shape()));
    }
    const std::size_t len = t.numel() * sizeof(double);
    if (offset + len > bytes.size()) throw InvalidInput("checkpoint payload too short for " + name);
    const auto values = fwigan::detail::decode_le<double>(std::span<const char>(bytes.data() + offset, len));
    std::ranges::copy(values, t.mutable_values().begin());
  }
}

}  // namespace fwigan::nn
