#pragma once

// Minimal reverse-mode differentiation over dense double-precision arrays.
//
// Every operation's backward pass is itself written with these operations, so
// a gradient computed with create_graph = true is an ordinary graph node that
// can be differentiated again (used by the gradient penalty). Exceptions:
// sqrt's derivative factor and the leaky-ReLU / max-pool routing are treated
// as constants when differentiated a second time.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fwigan::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Function;

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::shared_ptr<Function> fn;  // null for leaves
  std::shared_ptr<Node> grad;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  [[nodiscard]] bool defined() const { return node_ != nullptr; }
  [[nodiscard]] const Shape& shape() const { return node_->shape; }
  [[nodiscard]] std::size_t numel() const { return node_->values.size(); }
  [[nodiscard]] std::size_t dim() const { return node_->shape.size(); }
  [[nodiscard]] std::span<const double> values() const { return node_->values; }
  /// Writable storage. Only meaningful on leaves (parameters, inputs).
  [[nodiscard]] std::span<double> mutable_values() { return node_->values; }
  [[nodiscard]] double item() const;

  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  [[nodiscard]] bool is_leaf() const { return node_->fn == nullptr; }

  /// Gradient accumulated by backward(); undefined until then.
  [[nodiscard]] Tensor grad() const { return Tensor(node_->grad); }
  void zero_grad() { node_->grad.reset(); }

  /// Same values, no history.
  [[nodiscard]] Tensor detach() const;

  [[nodiscard]] const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Backward rule of one operation. `inputs` are the operands it was built from.
struct Function {
  std::vector<Tensor> inputs;
  virtual ~Function() = default;
  [[nodiscard]] virtual const char* name() const = 0;
  /// Gradients w.r.t. each input given the gradient of the output. Entries for
  /// inputs with needed[i] == false may be left undefined.
  virtual std::vector<Tensor> backward(const Tensor& grad_out, const std::vector<bool>& needed) const = 0;
};

/// Builds an op output: records `fn` when grad mode is on and an input needs grad.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   std::shared_ptr<Function> fn);

/// Thread-local switch for graph recording.
bool grad_enabled();

class GradMode {
 public:
  explicit GradMode(bool enabled);
  ~GradMode();
  GradMode(const GradMode&) = delete;
  GradMode& operator=(const GradMode&) = delete;

 private:
  bool previous_;
};

// ---- operations ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor shift(const Tensor& a, double s);
Tensor sum(const Tensor& a);
/// Scalar (numel 1) tensor expanded to `shape`.
Tensor expand(const Tensor& scalar, const Shape& shape);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor sqrt(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// 3x3 same-padded cross-correlation, stride 1: x[Ci,H,W], k[Co,Ci,3,3] -> [Co,H,W].
Tensor conv2d(const Tensor& x, const Tensor& k);
/// Transpose of conv2d w.r.t. its input: g[Co,H,W], k[Co,Ci,3,3] -> [Ci,H,W].
Tensor conv2d_input_grad(const Tensor& g, const Tensor& k);
/// Transpose of conv2d w.r.t. its kernel: x[Ci,H,W], g[Co,H,W] -> [Co,Ci,3,3].
Tensor conv2d_kernel_grad(const Tensor& x, const Tensor& g);
/// conv2d plus a per-output-channel bias.
Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& b);

Tensor add_channel_bias(const Tensor& x, const Tensor& b);
Tensor channel_sum(const Tensor& x);
Tensor broadcast_channels(const Tensor& b, std::size_t h, std::size_t w);

/// 2x2 max pooling with stride 2 on [C,H,W] (H, W even). Ties go to the first
/// element in row-major window order.
Tensor maxpool2d(const Tensor& x);
/// out[o] = x[index[o]]
Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<std::size_t>> index, Shape out_shape);
/// out = zeros(out_shape); out[index[o]] += x[o]
Tensor scatter(const Tensor& x, std::shared_ptr<const std::vector<std::size_t>> index, Shape out_shape);

/// x if x > 0 else slope*x; the derivative at 0 is `slope`.
Tensor leaky_relu(const Tensor& x, double slope = 0.1);
/// Elementwise product with a constant mask.
Tensor mask_mul(const Tensor& x, std::shared_ptr<const std::vector<double>> mask);

/// W[M,N] x[N] -> [M]
Tensor matvec(const Tensor& w, const Tensor& x);
/// W[M,N]^T g[M] -> [N]
Tensor matvec_t(const Tensor& w, const Tensor& g);
/// a[M] b[N]^T -> [M,N]
Tensor outer(const Tensor& a, const Tensor& b);
/// W x + b
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

/// Zero padding at the trailing edge of the two spatial axes of [C,H,W].
Tensor pad2d(const Tensor& x, std::size_t h, std::size_t w);
/// Leading [C,h,w] block of [C,H,W].
Tensor crop2d(const Tensor& x, std::size_t h, std::size_t w);

// ---- differentiation -----------------------------------------------------

/// Gradients of scalar `out` w.r.t. `inputs`. Only paths that reach an input are
/// traversed. With create_graph the results are differentiable graph nodes.
/// Inputs that `out` does not depend on get zero gradients.
std::vector<Tensor> grad(const Tensor& out, const std::vector<Tensor>& inputs, bool create_graph = false);

/// Accumulates d out / d node into grad() of every node in out's graph that
/// requires grad. Throws InvalidInput if `out` is not a scalar.
void backward(const Tensor& out);

// ---- parameters ----------------------------------------------------------

/// Named leaf tensors, in insertion order.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor value);
  [[nodiscard]] const Tensor& get(const std::string& name) const;
  [[nodiscard]] Tensor& get(const std::string& name);
  [[nodiscard]] bool contains(const std::string& name) const;
  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] std::size_t total_numel() const;
  [[nodiscard]] const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  [[nodiscard]] std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  void zero_grad();
  /// Deep copy with fresh leaves (no shared storage).
  [[nodiscard]] ParamStore clone() const;

  /// Writes `<stem>.bin` (little-endian doubles, concatenated) and `<stem>.json`
  /// ({"format_version":1,"params":{name:{"shape":[...],"offset":bytes}}}).
  void save(const std::filesystem::path& stem) const;
  /// Loads values into existing parameters; names and shapes must match.
  void load(const std::filesystem::path& stem);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

}  // namespace fwigan::nn
