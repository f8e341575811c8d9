#pragma once

// Dense f64 tensors with a dynamic reverse-mode tape and an Adam optimizer.
//
// A Tape is rebuilt for every forward pass. Leaves enter it either as
// constants or as parameters; every op records its output together with a
// closure that pushes the output gradient back into its inputs. Only nodes
// that (transitively) depend on a parameter carry gradients.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace astitch::tc {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  /// Value of a one-element tensor.
  double item() const;

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool v) { requires_grad_ = v; }

  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
};

// Checkpoint serialization: u32 rank, u32 extents, then f64 payload; all
// little-endian, row-major.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Gradients produced by Tape::backward, indexed by node.
class Gradients {
 public:
  /// Gradient w.r.t. v; a zero tensor when v does not reach the loss.
  Tensor operator[](Var v) const;

 private:
  friend class Tape;
  std::vector<Tensor> grads_;
  std::vector<Shape> shapes_;
};

class Tape {
 public:
  using BackwardFn =
      std::function<void(const Tensor& grad_out, const Tensor& out, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }

  /// Records an op output. The output requires grad iff any input does;
  /// `fn` is dropped otherwise. Throws NumericError on non-finite output.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn fn, const char* op);

  /// Reverse sweep from a scalar loss. Each recorded op is visited once, in
  /// reverse recording order.
  Gradients backward(Var loss);

  /// Accumulation buffer for node `id` during backward; valid only inside a
  /// BackwardFn and only for nodes that require grad.
  Tensor& grad_buffer(std::size_t id);

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor>* active_grads_ = nullptr;
};

// Ops. All inputs must live on the same tape.
Var matmul(Var a, Var b);
/// Softmax over `axis`, max-subtracted.
Var softmax(Var x, std::size_t axis);
/// x: [C_in x T], w: [C_out x C_in x K], bias: [C_out]; zero "same" padding, K odd.
Var conv1d(Var x, Var w, Var bias);
/// mean |pred - target|; subgradient 0 at ties.
Var mae_loss(Var pred, Var target);
Var sum(Var x);
Var add(Var a, Var b);
Var scale(Var x, double c);
/// x: [R x C], bias: [R]; bias broadcast along columns.
Var add_bias(Var x, Var bias);
Var tanh(Var x);
Var transpose(Var x);
Var reshape(Var x, Shape shape);

// Eager helpers on plain tensors.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  /// Zero moments shaped like `params`.
  static AdamState init(std::span<const Tensor* const> params, AdamConfig config = {});
};

/// One bias-corrected Adam update in place.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace astitch::tc
