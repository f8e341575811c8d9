#include "attnstitch/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "attnstitch/byteio.hpp"
#include "attnstitch/error.hpp"

namespace astitch::tc {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream ss;
  ss << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) ss << 'x';
    ss << shape[i];
  }
  ss << ']';
  return ss.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void write_tensor(std::ostream& os, const Tensor& t) {
  io::put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) io::put_u32(os, static_cast<std::uint32_t>(d));
  for (double v : t.data()) io::put_f64(os, v);
}

Tensor read_tensor(std::istream& is) {
  const std::uint32_t rank = io::get_u32(is);
  if (rank > 8) throw FormatError("tensor rank " + std::to_string(rank) + " out of range");
  Shape shape(rank);
  for (auto& d : shape) d = io::get_u32(is);
  std::vector<double> data(shape_size(shape));
  for (auto& v : data) v = io::get_f64(is);
  return Tensor(std::move(shape), std::move(data));
}

// ---------------------------------------------------------------- tape

const Tensor& Var::value() const { return tape->value(id); }

Tensor Gradients::operator[](Var v) const {
  if (v.id < grads_.size() && grads_[v.id].shape() == shapes_[v.id] &&
      grads_[v.id].size() == shape_size(shapes_[v.id])) {
    return grads_[v.id];
  }
  return Tensor::zeros(v.shape());
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite constant on tape");
  value.set_requires_grad(false);
  nodes_.push_back(Node{std::move(value), false, {}, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite parameter on tape");
  value.set_requires_grad(true);
  nodes_.push_back(Node{std::move(value), true, {}, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn fn, const char* op) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + " produced non-finite values");
  }
  Node node;
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.tape != this) throw ShapeError(std::string(op) + ": input from a different tape");
    node.inputs.push_back(v.id);
    node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
  }
  value.set_requires_grad(node.requires_grad);
  node.value = std::move(value);
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(std::size_t id) {
  auto& g = (*active_grads_)[id];
  const Tensor& v = nodes_[id].value;
  if (g.shape() != v.shape() || g.size() != v.size()) g = Tensor::zeros(v.shape());
  return g;
}

Gradients Tape::backward(Var loss) {
  if (loss.tape != this) throw ShapeError("backward: loss from a different tape");
  if (nodes_[loss.id].value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " +
                     shape_str(nodes_[loss.id].value.shape()));
  }
  Gradients out;
  out.grads_.assign(nodes_.size(), Tensor{});
  out.shapes_.reserve(nodes_.size());
  for (const auto& n : nodes_) out.shapes_.push_back(n.value.shape());

  if (!nodes_[loss.id].requires_grad) return out;
  out.grads_[loss.id] = Tensor::ones(nodes_[loss.id].value.shape());

  active_grads_ = &out.grads_;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward) continue;
    const Tensor& g = out.grads_[id];
    if (g.shape() != n.value.shape() || g.size() != n.value.size()) continue;
    n.backward(g, n.value, *this);
  }
  active_grads_ = nullptr;
  return out;
}

// ---------------------------------------------------------------- eager kernels

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

void require_rank2(const Tensor& t, const char* op) {
  require(t.rank() == 2, std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
  Tensor c({m, n});
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  double* cp = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = cp + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ap[i * k + p];
      if (av == 0.0) continue;
      const double* brow = bp + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require(axis < x.rank(), "softmax: axis " + std::to_string(axis) + " invalid for " +
                               shape_str(x.shape()));
  const auto [outer, n, inner] = split_axis(x.shape(), axis);
  Tensor y(x.shape());
  const auto xs = x.data();
  auto ys = y.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = xs[base];
      for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, xs[base + i * inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = std::exp(xs[base + i * inner] - mx);
        ys[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < n; ++i) ys[base + i * inner] /= total;
    }
  }
  return y;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank2(x, "conv1d");
  require(w.rank() == 3, "conv1d: weight must be [C_out x C_in x K], got " + shape_str(w.shape()));
  const std::size_t cin = x.dim(0), len = x.dim(1);
  const std::size_t cout = w.dim(0), kw = w.dim(2);
  require(w.dim(1) == cin, "conv1d: channel mismatch: input " + shape_str(x.shape()) +
                               ", weight " + shape_str(w.shape()));
  require(kw % 2 == 1, "conv1d: 'same' padding needs an odd kernel, got " + std::to_string(kw));
  require(bias.size() == cout, "conv1d: bias length must equal C_out");
  const std::size_t pad = kw / 2;
  Tensor y({cout, len});
  const double* xp = x.data().data();
  const double* wp = w.data().data();
  double* yp = y.data().data();
  for (std::size_t o = 0; o < cout; ++o) {
    double* yrow = yp + o * len;
    std::fill(yrow, yrow + len, bias[o]);
    for (std::size_t i = 0; i < cin; ++i) {
      const double* xrow = xp + i * len;
      for (std::size_t k = 0; k < kw; ++k) {
        const double wv = wp[(o * cin + i) * kw + k];
        if (wv == 0.0) continue;
        // y[t] += wv * x[t + k - pad] over the t with an in-range source.
        const std::size_t t0 = k < pad ? pad - k : 0;
        const std::size_t t1 = std::min(len, len + pad - k);
        const double* src = xrow + (t0 + k - pad);
        for (std::size_t t = t0; t < t1; ++t) yrow[t] += wv * src[t - t0];
      }
    }
  }
  return y;
}

// ---------------------------------------------------------------- recorded ops

Var matmul(Var a, Var b) {
  Tape& tape = *a.tape;
  Tensor out = matmul(a.value(), b.value());
  const std::size_t ia = a.id, ib = b.id;
  return tape.record(std::move(out), {a, b},
      [ia, ib](const Tensor& g, const Tensor&, Tape& t) {
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
        if (t.requires_grad(ia)) {
          double* da = t.grad_buffer(ia).data().data();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double* grow = g.data().data() + i * n;
              const double* brow = bv.data().data() + p * n;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              da[i * k + p] += acc;
            }
          }
        }
        if (t.requires_grad(ib)) {
          double* db = t.grad_buffer(ib).data().data();
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = g.data().data() + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const double av_ip = av[i * k + p];
              if (av_ip == 0.0) continue;
              double* drow = db + p * n;
              for (std::size_t j = 0; j < n; ++j) drow[j] += av_ip * grow[j];
            }
          }
        }
      },
      "matmul");
}

Var softmax(Var x, std::size_t axis) {
  Tape& tape = *x.tape;
  Tensor out = softmax(x.value(), axis);
  const std::size_t ix = x.id;
  return tape.record(std::move(out), {x},
      [ix, axis](const Tensor& g, const Tensor& y, Tape& t) {
        const auto [outer, n, inner] = split_axis(y.shape(), axis);
        auto dx = t.grad_buffer(ix).data();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += g[base + i * inner] * y[base + i * inner];
            for (std::size_t i = 0; i < n; ++i) {
              const std::size_t idx = base + i * inner;
              dx[idx] += y[idx] * (g[idx] - dot);
            }
          }
        }
      },
      "softmax");
}

Var conv1d(Var x, Var w, Var bias) {
  Tape& tape = *x.tape;
  Tensor out = conv1d(x.value(), w.value(), bias.value());
  const std::size_t ix = x.id, iw = w.id, ib = bias.id;
  return tape.record(std::move(out), {x, w, bias},
      [ix, iw, ib](const Tensor& g, const Tensor&, Tape& t) {
        const Tensor& xv = t.value(ix);
        const Tensor& wv = t.value(iw);
        const std::size_t cin = xv.dim(0), len = xv.dim(1);
        const std::size_t cout = wv.dim(0), kw = wv.dim(2), pad = kw / 2;
        const double* gp = g.data().data();
        if (t.requires_grad(ib)) {
          auto db = t.grad_buffer(ib).data();
          for (std::size_t o = 0; o < cout; ++o) {
            double acc = 0.0;
            for (std::size_t s = 0; s < len; ++s) acc += gp[o * len + s];
            db[o] += acc;
          }
        }
        const bool need_x = t.requires_grad(ix);
        const bool need_w = t.requires_grad(iw);
        double* dx = need_x ? t.grad_buffer(ix).data().data() : nullptr;
        double* dw = need_w ? t.grad_buffer(iw).data().data() : nullptr;
        for (std::size_t o = 0; o < cout; ++o) {
          const double* grow = gp + o * len;
          for (std::size_t i = 0; i < cin; ++i) {
            const double* xrow = xv.data().data() + i * len;
            for (std::size_t k = 0; k < kw; ++k) {
              const std::size_t t0 = k < pad ? pad - k : 0;
              const std::size_t t1 = std::min(len, len + pad - k);
              const std::size_t off = t0 + k - pad;
              const std::size_t widx = (o * cin + i) * kw + k;
              if (need_w) {
                double acc = 0.0;
                for (std::size_t s = t0; s < t1; ++s) acc += grow[s] * xrow[off + s - t0];
                dw[widx] += acc;
              }
              if (need_x) {
                const double wk = wv[widx];
                if (wk == 0.0) continue;
                double* dxrow = dx + i * len + off;
                for (std::size_t s = t0; s < t1; ++s) dxrow[s - t0] += wk * grow[s];
              }
            }
          }
        }
      },
      "conv1d");
}

Var mae_loss(Var pred, Var target) {
  Tape& tape = *pred.tape;
  const Tensor& p = pred.value();
  const Tensor& q = target.value();
  require(p.shape() == q.shape(), "mae_loss: shape mismatch " + shape_str(p.shape()) + " vs " +
                                      shape_str(q.shape()));
  require(p.size() > 0, "mae_loss: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += std::abs(p[i] - q[i]);
  const double n = static_cast<double>(p.size());
  const std::size_t ip = pred.id, iq = target.id;
  return tape.record(Tensor::scalar(total / n), {pred, target},
      [ip, iq, n](const Tensor& g, const Tensor&, Tape& t) {
        const Tensor& pv = t.value(ip);
        const Tensor& qv = t.value(iq);
        const double s = g.item() / n;
        const bool need_p = t.requires_grad(ip);
        const bool need_q = t.requires_grad(iq);
        double* dp = need_p ? t.grad_buffer(ip).data().data() : nullptr;
        double* dq = need_q ? t.grad_buffer(iq).data().data() : nullptr;
        for (std::size_t i = 0; i < pv.size(); ++i) {
          const double d = pv[i] - qv[i];
          const double sg = d > 0.0 ? s : (d < 0.0 ? -s : 0.0);
          if (dp) dp[i] += sg;
          if (dq) dq[i] -= sg;
        }
      },
      "mae_loss");
}

Var sum(Var x) {
  Tape& tape = *x.tape;
  const auto xs = x.value().data();
  const double total = std::accumulate(xs.begin(), xs.end(), 0.0);
  const std::size_t ix = x.id;
  return tape.record(Tensor::scalar(total), {x},
      [ix](const Tensor& g, const Tensor&, Tape& t) {
        for (double& d : t.grad_buffer(ix).data()) d += g.item();
      },
      "sum");
}

Var add(Var a, Var b) {
  Tape& tape = *a.tape;
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return tape.record(std::move(out), {a, b},
      [ia, ib](const Tensor& g, const Tensor&, Tape& t) {
        for (std::size_t id : {ia, ib}) {
          if (!t.requires_grad(id)) continue;
          auto d = t.grad_buffer(id).data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
        }
      },
      "add");
}

Var scale(Var x, double c) {
  Tape& tape = *x.tape;
  Tensor out = x.value();
  for (double& v : out.data()) v *= c;
  const std::size_t ix = x.id;
  return tape.record(std::move(out), {x},
      [ix, c](const Tensor& g, const Tensor&, Tape& t) {
        auto d = t.grad_buffer(ix).data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += c * g[i];
      },
      "scale");
}

Var add_bias(Var x, Var bias) {
  Tape& tape = *x.tape;
  const Tensor& xv = x.value();
  require_rank2(xv, "add_bias");
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  require(bias.value().size() == rows, "add_bias: bias length " +
                                           std::to_string(bias.value().size()) +
                                           " does not match rows " + std::to_string(rows));
  Tensor out = xv;
  for (std::size_t r = 0; r < rows; ++r) {
    const double b = bias.value()[r];
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) += b;
  }
  const std::size_t ix = x.id, ib = bias.id;
  return tape.record(std::move(out), {x, bias},
      [ix, ib, rows, cols](const Tensor& g, const Tensor&, Tape& t) {
        if (t.requires_grad(ix)) {
          auto d = t.grad_buffer(ix).data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
        }
        if (t.requires_grad(ib)) {
          auto d = t.grad_buffer(ib).data();
          for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < cols; ++c) acc += g[r * cols + c];
            d[r] += acc;
          }
        }
      },
      "add_bias");
}

Var tanh(Var x) {
  Tape& tape = *x.tape;
  Tensor out = x.value();
  for (double& v : out.data()) v = std::tanh(v);
  const std::size_t ix = x.id;
  return tape.record(std::move(out), {x},
      [ix](const Tensor& g, const Tensor& y, Tape& t) {
        auto d = t.grad_buffer(ix).data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * (1.0 - y[i] * y[i]);
      },
      "tanh");
}

Var transpose(Var x) {
  Tape& tape = *x.tape;
  const Tensor& xv = x.value();
  require_rank2(xv, "transpose");
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = xv.at(i, j);
  const std::size_t ix = x.id;
  return tape.record(std::move(out), {x},
      [ix, r, c](const Tensor& g, const Tensor&, Tape& t) {
        Tensor& d = t.grad_buffer(ix);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) d.at(i, j) += g.at(j, i);
      },
      "transpose");
}

Var reshape(Var x, Shape shape) {
  Tape& tape = *x.tape;
  require(shape_size(shape) == x.value().size(),
          "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes size");
  Tensor out(std::move(shape), x.value().values());
  const std::size_t ix = x.id;
  return tape.record(std::move(out), {x},
      [ix](const Tensor& g, const Tensor&, Tape& t) {
        auto d = t.grad_buffer(ix).data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      },
      "reshape");
}

// ---------------------------------------------------------------- adam

AdamState AdamState::init(std::span<const Tensor* const> params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const Tensor* p : params) {
    s.m.push_back(Tensor::zeros(p->shape()));
    s.v.push_back(Tensor::zeros(p->shape()));
  }
  return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
  require(params.size() == grads.size() && params.size() == state.m.size() &&
              params.size() == state.v.size(),
          "adam_step: parameter, gradient and moment counts differ");
  state.step += 1;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p];
    const Tensor& g = grads[p];
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    require(w.shape() == g.shape() && w.shape() == m.shape() && w.shape() == v.shape(),
            "adam_step: shape mismatch for parameter " + std::to_string(p));
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

}  // namespace astitch::tc
