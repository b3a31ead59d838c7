#include "hmd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hmd::ad {

// ---------------------------------------------------------------------------
// Var

const Tensor& Var::value() const { return tape_->nodes_[index_].value; }
const Shape& Var::shape() const { return value().shape(); }
std::size_t Var::size() const { return value().size(); }
bool Var::requires_grad() const { return tape_->nodes_[index_].requires_grad; }

double Var::item() const {
  const auto& v = value();
  if (v.size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_to_string(v.shape()));
  return v[0];
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Tensor value, bool requires_grad, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(Var v) const {
  if (!v.valid()) throw std::invalid_argument("operation on an unbound Var");
  if (v.tape_ != this) throw std::invalid_argument("Var belongs to a different tape");
}

Var Tape::leaf(Tensor t) {
  const bool rg = t.requires_grad();
  return push(std::move(t), rg, nullptr);
}

Var Tape::parameter(Tensor t) {
  t.set_requires_grad(true);
  return leaf(std::move(t));
}

Var Tape::constant(Tensor t) {
  t.set_requires_grad(false);
  return leaf(std::move(t));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  bool rg = false;
  for (const auto& in : inputs) {
    check_owner(in);
    rg = rg || nodes_[in.index_].requires_grad;
  }
  return push(std::move(value), rg, std::move(backward));
}

void Tape::backward(Var root) {
  check_owner(root);
  if (nodes_[root.index_].value.size() != 1) {
    throw std::invalid_argument("backward() needs a scalar root, got " +
                                shape_to_string(nodes_[root.index_].value.shape()));
  }
  for (auto& n : nodes_) {
    if (n.requires_grad) {
      n.grad.assign(n.value.size(), 0.0);
    } else {
      n.grad.clear();
    }
  }
  if (!nodes_[root.index_].requires_grad) return;
  nodes_[root.index_].grad[0] = 1.0;
  for (std::size_t i = root.index_ + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, i);
  }
}

std::span<const double> Tape::grad(Var v) const {
  check_owner(v);
  return nodes_[v.index_].grad;
}

Tensor Tape::grad_tensor(Var v) const {
  check_owner(v);
  const auto& n = nodes_[v.index_];
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return Tensor(n.value.shape(), n.grad);
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_to_string(a) + " vs " +
                              shape_to_string(b));
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

void require_rank(const char* op, Var x, std::size_t rank) {
  if (x.value().rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                shape_to_string(x.shape()));
  }
}

template <class F>
Var unary_map(Var x, F f, std::function<void(Tape&, std::size_t, std::size_t)> bw) {
  const auto& xv = x.value();
  Tensor out(xv.shape(), 0.0);
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const auto xi = x.index();
  return x.tape().record(std::move(out), {x}, [xi, bw](Tape& t, std::size_t self) { bw(t, self, xi); });
}

// Shared kernel for channel_projection (W is in×out) and linear (W is out×in).
Var project(const char* op, Var x, Var W, const Var* b, bool transposed) {
  Tape& tape = x.tape();
  const auto& xv = x.value();
  const auto& wv = W.value();
  if (xv.rank() != 1 && xv.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": input must be a vector or matrix, got " +
                                shape_to_string(xv.shape()));
  }
  if (wv.rank() != 2) throw std::invalid_argument(std::string(op) + ": weight must be a matrix, got " +
                                                  shape_to_string(wv.shape()));
  const std::size_t m = xv.rank() == 1 ? 1 : xv.shape()[0];
  const std::size_t q = xv.shape().back();
  const std::size_t w_in = transposed ? wv.shape()[1] : wv.shape()[0];
  const std::size_t n = transposed ? wv.shape()[0] : wv.shape()[1];
  if (w_in != q) shape_error(op, xv.shape(), wv.shape());
  if (b) {
    const auto& bv = b->value();
    if (bv.rank() != 1 || bv.size() != n) shape_error(op, wv.shape(), bv.shape());
  }

  Shape out_shape = xv.rank() == 1 ? Shape{n} : Shape{m, n};
  Tensor out(out_shape, 0.0);
  const double* xp = xv.data().data();
  const double* wp = wv.data().data();
  double* op_ = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = op_ + i * n;
    if (b) std::copy(b->value().data().begin(), b->value().data().end(), orow);
    const double* xrow = xp + i * q;
    if (!transposed) {
      for (std::size_t k = 0; k < q; ++k) {
        const double xk = xrow[k];
        if (xk == 0.0) continue;
        const double* wrow = wp + k * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += xk * wrow[j];
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        const double* wrow = wp + j * q;
        double acc = 0.0;
        for (std::size_t k = 0; k < q; ++k) acc += xrow[k] * wrow[k];
        orow[j] += acc;
      }
    }
  }

  const auto xi = x.index();
  const auto wi = W.index();
  const bool has_b = b != nullptr;
  const auto bi = has_b ? b->index() : 0;
  auto backward = [xi, wi, bi, has_b, m, q, n, transposed](Tape& t, std::size_t self) {
    const auto g = t.grad_mut(self);
    const double* xp = t.value(xi).data().data();
    const double* wp = t.value(wi).data().data();
    if (t.requires_grad(xi)) {
      auto gx = t.grad_mut(xi);
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        double* gxrow = gx.data() + i * q;
        for (std::size_t k = 0; k < q; ++k) {
          double acc = 0.0;
          if (!transposed) {
            const double* wrow = wp + k * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * wrow[j];
          } else {
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * wp[j * q + k];
          }
          gxrow[k] += acc;
        }
      }
    }
    if (t.requires_grad(wi)) {
      auto gw = t.grad_mut(wi);
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        const double* xrow = xp + i * q;
        for (std::size_t k = 0; k < q; ++k) {
          const double xk = xrow[k];
          if (xk == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) {
            if (!transposed) {
              gw[k * n + j] += xk * grow[j];
            } else {
              gw[j * q + k] += xk * grow[j];
            }
          }
        }
      }
    }
    if (has_b && t.requires_grad(bi)) {
      auto gb = t.grad_mut(bi);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    }
  };
  if (has_b) return tape.record(std::move(out), {x, W, *b}, std::move(backward));
  return tape.record(std::move(out), {x, W}, std::move(backward));
}

}  // namespace

// ---------------------------------------------------------------------------
// Operations

Var channel_projection(Var x, Var W) { return project("channel_projection", x, W, nullptr, false); }
Var channel_projection(Var x, Var W, Var b) { return project("channel_projection", x, W, &b, false); }
Var linear(Var x, Var W) { return project("linear", x, W, nullptr, true); }
Var linear(Var x, Var W, Var b) { return project("linear", x, W, &b, true); }

Var circular_conv(Var kernel, Var signal) {
  require_rank("circular_conv", kernel, 1);
  require_rank("circular_conv", signal, 1);
  require_same_shape("circular_conv", kernel, signal);
  const auto& kv = kernel.value();
  const auto& sv = signal.value();
  const std::size_t n = kv.size();
  Tensor out(Shape{n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += kv[j] * sv[(i + n - j) % n];
    out[i] = acc;
  }
  const auto ki = kernel.index();
  const auto si = signal.index();
  return kernel.tape().record(std::move(out), {kernel, signal}, [ki, si, n](Tape& t, std::size_t self) {
    const auto g = t.grad_mut(self);
    const auto& kv = t.value(ki);
    const auto& sv = t.value(si);
    if (t.requires_grad(ki)) {
      auto gk = t.grad_mut(ki);
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += g[i] * sv[(i + n - j) % n];
        gk[j] += acc;
      }
    }
    if (t.requires_grad(si)) {
      auto gs = t.grad_mut(si);
      for (std::size_t l = 0; l < n; ++l) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += g[i] * kv[(i + n - l) % n];
        gs[l] += acc;
      }
    }
  });
}

Var softmax(Var x) {
  require_rank("softmax", x, 1);
  const auto& xv = x.value();
  const std::size_t k = xv.size();
  const double mx = *std::max_element(xv.data().begin(), xv.data().end());
  Tensor out(Shape{k}, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = std::exp(xv[i] - mx);
    z += out[i];
  }
  for (std::size_t i = 0; i < k; ++i) out[i] /= z;
  const auto xi = x.index();
  return x.tape().record(std::move(out), {x}, [xi, k](Tape& t, std::size_t self) {
    if (!t.requires_grad(xi)) return;
    const auto g = t.grad_mut(self);
    const auto& y = t.value(self);
    double dot = 0.0;
    for (std::size_t i = 0; i < k; ++i) dot += g[i] * y[i];
    auto gx = t.grad_mut(xi);
    for (std::size_t i = 0; i < k; ++i) gx[i] += y[i] * (g[i] - dot);
  });
}

Var tanh(Var x) {
  return unary_map(
      x, [](double v) { return std::tanh(v); },
      [](Tape& t, std::size_t self, std::size_t xi) {
        if (!t.requires_grad(xi)) return;
        const auto g = t.grad_mut(self);
        const auto& y = t.value(self);
        auto gx = t.grad_mut(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
      });
}

Var sigmoid(Var x) {
  return unary_map(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](Tape& t, std::size_t self, std::size_t xi) {
        if (!t.requires_grad(xi)) return;
        const auto g = t.grad_mut(self);
        const auto& y = t.value(self);
        auto gx = t.grad_mut(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
      });
}

Var relu(Var x) {
  return unary_map(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](Tape& t, std::size_t self, std::size_t xi) {
        if (!t.requires_grad(xi)) return;
        const auto g = t.grad_mut(self);
        const auto& xv = t.value(xi);
        auto gx = t.grad_mut(xi);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (xv[i] > 0.0) gx[i] += g[i];
        }
      });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  out.set_requires_grad(false);
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const auto ai = a.index();
  const auto bi = b.index();
  return a.tape().record(std::move(out), {a, b}, [ai, bi](Tape& t, std::size_t self) {
    const auto g = t.grad_mut(self);
    for (auto idx : {ai, bi}) {
      if (!t.requires_grad(idx)) continue;
      auto gi = t.grad_mut(idx);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  out.set_requires_grad(false);
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const auto ai = a.index();
  const auto bi = b.index();
  return a.tape().record(std::move(out), {a, b}, [ai, bi](Tape& t, std::size_t self) {
    const auto g = t.grad_mut(self);
    if (t.requires_grad(ai)) {
      auto ga = t.grad_mut(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(bi)) {
      auto gb = t.grad_mut(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  out.set_requires_grad(false);
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto ai = a.index();
  const auto bi = b.index();
  return a.tape().record(std::move(out), {a, b}, [ai, bi](Tape& t, std::size_t self) {
    const auto g = t.grad_mut(self);
    const auto& av = t.value(ai);
    const auto& bv = t.value(bi);
    if (t.requires_grad(ai)) {
      auto ga = t.grad_mut(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(bi)) {
      auto gb = t.grad_mut(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var x, double factor) {
  return unary_map(
      x, [factor](double v) { return v * factor; },
      [factor](Tape& t, std::size_t self, std::size_t xi) {
        if (!t.requires_grad(xi)) return;
        const auto g = t.grad_mut(self);
        auto gx = t.grad_mut(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
      });
}

Var concat(Var a, Var b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.empty() || as.size() != bs.size() || !std::equal(as.begin(), as.end() - 1, bs.begin())) {
    shape_error("concat", as, bs);
  }
  const std::size_t ca = as.back();
  const std::size_t cb = bs.back();
  const std::size_t outer = a.size() / ca;
  Shape out_shape = as;
  out_shape.back() = ca + cb;
  Tensor out(out_shape, 0.0);
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(av.data().begin() + o * ca, ca, out.data().begin() + o * (ca + cb));
    std::copy_n(bv.data().begin() + o * cb, cb, out.data().begin() + o * (ca + cb) + ca);
  }
  const auto ai = a.index();
  const auto bi = b.index();
  return a.tape().record(std::move(out), {a, b}, [ai, bi, ca, cb, outer](Tape& t, std::size_t self) {
    const auto g = t.grad_mut(self);
    if (t.requires_grad(ai)) {
      auto ga = t.grad_mut(ai);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < ca; ++i) ga[o * ca + i] += g[o * (ca + cb) + i];
    }
    if (t.requires_grad(bi)) {
      auto gb = t.grad_mut(bi);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < cb; ++i) gb[o * cb + i] += g[o * (ca + cb) + ca + i];
    }
  });
}

Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const auto xi = x.index();
  return x.tape().record(Tensor::scalar(acc), {x}, [xi](Tape& t, std::size_t self) {
    if (!t.requires_grad(xi)) return;
    const double g = t.grad_mut(self)[0];
    for (auto& gx : t.grad_mut(xi)) gx += g;
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Var mean_rows(Var x) {
  require_rank("mean_rows", x, 2);
  const auto& xv = x.value();
  const std::size_t m = xv.rows();
  const std::size_t n = xv.cols();
  Tensor out(Shape{n}, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += xv.at(i, j);
  for (std::size_t j = 0; j < n; ++j) out[j] /= static_cast<double>(m);
  const auto xi = x.index();
  return x.tape().record(std::move(out), {x}, [xi, m, n](Tape& t, std::size_t self) {
    if (!t.requires_grad(xi)) return;
    const auto g = t.grad_mut(self);
    auto gx = t.grad_mut(xi);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j] * inv;
  });
}

Var add_rows(Var x, Var v) {
  require_rank("add_rows", x, 2);
  require_rank("add_rows", v, 1);
  const std::size_t m = x.value().rows();
  const std::size_t n = x.value().cols();
  if (v.size() != n) shape_error("add_rows", x.shape(), v.shape());
  Tensor out = x.value();
  out.set_requires_grad(false);
  const auto& vv = v.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += vv[j];
  const auto xi = x.index();
  const auto vi = v.index();
  return x.tape().record(std::move(out), {x, v}, [xi, vi, m, n](Tape& t, std::size_t self) {
    const auto g = t.grad_mut(self);
    if (t.requires_grad(xi)) {
      auto gx = t.grad_mut(xi);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(vi)) {
      auto gv = t.grad_mut(vi);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gv[j] += g[i * n + j];
    }
  });
}

Var stack(std::span<const Var> rows) {
  if (rows.empty()) throw std::invalid_argument("stack: no rows");
  Tape& tape = rows.front().tape();
  const Shape first = rows.front().shape();
  if (first.size() != 1) throw std::invalid_argument("stack: rows must be vectors, got " + shape_to_string(first));
  const std::size_t n = first[0];
  const std::size_t k = rows.size();
  Tensor out(Shape{k, n}, 0.0);
  std::vector<std::size_t> idx(k);
  for (std::size_t r = 0; r < k; ++r) {
    if (rows[r].shape() != first) shape_error("stack", first, rows[r].shape());
    const auto& rv = rows[r].value();
    std::copy(rv.data().begin(), rv.data().end(), out.data().begin() + r * n);
    idx[r] = rows[r].index();
  }
  return tape.record(std::move(out), rows, [idx = std::move(idx), n](Tape& t, std::size_t self) {
    const auto g = t.grad_mut(self);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (!t.requires_grad(idx[r])) continue;
      auto gr = t.grad_mut(idx[r]);
      for (std::size_t j = 0; j < n; ++j) gr[j] += g[r * n + j];
    }
  });
}

Var row(Var x, std::size_t i) {
  require_rank("row", x, 2);
  const auto& xv = x.value();
  if (i >= xv.rows()) {
    throw std::out_of_range("row " + std::to_string(i) + " out of range for " + shape_to_string(xv.shape()));
  }
  const std::size_t n = xv.cols();
  Tensor out(Shape{n}, std::vector<double>(xv.data().begin() + i * n, xv.data().begin() + (i + 1) * n));
  const auto xi = x.index();
  return x.tape().record(std::move(out), {x}, [xi, i, n](Tape& t, std::size_t self) {
    if (!t.requires_grad(xi)) return;
    const auto g = t.grad_mut(self);
    auto gx = t.grad_mut(xi);
    for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j];
  });
}

Var reshape(Var x, Shape shape) {
  if (shape_size(shape) != x.size()) shape_error("reshape", x.shape(), shape);
  Tensor out(std::move(shape), x.value().data());
  const auto xi = x.index();
  return x.tape().record(std::move(out), {x}, [xi](Tape& t, std::size_t self) {
    if (!t.requires_grad(xi)) return;
    const auto g = t.grad_mut(self);
    auto gx = t.grad_mut(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var slice(Var x, std::size_t offset, std::size_t length) {
  require_rank("slice", x, 1);
  if (length == 0 || offset + length > x.size()) {
    throw std::out_of_range("slice [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                            ") out of range for " + shape_to_string(x.shape()));
  }
  const auto& xv = x.value();
  Tensor out(Shape{length},
             std::vector<double>(xv.data().begin() + offset, xv.data().begin() + offset + length));
  const auto xi = x.index();
  return x.tape().record(std::move(out), {x}, [xi, offset, length](Tape& t, std::size_t self) {
    if (!t.requires_grad(xi)) return;
    const auto g = t.grad_mut(self);
    auto gx = t.grad_mut(xi);
    for (std::size_t i = 0; i < length; ++i) gx[offset + i] += g[i];
  });
}

Var cross_entropy(Var probabilities, std::size_t target) {
  require_rank("cross_entropy", probabilities, 1);
  const auto& pv = probabilities.value();
  if (target >= pv.size()) {
    throw std::out_of_range("cross_entropy: target " + std::to_string(target) + " out of range for " +
                            std::to_string(pv.size()) + " classes");
  }
  const double p = pv[target];
  const double clamped = std::max(p, kProbabilityFloor);
  const auto pi = probabilities.index();
  return probabilities.tape().record(
      Tensor::scalar(-std::log(clamped)), {probabilities}, [pi, target](Tape& t, std::size_t self) {
        if (!t.requires_grad(pi)) return;
        const double p = t.value(pi)[target];
        if (p <= kProbabilityFloor) return;
        t.grad_mut(pi)[target] += -t.grad_mut(self)[0] / p;
      });
}

}  // namespace hmd::ad
