#include "aitvit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "aitvit/errors.hpp"

namespace aitvit {

using detail::Node;

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<>());
}

namespace {

void check_shape(const Shape& shape, std::size_t n) {
  for (auto e : shape)
    if (e == 0) throw DimensionError("zero extent in shape " + shape_str(shape));
  if (shape_numel(shape) != n)
    throw DimensionError("shape " + shape_str(shape) + " does not hold " +
                         std::to_string(n) + " values");
}

std::shared_ptr<Node> new_leaf(Shape shape, Buffer values, bool requires_grad) {
  check_shape(shape, values->size());
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2)
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_str(a.shape()));
}

const std::vector<double>& val(const Node& n) { return *n.value; }

// Accumulate g into input i when it participates in differentiation.
template <class F>
void into(Node& self, std::size_t i, F&& f) {
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return;
  f(in.grad_buffer());
}

}  // namespace

// -- Tensor -----------------------------------------------------------------

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(new_leaf(std::move(shape),
                         std::make_shared<const std::vector<double>>(std::move(values)),
                         false));
}

Tensor Tensor::variable(Shape shape, std::vector<double> values) {
  return Tensor(new_leaf(std::move(shape),
                         std::make_shared<const std::vector<double>>(std::move(values)),
                         true));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(new_leaf(std::move(shape),
                         std::make_shared<const std::vector<double>>(n, 0.0),
                         requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(new_leaf({1}, std::make_shared<const std::vector<double>>(1, v),
                         requires_grad));
}

Tensor Tensor::leaf(Shape shape, Buffer values, bool requires_grad) {
  if (!values) throw ContractError("Tensor::leaf: null buffer");
  return Tensor(new_leaf(std::move(shape), std::move(values), requires_grad));
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->shape;
}

std::size_t Tensor::size() const { return node_ ? node_->value->size() : 0; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank())
    throw IndexError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape()));
  return shape()[axis];
}

std::span<const double> Tensor::data() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return *node_->value;
}

const Buffer& Tensor::buffer() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1)
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return data()[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data()[r * shape().back() + c];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const {
  return node_ && node_->grad.size() == node_->value->size();
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient; call backward()");
  return node_->grad;
}

Tensor Tensor::detach(bool requires_grad) const {
  return Tensor(new_leaf(shape(), buffer(), requires_grad));
}

Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::make_shared<const std::vector<double>>(std::move(values));
  for (const auto& t : inputs) n->requires_grad = n->requires_grad || t.requires_grad();
  if (n->requires_grad) {
    n->inputs.reserve(inputs.size());
    for (auto& t : inputs) n->inputs.push_back(t.node());
    n->backward = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

// -- linear algebra ---------------------------------------------------------

namespace {

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* __restrict a, const double* __restrict b, double* __restrict c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x k] += a[m x n] * b[k x n]^T, via an explicit transpose of b so the
// inner loop stays contiguous.
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k) {
  std::vector<double> bt(n * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  gemm_nn(a, bt.data(), c, m, n, k);
}

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const double* __restrict a, const double* __restrict b, double* __restrict c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* __restrict brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      double* __restrict crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& g = self.grad;
    into(self, 0, [&](std::vector<double>& ga) {
      gemm_nt(g.data(), val(*self.inputs[1]).data(), ga.data(), m, n, k);
    });
    into(self, 1, [&](std::vector<double>& gb) {
      gemm_tn(val(*self.inputs[0]).data(), g.data(), gb.data(), m, k, n);
    });
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  const auto x = a.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return make_result({c, r}, std::move(out), {a}, [r, c](Node& self) {
    into(self, 0, [&](std::vector<double>& ga) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[j * r + i];
    });
  });
}

// -- elementwise --------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      into(self, k, [&](std::vector<double>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      });
  });
}

Tensor add(const Tensor& a, double b) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + b;
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    into(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    into(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    into(self, 1, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& x = val(*self.inputs[0]);
    const auto& y = val(*self.inputs[1]);
    into(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y[i];
    });
    into(self, 1, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x[i];
    });
  });
}

Tensor scale(const Tensor& a, double s) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s;
  return make_result(a.shape(), std::move(out), {a}, [s](Node& self) {
    into(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
    });
  });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor sum(const Tensor& a) {
  const auto x = a.data();
  double s = 0.0;
  for (double v : x) s += v;
  return make_result({1}, {s}, {a}, [](Node& self) {
    into(self, 0, [&](std::vector<double>& g) {
      for (double& v : g) v += self.grad[0];
    });
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank2(x, "linear");
  require_rank2(w, "linear");
  if (x.dim(1) != w.dim(0) || b.size() != w.dim(1))
    throw DimensionError("linear: incompatible shapes x" + shape_str(x.shape()) +
                         " w" + shape_str(w.shape()) + " b" + shape_str(b.shape()));
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  std::vector<double> out(m * n);
  const auto bias = b.data();
  for (std::size_t i = 0; i < m; ++i)
    std::copy(bias.begin(), bias.end(), out.begin() + static_cast<std::ptrdiff_t>(i * n));
  gemm_nn(x.data().data(), w.data().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {x, w, b}, [m, k, n](Node& self) {
    const auto& g = self.grad;
    into(self, 0, [&](std::vector<double>& gx) {
      gemm_nt(g.data(), val(*self.inputs[1]).data(), gx.data(), m, n, k);
    });
    into(self, 1, [&](std::vector<double>& gw) {
      gemm_tn(val(*self.inputs[0]).data(), g.data(), gw.data(), m, k, n);
    });
    into(self, 2, [&](std::vector<double>& gb) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    });
  });
}

// -- normalization and activations -------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& sh = x.shape();
  if (axis >= sh.size())
    throw IndexError("softmax: axis " + std::to_string(axis) + " invalid for " +
                     shape_str(sh));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= sh[i];
  for (std::size_t i = axis + 1; i < sh.size(); ++i) inner *= sh[i];
  const std::size_t len = sh[axis];
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, v[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(v[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= z;
    }
  return make_result(sh, std::move(out), {x}, [outer, inner, len](Node& self) {
    const auto& y = *self.value;
    into(self, 0, [&](std::vector<double>& gx) {
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < len; ++j)
            dot += self.grad[base + j * inner] * y[base + j * inner];
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t idx = base + j * inner;
            gx[idx] += y[idx] * (self.grad[idx] - dot);
          }
        }
    });
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const std::size_t d = x.shape().back();
  if (gamma.size() != d || beta.size() != d)
    throw DimensionError("layer_norm: gamma/beta " + shape_str(gamma.shape()) +
                         "/" + shape_str(beta.shape()) + " do not match last axis of " +
                         shape_str(x.shape()));
  const std::size_t rows = x.size() / d;
  const auto v = x.data();
  const auto g = gamma.data();
  const auto b = beta.data();
  std::vector<double> out(v.size());
  // normalized values and inverse std are kept for the backward pass
  auto xhat = std::make_shared<std::vector<double>>(v.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mean) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * g[j] + b[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [rows, d, xhat, rstd](Node& self) {
    const auto& gy = self.grad;
    const auto& gam = val(*self.inputs[1]);
    into(self, 0, [&](std::vector<double>& gx) {
      const double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t r = 0; r < rows; ++r) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double gh = gy[r * d + j] * gam[j];
          s1 += gh;
          s2 += gh * (*xhat)[r * d + j];
        }
        for (std::size_t j = 0; j < d; ++j) {
          const double gh = gy[r * d + j] * gam[j];
          gx[r * d + j] +=
              (*rstd)[r] * (gh - inv_d * s1 - (*xhat)[r * d + j] * inv_d * s2);
        }
      }
    });
    into(self, 1, [&](std::vector<double>& gg) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gg[j] += gy[r * d + j] * (*xhat)[r * d + j];
    });
    into(self, 2, [&](std::vector<double>& gb) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gb[j] += gy[r * d + j];
    });
  });
}

Tensor gelu(const Tensor& x) {
  const auto v = x.data();
  std::vector<double> out(v.size());
  auto cdf = std::make_shared<std::vector<double>>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    (*cdf)[i] = 0.5 * (1.0 + std::erf(v[i] / std::numbers::sqrt2));
    out[i] = v[i] * (*cdf)[i];
  }
  return make_result(x.shape(), std::move(out), {x}, [cdf](Node& self) {
    const auto& v = val(*self.inputs[0]);
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    into(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v[i] * v[i]);
        g[i] += self.grad[i] * ((*cdf)[i] + v[i] * pdf);
      }
    });
  });
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  const auto z = logits.data();
  const std::size_t k = z.size();
  if (label >= k)
    throw IndexError("cross_entropy: label " + std::to_string(label) +
                     " out of range for " + std::to_string(k) + " classes");
  const double mx = *std::max_element(z.begin(), z.end());
  auto p = std::make_shared<std::vector<double>>(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    (*p)[i] = std::exp(z[i] - mx);
    total += (*p)[i];
  }
  for (double& v : *p) v /= total;
  const double loss = -(z[label] - mx - std::log(total));
  return make_result({1}, {loss}, {logits}, [p, label](Node& self) {
    into(self, 0, [&](std::vector<double>& g) {
      const double up = self.grad[0];
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += up * ((*p)[i] - (i == label ? 1.0 : 0.0));
    });
  });
}

// -- reshaping ----------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  check_shape(shape, x.size());
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    into(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (count == 0 || begin + count > r)
    throw IndexError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + shape_str(x.shape()));
  const auto v = x.data();
  std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(begin * c),
                          v.begin() + static_cast<std::ptrdiff_t>((begin + count) * c));
  return make_result({count, c}, std::move(out), {x}, [begin, c](Node& self) {
    into(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * c + i] += self.grad[i];
    });
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_cols");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (count == 0 || begin + count > c)
    throw IndexError("slice_cols: cols [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + shape_str(x.shape()));
  const auto v = x.data();
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = v[i * c + begin + j];
  return make_result({r, count}, std::move(out), {x}, [r, c, begin, count](Node& self) {
    into(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j)
          g[i * c + begin + j] += self.grad[i * count + j];
    });
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t c = parts.front().shape().back();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.dim(1) != c)
      throw DimensionError("concat_rows: column mismatch " + shape_str(p.shape()) +
                           " vs width " + std::to_string(c));
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * c);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result({rows, c}, std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      const std::size_t n = self.inputs[k]->value->size();
      into(self, k, [&](std::vector<double>& g) {
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      });
      off += n;
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = parts.front().dim(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.dim(0) != r)
      throw DimensionError("concat_cols: row mismatch " + shape_str(p.shape()) +
                           " vs height " + std::to_string(r));
    cols += p.dim(1);
  }
  std::vector<double> out(r * cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.dim(1);
    const auto v = p.data();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < pc; ++j) out[i * cols + off + j] = v[i * pc + j];
    off += pc;
  }
  return make_result({r, cols}, std::move(out), parts, [r, cols](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      const std::size_t pc = self.inputs[k]->shape[1];
      into(self, k, [&](std::vector<double>& g) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < pc; ++j) g[i * pc + j] += self.grad[i * cols + off + j];
      });
      off += pc;
    }
  });
}

Tensor unfold_cols(const Tensor& x, std::size_t kernel, std::size_t stride) {
  require_rank2(x, "unfold_cols");
  const std::size_t rails = x.dim(0), width = x.dim(1);
  if (kernel == 0 || stride == 0 || kernel > width || (width - kernel) % stride != 0)
    throw DimensionError("unfold_cols: kernel " + std::to_string(kernel) + " stride " +
                         std::to_string(stride) + " do not tile width " +
                         std::to_string(width));
  const std::size_t windows = (width - kernel) / stride + 1;
  const std::size_t row_len = rails * kernel;
  const auto v = x.data();
  std::vector<double> out(windows * row_len);
  for (std::size_t t = 0; t < windows; ++t)
    for (std::size_t r = 0; r < rails; ++r)
      for (std::size_t j = 0; j < kernel; ++j)
        out[t * row_len + r * kernel + j] = v[r * width + t * stride + j];
  return make_result({windows, row_len}, std::move(out), {x},
                     [windows, rails, kernel, stride, width, row_len](Node& self) {
    into(self, 0, [&](std::vector<double>& g) {
      for (std::size_t t = 0; t < windows; ++t)
        for (std::size_t r = 0; r < rails; ++r)
          for (std::size_t j = 0; j < kernel; ++j)
            g[r * width + t * stride + j] += self.grad[t * row_len + r * kernel + j];
    });
  });
}

// -- backward -----------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward: loss must be a scalar, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  Node* root = loss.node().get();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->grad.assign(n->value->size(), 0.0);
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

}  // namespace aitvit
