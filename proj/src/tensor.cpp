#include "mockforge/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "mockforge/kernels.hpp"

namespace mockforge::tensor {

using nlohmann::json;

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_seq{1};

using NodePtr = std::shared_ptr<Node>;

NodePtr make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != numel(shape)) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) + " does not match shape " +
                     shape_str(shape));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  return n;
}

// Creates an op result. The backward rule is attached only when recording is on
// and some input requires a gradient.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<NodePtr> parents,
                   std::function<void(Node&)> bw) {
  auto n = make_leaf(std::move(shape), std::move(values), false);
  if (g_grad_enabled) {
    const bool any = std::any_of(parents.begin(), parents.end(), [](const NodePtr& p) { return p->requires_grad; });
    if (any) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backward = std::move(bw);
    }
  }
  return Tensor(std::move(n));
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

std::string two_shapes(const char* op, const Tensor& a, const Tensor& b) {
  return std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape());
}

std::size_t last_dim(const Tensor& a) {
  require(a.rank() >= 1, "operation requires rank >= 1");
  return a.shape().back();
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.numel());
  const auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return make_result(a.shape(), std::move(out), {a.node_ptr()}, [deriv](Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
  });
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = tensor::numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = tensor::numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1}, {v}, requires_grad); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

Tensor Tensor::detach() const { return Tensor(make_leaf(shape(), node_->value, false)); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(b.rank() == 2 && a.rank() >= 1 && a.shape().back() == b.dim(0), two_shapes("matmul", a, b));
  const std::size_t k = b.dim(0);
  const std::size_t n = b.dim(1);
  const std::size_t m = a.numel() / k;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);
  std::vector<double> out(m * n);
  kernels::gemm(false, false, m, n, k, a.values().data(), b.values().data(), out.data(), false);
  return make_result(std::move(out_shape), std::move(out), {a.node_ptr(), b.node_ptr()}, [m, n, k](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      kernels::gemm(false, true, m, k, n, self.grad.data(), pb.value.data(), pa.grad.data(), true);
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      kernels::gemm(true, false, k, n, m, pa.value.data(), self.grad.data(), pb.grad.data(), true);
    }
  });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0), two_shapes("bmm", a, b));
  const std::size_t g = a.dim(0);
  const std::size_t m = a.dim(1);
  const std::size_t k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  require((transpose_b ? b.dim(2) : b.dim(1)) == k, two_shapes("bmm", a, b));
  std::vector<double> out(g * m * n);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < g; ++i) {
    kernels::gemm(false, transpose_b, m, n, k, av + i * m * k, bv + i * k * n, out.data() + i * m * n, false);
  }
  return make_result({g, m, n}, std::move(out), {a.node_ptr(), b.node_ptr()}, [g, m, n, k, transpose_b](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) pa.ensure_grad();
    if (pb.requires_grad) pb.ensure_grad();
    for (std::size_t i = 0; i < g; ++i) {
      const double* dc = self.grad.data() + i * m * n;
      const double* ai = pa.value.data() + i * m * k;
      const double* bi = pb.value.data() + i * k * n;
      if (pa.requires_grad) {
        // dA = dC * op(B)^T
        kernels::gemm(false, !transpose_b, m, k, n, dc, bi, pa.grad.data() + i * m * k, true);
      }
      if (pb.requires_grad) {
        if (transpose_b) {
          kernels::gemm(true, false, n, k, m, dc, ai, pb.grad.data() + i * k * n, true);
        } else {
          kernels::gemm(true, false, k, n, m, ai, dc, pb.grad.data() + i * k * n, true);
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    return make_result(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
      for (auto& p : self.parents) {
        if (!p->requires_grad) continue;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      }
    });
  }
  require(b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.dim(0), two_shapes("add", a, b));
  const std::size_t d = b.dim(0);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i % d];
  return make_result(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [d](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i % d] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), two_shapes("sub", a, b));
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make_result(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), two_shapes("mul", a, b));
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_result(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary(a, [lo](double x) { return x < lo ? lo : x; }, [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

Tensor softmax(const Tensor& a) {
  const std::size_t d = last_dim(a);
  const std::size_t rows = a.numel() / d;
  std::vector<double> out(a.numel());
  const auto in = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in.data() + r * d;
    double* y = out.data() + r * d;
    const double mx = *std::max_element(x, x + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < d; ++j) y[j] /= z;
  }
  return make_result(a.shape(), std::move(out), {a.node_ptr()}, [d, rows](Node& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * d;
      const double* dy = self.grad.data() + r * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += dy[j] * y[j];
      for (std::size_t j = 0; j < d; ++j) p.grad[r * d + j] += y[j] * (dy[j] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& a) {
  const std::size_t d = last_dim(a);
  const std::size_t rows = a.numel() / d;
  std::vector<double> out(a.numel());
  const auto in = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in.data() + r * d;
    const double mx = *std::max_element(x, x + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x[j] - lse;
  }
  return make_result(a.shape(), std::move(out), {a.node_ptr()}, [d, rows](Node& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * d;
      const double* dy = self.grad.data() + r * d;
      double total = 0.0;
      for (std::size_t j = 0; j < d; ++j) total += dy[j];
      for (std::size_t j = 0; j < d; ++j) p.grad[r * d + j] += dy[j] - std::exp(y[j]) * total;
    }
  });
}

Tensor logsumexp(const Tensor& a) {
  const std::size_t d = last_dim(a);
  const std::size_t rows = a.numel() / d;
  std::vector<double> out(rows);
  const auto in = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in.data() + r * d;
    const double mx = *std::max_element(x, x + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += std::exp(x[j] - mx);
    out[r] = mx + std::log(z);
  }
  Shape shape(a.shape().begin(), a.shape().end() - 1);
  if (shape.empty()) shape.push_back(1);
  return make_result(std::move(shape), std::move(out), {a.node_ptr()}, [d, rows](Node& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        p.grad[r * d + j] += self.grad[r] * std::exp(p.value[r * d + j] - self.value[r]);
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = last_dim(x);
  require(gamma.rank() == 1 && gamma.dim(0) == d && beta.shape() == gamma.shape(), two_shapes("layer_norm", x, gamma));
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  // Normalized activations and reciprocal std are kept for the backward rule.
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  const auto in = x.values();
  const auto g = gamma.values();
  const auto bt = beta.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * g[j] + bt[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
                     [d, rows, xhat, rstd](Node& self) {
                       auto& px = *self.parents[0];
                       auto& pg = *self.parents[1];
                       auto& pb = *self.parents[2];
                       if (pg.requires_grad) pg.ensure_grad();
                       if (pb.requires_grad) pb.ensure_grad();
                       if (px.requires_grad) px.ensure_grad();
                       std::vector<double> dxhat(d);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* dy = self.grad.data() + r * d;
                         const double* h = xhat->data() + r * d;
                         double mean_d = 0.0;
                         double mean_dh = 0.0;
                         for (std::size_t j = 0; j < d; ++j) {
                           if (pg.requires_grad) pg.grad[j] += dy[j] * h[j];
                           if (pb.requires_grad) pb.grad[j] += dy[j];
                           dxhat[j] = dy[j] * pg.value[j];
                           mean_d += dxhat[j];
                           mean_dh += dxhat[j] * h[j];
                         }
                         if (!px.requires_grad) continue;
                         mean_d /= static_cast<double>(d);
                         mean_dh /= static_cast<double>(d);
                         for (std::size_t j = 0; j < d; ++j) {
                           px.grad[r * d + j] += (*rstd)[r] * (dxhat[j] - mean_d - h[j] * mean_dh);
                         }
                       }
                     });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  require(axis < s0.size(), "concat axis out of range for " + shape_str(s0));
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    require(p.rank() == s0.size(), two_shapes("concat", parts[0], p));
    for (std::size_t i = 0; i < s0.size(); ++i) {
      if (i != axis) require(p.dim(i) == s0[i], two_shapes("concat", parts[0], p));
    }
    lens.push_back(p.dim(axis));
    total += p.dim(axis);
    parents.push_back(p.node_ptr());
  }
  Shape shape = s0;
  shape[axis] = total;
  std::vector<double> out(outer * total * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t off = o * total * inner;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
      const std::size_t chunk = lens[pi] * inner;
      std::copy_n(parts[pi].values().data() + o * chunk, chunk, out.data() + off);
      off += chunk;
    }
  }
  return make_result(std::move(shape), std::move(out), std::move(parents), [outer, inner, total, lens](Node& self) {
    for (std::size_t o = 0; o < outer; ++o) {
      std::size_t off = o * total * inner;
      for (std::size_t pi = 0; pi < lens.size(); ++pi) {
        const std::size_t chunk = lens[pi] * inner;
        auto& p = *self.parents[pi];
        if (p.requires_grad) {
          p.ensure_grad();
          for (std::size_t i = 0; i < chunk; ++i) p.grad[o * chunk + i] += self.grad[off + i];
        }
        off += chunk;
      }
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  require(axis < a.rank() && begin < end && end <= a.dim(axis),
          "slice [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " + std::to_string(axis) +
              " of " + shape_str(a.shape()));
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t full = a.dim(axis) * inner;
  const std::size_t len = (end - begin) * inner;
  Shape shape = a.shape();
  shape[axis] = end - begin;
  std::vector<double> out(outer * len);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.values().data() + o * full + begin * inner, len, out.data() + o * len);
  }
  return make_result(std::move(shape), std::move(out), {a.node_ptr()}, [outer, full, len, begin, inner](Node& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < len; ++i) p.grad[o * full + begin * inner + i] += self.grad[o * len + i];
    }
  });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require(table.rank() == 2, "embedding table must be rank 2, got " + shape_str(table.shape()));
  const std::size_t v = table.dim(0);
  const std::size_t d = table.dim(1);
  std::vector<int> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * d);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] >= 0 && static_cast<std::size_t>(idx[r]) < v,
            "embedding id " + std::to_string(idx[r]) + " outside table of " + std::to_string(v) + " rows");
    std::copy_n(table.values().data() + static_cast<std::size_t>(idx[r]) * d, d, out.data() + r * d);
  }
  return make_result({idx.size(), d}, std::move(out), {table.node_ptr()}, [idx, d](Node& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t j = 0; j < d; ++j) p.grad[static_cast<std::size_t>(idx[r]) * d + j] += self.grad[r * d + j];
    }
  });
}

Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, double value) {
  require(mask.size() == a.numel(), "masked_fill: mask length " + std::to_string(mask.size()) +
                                        " does not match " + shape_str(a.shape()));
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  std::vector<double> out(a.values().begin(), a.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (m[i]) out[i] = value;
  }
  return make_result(a.shape(), std::move(out), {a.node_ptr()}, [m](Node& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (!m[i]) p.grad[i] += self.grad[i];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(numel(shape) == a.numel(), "reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(out), {a.node_ptr()}, [](Node& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor permute_0213(const Tensor& a) {
  require(a.rank() == 4, "permute_0213 requires rank 4, got " + shape_str(a.shape()));
  const std::size_t d0 = a.dim(0), d1 = a.dim(1), d2 = a.dim(2), d3 = a.dim(3);
  std::vector<double> out(a.numel());
  const auto in = a.values();
  for (std::size_t i = 0; i < d0; ++i)
    for (std::size_t j = 0; j < d1; ++j)
      for (std::size_t k = 0; k < d2; ++k)
        std::copy_n(in.data() + ((i * d1 + j) * d2 + k) * d3, d3, out.data() + ((i * d2 + k) * d1 + j) * d3);
  return make_result({d0, d2, d1, d3}, std::move(out), {a.node_ptr()}, [d0, d1, d2, d3](Node& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < d0; ++i)
      for (std::size_t j = 0; j < d1; ++j)
        for (std::size_t k = 0; k < d2; ++k)
          for (std::size_t l = 0; l < d3; ++l)
            p.grad[((i * d1 + j) * d2 + k) * d3 + l] += self.grad[((i * d2 + k) * d1 + j) * d3 + l];
  });
}

Tensor pick(const Tensor& a, std::span<const int> idx) {
  require(a.rank() == 2 && a.dim(0) == idx.size(), "pick: " + shape_str(a.shape()) + " with " +
                                                        std::to_string(idx.size()) + " indices");
  const std::size_t c = a.dim(1);
  std::vector<int> ix(idx.begin(), idx.end());
  std::vector<double> out(ix.size());
  for (std::size_t r = 0; r < ix.size(); ++r) {
    require(ix[r] >= 0 && static_cast<std::size_t>(ix[r]) < c, "pick index out of range");
    out[r] = a.values()[r * c + static_cast<std::size_t>(ix[r])];
  }
  return make_result({ix.size()}, std::move(out), {a.node_ptr()}, [ix, c](Node& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t r = 0; r < ix.size(); ++r) p.grad[r * c + static_cast<std::size_t>(ix[r])] += self.grad[r];
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return make_result({1}, {acc}, {a.node_ptr()}, [](Node& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (double& g : p.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor dropout(const Tensor& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  require(p < 1.0, "dropout probability must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<double> mask(a.numel());
  for (double& m : mask) m = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  return mul(a, Tensor::from(a.shape(), std::move(mask)));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got " + (loss.defined() ? shape_str(loss.shape()) : "undefined"));
  }
  if (!loss.requires_grad()) return;
  std::vector<Node*> order;
  std::vector<Node*> stack{loss.node()};
  std::unordered_set<const Node*> visited{loss.node()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && visited.insert(p.get()).second) {
        stack.push_back(p.get());
      }
    }
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->seq > b->seq; });
  for (Node* n : order) {
    if (n->backward) n->grad.assign(n->value.size(), 0.0);
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (Node* n : order) {
    if (n->backward) n->backward(*n);
  }
}

Tensor& ParameterStore::add(std::string name, Tensor t) {
  if (contains(name)) throw ShapeError("duplicate parameter name '" + name + "'");
  t.node()->requires_grad = true;
  items_.emplace_back(std::move(name), std::move(t));
  return items_.back().second;
}

Tensor& ParameterStore::add_xavier(std::string name, Shape shape, Rng& rng) {
  const double fan_in = static_cast<double>(shape.size() >= 2 ? shape[shape.size() - 2] : shape[0]);
  const double fan_out = static_cast<double>(shape.back());
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = dist(rng);
  return add(std::move(name), Tensor::from(std::move(shape), std::move(v), true));
}

Tensor& ParameterStore::add_constant(std::string name, Shape shape, double value) {
  return add(std::move(name), Tensor::full(std::move(shape), value, true));
}

const Tensor& ParameterStore::get(std::string_view name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw ShapeError("no parameter named '" + std::string(name) + "'");
}

Tensor& ParameterStore::get(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const ParameterStore&>(*this).get(name));
}

bool ParameterStore::contains(std::string_view name) const {
  return std::any_of(items_.begin(), items_.end(), [&](const auto& it) { return it.first == name; });
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : items_) n += t.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, t] : items_) t.zero_grad();
}

Adam::Adam(ParameterStore& params, AdamConfig config) : params_(&params), config_(config) {
  for (const auto& [_, t] : params.items()) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void Adam::step() {
  auto& items = params_->items();
  if (items.size() != m_.size()) throw ShapeError("parameter set changed after optimizer construction");
  for (const auto& [name, t] : items) {
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter '" + name + "'");
    }
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < items.size(); ++i) {
    Tensor t = items[i].second;
    auto val = t.mutable_values();
    const auto g = t.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < val.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * gj;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      val[j] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params, const GradCheckOptions& opt) {
  for (auto& p : params) {
    if (!p.requires_grad()) throw ShapeError("grad_check parameter does not require grad");
    p.zero_grad();
  }
  backward(f());
  Rng rng(opt.seed);
  double worst = 0.0;
  for (auto& p : params) {
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    std::vector<std::size_t> coords(p.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > opt.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords_per_param);
    }
    for (std::size_t c : coords) {
      auto vals = p.mutable_values();
      const double orig = vals[c];
      // A kink (relu, clamp) inside the stencil spoils one step size but not all
      // three; a wrong analytic gradient disagrees at every step size.
      double err = std::numeric_limits<double>::infinity();
      for (const double delta : {opt.delta, opt.delta / 10, opt.delta / 100}) {
        double fp = 0.0;
        double fm = 0.0;
        {
          NoGradGuard guard;
          vals[c] = orig + delta;
          fp = f().item();
          vals[c] = orig - delta;
          fm = f().item();
        }
        vals[c] = orig;
        const double fd = (fp - fm) / (2.0 * delta);
        err = std::min(err, std::abs(analytic[c] - fd) / std::max(1e-8, std::abs(analytic[c]) + std::abs(fd)));
        if (err < 1e-6) break;
      }
      worst = std::max(worst, err);
    }
  }
  return worst;
}

std::pair<json, std::string> snapshot(const ParameterStore& params) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  json entries = json::object();
  std::string blob;
  for (const auto& [name, t] : params.items()) {
    entries[name] = {{"shape", t.shape()}, {"dtype", "f64"}, {"offset", blob.size()}};
    blob.append(reinterpret_cast<const char*>(t.values().data()), t.numel() * sizeof(double));
  }
  json manifest = {{"parameters", entries}, {"total_bytes", blob.size()}};
  return {manifest, blob};
}

void restore(ParameterStore& params, const json& manifest, std::string_view blob) {
  const auto& entries = manifest.at("parameters");
  if (entries.size() != params.size()) {
    throw DataError("weight snapshot has " + std::to_string(entries.size()) + " parameters, model expects " +
                    std::to_string(params.size()));
  }
  for (const auto& [name, t] : params.items()) {
    if (!entries.contains(name)) throw DataError("weight snapshot lacks parameter '" + name + "'");
    const auto& e = entries.at(name);
    const auto shape = e.at("shape").get<Shape>();
    if (shape != t.shape()) {
      throw DataError("parameter '" + name + "' has shape " + shape_str(shape) + " in snapshot, model expects " +
                      shape_str(t.shape()));
    }
    if (e.at("dtype").get<std::string>() != "f64") throw DataError("unsupported dtype for '" + name + "'");
    const auto offset = e.at("offset").get<std::size_t>();
    const std::size_t bytes = t.numel() * sizeof(double);
    if (offset + bytes > blob.size()) throw DataError("weight blob truncated at '" + name + "'");
    Tensor dst = t;
    std::memcpy(dst.mutable_values().data(), blob.data() + offset, bytes);
  }
}

}  // namespace mockforge::tensor
