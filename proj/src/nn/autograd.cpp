#include "nn/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "core/errors.hpp"

namespace kinscope::ag {

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_fail(const std::string& op, const std::string& why) {
  throw ShapeError(op + ": " + why);
}

Var make(std::vector<double> value, Shape shape, std::vector<Var> parents, std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->shape = std::move(shape);
  const bool needs = g_grad_enabled &&
                     std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p && p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(bw);
  }
  return node;
}

/// Gradient buffer of parent i, or nullptr when it does not need one.
double* grad_of(Node& self, std::size_t i) {
  auto& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

int last_dim(const Var& x) {
  if (x->shape.empty()) shape_fail("op", "scalar has no last dimension");
  return x->shape.back();
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() noexcept { return g_grad_enabled; }

Var constant(std::vector<double> values, Shape shape) {
  if (values.size() != shape_size(shape)) shape_fail("constant", "value count does not match " + shape_string(shape));
  auto node = std::make_shared<Node>();
  node->value = std::move(values);
  node->shape = std::move(shape);
  return node;
}

Var parameter(std::vector<double> values, Shape shape) {
  auto node = constant(std::move(values), std::move(shape));
  node->requires_grad = true;
  return node;
}

Var scalar(double value) { return constant({value}, {1}); }

void backward(const Var& root) {
  if (root->size() != 1) throw ShapeError("backward: root must be a scalar");
  if (!root->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
    shape_fail("matmul", shape_string(a->shape) + " x " + shape_string(b->shape));
  const int n = a->shape[0], k = a->shape[1], m = b->shape[1];
  std::vector<double> out(static_cast<std::size_t>(n) * m, 0.0);
  const double* A = a->value.data();
  const double* B = b->value.data();
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = B + p * m;
      double* orow = out.data() + i * m;
      for (int j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  return make(std::move(out), {n, m}, {a, b}, [n, k, m](Node& self) {
    const double* G = self.grad.data();
    const double* A = self.parents[0]->value.data();
    const double* B = self.parents[1]->value.data();
    if (double* ga = grad_of(self, 0))
      for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          for (int j = 0; j < m; ++j) acc += G[i * m + j] * B[p * m + j];
          ga[i * k + p] += acc;
        }
    if (double* gb = grad_of(self, 1))
      for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          for (int j = 0; j < m; ++j) gb[p * m + j] += aip * G[i * m + j];
        }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (weight->shape.size() != 2) shape_fail("linear", "weight must be 2-D");
  const int k = weight->shape[0], m = weight->shape[1];
  if (last_dim(x) != k) shape_fail("linear", "input " + shape_string(x->shape) + " vs weight " + shape_string(weight->shape));
  if (bias->size() != static_cast<std::size_t>(m)) shape_fail("linear", "bias size mismatch");
  const int n = static_cast<int>(x->size() / k);
  std::vector<double> out(static_cast<std::size_t>(n) * m);
  const double* X = x->value.data();
  const double* W = weight->value.data();
  const double* bv = bias->value.data();
  for (int i = 0; i < n; ++i) {
    double* orow = out.data() + static_cast<std::size_t>(i) * m;
    std::copy(bv, bv + m, orow);
    for (int p = 0; p < k; ++p) {
      const double xip = X[static_cast<std::size_t>(i) * k + p];
      const double* wrow = W + p * m;
      for (int j = 0; j < m; ++j) orow[j] += xip * wrow[j];
    }
  }
  Shape shape = x->shape;
  shape.back() = m;
  return make(std::move(out), std::move(shape), {x, weight, bias}, [n, k, m](Node& self) {
    const double* G = self.grad.data();
    const double* X = self.parents[0]->value.data();
    const double* W = self.parents[1]->value.data();
    if (double* gx = grad_of(self, 0))
      for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = G + static_cast<std::size_t>(i) * m;
          const double* wrow = W + p * m;
          for (int j = 0; j < m; ++j) acc += grow[j] * wrow[j];
          gx[static_cast<std::size_t>(i) * k + p] += acc;
        }
    if (double* gw = grad_of(self, 1))
      for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
          const double xip = X[static_cast<std::size_t>(i) * k + p];
          const double* grow = G + static_cast<std::size_t>(i) * m;
          double* gwrow = gw + p * m;
          for (int j = 0; j < m; ++j) gwrow[j] += xip * grow[j];
        }
    if (double* gb = grad_of(self, 2))
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) gb[j] += G[static_cast<std::size_t>(i) * m + j];
  });
}

Var add(const Var& a, const Var& b) {
  if (a->size() != b->size()) shape_fail("add", shape_string(a->shape) + " + " + shape_string(b->shape));
  std::vector<double> out(a->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make(std::move(out), a->shape, {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (double* g = grad_of(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Var add_broadcast(const Var& x, const Var& e) {
  const std::size_t period = e->size();
  if (period == 0 || x->size() % period != 0) shape_fail("add_broadcast", "size mismatch");
  std::vector<double> out(x->value);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += e->value[i % period];
  return make(std::move(out), x->shape, {x, e}, [period](Node& self) {
    if (double* gx = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    if (double* ge = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ge[i % period] += self.grad[i];
  });
}

Var mul(const Var& a, const Var& b) {
  if (a->size() != b->size()) shape_fail("mul", shape_string(a->shape) + " * " + shape_string(b->shape));
  std::vector<double> out(a->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return make(std::move(out), a->shape, {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (double* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * bv[i];
    if (double* gb = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * av[i];
  });
}

Var scale(const Var& a, double factor) {
  std::vector<double> out(a->value);
  for (double& v : out) v *= factor;
  return make(std::move(out), a->shape, {a}, [factor](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Var gelu(const Var& x) {
  std::vector<double> out(x->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x->value[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  return make(std::move(out), x->shape, {x}, [](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    const auto& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double v = xv[i];
      const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      g[i] += self.grad[i] * d;
    }
  });
}

Var tanh(const Var& x) {
  std::vector<double> out(x->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x->value[i]);
  return make(std::move(out), x->shape, {x}, [](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  if (shape_size(shape) != x->size()) shape_fail("reshape", shape_string(x->shape) + " -> " + shape_string(shape));
  return make(x->value, std::move(shape), {x}, [](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Var transpose_last2(const Var& x) {
  if (x->shape.size() != 3) shape_fail("transpose_last2", "expects [N, A, B]");
  const int n = x->shape[0], a = x->shape[1], b = x->shape[2];
  std::vector<double> out(x->size());
  for (int i = 0; i < n; ++i)
    for (int r = 0; r < a; ++r)
      for (int c = 0; c < b; ++c)
        out[(static_cast<std::size_t>(i) * b + c) * a + r] = x->value[(static_cast<std::size_t>(i) * a + r) * b + c];
  return make(std::move(out), {n, b, a}, {x}, [n, a, b](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (int i = 0; i < n; ++i)
      for (int r = 0; r < a; ++r)
        for (int c = 0; c < b; ++c)
          g[(static_cast<std::size_t>(i) * a + r) * b + c] += self.grad[(static_cast<std::size_t>(i) * b + c) * a + r];
  });
}

Var slice_rows(const Var& x, int begin, int end) {
  if (x->shape.empty() || begin < 0 || end > x->shape[0] || begin > end) shape_fail("slice_rows", "bad range");
  const std::size_t row = x->size() / static_cast<std::size_t>(x->shape[0]);
  std::vector<double> out(x->value.begin() + static_cast<std::ptrdiff_t>(begin * row),
                          x->value.begin() + static_cast<std::ptrdiff_t>(end * row));
  Shape shape = x->shape;
  shape[0] = end - begin;
  const std::size_t offset = static_cast<std::size_t>(begin) * row;
  return make(std::move(out), std::move(shape), {x}, [offset](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) shape_fail("concat_rows", "no inputs");
  Shape shape = parts[0]->shape;
  std::vector<double> out;
  int rows = 0;
  for (const auto& p : parts) {
    if (p->shape.size() != shape.size() || !std::equal(p->shape.begin() + 1, p->shape.end(), shape.begin() + 1))
      shape_fail("concat_rows", "trailing shapes differ");
    out.insert(out.end(), p->value.begin(), p->value.end());
    rows += p->shape[0];
  }
  shape[0] = rows;
  return make(std::move(out), std::move(shape), parts, [](Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      const std::size_t n = self.parents[p]->size();
      if (double* g = grad_of(self, p))
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      offset += n;
    }
  });
}

Var stack_columns(const std::vector<Var>& columns) {
  if (columns.empty()) shape_fail("stack_columns", "no inputs");
  const std::size_t n = columns[0]->size();
  const std::size_t k = columns.size();
  std::vector<double> out(n * k);
  for (std::size_t c = 0; c < k; ++c) {
    if (columns[c]->size() != n) shape_fail("stack_columns", "column lengths differ");
    for (std::size_t i = 0; i < n; ++i) out[i * k + c] = columns[c]->value[i];
  }
  return make(std::move(out), {static_cast<int>(n), static_cast<int>(k)}, columns, [n, k](Node& self) {
    for (std::size_t c = 0; c < k; ++c)
      if (double* g = grad_of(self, c))
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i * k + c];
  });
}

Var select_column(const Var& x, int column) {
  if (x->shape.size() != 2 || column < 0 || column >= x->shape[1]) shape_fail("select_column", "bad column");
  const int n = x->shape[0], k = x->shape[1];
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[i] = x->value[static_cast<std::size_t>(i) * k + column];
  return make(std::move(out), {n}, {x}, [k, column](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i * k + column] += self.grad[i];
  });
}

Var sum_rows(const Var& x) {
  if (x->shape.size() != 2) shape_fail("sum_rows", "expects [n, k]");
  const int n = x->shape[0], k = x->shape[1];
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) out[i] += x->value[static_cast<std::size_t>(i) * k + j];
  return make(std::move(out), {n}, {x}, [n, k](Node& self) {
    if (double* g = grad_of(self, 0))
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) g[static_cast<std::size_t>(i) * k + j] += self.grad[i];
  });
}

Var softmax_rows(const Var& x) {
  const int k = last_dim(x);
  const std::size_t n = x->size() / static_cast<std::size_t>(k);
  std::vector<double> out(x->size());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x->value.data() + i * k;
    double* orow = out.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += (orow[j] = std::exp(row[j] - mx));
    for (int j = 0; j < k; ++j) orow[j] /= z;
  }
  return make(std::move(out), x->shape, {x}, [n, k](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < n; ++i) {
      const double* y = self.value.data() + i * k;
      const double* gy = self.grad.data() + i * k;
      double dot = 0.0;
      for (int j = 0; j < k; ++j) dot += gy[j] * y[j];
      for (int j = 0; j < k; ++j) g[i * k + j] += y[j] * (gy[j] - dot);
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const int d = last_dim(x);
  if (gamma->size() != static_cast<std::size_t>(d) || beta->size() != static_cast<std::size_t>(d))
    shape_fail("layer_norm", "affine parameter size mismatch");
  const std::size_t n = x->size() / static_cast<std::size_t>(d);
  std::vector<double> out(x->size());
  auto xhat = std::make_shared<std::vector<double>>(x->size());
  auto inv_std = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x->value.data() + i * d;
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += row[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (int j = 0; j < d; ++j) {
      const double h = (row[j] - mean) * is;
      (*xhat)[i * d + j] = h;
      out[i * d + j] = h * gamma->value[j] + beta->value[j];
    }
  }
  return make(std::move(out), x->shape, {x, gamma, beta}, [n, d, xhat, inv_std](Node& self) {
    const double* G = self.grad.data();
    const double* gam = self.parents[1]->value.data();
    double* gx = grad_of(self, 0);
    double* gg = grad_of(self, 1);
    double* gb = grad_of(self, 2);
    for (std::size_t i = 0; i < n; ++i) {
      const double* h = xhat->data() + i * d;
      const double* gy = G + i * d;
      if (gg)
        for (int j = 0; j < d; ++j) gg[j] += gy[j] * h[j];
      if (gb)
        for (int j = 0; j < d; ++j) gb[j] += gy[j];
      if (!gx) continue;
      double mean_dh = 0.0, mean_dh_h = 0.0;
      for (int j = 0; j < d; ++j) {
        const double dh = gy[j] * gam[j];
        mean_dh += dh;
        mean_dh_h += dh * h[j];
      }
      mean_dh /= d;
      mean_dh_h /= d;
      for (int j = 0; j < d; ++j)
        gx[i * d + j] += (*inv_std)[i] * (gy[j] * gam[j] - mean_dh - h[j] * mean_dh_h);
    }
  });
}

Var conv1d(const Var& x, const Var& weight, const Var& bias) {
  if (x->shape.size() != 3 || weight->shape.size() != 3) shape_fail("conv1d", "expects x [N,C,L], w [O,C,K]");
  const int n = x->shape[0], cin = x->shape[1], len = x->shape[2];
  const int cout = weight->shape[0], k = weight->shape[2];
  if (weight->shape[1] != cin) shape_fail("conv1d", "channel mismatch");
  if (k % 2 == 0) shape_fail("conv1d", "kernel size must be odd");
  if (bias->size() != static_cast<std::size_t>(cout)) shape_fail("conv1d", "bias size mismatch");
  const int half = k / 2;
  std::vector<double> out(static_cast<std::size_t>(n) * cout * len);
  const double* X = x->value.data();
  const double* W = weight->value.data();
  for (int s = 0; s < n; ++s)
    for (int o = 0; o < cout; ++o) {
      double* orow = out.data() + (static_cast<std::size_t>(s) * cout + o) * len;
      std::fill(orow, orow + len, bias->value[o]);
      for (int c = 0; c < cin; ++c) {
        const double* xrow = X + (static_cast<std::size_t>(s) * cin + c) * len;
        for (int t = 0; t < k; ++t) {
          const double w = W[(static_cast<std::size_t>(o) * cin + c) * k + t];
          const int shift = t - half;
          const int lo = std::max(0, -shift), hi = std::min(len, len - shift);
          for (int l = lo; l < hi; ++l) orow[l] += w * xrow[l + shift];
        }
      }
    }
  return make(std::move(out), {n, cout, len}, {x, weight, bias}, [n, cin, len, cout, k, half](Node& self) {
    const double* G = self.grad.data();
    const double* X = self.parents[0]->value.data();
    const double* W = self.parents[1]->value.data();
    double* gx = grad_of(self, 0);
    double* gw = grad_of(self, 1);
    double* gb = grad_of(self, 2);
    for (int s = 0; s < n; ++s)
      for (int o = 0; o < cout; ++o) {
        const double* grow = G + (static_cast<std::size_t>(s) * cout + o) * len;
        if (gb)
          for (int l = 0; l < len; ++l) gb[o] += grow[l];
        for (int c = 0; c < cin; ++c) {
          const std::size_t xoff = (static_cast<std::size_t>(s) * cin + c) * len;
          for (int t = 0; t < k; ++t) {
            const std::size_t widx = (static_cast<std::size_t>(o) * cin + c) * k + t;
            const int shift = t - half;
            const int lo = std::max(0, -shift), hi = std::min(len, len - shift);
            if (gw) {
              double acc = 0.0;
              for (int l = lo; l < hi; ++l) acc += grow[l] * X[xoff + l + shift];
              gw[widx] += acc;
            }
            if (gx) {
              const double w = W[widx];
              for (int l = lo; l < hi; ++l) gx[xoff + l + shift] += w * grow[l];
            }
          }
        }
      }
  });
}

Var apply_mask(const Var& x, std::span<const std::uint8_t> mask) {
  if (x->shape.size() != 3) shape_fail("apply_mask", "expects [N,C,L]");
  const int n = x->shape[0], c = x->shape[1], len = x->shape[2];
  if (mask.size() != static_cast<std::size_t>(n) * len) shape_fail("apply_mask", "mask size mismatch");
  auto m = std::make_shared<std::vector<std::uint8_t>>(mask.begin(), mask.end());
  std::vector<double> out(x->size());
  for (int s = 0; s < n; ++s)
    for (int ch = 0; ch < c; ++ch)
      for (int l = 0; l < len; ++l) {
        const std::size_t idx = (static_cast<std::size_t>(s) * c + ch) * len + l;
        out[idx] = (*m)[static_cast<std::size_t>(s) * len + l] ? x->value[idx] : 0.0;
      }
  return make(std::move(out), x->shape, {x}, [n, c, len, m](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (int s = 0; s < n; ++s)
      for (int ch = 0; ch < c; ++ch)
        for (int l = 0; l < len; ++l) {
          const std::size_t idx = (static_cast<std::size_t>(s) * c + ch) * len + l;
          if ((*m)[static_cast<std::size_t>(s) * len + l]) g[idx] += self.grad[idx];
        }
  });
}

Var masked_max_pool(const Var& x, std::span<const std::uint8_t> mask) {
  if (x->shape.size() != 3) shape_fail("masked_max_pool", "expects [N,C,L]");
  const int n = x->shape[0], c = x->shape[1], len = x->shape[2];
  if (mask.size() != static_cast<std::size_t>(n) * len) shape_fail("masked_max_pool", "mask size mismatch");
  std::vector<double> out(static_cast<std::size_t>(n) * c, 0.0);
  auto argmax = std::make_shared<std::vector<std::ptrdiff_t>>(out.size(), -1);
  for (int s = 0; s < n; ++s)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(s) * c + ch) * len;
      double best = -std::numeric_limits<double>::infinity();
      std::ptrdiff_t where = -1;
      for (int l = 0; l < len; ++l) {
        const double v = mask[static_cast<std::size_t>(s) * len + l] ? x->value[base + l]
                                                                      : -std::numeric_limits<double>::infinity();
        if (v > best || std::isnan(v)) {
          best = v;
          where = static_cast<std::ptrdiff_t>(base + l);
          if (std::isnan(v)) break;  // propagate, never skip
        }
      }
      const std::size_t o = static_cast<std::size_t>(s) * c + ch;
      if (where >= 0) {
        out[o] = best;
        (*argmax)[o] = where;
      }
    }
  return make(std::move(out), {n, c}, {x}, [argmax](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < self.grad.size(); ++o)
      if ((*argmax)[o] >= 0) g[(*argmax)[o]] += self.grad[o];
  });
}

Var attention(const Var& q, const Var& k, const Var& v, int heads, std::span<const std::uint8_t> key_mask) {
  if (q->shape.size() != 3 || q->shape != k->shape || q->shape != v->shape)
    shape_fail("attention", "q, k, v must share shape [B,T,D]");
  const int b = q->shape[0], t = q->shape[1], d = q->shape[2];
  if (heads <= 0 || d % heads != 0) shape_fail("attention", "model width not divisible by heads");
  if (!key_mask.empty() && key_mask.size() != static_cast<std::size_t>(b) * t)
    shape_fail("attention", "key mask size mismatch");
  const int dh = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(b) * heads * t * t, 0.0);
  auto km = std::make_shared<std::vector<std::uint8_t>>(key_mask.begin(), key_mask.end());
  std::vector<double> out(q->size(), 0.0);
  const double* Q = q->value.data();
  const double* K = k->value.data();
  const double* V = v->value.data();
  std::vector<double> scores(static_cast<std::size_t>(t));
  for (int s = 0; s < b; ++s)
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < t; ++i) {
        const double* qi = Q + (static_cast<std::size_t>(s) * t + i) * d + h * dh;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < t; ++j) {
          if (!km->empty() && !(*km)[static_cast<std::size_t>(s) * t + j]) continue;
          const double* kj = K + (static_cast<std::size_t>(s) * t + j) * d + h * dh;
          double dot = 0.0;
          for (int e = 0; e < dh; ++e) dot += qi[e] * kj[e];
          scores[j] = dot * inv;
          mx = std::max(mx, scores[j]);
        }
        if (mx == -std::numeric_limits<double>::infinity()) continue;  // no valid key
        double* p = probs->data() + ((static_cast<std::size_t>(s) * heads + h) * t + i) * t;
        double z = 0.0;
        for (int j = 0; j < t; ++j) {
          if (!km->empty() && !(*km)[static_cast<std::size_t>(s) * t + j]) continue;
          z += (p[j] = std::exp(scores[j] - mx));
        }
        double* oi = out.data() + (static_cast<std::size_t>(s) * t + i) * d + h * dh;
        for (int j = 0; j < t; ++j) {
          if (p[j] == 0.0) continue;
          p[j] /= z;
          const double* vj = V + (static_cast<std::size_t>(s) * t + j) * d + h * dh;
          for (int e = 0; e < dh; ++e) oi[e] += p[j] * vj[e];
        }
      }
  return make(std::move(out), q->shape, {q, k, v}, [b, t, d, heads, dh, inv, probs](Node& self) {
    const double* G = self.grad.data();
    const double* Q = self.parents[0]->value.data();
    const double* K = self.parents[1]->value.data();
    const double* V = self.parents[2]->value.data();
    double* gq = grad_of(self, 0);
    double* gk = grad_of(self, 1);
    double* gv = grad_of(self, 2);
    std::vector<double> dp(static_cast<std::size_t>(t));
    for (int s = 0; s < b; ++s)
      for (int h = 0; h < heads; ++h)
        for (int i = 0; i < t; ++i) {
          const double* p = probs->data() + ((static_cast<std::size_t>(s) * heads + h) * t + i) * t;
          const double* gi = G + (static_cast<std::size_t>(s) * t + i) * d + h * dh;
          double weighted = 0.0;
          for (int j = 0; j < t; ++j) {
            if (p[j] == 0.0) {
              dp[j] = 0.0;
              continue;
            }
            const double* vj = V + (static_cast<std::size_t>(s) * t + j) * d + h * dh;
            double acc = 0.0;
            for (int e = 0; e < dh; ++e) acc += gi[e] * vj[e];
            dp[j] = acc;
            weighted += p[j] * acc;
            if (gv) {
              double* gvj = gv + (static_cast<std::size_t>(s) * t + j) * d + h * dh;
              for (int e = 0; e < dh; ++e) gvj[e] += p[j] * gi[e];
            }
          }
          const double* qi = Q + (static_cast<std::size_t>(s) * t + i) * d + h * dh;
          for (int j = 0; j < t; ++j) {
            if (p[j] == 0.0) continue;
            const double ds = p[j] * (dp[j] - weighted) * inv;
            const double* kj = K + (static_cast<std::size_t>(s) * t + j) * d + h * dh;
            if (gq) {
              double* gqi = gq + (static_cast<std::size_t>(s) * t + i) * d + h * dh;
              for (int e = 0; e < dh; ++e) gqi[e] += ds * kj[e];
            }
            if (gk) {
              double* gkj = gk + (static_cast<std::size_t>(s) * t + j) * d + h * dh;
              for (int e = 0; e < dh; ++e) gkj[e] += ds * qi[e];
            }
          }
        }
  });
}

Var contrastive_loss(const Var& embeddings, double temperature) {
  if (embeddings->shape.size() != 2 || embeddings->shape[0] % 2 != 0 || embeddings->shape[0] == 0)
    shape_fail("contrastive_loss", "expects [2n, p] with n >= 1");
  if (!(temperature > 0.0)) throw ConfigError("contrastive temperature must be positive");
  const int rows = embeddings->shape[0], p = embeddings->shape[1], n = rows / 2;
  const double* E = embeddings->value.data();
  // weights[i * rows + j] = dL/dS_ij for anchors i < n
  auto weights = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n) * rows, 0.0);
  std::vector<double> sim(static_cast<std::size_t>(rows));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < rows; ++j) {
      if (j == i) continue;
      double dot = 0.0;
      for (int e = 0; e < p; ++e) dot += E[static_cast<std::size_t>(i) * p + e] * E[static_cast<std::size_t>(j) * p + e];
      sim[j] = dot / temperature;
      mx = std::max(mx, sim[j]);
    }
    double z = 0.0;
    for (int j = 0; j < rows; ++j)
      if (j != i) z += std::exp(sim[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - sim[i + n];
    double* w = weights->data() + static_cast<std::size_t>(i) * rows;
    for (int j = 0; j < rows; ++j)
      if (j != i) w[j] = std::exp(sim[j] - lse);
    w[i + n] -= 1.0;
  }
  return make({total}, {1}, {embeddings}, [n, rows, p, temperature, weights](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    const double up = self.grad[0] / temperature;
    const double* E = self.parents[0]->value.data();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < rows; ++j) {
        const double w = (*weights)[static_cast<std::size_t>(i) * rows + j];
        if (w == 0.0) continue;
        for (int e = 0; e < p; ++e) {
          g[static_cast<std::size_t>(i) * p + e] += up * w * E[static_cast<std::size_t>(j) * p + e];
          g[static_cast<std::size_t>(j) * p + e] += up * w * E[static_cast<std::size_t>(i) * p + e];
        }
      }
  });
}

Var nll_from_probs(const Var& probs, std::span<const int> labels, std::span<const double> weights, double floor) {
  if (probs->shape.size() != 2) shape_fail("nll_from_probs", "expects [n, k]");
  const int n = probs->shape[0], k = probs->shape[1];
  if (labels.size() != static_cast<std::size_t>(n) || weights.size() != static_cast<std::size_t>(n))
    shape_fail("nll_from_probs", "label/weight count mismatch");
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (wsum == 0.0) return make({0.0}, {1}, {}, {});
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  auto wts = std::make_shared<std::vector<double>>(weights.begin(), weights.end());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if ((*wts)[i] == 0.0) continue;
    if ((*lab)[i] < 0 || (*lab)[i] >= k) throw LabelError("family label " + std::to_string((*lab)[i]) + " out of range");
    total += (*wts)[i] * -std::log(std::max(probs->value[static_cast<std::size_t>(i) * k + (*lab)[i]], floor));
  }
  return make({total / wsum}, {1}, {probs}, [n, k, wsum, floor, lab, wts](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    const auto& P = self.parents[0]->value;
    for (int i = 0; i < n; ++i) {
      if ((*wts)[i] == 0.0) continue;
      const std::size_t idx = static_cast<std::size_t>(i) * k + (*lab)[i];
      if (P[idx] > floor) g[idx] += self.grad[0] * -(*wts)[i] / (wsum * P[idx]);
    }
  });
}

Var bce_from_probs(const Var& probs, std::span<const int> targets, double floor) {
  const std::size_t n = probs->size();
  if (targets.size() != n || n == 0) shape_fail("bce_from_probs", "target count mismatch");
  auto tg = std::make_shared<std::vector<int>>(targets.begin(), targets.end());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = probs->value[i];
    total += (*tg)[i] ? -std::log(std::max(y, floor)) : -std::log(std::max(1.0 - y, floor));
  }
  return make({total / static_cast<double>(n)}, {1}, {probs}, [n, floor, tg](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    const auto& Y = self.parents[0]->value;
    const double up = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double y = Y[i];
      if ((*tg)[i]) {
        if (y > floor) g[i] += -up / y;
      } else if (1.0 - y > floor) {
        g[i] += up / (1.0 - y);
      }
    }
  });
}

Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights) {
  if (scalars.size() != weights.size()) shape_fail("weighted_sum", "weight count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i]->size() != 1) shape_fail("weighted_sum", "inputs must be scalars");
    total += weights[i] * scalars[i]->value[0];
  }
  return make({total}, {1}, scalars, [weights](Node& self) {
    for (std::size_t i = 0; i < weights.size(); ++i)
      if (double* g = grad_of(self, i)) g[0] += weights[i] * self.grad[0];
  });
}

}  // namespace kinscope::ag
