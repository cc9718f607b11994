// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "alignopt/error.hpp"
#include "alignopt/random.hpp"

namespace alignopt {

// Values are held as doubles. In Float32 mode every op output and every
// optimizer update is rounded to the nearest float, which reproduces 32-bit
// storage semantics while keeping one code path for both modes.
enum class Precision { Float32, Float64 };

namespace detail {
inline std::atomic<Precision>& precision_flag() {
  static std::atomic<Precision> flag{Precision::Float32};
  return flag;
}
}  // namespace detail

inline Precision precision() { return detail::precision_flag().load(std::memory_order_relaxed); }
inline void set_precision(Precision p) { detail::precision_flag().store(p, std::memory_order_relaxed); }

class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p) : prev_(precision()) { set_precision(p); }
  ~PrecisionScope() { set_precision(prev_); }
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision prev_;
};

inline void round_to_precision(std::vector<double>& v) {
  if (precision() == Precision::Float32)
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

struct Node {
  int rows = 0;
  int cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  double* grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad.data();
  }
};

/// Row-major matrix on a define-by-run tape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor make(int rows, int cols, std::vector<double> values, bool requires_grad = false) {
    if (rows < 0 || cols < 0 || values.size() != static_cast<std::size_t>(rows) * cols)
      throw Error(ErrorCode::ShapeMismatch, "value count does not match " + std::to_string(rows) + "x" +
                                                std::to_string(cols));
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor zeros(int rows, int cols, bool requires_grad = false) {
    return make(rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) { return make(1, 1, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }
  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  double at(int i, int j) const { return node_->value[static_cast<std::size_t>(i) * node_->cols + j]; }
  double item() const {
    if (size() != 1) throw Error(ErrorCode::NonScalarLoss, "item() on a non-scalar tensor");
    return node_->value[0];
  }
  const std::vector<double>& data() const { return node_->value; }
  std::vector<double>& mutable_data() { return node_->value; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { node_->grad.clear(); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline Tensor result(int rows, int cols, std::vector<double> values, const std::vector<Tensor>& parents,
                     std::function<void(Node&)> backward) {
  round_to_precision(values);
  Tensor out = Tensor::make(rows, cols, std::move(values));
  bool needs = false;
  for (const auto& p : parents) needs |= p.requires_grad();
  if (needs) {
    auto& n = *out.node();
    n.requires_grad = true;
    n.parents.reserve(parents.size());
    for (const auto& p : parents) n.parents.push_back(p.node());
    n.backward = std::move(backward);
  }
  return out;
}

inline std::string shape_str(const Tensor& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

// b may be full-shape, a row (1 x c), a column (r x 1) or a scalar.
inline void require_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  const bool rows_ok = b.rows() == a.rows() || b.rows() == 1;
  const bool cols_ok = b.cols() == a.cols() || b.cols() == 1;
  if (!rows_ok || !cols_ok)
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": cannot broadcast " + shape_str(b) + " to " +
                                              shape_str(a));
}

inline std::size_t bidx(const Node& b, int i, int j) {
  return static_cast<std::size_t>(b.rows == 1 ? 0 : i) * b.cols + (b.cols == 1 ? 0 : j);
}

}  // namespace detail

inline Tensor detach(const Tensor& x) { return Tensor::make(x.rows(), x.cols(), x.data()); }

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw Error(ErrorCode::ShapeMismatch, "matmul: " + detail::shape_str(a) + " by " + detail::shape_str(b));
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (int i = 0; i < m; ++i) {
    double* ci = &c[static_cast<std::size_t>(i) * n];
    for (int t = 0; t < k; ++t) {
      const double av = A[static_cast<std::size_t>(i) * k + t];
      if (av == 0.0) continue;
      const double* bt = &B[static_cast<std::size_t>(t) * n];
      for (int j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
  return detail::result(m, n, std::move(c), {a, b}, [m, k, n](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    const double* g = self.grad.data();
    if (A.requires_grad) {
      double* ga = A.grad_buffer();
      for (int i = 0; i < m; ++i)
        for (int t = 0; t < k; ++t) {
          double s = 0;
          const double* gi = g + static_cast<std::size_t>(i) * n;
          const double* bt = &B.value[static_cast<std::size_t>(t) * n];
          for (int j = 0; j < n; ++j) s += gi[j] * bt[j];
          ga[static_cast<std::size_t>(i) * k + t] += s;
        }
    }
    if (B.requires_grad) {
      double* gb = B.grad_buffer();
      for (int i = 0; i < m; ++i)
        for (int t = 0; t < k; ++t) {
          const double av = A.value[static_cast<std::size_t>(i) * k + t];
          if (av == 0.0) continue;
          const double* gi = g + static_cast<std::size_t>(i) * n;
          double* gbt = gb + static_cast<std::size_t>(t) * n;
          for (int j = 0; j < n; ++j) gbt[j] += av * gi[j];
        }
    }
  });
}

namespace detail {

template <typename F, typename DA, typename DB>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
  require_broadcast(a, b, name);
  const int r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  const Node& bn = *b.node();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * c + j;
      out[k] = f(a.data()[k], bn.value[bidx(bn, i, j)]);
    }
  return result(r, c, std::move(out), {a, b}, [r, c, da, db](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    double* ga = A.requires_grad ? A.grad_buffer() : nullptr;
    double* gb = B.requires_grad ? B.grad_buffer() : nullptr;
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * c + j;
        const std::size_t kb = bidx(B, i, j);
        const double g = self.grad[k];
        if (ga) ga[k] += g * da(A.value[k], B.value[kb]);
        if (gb) gb[kb] += g * db(A.value[k], B.value[kb]);
      }
  });
}

template <typename F, typename D>
Tensor unary(const Tensor& x, F f, D d) {
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = f(x.data()[k]);
  return result(x.rows(), x.cols(), std::move(out), {x}, [d](Node& self) {
    Node& X = *self.parents[0];
    double* gx = X.grad_buffer();
    for (std::size_t k = 0; k < self.value.size(); ++k) gx[k] += self.grad[k] * d(X.value[k], self.value[k]);
  });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Tensor scale(const Tensor& x, double s) {
  return detail::unary(x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

inline Tensor add_scalar(const Tensor& x, double s) {
  return detail::unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      x,
      [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor log(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary(x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

/// log(1 + e^x), evaluated without overflow.
inline Tensor softplus(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); });
}

inline Tensor transpose(const Tensor& x) {
  const int r = x.rows(), c = x.cols();
  std::vector<double> out(x.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(j) * r + i] = x.data()[static_cast<std::size_t>(i) * c + j];
  return detail::result(c, r, std::move(out), {x}, [r, c](Node& self) {
    double* gx = self.parents[0]->grad_buffer();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) gx[static_cast<std::size_t>(i) * c + j] += self.grad[static_cast<std::size_t>(j) * r + i];
  });
}

inline Tensor sum(const Tensor& x) {
  double s = 0;
  for (double v : x.data()) s += v;
  return detail::result(1, 1, {s}, {x}, [](Node& self) {
    Node& X = *self.parents[0];
    double* gx = X.grad_buffer();
    for (std::size_t k = 0; k < X.value.size(); ++k) gx[k] += self.grad[0];
  });
}

inline Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw Error(ErrorCode::ShapeMismatch, "mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

/// Column means over rows: r x c -> 1 x c.
inline Tensor mean_rows(const Tensor& x) {
  const int r = x.rows(), c = x.cols();
  if (r == 0) throw Error(ErrorCode::ShapeMismatch, "mean_rows of zero rows");
  std::vector<double> out(c, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[j] += x.data()[static_cast<std::size_t>(i) * c + j];
  for (double& v : out) v /= r;
  return detail::result(1, c, std::move(out), {x}, [r, c](Node& self) {
    double* gx = self.parents[0]->grad_buffer();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) gx[static_cast<std::size_t>(i) * c + j] += self.grad[j] / r;
  });
}

/// Row sums: r x c -> r x 1.
inline Tensor sum_cols(const Tensor& x) {
  const int r = x.rows(), c = x.cols();
  std::vector<double> out(r, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[i] += x.data()[static_cast<std::size_t>(i) * c + j];
  return detail::result(r, 1, std::move(out), {x}, [r, c](Node& self) {
    double* gx = self.parents[0]->grad_buffer();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) gx[static_cast<std::size_t>(i) * c + j] += self.grad[i];
  });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of nothing");
  const int r = parts[0].rows();
  std::vector<int> offsets;
  int c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw Error(ErrorCode::ShapeMismatch, "concat_cols: row counts differ");
    offsets.push_back(c);
    c += p.cols();
  }
  std::vector<double> out(static_cast<std::size_t>(r) * c);
  for (std::size_t q = 0; q < parts.size(); ++q)
    for (int i = 0; i < r; ++i)
      std::copy_n(&parts[q].data()[static_cast<std::size_t>(i) * parts[q].cols()], parts[q].cols(),
                  &out[static_cast<std::size_t>(i) * c + offsets[q]]);
  return detail::result(r, c, std::move(out), parts, [r, c, offsets](Node& self) {
    for (std::size_t q = 0; q < self.parents.size(); ++q) {
      Node& P = *self.parents[q];
      if (!P.requires_grad) continue;
      double* gp = P.grad_buffer();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < P.cols; ++j)
          gp[static_cast<std::size_t>(i) * P.cols + j] += self.grad[static_cast<std::size_t>(i) * c + offsets[q] + j];
    }
  });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of nothing");
  const int c = parts[0].cols();
  int r = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.cols() != c) throw Error(ErrorCode::ShapeMismatch, "concat_rows: column counts differ");
    r += p.rows();
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return detail::result(r, c, std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& pp : self.parents) {
      Node& P = *pp;
      if (P.requires_grad) {
        double* gp = P.grad_buffer();
        for (std::size_t k = 0; k < P.value.size(); ++k) gp[k] += self.grad[off + k];
      }
      off += P.value.size();
    }
  });
}

inline Tensor slice_cols(const Tensor& x, int start, int len) {
  if (start < 0 || len < 0 || start + len > x.cols())
    throw Error(ErrorCode::ShapeMismatch, "slice_cols out of range for " + detail::shape_str(x));
  const int r = x.rows(), c = x.cols();
  std::vector<double> out(static_cast<std::size_t>(r) * len);
  for (int i = 0; i < r; ++i)
    std::copy_n(&x.data()[static_cast<std::size_t>(i) * c + start], len, &out[static_cast<std::size_t>(i) * len]);
  return detail::result(r, len, std::move(out), {x}, [r, c, start, len](Node& self) {
    double* gx = self.parents[0]->grad_buffer();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < len; ++j)
        gx[static_cast<std::size_t>(i) * c + start + j] += self.grad[static_cast<std::size_t>(i) * len + j];
  });
}

/// Rows of x selected (with repetition) by index.
inline Tensor gather_rows(const Tensor& x, const std::vector<int>& index) {
  const int c = x.cols();
  std::vector<double> out(index.size() * static_cast<std::size_t>(c));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= x.rows())
      throw Error(ErrorCode::IndexOutOfRange, "gather_rows index " + std::to_string(index[i]));
    std::copy_n(&x.data()[static_cast<std::size_t>(index[i]) * c], c, &out[i * c]);
  }
  return detail::result(static_cast<int>(index.size()), c, std::move(out), {x}, [index, c](Node& self) {
    double* gx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < index.size(); ++i)
      for (int j = 0; j < c; ++j) gx[static_cast<std::size_t>(index[i]) * c + j] += self.grad[i * c + j];
  });
}

/// One element per row: out[i] = x[i, cols[i]], shape r x 1.
inline Tensor pick(const Tensor& x, const std::vector<int>& cols) {
  if (static_cast<int>(cols.size()) != x.rows()) throw Error(ErrorCode::ShapeMismatch, "pick needs one column per row");
  const int c = x.cols();
  std::vector<double> out(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] < 0 || cols[i] >= c) throw Error(ErrorCode::IndexOutOfRange, "pick column " + std::to_string(cols[i]));
    out[i] = x.data()[i * c + cols[i]];
  }
  return detail::result(x.rows(), 1, std::move(out), {x}, [cols, c](Node& self) {
    double* gx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < cols.size(); ++i) gx[i * c + cols[i]] += self.grad[i];
  });
}

using Mask = std::vector<std::uint8_t>;

namespace detail {

inline const Mask& check_mask(const Tensor& x, const Mask& mask) {
  if (mask.size() != x.size()) throw Error(ErrorCode::ShapeMismatch, "mask size does not match " + shape_str(x));
  return mask;
}

inline void require_row_allowed(const Mask& mask, int r, int c) {
  for (int i = 0; i < r; ++i) {
    bool any = false;
    for (int j = 0; j < c && !any; ++j) any = mask[static_cast<std::size_t>(i) * c + j] != 0;
    if (!any) throw Error(ErrorCode::FullyMaskedRow, "row " + std::to_string(i) + " has no allowed entry");
  }
}

}  // namespace detail

/// Row softmax where mask 0 entries get weight exactly 0.
inline Tensor masked_softmax_rows(const Tensor& x, const Mask& mask) {
  detail::check_mask(x, mask);
  const int r = x.rows(), c = x.cols();
  detail::require_row_allowed(mask, r, c);
  std::vector<double> out(x.size(), 0.0);
  for (int i = 0; i < r; ++i) {
    const std::size_t o = static_cast<std::size_t>(i) * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j)
      if (mask[o + j]) mx = std::max(mx, x.data()[o + j]);
    double z = 0;
    for (int j = 0; j < c; ++j)
      if (mask[o + j]) z += out[o + j] = std::exp(x.data()[o + j] - mx);
    for (int j = 0; j < c; ++j) out[o + j] /= z;
  }
  return detail::result(r, c, std::move(out), {x}, [r, c](Node& self) {
    double* gx = self.parents[0]->grad_buffer();
    for (int i = 0; i < r; ++i) {
      const std::size_t o = static_cast<std::size_t>(i) * c;
      double dot = 0;
      for (int j = 0; j < c; ++j) dot += self.value[o + j] * self.grad[o + j];
      for (int j = 0; j < c; ++j) gx[o + j] += self.value[o + j] * (self.grad[o + j] - dot);
    }
  });
}

inline Tensor softmax_rows(const Tensor& x) { return masked_softmax_rows(x, Mask(x.size(), 1)); }

/// Row log-softmax; masked entries are -inf and receive no gradient.
inline Tensor masked_log_softmax_rows(const Tensor& x, const Mask& mask) {
  detail::check_mask(x, mask);
  const int r = x.rows(), c = x.cols();
  detail::require_row_allowed(mask, r, c);
  std::vector<double> out(x.size(), -std::numeric_limits<double>::infinity());
  for (int i = 0; i < r; ++i) {
    const std::size_t o = static_cast<std::size_t>(i) * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j)
      if (mask[o + j]) mx = std::max(mx, x.data()[o + j]);
    double z = 0;
    for (int j = 0; j < c; ++j)
      if (mask[o + j]) z += std::exp(x.data()[o + j] - mx);
    const double lz = mx + std::log(z);
    for (int j = 0; j < c; ++j)
      if (mask[o + j]) out[o + j] = x.data()[o + j] - lz;
  }
  return detail::result(r, c, std::move(out), {x}, [r, c, mask](Node& self) {
    double* gx = self.parents[0]->grad_buffer();
    for (int i = 0; i < r; ++i) {
      const std::size_t o = static_cast<std::size_t>(i) * c;
      double gsum = 0;
      for (int j = 0; j < c; ++j)
        if (mask[o + j]) gsum += self.grad[o + j];
      for (int j = 0; j < c; ++j)
        if (mask[o + j]) gx[o + j] += self.grad[o + j] - std::exp(self.value[o + j]) * gsum;
    }
  });
}

/// Per-row log-sum-exp over allowed entries: r x c -> r x 1.
inline Tensor masked_logsumexp_rows(const Tensor& x, const Mask& mask) {
  detail::check_mask(x, mask);
  const int r = x.rows(), c = x.cols();
  detail::require_row_allowed(mask, r, c);
  std::vector<double> out(r);
  for (int i = 0; i < r; ++i) {
    const std::size_t o = static_cast<std::size_t>(i) * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j)
      if (mask[o + j]) mx = std::max(mx, x.data()[o + j]);
    double z = 0;
    for (int j = 0; j < c; ++j)
      if (mask[o + j]) z += std::exp(x.data()[o + j] - mx);
    out[i] = mx + std::log(z);
  }
  return detail::result(r, 1, std::move(out), {x}, [r, c, mask](Node& self) {
    Node& X = *self.parents[0];
    double* gx = X.grad_buffer();
    for (int i = 0; i < r; ++i) {
      const std::size_t o = static_cast<std::size_t>(i) * c;
      for (int j = 0; j < c; ++j)
        if (mask[o + j]) gx[o + j] += self.grad[i] * std::exp(X.value[o + j] - self.value[i]);
    }
  });
}

/// Row-wise normalization with learned gain and bias (both 1 x c).
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  const int r = x.rows(), c = x.cols();
  if (gain.size() != static_cast<std::size_t>(c) || bias.size() != static_cast<std::size_t>(c))
    throw Error(ErrorCode::ShapeMismatch, "layer_norm gain/bias width");
  std::vector<double> out(x.size()), xhat(x.size()), inv_std(r);
  for (int i = 0; i < r; ++i) {
    const std::size_t o = static_cast<std::size_t>(i) * c;
    double mu = 0;
    for (int j = 0; j < c; ++j) mu += x.data()[o + j];
    mu /= c;
    double var = 0;
    for (int j = 0; j < c; ++j) var += (x.data()[o + j] - mu) * (x.data()[o + j] - mu);
    var /= c;
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < c; ++j) {
      xhat[o + j] = (x.data()[o + j] - mu) * inv_std[i];
      out[o + j] = xhat[o + j] * gain.data()[j] + bias.data()[j];
    }
  }
  return detail::result(r, c, std::move(out), {x, gain, bias},
                        [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                          Node& X = *self.parents[0];
                          Node& G = *self.parents[1];
                          Node& B = *self.parents[2];
                          double* gg = G.requires_grad ? G.grad_buffer() : nullptr;
                          double* gb = B.requires_grad ? B.grad_buffer() : nullptr;
                          double* gx = X.requires_grad ? X.grad_buffer() : nullptr;
                          for (int i = 0; i < r; ++i) {
                            const std::size_t o = static_cast<std::size_t>(i) * c;
                            double s1 = 0, s2 = 0;
                            for (int j = 0; j < c; ++j) {
                              const double dy = self.grad[o + j];
                              if (gg) gg[j] += dy * xhat[o + j];
                              if (gb) gb[j] += dy;
                              const double dxh = dy * G.value[j];
                              s1 += dxh;
                              s2 += dxh * xhat[o + j];
                            }
                            if (!gx) continue;
                            for (int j = 0; j < c; ++j) {
                              const double dxh = self.grad[o + j] * G.value[j];
                              gx[o + j] += inv_std[i] * (dxh - s1 / c - xhat[o + j] * s2 / c);
                            }
                          }
                        });
}

/// Each row divided by its Euclidean norm; a zero row is an error.
inline Tensor l2_normalize_rows(const Tensor& x) {
  const int r = x.rows(), c = x.cols();
  std::vector<double> out(x.size()), norms(r);
  for (int i = 0; i < r; ++i) {
    const std::size_t o = static_cast<std::size_t>(i) * c;
    double s = 0;
    for (int j = 0; j < c; ++j) s += x.data()[o + j] * x.data()[o + j];
    if (s == 0.0) throw Error(ErrorCode::ZeroNorm, "row " + std::to_string(i) + " has zero norm");
    norms[i] = std::sqrt(s);
    for (int j = 0; j < c; ++j) out[o + j] = x.data()[o + j] / norms[i];
  }
  return detail::result(r, c, std::move(out), {x}, [r, c, norms = std::move(norms)](Node& self) {
    double* gx = self.parents[0]->grad_buffer();
    for (int i = 0; i < r; ++i) {
      const std::size_t o = static_cast<std::size_t>(i) * c;
      double dot = 0;
      for (int j = 0; j < c; ++j) dot += self.value[o + j] * self.grad[o + j];
      for (int j = 0; j < c; ++j) gx[o + j] += (self.grad[o + j] - self.value[o + j] * dot) / norms[i];
    }
  });
}

/// Attention scores with additive edge terms:
///   S[n, m] = scale * <K_m + E_nm Wk, Q_n + E_nm Wq>
/// Q is N x h, K is M x h, E is (N*M) x e (row n*M + m), Wq and Wk are e x h.
/// An undefined E (or e = 0) drops the edge terms.
inline Tensor edge_augmented_scores(const Tensor& q, const Tensor& k, const Tensor& e, const Tensor& wq,
                                    const Tensor& wk, double scale_by) {
  const int n = q.rows(), m = k.rows(), h = q.cols();
  if (k.cols() != h) throw Error(ErrorCode::ShapeMismatch, "edge_augmented_scores: Q/K widths differ");
  const bool edges = e.defined() && e.cols() > 0;
  const int de = edges ? e.cols() : 0;
  if (edges) {
    if (e.rows() != n * m) throw Error(ErrorCode::ShapeMismatch, "edge tensor must have N*M rows");
    if (wq.rows() != de || wk.rows() != de || wq.cols() != h || wk.cols() != h)
      throw Error(ErrorCode::ShapeMismatch, "edge projections must be e x h");
  }
  std::vector<double> out(static_cast<std::size_t>(n) * m);
  std::vector<double> a(h), b(h);
  auto fill = [&](int i, int j) {
    const double* qi = &q.data()[static_cast<std::size_t>(i) * h];
    const double* kj = &k.data()[static_cast<std::size_t>(j) * h];
    for (int t = 0; t < h; ++t) {
      a[t] = kj[t];
      b[t] = qi[t];
    }
    if (!edges) return;
    const double* eij = &e.data()[(static_cast<std::size_t>(i) * m + j) * de];
    for (int f = 0; f < de; ++f) {
      if (eij[f] == 0.0) continue;
      const double* wkf = &wk.data()[static_cast<std::size_t>(f) * h];
      const double* wqf = &wq.data()[static_cast<std::size_t>(f) * h];
      for (int t = 0; t < h; ++t) {
        a[t] += eij[f] * wkf[t];
        b[t] += eij[f] * wqf[t];
      }
    }
  };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      fill(i, j);
      double s = 0;
      for (int t = 0; t < h; ++t) s += a[t] * b[t];
      out[static_cast<std::size_t>(i) * m + j] = scale_by * s;
    }
  std::vector<Tensor> parents = {q, k};
  if (edges) {
    parents.push_back(e);
    parents.push_back(wq);
    parents.push_back(wk);
  }
  return detail::result(n, m, std::move(out), parents, [n, m, h, de, edges, scale_by](Node& self) {
    Node& Q = *self.parents[0];
    Node& K = *self.parents[1];
    Node* E = edges ? self.parents[2].get() : nullptr;
    Node* WQ = edges ? self.parents[3].get() : nullptr;
    Node* WK = edges ? self.parents[4].get() : nullptr;
    double* gq = Q.requires_grad ? Q.grad_buffer() : nullptr;
    double* gk = K.requires_grad ? K.grad_buffer() : nullptr;
    double* ge = E && E->requires_grad ? E->grad_buffer() : nullptr;
    double* gwq = WQ && WQ->requires_grad ? WQ->grad_buffer() : nullptr;
    double* gwk = WK && WK->requires_grad ? WK->grad_buffer() : nullptr;
    std::vector<double> a(h), b(h);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        const double g = scale_by * self.grad[static_cast<std::size_t>(i) * m + j];
        if (g == 0.0) continue;
        const double* qi = &Q.value[static_cast<std::size_t>(i) * h];
        const double* kj = &K.value[static_cast<std::size_t>(j) * h];
        for (int t = 0; t < h; ++t) {
          a[t] = kj[t];
          b[t] = qi[t];
        }
        const double* eij = edges ? &E->value[(static_cast<std::size_t>(i) * m + j) * de] : nullptr;
        for (int f = 0; f < de; ++f)
          for (int t = 0; t < h; ++t) {
            a[t] += eij[f] * WK->value[static_cast<std::size_t>(f) * h + t];
            b[t] += eij[f] * WQ->value[static_cast<std::size_t>(f) * h + t];
          }
        // dS/db = a (query side), dS/da = b (key side)
        if (gq)
          for (int t = 0; t < h; ++t) gq[static_cast<std::size_t>(i) * h + t] += g * a[t];
        if (gk)
          for (int t = 0; t < h; ++t) gk[static_cast<std::size_t>(j) * h + t] += g * b[t];
        for (int f = 0; f < de; ++f) {
          const std::size_t ei = (static_cast<std::size_t>(i) * m + j) * de + f;
          if (gwq)
            for (int t = 0; t < h; ++t) gwq[static_cast<std::size_t>(f) * h + t] += g * eij[f] * a[t];
          if (gwk)
            for (int t = 0; t < h; ++t) gwk[static_cast<std::size_t>(f) * h + t] += g * eij[f] * b[t];
          if (ge) {
            double s = 0;
            for (int t = 0; t < h; ++t)
              s += WQ->value[static_cast<std::size_t>(f) * h + t] * a[t] + WK->value[static_cast<std::size_t>(f) * h + t] * b[t];
            ge[ei] += g * s;
          }
        }
      }
  });
}

/// Reverse sweep from `root`. A scalar root is seeded with 1; otherwise a
/// seed of matching size must be supplied. Leaf gradients accumulate across
/// calls; intermediate gradients are released after use.
inline void backward(const Tensor& root, const std::vector<double>& seed = {}) {
  if (!root.defined()) throw Error(ErrorCode::InvalidArgument, "backward on an undefined tensor");
  if (seed.empty() && root.size() != 1)
    throw Error(ErrorCode::NonScalarLoss, "loss has shape " + detail::shape_str(root));
  if (!seed.empty() && seed.size() != root.size())
    throw Error(ErrorCode::ShapeMismatch, "seed gradient size does not match root");
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  double* g = root.node()->grad_buffer();
  if (seed.empty())
    g[0] += 1.0;
  else
    for (std::size_t k = 0; k < seed.size(); ++k) g[k] += seed[k];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward) continue;
    if (!node->grad.empty()) node->backward(*node);
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
}

// ---------------------------------------------------------------- parameters

enum class Init { Uniform, Zeros, Ones };

struct Parameter {
  std::string name;
  int rows = 0;
  int cols = 0;
  Init init = Init::Uniform;
  std::vector<double> value;
};

using Gradients = std::map<std::string, std::vector<double>>;

/// Named parameters, iterated in name order.
class ParamStore {
 public:
  Parameter& add(const std::string& name, int rows, int cols, Init init, std::uint64_t seed) {
    if (params_.count(name)) throw Error(ErrorCode::InvalidArgument, "parameter '" + name + "' registered twice");
    Parameter p{name, rows, cols, init, std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0)};
    if (init == Init::Ones) std::fill(p.value.begin(), p.value.end(), 1.0);
    if (init == Init::Uniform) {
      Rng rng(fnv1a64(name) ^ seed);
      const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
      for (double& v : p.value) v = uniform(rng, -bound, bound);
    }
    round_to_precision(p.value);
    return params_.emplace(name, std::move(p)).first->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  Parameter& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error(ErrorCode::InvalidArgument, "no parameter '" + name + "'");
    return it->second;
  }
  const Parameter& get(const std::string& name) const { return const_cast<ParamStore*>(this)->get(name); }
  std::size_t count() const { return params_.size(); }
  std::size_t total_size() const {
    std::size_t s = 0;
    for (const auto& [n, p] : params_) s += p.value.size();
    return s;
  }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Parameter> params_;
};

/// Binds store parameters to leaf tensors of one tape. The leaves are copies,
/// so a tape can live on its own worker while the store stays read-only.
class Tape {
 public:
  explicit Tape(const ParamStore& store) : store_(&store) {}

  Tensor param(const std::string& name) {
    auto it = leaves_.find(name);
    if (it != leaves_.end()) return it->second;
    const auto& p = store_->get(name);
    Tensor t = Tensor::make(p.rows, p.cols, p.value, true);
    leaves_.emplace(name, t);
    return t;
  }

  /// Adds `weight` times every bound parameter's gradient into `out`.
  void collect(Gradients& out, double weight = 1.0) const {
    for (const auto& [name, t] : leaves_) {
      if (t.grad().empty()) continue;
      auto& dst = out[name];
      if (dst.empty()) dst.assign(t.size(), 0.0);
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += weight * t.grad()[k];
    }
  }

  const std::map<std::string, Tensor>& leaves() const { return leaves_; }

 private:
  const ParamStore* store_;
  std::map<std::string, Tensor> leaves_;
};

inline void accumulate(Gradients& dst, const Gradients& src, double weight = 1.0) {
  for (const auto& [name, g] : src) {
    auto& d = dst[name];
    if (d.empty()) d.assign(g.size(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k) d[k] += weight * g[k];
  }
}

inline double gradient_norm(const Gradients& g) {
  double s = 0;
  for (const auto& [n, v] : g)
    for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Central-difference check of reverse-mode gradients for every entry of
/// `params`. Runs in Float64 mode. Returns max |a-n| / max(|a|, |n|, 1e-8).
inline double grad_check(const std::function<Tensor()>& fn, const std::vector<Tensor>& params, double eps = 1e-4) {
  PrecisionScope scope(Precision::Float64);
  for (auto p : params) p.zero_grad();
  const Tensor out = fn();
  if (!std::isfinite(out.item())) throw Error(ErrorCode::NonFiniteValue, "function value is not finite");
  backward(out);
  double worst = 0;
  for (auto p : params) {
    const std::vector<double> analytic = p.grad().empty() ? std::vector<double>(p.size(), 0.0) : p.grad();
    auto& v = p.mutable_data();
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double orig = v[k];
      v[k] = orig + eps;
      const double f1 = fn().item();
      v[k] = orig - eps;
      const double f2 = fn().item();
      v[k] = orig;
      if (!std::isfinite(f1) || !std::isfinite(f2))
        throw Error(ErrorCode::NonFiniteValue, "perturbed function value is not finite");
      const double num = (f1 - f2) / (2 * eps);
      const double a = analytic[k];
      worst = std::max(worst, std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-8}));
    }
  }
  return worst;
}

// ----------------------------------------------------------------- optimizer

inline double lr_at_epoch(double base_lr, int epoch) { return base_lr * std::pow(0.95, epoch / 50); }

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  /// Updates every parameter named in `grads`; parameters without a gradient
  /// entry are left untouched, moments included.
  void step(ParamStore& store, const Gradients& grads, double lr) {
    for (const auto& [name, g] : grads) {
      auto& p = store.get(name);
      if (g.size() != p.value.size())
        throw Error(ErrorCode::ShapeMismatch, "gradient for '" + name + "' has wrong size");
      auto& s = state_[name];
      if (s.m.empty()) {
        s.m.assign(g.size(), 0.0);
        s.v.assign(g.size(), 0.0);
      }
      if (s.m.size() != g.size()) throw Error(ErrorCode::ShapeMismatch, "optimizer state for '" + name + "'");
      ++s.step;
      const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.step));
      const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.step));
      for (std::size_t k = 0; k < g.size(); ++k) {
        s.m[k] = cfg_.beta1 * s.m[k] + (1 - cfg_.beta1) * g[k];
        s.v[k] = cfg_.beta2 * s.v[k] + (1 - cfg_.beta2) * g[k] * g[k];
        p.value[k] -= lr * cfg_.weight_decay * p.value[k];
        p.value[k] -= lr * (s.m[k] / c1) / (std::sqrt(s.v[k] / c2) + cfg_.eps);
      }
      round_to_precision(p.value);
    }
  }

  long step_count(const std::string& name) const {
    auto it = state_.find(name);
    return it == state_.end() ? 0 : it->second.step;
  }

 private:
  struct Moments {
    std::vector<double> m, v;
    long step = 0;
  };
  AdamWConfig cfg_;
  std::map<std::string, Moments> state_;
};

// ---------------------------------------------------------------- checkpoint

/// Writes `path` (JSON manifest) and `path`.bin (little-endian f32 values in
/// manifest order).
inline void save_checkpoint(const ParamStore& store, const std::string& path, const nlohmann::json& metadata = {}) {
  nlohmann::json manifest;
  manifest["format"] = "alignopt-checkpoint";
  manifest["version"] = 1;
  manifest["precision"] = "f32";
  manifest["blob"] = std::filesystem::path(path + ".bin").filename().string();
  if (!metadata.is_null()) manifest["metadata"] = metadata;
  std::string blob;
  std::size_t offset = 0;
  for (const auto& [name, p] : store) {
    manifest["params"].push_back({{"name", name}, {"shape", {p.rows, p.cols}}, {"offset", offset}});
    for (double v : p.value) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int b = 0; b < 4; ++b) blob.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
    offset += p.value.size();
  }
  std::ofstream m(path);
  std::ofstream b(path + ".bin", std::ios::binary);
  if (!m || !b) throw Error(ErrorCode::IoError, "cannot write checkpoint " + path);
  m << manifest.dump(2) << "\n";
  b.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!m || !b) throw Error(ErrorCode::IoError, "checkpoint write failed for " + path);
}

/// The metadata object stored with a checkpoint, or null when absent.
inline nlohmann::json read_checkpoint_metadata(const std::string& path) {
  std::ifstream m(path);
  if (!m) throw Error(ErrorCode::IoError, "cannot read checkpoint " + path);
  try {
    nlohmann::json manifest;
    m >> manifest;
    return manifest.value("metadata", nlohmann::json());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("checkpoint manifest: ") + e.what());
  }
}

/// Loads values into matching parameters. With strict = true every store
/// parameter must appear in the file and vice versa. Returns the number of
/// parameters loaded.
inline int load_checkpoint(ParamStore& store, const std::string& path, bool strict = true) {
  std::ifstream m(path);
  if (!m) throw Error(ErrorCode::IoError, "cannot read checkpoint " + path);
  nlohmann::json manifest;
  try {
    m >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("checkpoint manifest: ") + e.what());
  }
  if (manifest.value("version", 0) != 1) throw Error(ErrorCode::VersionMismatch, "checkpoint version");
  const auto blob_path = (std::filesystem::path(path).parent_path() / manifest.at("blob").get<std::string>()).string();
  std::ifstream b(blob_path, std::ios::binary);
  if (!b) throw Error(ErrorCode::IoError, "cannot read " + blob_path);
  const std::string blob((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  int loaded = 0;
  std::unordered_set<std::string> in_file;
  for (const auto& entry : manifest.at("params")) {
    const auto name = entry.at("name").get<std::string>();
    in_file.insert(name);
    if (!store.contains(name)) {
      if (strict) throw Error(ErrorCode::ShapeMismatch, "checkpoint parameter '" + name + "' not in model");
      continue;
    }
    auto& p = store.get(name);
    const int r = entry.at("shape").at(0), c = entry.at("shape").at(1);
    if (r != p.rows || c != p.cols) throw Error(ErrorCode::ShapeMismatch, "shape of '" + name + "' differs");
    const std::size_t off = entry.at("offset").get<std::size_t>();
    if ((off + p.value.size()) * 4 > blob.size()) throw Error(ErrorCode::TruncatedPayload, "checkpoint blob too short");
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const auto* q = reinterpret_cast<const unsigned char*>(blob.data()) + (off + k) * 4;
      const std::uint32_t bits = static_cast<std::uint32_t>(q[0]) | (static_cast<std::uint32_t>(q[1]) << 8) |
                                 (static_cast<std::uint32_t>(q[2]) << 16) | (static_cast<std::uint32_t>(q[3]) << 24);
      float f;
      std::memcpy(&f, &bits, 4);
      p.value[k] = f;
    }
    ++loaded;
  }
  if (strict)
    for (const auto& [name, p] : store)
      if (!in_file.count(name)) throw Error(ErrorCode::ShapeMismatch, "checkpoint lacks parameter '" + name + "'");
  return loaded;
}

}  // namespace alignopt
