#include "metarec/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace metarec {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
  }
}

}  // namespace

Tensor Tensor::from_rows(std::size_t rows, std::size_t cols,
                         std::vector<double> values) {
  if (values.size() != rows * cols) {
    throw std::invalid_argument("Tensor::from_rows: value count mismatch");
  }
  Tensor t;
  t.rows_ = rows;
  t.cols_ = cols;
  t.v_ = std::move(values);
  return t;
}

bool Tensor::all_finite() const {
  for (double x : v_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b[i];
  return out;
}

Tensor neg(const Tensor& a) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -out[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimension mismatch " +
                                a.shape_str() + " * " + b.shape_str());
  }
  Tensor out(a.rows(), b.cols(), 0.0);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aval = a.at(i, p);
      for (std::size_t j = 0; j < n; ++j) {
        out.at(i, j) += aval * b.at(p, j);
      }
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out.at(c, r) = a.at(r, c);
  }
  return out;
}

Tensor add_rowvec(const Tensor& m, const Tensor& r) {
  if (r.rows() != 1 || r.cols() != m.cols()) {
    throw std::invalid_argument("add_rowvec: row vector shape " +
                                r.shape_str() + " does not match " +
                                m.shape_str());
  }
  Tensor out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out.at(i, j) += r.at(0, j);
  }
  return out;
}

Tensor sum_rows(const Tensor& m) {
  Tensor out(1, m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out.at(0, j) += m.at(i, j);
  }
  return out;
}

Tensor broadcast_rows(const Tensor& r, std::size_t n) {
  if (r.rows() != 1) {
    throw std::invalid_argument("broadcast_rows: expected 1-row tensor, got " +
                                r.shape_str());
  }
  Tensor out(n, r.cols());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < r.cols(); ++j) out.at(i, j) = r.at(0, j);
  }
  return out;
}

Tensor sum_all(const Tensor& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m[i];
  return Tensor::scalar(s);
}

Tensor broadcast_scalar(const Tensor& s, std::size_t rows, std::size_t cols) {
  if (s.size() != 1) {
    throw std::invalid_argument("broadcast_scalar: expected scalar, got " +
                                s.shape_str());
  }
  return Tensor(rows, cols, s[0]);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_cols: empty part list");
  }
  const std::size_t rows = parts.front().rows();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != rows) {
      throw std::invalid_argument("concat_cols: row count mismatch");
    }
    total += p.cols();
  }
  Tensor out(rows, total);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < p.cols(); ++j) {
        out.at(i, off + j) = p.at(i, j);
      }
    }
    off += p.cols();
  }
  return out;
}

Tensor slice_cols(const Tensor& m, std::size_t begin, std::size_t width) {
  if (begin + width > m.cols()) {
    throw std::invalid_argument("slice_cols: range out of bounds");
  }
  Tensor out(m.rows(), width);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < width; ++j) out.at(i, j) = m.at(i, begin + j);
  }
  return out;
}

Tensor embed_cols(const Tensor& m, std::size_t total, std::size_t begin) {
  if (begin + m.cols() > total) {
    throw std::invalid_argument("embed_cols: range out of bounds");
  }
  Tensor out(m.rows(), total, 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out.at(i, begin + j) = m.at(i, j);
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor map_sigmoid(const Tensor& a) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(out[i]);
  return out;
}

Tensor map_tanh(const Tensor& a) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return out;
}

Tensor map_relu(const Tensor& a) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < 0.0) out[i] = 0.0;
  }
  return out;
}

Tensor map_log(const Tensor& a) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
  return out;
}

Tensor map_clamp(const Tensor& a, double lo, double hi) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < lo) out[i] = lo;
    if (out[i] > hi) out[i] = hi;
  }
  return out;
}

double dot_flat(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace metarec
