// Dense row-major 2-D tensor of doubles. Vectors are 1xN or Nx1 tensors.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace metarec {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

  static Tensor scalar(double value) {
    Tensor t(1, 1);
    t.v_[0] = value;
    return t;
  }

  static Tensor row_vector(std::vector<double> values) {
    Tensor t;
    t.rows_ = 1;
    t.cols_ = values.size();
    t.v_ = std::move(values);
    return t;
  }

  static Tensor from_rows(std::size_t rows, std::size_t cols,
                          std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  double& at(std::size_t r, std::size_t c) { return v_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return v_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }

  const std::vector<double>& values() const { return v_; }
  std::vector<double>& values() { return v_; }

  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  bool all_finite() const;
  bool operator==(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_;
  }

  std::string shape_str() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> v_;
};

// Elementwise and linear-algebra kernels. Shape mismatches throw
// std::invalid_argument.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add_rowvec(const Tensor& m, const Tensor& r);
Tensor sum_rows(const Tensor& m);                       // -> 1 x cols
Tensor broadcast_rows(const Tensor& r, std::size_t n);  // 1 x c -> n x c
Tensor sum_all(const Tensor& m);                        // -> 1 x 1
Tensor broadcast_scalar(const Tensor& s, std::size_t rows, std::size_t cols);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& m, std::size_t begin, std::size_t width);
// Places m into an otherwise-zero matrix of width total at column offset.
Tensor embed_cols(const Tensor& m, std::size_t total, std::size_t begin);

Tensor map_sigmoid(const Tensor& a);
Tensor map_tanh(const Tensor& a);
Tensor map_relu(const Tensor& a);
Tensor map_log(const Tensor& a);
Tensor map_clamp(const Tensor& a, double lo, double hi);

double dot_flat(const Tensor& a, const Tensor& b);
double sigmoid(double x);

}  // namespace metarec
