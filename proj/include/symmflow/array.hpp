#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "symmflow/common.hpp"

namespace symmflow {

/// Dense row-major array of doubles with a shared buffer. Copies are
/// shallow; buffers are written only while a node is being constructed.
/// Rank 0 represents a scalar (numel 1).
class NdArray {
 public:
  NdArray() = default;

  explicit NdArray(std::vector<int64_t> dims, double fill = 0.0)
      : dims_(std::move(dims)),
        buf_(std::make_shared<std::vector<double>>(numel_of(dims_), fill)) {}

  static NdArray scalar(double v) {
    NdArray a{std::vector<int64_t>{}};
    (*a.buf_)[0] = v;
    return a;
  }

  static NdArray from(std::vector<double> data) {
    NdArray a;
    a.dims_ = {static_cast<int64_t>(data.size())};
    a.buf_ = std::make_shared<std::vector<double>>(std::move(data));
    return a;
  }

  static NdArray from(std::vector<double> data, std::vector<int64_t> dims) {
    NdArray a;
    require(numel_of(dims) == static_cast<int64_t>(data.size()),
            "NdArray::from: data size does not match shape");
    a.dims_ = std::move(dims);
    a.buf_ = std::make_shared<std::vector<double>>(std::move(data));
    return a;
  }

  /// Shares the buffer, reinterprets the shape.
  NdArray reshaped(std::vector<int64_t> dims) const {
    require(numel_of(dims) == numel(), "reshape: element count mismatch");
    NdArray a;
    a.dims_ = std::move(dims);
    a.buf_ = buf_;
    return a;
  }

  const std::vector<int64_t>& dims() const { return dims_; }
  int64_t rank() const { return static_cast<int64_t>(dims_.size()); }
  int64_t dim(int i) const { return dims_[static_cast<size_t>(i)]; }
  int64_t numel() const { return buf_ ? static_cast<int64_t>(buf_->size()) : 0; }
  bool defined() const { return static_cast<bool>(buf_); }

  double* data() { return buf_->data(); }
  const double* data() const { return buf_->data(); }
  double& operator[](int64_t i) { return (*buf_)[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return (*buf_)[static_cast<size_t>(i)]; }

  double value() const {
    require(numel() == 1, "value(): array is not scalar");
    return (*buf_)[0];
  }

  /// 2-D accessor; array must have rank 2.
  double& at(int64_t r, int64_t c) { return (*buf_)[static_cast<size_t>(r * dims_[1] + c)]; }
  double at(int64_t r, int64_t c) const { return (*buf_)[static_cast<size_t>(r * dims_[1] + c)]; }

  bool same_shape(const NdArray& o) const { return dims_ == o.dims_; }

  bool all_finite() const {
    for (double v : *buf_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  NdArray deep_copy() const {
    NdArray a;
    a.dims_ = dims_;
    a.buf_ = std::make_shared<std::vector<double>>(*buf_);
    return a;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < dims_.size(); ++i)
      s += (i ? "," : "") + std::to_string(dims_[i]);
    return s + "]";
  }

  static int64_t numel_of(const std::vector<int64_t>& dims) {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
  }

 private:
  std::vector<int64_t> dims_;
  std::shared_ptr<std::vector<double>> buf_;
};

/// Pairwise summation: deterministic and O(eps log n) accurate, so sums
/// are independent of relabeling up to ~1e-12 relative.
inline double pairwise_sum(const double* x, int64_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  int64_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

}  // namespace symmflow
