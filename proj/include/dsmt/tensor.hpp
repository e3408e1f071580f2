#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "dsmt/errors.hpp"

namespace dsmt {

// Dense row-major tensor of doubles. Rank is dynamic; volumes are rank-3
// (D,H,W), activations rank-5 (N,C,D,H,W), dense features rank-2 (N,F).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(numel_of(shape_), 0.0);
  }
  Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
    data_.assign(numel_of(shape_), fill);
  }

  static std::size_t numel_of(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int s : shape) {
      if (s < 0) throw ShapeError("negative tensor dimension");
      n *= static_cast<std::size_t>(s);
    }
    return shape.empty() ? 0 : n;
  }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // rank-3 (volumes)
  double& at(int d, int h, int w) {
    return data_[(static_cast<std::size_t>(d) * shape_[1] + h) * shape_[2] + w];
  }
  double at(int d, int h, int w) const {
    return data_[(static_cast<std::size_t>(d) * shape_[1] + h) * shape_[2] + w];
  }

  // rank-2 (batch of feature vectors)
  double& at(int n, int f) {
    return data_[static_cast<std::size_t>(n) * shape_[1] + f];
  }
  double at(int n, int f) const {
    return data_[static_cast<std::size_t>(n) * shape_[1] + f];
  }

  // rank-5 (batched multichannel volumes)
  double& at(int n, int c, int d, int h, int w) {
    return data_[(((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] +
                   d) *
                      shape_[3] +
                  h) *
                     shape_[4] +
                 w];
  }
  double at(int n, int c, int d, int h, int w) const {
    return data_[(((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] +
                   d) *
                      shape_[3] +
                  h) *
                     shape_[4] +
                 w];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(0.0); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double min() const {
    if (empty()) throw ParameterError("min of empty tensor");
    double m = data_[0];
    for (double v : data_) m = v < m ? v : m;
    return m;
  }
  double max() const {
    if (empty()) throw ParameterError("max of empty tensor");
    double m = data_[0];
    for (double v : data_) m = v > m ? v : m;
    return m;
  }
  double sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
  }
  double mean() const {
    if (empty()) throw ParameterError("mean of empty tensor");
    return sum() / static_cast<double>(numel());
  }

  const std::vector<double>& vec() const { return data_; }
  std::vector<double>& vec() { return data_; }

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": shape mismatch");
}

}  // namespace dsmt
