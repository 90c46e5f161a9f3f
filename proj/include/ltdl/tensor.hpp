#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace ltdl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Dims3 = std::array<std::size_t, 3>;

// Dense 3-order tensor. Mode-1 index varies fastest, then mode-2, then mode-3.
class Tensor3 {
public:
  Tensor3() = default;
  explicit Tensor3(Dims3 dims, double fill = 0.0);
  Tensor3(Dims3 dims, std::vector<double> data);

  static Tensor3 zeros(Dims3 dims) { return Tensor3(dims); }

  const Dims3 &dims() const { return dims_; }
  std::size_t dim(int mode) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double &operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[i + dims_[0] * (j + dims_[1] * k)];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[i + dims_[0] * (j + dims_[1] * k)];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double> &values() const { return data_; }

  // Column-major view of the mode-1 unfolding; no copy.
  Eigen::Map<Matrix> mode1_view() {
    return {data_.data(), Eigen::Index(dims_[0]), Eigen::Index(dims_[1] * dims_[2])};
  }
  Eigen::Map<const Matrix> mode1_view() const {
    return {data_.data(), Eigen::Index(dims_[0]), Eigen::Index(dims_[1] * dims_[2])};
  }
  Eigen::Map<Vector> flat() { return {data_.data(), Eigen::Index(data_.size())}; }
  Eigen::Map<const Vector> flat() const {
    return {data_.data(), Eigen::Index(data_.size())};
  }

  // Frontal slice k (mode-3 index fixed) as an I1 x I2 matrix view.
  Eigen::Map<Matrix> slice(std::size_t k) {
    return {data_.data() + k * dims_[0] * dims_[1], Eigen::Index(dims_[0]),
            Eigen::Index(dims_[1])};
  }
  Eigen::Map<const Matrix> slice(std::size_t k) const {
    return {data_.data() + k * dims_[0] * dims_[1], Eigen::Index(dims_[0]),
            Eigen::Index(dims_[1])};
  }

  Tensor3 &operator+=(const Tensor3 &o);
  Tensor3 &operator-=(const Tensor3 &o);
  Tensor3 &operator*=(double s);

  bool operator==(const Tensor3 &o) const = default;

  bool all_finite() const;

private:
  Dims3 dims_{0, 0, 0};
  std::vector<double> data_;
};

Tensor3 operator+(Tensor3 a, const Tensor3 &b);
Tensor3 operator-(Tensor3 a, const Tensor3 &b);
Tensor3 operator*(double s, Tensor3 a);

/// Mode-n unfolding (mode in {1,2,3}). Columns are mode-n fibers ordered with
/// the remaining lower-numbered mode varying fastest.
Matrix unfold(const Tensor3 &t, int mode);

/// Inverse of unfold.
Tensor3 fold(const Matrix &m, int mode, Dims3 dims);

/// t x_mode u, i.e. unfold(result, mode) = u * unfold(t, mode).
Tensor3 mode_product(const Tensor3 &t, const Matrix &u, int mode);

Matrix kron(const Matrix &a, const Matrix &b);

double frobenius_norm(const Tensor3 &t);
double l1_norm(const Tensor3 &t);
double inner(const Tensor3 &a, const Tensor3 &b);

struct Norms {
  double frobenius = 0.0;
  double l1 = 0.0;
};
Norms norms(const Tensor3 &t);

} // namespace ltdl
