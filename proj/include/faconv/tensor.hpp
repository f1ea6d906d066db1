#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace faconv {

// Error taxonomy. Every error carries a stable machine-readable code so the
// CLI can map failures onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error("E_DIMENSION", what) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("E_CONFIG", what) {}
};
struct StateError : Error {
  explicit StateError(const std::string& what) : Error("E_STATE", what) {}
};
struct ArgumentError : Error {
  explicit ArgumentError(const std::string& what) : Error("E_ARGUMENT", what) {}
};
struct IoError : Error {
  explicit IoError(const std::string& what) : Error("E_IO", what) {}
};
struct DivergenceError : Error {
  DivergenceError(const std::string& what, std::size_t step)
      : Error("E_DIVERGED", what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

struct Shape {
  std::size_t n = 0, h = 0, w = 0, c = 0;

  std::size_t numel() const noexcept { return n * h * w * c; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "[" << n << "," << h << "," << w << "," << c << "]";
    return os.str();
  }
};

// Dense rank-4 array in row-major (n, h, w, c) order. Matrices are stored as
// [1,1,rows,cols] and vectors as [1,1,1,len].
class Tensor4D {
 public:
  Tensor4D() = default;
  explicit Tensor4D(Shape s, double fill = 0.0) : shape_(s), data_(s.numel(), fill) {}
  Tensor4D(Shape s, std::vector<double> data) : shape_(s), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw DimensionError("tensor payload length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_.str());
    }
  }

  static Tensor4D matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor4D({1, 1, rows, cols}, fill);
  }
  static Tensor4D matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor4D({1, 1, rows, cols}, std::move(data));
  }
  static Tensor4D vector(std::size_t len, double fill = 0.0) { return Tensor4D({1, 1, 1, len}, fill); }
  static Tensor4D vector(std::vector<double> data) {
    const auto len = data.size();
    return Tensor4D({1, 1, 1, len}, std::move(data));
  }
  static Tensor4D scalar(double v) { return Tensor4D({1, 1, 1, 1}, v); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t n() const noexcept { return shape_.n; }
  std::size_t h() const noexcept { return shape_.h; }
  std::size_t w() const noexcept { return shape_.w; }
  std::size_t c() const noexcept { return shape_.c; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& raw() noexcept { return data_; }
  const std::vector<double>& raw() const noexcept { return data_; }

  std::size_t index(std::size_t b, std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return ((b * shape_.h + i) * shape_.w + j) * shape_.c + k;
  }
  double& operator()(std::size_t b, std::size_t i, std::size_t j, std::size_t k) noexcept {
    return data_[index(b, i, j, k)];
  }
  const double& operator()(std::size_t b, std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return data_[index(b, i, j, k)];
  }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  const double& operator[](std::size_t i) const noexcept { return data_[i]; }

  // Matrix view accessors for [1,1,rows,cols] tensors.
  std::size_t rows() const noexcept { return shape_.w; }
  std::size_t cols() const noexcept { return shape_.c; }
  double& at(std::size_t r, std::size_t col) noexcept { return data_[r * shape_.c + col]; }
  const double& at(std::size_t r, std::size_t col) const noexcept { return data_[r * shape_.c + col]; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  double item() const {
    if (data_.size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_.str());
    return data_[0];
  }

  bool operator==(const Tensor4D&) const = default;

 private:
  Shape shape_{};
  std::vector<double> data_;
};

inline double max_abs_diff(const Tensor4D& a, const Tensor4D& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline void require_shape(const Tensor4D& t, const Shape& expected, const std::string& what) {
  if (t.shape() != expected) {
    throw DimensionError(what + ": expected shape " + expected.str() + ", got " + t.shape().str());
  }
}

inline Tensor4D random_uniform(Shape s, double lo, double hi, std::mt19937_64& rng) {
  Tensor4D t(s);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.raw()) v = dist(rng);
  return t;
}

inline Tensor4D random_normal(Shape s, double stddev, std::mt19937_64& rng) {
  Tensor4D t(s);
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.raw()) v = dist(rng);
  return t;
}

}  // namespace faconv
