#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mhflow/check.hpp"

namespace mhflow {

// Dense row-major matrix of doubles. Vectors are n x 1 or 1 x n as
// context requires.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Mat row_vector(std::vector<double> v) {
    Mat m;
    m.rows = 1;
    m.cols = v.size();
    m.data = std::move(v);
    return m;
  }
  static Mat col_vector(std::vector<double> v) {
    Mat m;
    m.rows = v.size();
    m.cols = 1;
    m.data = std::move(v);
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) {
    return data[r * cols + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  double* row_ptr(std::size_t r) { return data.data() + r * cols; }
  const double* row_ptr(std::size_t r) const { return data.data() + r * cols; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Mat& o) const {
    return rows == o.rows && cols == o.cols;
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline std::string shape_str(const Mat& m) {
  return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

}  // namespace mhflow
