#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace gcib {

// Dense row-major matrix of doubles. Everything in the engine runs at desk
// scale, so a plain vector-backed container is all we need.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }

  int size() const { return rows * cols; }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
  void fill(double v) { std::fill(a.begin(), a.end(), v); }
};

}  // namespace gcib
