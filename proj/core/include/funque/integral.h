#ifndef FUNQUE_INTEGRAL_H_
#define FUNQUE_INTEGRAL_H_

#include <vector>

#include "funque/plane.h"

namespace funque {

// Summed-area table of size (H+1) x (W+1) with a zero first row and column:
// at(i, j) is the sum of the source over rows < i and columns < j.
// Accumulates in long double.
class IntegralImage {
 public:
  IntegralImage() = default;

  int source_width() const { return width_; }
  int source_height() const { return height_; }
  long double at(int i, int j) const {
    return table_[static_cast<std::size_t>(i) * (width_ + 1) + j];
  }

  friend IntegralImage build_integral(const Plane& plane);
  friend IntegralImage build_integral_product(const Plane& x, const Plane& y);

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<long double> table_;
};

IntegralImage build_integral(const Plane& plane);
// Table of x * y; throws on mismatched dimensions.
IntegralImage build_integral_product(const Plane& x, const Plane& y);
inline IntegralImage build_integral_squared(const Plane& plane) {
  return build_integral_product(plane, plane);
}

// Sum over rows [top, top+h) and columns [left, left+w). Throws when the
// window leaves the source.
long double box_sum(const IntegralImage& ii, int top, int left, int h, int w);

// Per-window first and second moments of a pair of planes. Map (r, c) is the
// window whose top-left corner is (r * stride, c * stride); only windows that
// fit entirely inside the planes are produced. Variances are floored at 0 and
// the covariance clamped to +-sqrt(var_x var_y) to absorb rounding.
struct MomentMaps {
  Plane mu_x, mu_y;
  Plane var_x, var_y;
  Plane cov_xy;
};

MomentMaps windowed_moments(const Plane& x, const Plane& y, int win, int stride);

}  // namespace funque

#endif  // FUNQUE_INTEGRAL_H_
