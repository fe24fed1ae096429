#include "funque/integral.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "funque/error.h"

namespace funque {
namespace {

template <typename Value>
void fill_table(int width, int height, std::vector<long double>& table,
                    Value value) {
  table.assign(static_cast<std::size_t>(width + 1) * (height + 1), 0.0L);
  const std::size_t stride = width + 1;
  for (int y = 0; y < height; ++y) {
    long double row_sum = 0;
    long double* prev = table.data() + y * stride;
    long double* cur = prev + stride;
    for (int x = 0; x < width; ++x) {
      row_sum += value(y, x);
      cur[x + 1] = prev[x + 1] + row_sum;
    }
  }
}

}  // namespace

IntegralImage build_integral(const Plane& plane) {
  IntegralImage ii;
  ii.width_ = plane.width();
  ii.height_ = plane.height();
  fill_table(ii.width_, ii.height_, ii.table_,
        [&](int y, int x) { return static_cast<long double>(plane(y, x)); });
  return ii;
}

IntegralImage build_integral_product(const Plane& x, const Plane& y) {
  if (!x.same_shape(y)) {
    throw Error("integral product of planes with different dimensions");
  }
  IntegralImage ii;
  ii.width_ = x.width();
  ii.height_ = x.height();
  fill_table(ii.width_, ii.height_, ii.table_, [&](int r, int c) {
    return static_cast<long double>(x(r, c)) * static_cast<long double>(y(r, c));
  });
  return ii;
}

long double box_sum(const IntegralImage& ii, int top, int left, int h, int w) {
  if (top < 0 || left < 0 || h < 0 || w < 0 || top + h > ii.source_height() ||
      left + w > ii.source_width()) {
    throw Error("box_sum window [" + std::to_string(top) + "+" + std::to_string(h) +
                ", " + std::to_string(left) + "+" + std::to_string(w) +
                "] outside " + std::to_string(ii.source_height()) + "x" +
                std::to_string(ii.source_width()) + " source");
  }
  return ii.at(top + h, left + w) - ii.at(top, left + w) - ii.at(top + h, left) +
         ii.at(top, left);
}

MomentMaps windowed_moments(const Plane& x, const Plane& y, int win, int stride) {
  if (!x.same_shape(y)) throw Error("windowed_moments: dimension mismatch");
  if (win < 1 || stride < 1) throw Error("windowed_moments: window and stride must be positive");
  if (win > x.width() || win > x.height()) {
    throw Error("windowed_moments: window " + std::to_string(win) +
                " larger than " + std::to_string(x.width()) + "x" +
                std::to_string(x.height()) + " plane");
  }
  const IntegralImage sx = build_integral(x);
  const IntegralImage sy = build_integral(y);
  const IntegralImage sxx = build_integral_product(x, x);
  const IntegralImage syy = build_integral_product(y, y);
  const IntegralImage sxy = build_integral_product(x, y);

  const int out_w = (x.width() - win) / stride + 1;
  const int out_h = (x.height() - win) / stride + 1;
  MomentMaps m{Plane(out_w, out_h), Plane(out_w, out_h), Plane(out_w, out_h),
               Plane(out_w, out_h), Plane(out_w, out_h)};
  const long double inv_n = 1.0L / (static_cast<long double>(win) * win);
  for (int r = 0; r < out_h; ++r) {
    const int top = r * stride;
    for (int c = 0; c < out_w; ++c) {
      const int left = c * stride;
      const long double mx = box_sum(sx, top, left, win, win) * inv_n;
      const long double my = box_sum(sy, top, left, win, win) * inv_n;
      const long double exx = box_sum(sxx, top, left, win, win) * inv_n;
      const long double eyy = box_sum(syy, top, left, win, win) * inv_n;
      const long double exy = box_sum(sxy, top, left, win, win) * inv_n;
      m.mu_x(r, c) = static_cast<double>(mx);
      m.mu_y(r, c) = static_cast<double>(my);
      const double vx = static_cast<double>(std::max(exx - mx * mx, 0.0L));
      const double vy = static_cast<double>(std::max(eyy - my * my, 0.0L));
      // Cancellation can push the covariance past the Cauchy-Schwarz bound.
      const double bound = std::sqrt(vx * vy);
      m.var_x(r, c) = vx;
      m.var_y(r, c) = vy;
      m.cov_xy(r, c) = std::clamp(static_cast<double>(exy - mx * my), -bound, bound);
    }
  }
  return m;
}

}  // namespace funque
