#include "funque/plane.h"

#include <algorithm>

#include "funque/error.h"

namespace funque {

Plane::Plane(int width, int height, double fill)
    : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error("plane dimensions must be non-negative");
  data_.assign(static_cast<std::size_t>(width) * height, fill);
}

double sum_of_squares(const Plane& p) {
  double acc = 0.0;
  for (double v : p.samples()) acc += v * v;
  return acc;
}

Plane scaled(const Plane& p, double factor) {
  Plane out = p;
  for (double& v : out.samples()) v *= factor;
  return out;
}

Plane pad_replicate(const Plane& p, int width, int height) {
  if (width < p.width() || height < p.height() || p.empty()) {
    throw Error("pad_replicate: target smaller than source or empty source");
  }
  if (width == p.width() && height == p.height()) return p;
  Plane out(width, height);
  for (int y = 0; y < height; ++y) {
    const double* src = p.row(std::min(y, p.height() - 1));
    double* dst = out.row(y);
    for (int x = 0; x < width; ++x) dst[x] = src[std::min(x, p.width() - 1)];
  }
  return out;
}

}  // namespace funque
