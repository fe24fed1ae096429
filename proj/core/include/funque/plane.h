#ifndef FUNQUE_PLANE_H_
#define FUNQUE_PLANE_H_

#include <cstddef>
#include <span>
#include <vector>

namespace funque {

// Row-major 2-D array of real samples. Used for luma planes, wavelet
// subbands and every intermediate map.
class Plane {
 public:
  Plane() = default;
  Plane(int width, int height, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int y, int x) {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  double operator()(int y, int x) const {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }

  double* row(int y) { return data_.data() + static_cast<std::size_t>(y) * width_; }
  const double* row(int y) const {
    return data_.data() + static_cast<std::size_t>(y) * width_;
  }

  std::span<double> samples() { return data_; }
  std::span<const double> samples() const { return data_; }

  bool same_shape(const Plane& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

// Helpers shared by several modules.
double sum_of_squares(const Plane& p);
Plane scaled(const Plane& p, double factor);
// Copies `p` into a (width, height) plane, replicating the last row/column.
Plane pad_replicate(const Plane& p, int width, int height);

}  // namespace funque

#endif  // FUNQUE_PLANE_H_
