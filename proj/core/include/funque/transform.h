#ifndef FUNQUE_TRANSFORM_H_
#define FUNQUE_TRANSFORM_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "funque/plane.h"

namespace funque {

enum class Wavelet { kHaar, kDb2 };

// How the contrast sensitivity function enters the transform. kNone is not a
// tuned configuration; it exists for reference pipelines and cost accounting.
enum class CsfMode { kNone, kSpatialFilter, kFrequencyFilter, kLiSw, kWatsonSw };

enum class Band { kApprox, kHorizontal, kVertical, kDiagonal };

std::string_view to_string(Wavelet w);
std::string_view to_string(CsfMode m);
std::string_view to_string(Band b);
Wavelet parse_wavelet(std::string_view name);
CsfMode parse_csf_mode(std::string_view name);

inline bool is_subband_weighting(CsfMode m) {
  return m == CsfMode::kLiSw || m == CsfMode::kWatsonSw;
}

struct TransformConfig {
  Wavelet wavelet = Wavelet::kHaar;
  int levels = 1;
  CsfMode csf = CsfMode::kSpatialFilter;
  bool csf_shared = true;
  bool sast = true;
  double pixels_per_degree = 32.0;

  // Throws when levels is outside [1, 4], ppd is not positive, or a
  // pre-decomposition CSF is marked as not shared.
  void validate() const;

  friend bool operator==(const TransformConfig&, const TransformConfig&) = default;
};

// Key-value text form: one `key = value` per line, `#` starts a comment.
// Keys: wavelet, levels, csf, csf_shared, sast, ppd. Missing keys keep the
// defaults above.
TransformConfig parse_transform_config(std::string_view text);
std::string format_transform_config(const TransformConfig& cfg);

struct SubbandSet {
  Plane h;
  Plane v;
  Plane d;
};

// levels[k-1] holds the detail bands of level k; approx_levels[k-1] holds the
// approximation band A_k. approx() is the residual low-pass band A_L.
struct WaveletPyramid {
  Wavelet wavelet = Wavelet::kHaar;
  std::vector<SubbandSet> levels;
  std::vector<Plane> approx_levels;

  int num_levels() const { return static_cast<int>(levels.size()); }
  const Plane& approx() const { return approx_levels.back(); }
  Plane& approx() { return approx_levels.back(); }
  const Plane& band(int level, Band b) const;
  Plane& band(int level, Band b);
};

// CSF(f) = (0.31 + 0.69 f) exp(-0.29 f), f in cycles/degree.
double csf_value(double cycles_per_degree);

inline constexpr int kCsfTaps = 21;
inline constexpr int kCsfGridSize = 1024;

struct CsfKernel {
  std::array<double, kCsfTaps> taps{};
  double dc_gain() const;
};

// Samples CSF(|u| * ppd) on a uniform grid over [-0.5, 0.5) cycles/pixel,
// inverts the DFT, keeps the 21 central taps and restores the DC gain to
// CSF(0) with the least-squares-minimal correction.
CsfKernel build_spatial_csf_kernel(double pixels_per_degree);

// Separable convolution with whole-sample mirror extension.
Plane apply_spatial_csf(const Plane& plane, const CsfKernel& kernel);

// Multiplies every DFT bin by CSF(|u_h| ppd) CSF(|u_v| ppd).
Plane apply_frequency_csf(const Plane& plane, double pixels_per_degree);

// 2x downscale by 2x2 block means; odd dimensions are edge-replicated.
Plane sast_rescale(const Plane& plane);

// Orthonormal analysis. Each level edge-replicates an odd-sized input to
// even size, so level-k bands are ceil(dim / 2^k).
WaveletPyramid wavelet_pyramid(const Plane& plane, Wavelet wavelet, int levels);

// One more analysis level of a single plane, returned as a 1-level pyramid.
WaveletPyramid wavelet_step(const Plane& plane, Wavelet wavelet);

// Per-(level, band) scalar weights.
class SubbandWeights {
 public:
  void set(int level, Band band, double weight) { table_[{level, band}] = weight; }
  // Throws when no entry exists.
  double at(int level, Band band) const;
  bool covers(int levels) const;
  int max_level() const;

  // Li weights: detail bands of level k use CSF(ppd * 2^-(k+1)), diagonal
  // bands the sqrt(2)-scaled frequency; approximation bands keep weight 1.
  static SubbandWeights li(double pixels_per_degree, int levels);
  // Parses the plain-text asset format: `level band weight` per line, band
  // one of A/H/V/D, `#` comments.
  static SubbandWeights parse(std::string_view text);
  static SubbandWeights load(const std::filesystem::path& path);
  // The checked-in Watson table (FUNQUE_ASSET_DIR overrides its location).
  static SubbandWeights watson();

 private:
  std::map<std::pair<int, Band>, double> table_;
};

std::filesystem::path asset_dir();

WaveletPyramid subband_weighting(const WaveletPyramid& pyr,
                                 const SubbandWeights& weights);

// Weights matching `cfg.csf`, or nullopt for non-SW modes.
std::optional<SubbandWeights> weights_for(const TransformConfig& cfg);

// SAST -> spatial/frequency CSF -> wavelet -> subband weighting. When a SW
// scheme is not shared the returned pyramid is unweighted. `kernel` must be
// supplied exactly when cfg.csf is kSpatialFilter.
WaveletPyramid unified_transform(const Plane& plane, const TransformConfig& cfg,
                                 const CsfKernel* kernel);

// Number of unified_transform calls in this process.
std::uint64_t unified_transform_invocations();

// Holds a validated config with its kernel and weight table built once.
class UnifiedTransform {
 public:
  explicit UnifiedTransform(TransformConfig cfg);

  WaveletPyramid operator()(const Plane& plane) const;

  const TransformConfig& config() const { return cfg_; }
  // Weights DLM must apply itself (SW scheme with csf_shared = false).
  const SubbandWeights* deferred_weights() const {
    return deferred_ ? &*weights_ : nullptr;
  }

 private:
  TransformConfig cfg_;
  std::optional<CsfKernel> kernel_;
  std::optional<SubbandWeights> weights_;
  bool deferred_ = false;
};

}  // namespace funque

#endif  // FUNQUE_TRANSFORM_H_
