#ifndef FUNQUE_FEATURES_H_
#define FUNQUE_FEATURES_H_

#include <span>
#include <vector>

#include "funque/plane.h"
#include "funque/transform.h"

namespace funque {

// ---------------------------------------------------------------------------
// Wavelet-domain SSIM / ESSIM
// ---------------------------------------------------------------------------

// Local statistics over disjoint 2^L x 2^L pixel blocks, read directly off
// Haar coefficients. All maps have the dimensions of the level-L subbands.
struct LocalStats {
  Plane mu_x, mu_y;
  Plane var_x, var_y;
  Plane cov_xy;
};

struct SsimConsts {
  double c1 = (0.01 * 255) * (0.01 * 255);
  double c2 = (0.03 * 255) * (0.03 * 255);
};

// mu = 2^-L A_L; var and cov sum the squared (cross) detail coefficients of
// every level that fall inside the block, scaled by 2^-2L. Both pyramids must
// be Haar with at least `levels` levels and equal geometry.
LocalStats wd_local_stats(const WaveletPyramid& x, const WaveletPyramid& y,
                          int levels);

Plane ssim_map(const LocalStats& stats, const SsimConsts& c = {});

// Mean-pooled SSIM map.
double wd_ssim(const LocalStats& stats, const SsimConsts& c = {});

// std / mean of the values (population std). A zero mean yields 0 and sets
// *zero_mean when provided.
double coefficient_of_variation(std::span<const double> values,
                                bool* zero_mean = nullptr);

// CoV-pooled SSIM map. Larger values mean a less uniform quality map.
double wd_essim(const LocalStats& stats, const SsimConsts& c = {},
                bool* zero_mean = nullptr);

// ---------------------------------------------------------------------------
// Detail loss metric
// ---------------------------------------------------------------------------

struct DlmParams {
  // Masking kernel K = alpha * ones(3x3) + beta * delta, divided by `divisor`.
  double alpha = 1.0;
  double beta = 1.0;
  double divisor = 30.0;
  double angle_threshold_deg = 1.0;
  double border_fraction = 0.1;
  double minkowski_exponent = 3.0;
};

// Per-level detail bands. restored + additive reproduces the distorted
// coefficients; masked_restored is filled by dlm_contrast_masking.
struct DlmIntermediate {
  std::vector<SubbandSet> restored;
  std::vector<SubbandSet> additive;
  std::vector<SubbandSet> masked_restored;
};

DlmIntermediate dlm_decouple(const WaveletPyramid& ref, const WaveletPyramid& dis,
                             const DlmParams& p = {});

// Per-level masking threshold: (alpha * 3x3 box sum + beta * centre) of the
// summed |additive| bands, over `divisor`. Box sums come from an integral
// image with windows clipped at the borders.
Plane dlm_masking_threshold(const SubbandSet& additive, const DlmParams& p = {});

DlmIntermediate dlm_contrast_masking(DlmIntermediate inter, const DlmParams& p = {});

// Ratio of Minkowski-pooled masked restored detail to pooled reference
// detail over the centrally cropped bands, clipped to [0, 1]. When
// `deferred` is non-null the weights are applied after decoupling.
// Throws on a blank reference.
double dlm_score(const WaveletPyramid& ref, const WaveletPyramid& dis,
                 const SubbandWeights* deferred = nullptr, const DlmParams& p = {});

// ---------------------------------------------------------------------------
// Visual information fidelity
// ---------------------------------------------------------------------------

struct VifParams {
  double sigma_n_sq = 2.0;
  int window = 9;
  int stride = 1;
};

struct VifSums {
  double num = 0;
  double den = 0;
  VifSums& operator+=(const VifSums& o) {
    num += o.num;
    den += o.den;
    return *this;
  }
  // 1 when no window carried information.
  double ratio() const { return den > 0 ? num / den : 1.0; }
};

// Scalar GSM VIF over windowed moments. Windows whose reference variance is
// below 1e-10 are skipped; the window shrinks to fit bands smaller than it.
VifSums vif_channel(const Plane& ref, const Plane& dis, const VifParams& p = {});

// Vector GSM VIF of one detail band using 3x3 coefficient neighbourhoods.
VifSums vif_vector_channel(const Plane& ref, const Plane& dis,
                           const VifParams& p = {});

enum class VifVariant { kScalar, kVector, kEdge, kApprox, kScale };

// Approximation band A_k, decomposing A_L further with the pyramid's wavelet
// when k exceeds the pyramid depth.
Plane approx_at_level(const WaveletPyramid& pyr, int k);

// `scale` selects k for kScale and is ignored otherwise.
double vif_feature(const WaveletPyramid& ref, const WaveletPyramid& dis,
                   VifVariant variant, int scale = 1, const VifParams& p = {});

// ---------------------------------------------------------------------------
// Motion
// ---------------------------------------------------------------------------

// Mean absolute difference between successive reference approximation bands.
double motion_feature(const Plane& approx_prev, const Plane& approx_cur);

}  // namespace funque

#endif  // FUNQUE_FEATURES_H_
