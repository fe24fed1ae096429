#include "funque/features.h"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "funque/error.h"
#include "funque/integral.h"

namespace funque {
namespace {

constexpr double kVifEps = 1e-10;
constexpr double kEigenFloor = 1e-10;

void require_same_geometry(const WaveletPyramid& a, const WaveletPyramid& b,
                           const char* who) {
  if (a.num_levels() != b.num_levels() || a.wavelet != b.wavelet) {
    throw Error(std::string(who) + ": pyramids differ in wavelet or depth");
  }
  for (int k = 1; k <= a.num_levels(); ++k) {
    if (!a.band(k, Band::kHorizontal).same_shape(b.band(k, Band::kHorizontal))) {
      throw Error(std::string(who) + ": pyramids differ in band dimensions");
    }
  }
}

// Sum of squared (or cross) detail coefficients of one level, accumulated
// into the level-L block grid.
void accumulate_detail(const SubbandSet& x, const SubbandSet& y, int factor,
                       Plane& var_x, Plane& var_y, Plane& cov) {
  const Plane* xs[3] = {&x.h, &x.v, &x.d};
  const Plane* ys[3] = {&y.h, &y.v, &y.d};
  for (int b = 0; b < 3; ++b) {
    const Plane& cx = *xs[b];
    const Plane& cy = *ys[b];
    for (int m = 0; m < cx.height(); ++m) {
      const int i = m / factor;
      if (i >= var_x.height()) continue;
      for (int n = 0; n < cx.width(); ++n) {
        const int j = n / factor;
        if (j >= var_x.width()) continue;
        const double a = cx(m, n), c = cy(m, n);
        var_x(i, j) += a * a;
        var_y(i, j) += c * c;
        cov(i, j) += a * c;
      }
    }
  }
}

std::pair<int, int> crop_range(int n, double fraction) {
  const int border = static_cast<int>(std::floor(fraction * n));
  if (n - 2 * border <= 0) return {0, n};
  return {border, n - border};
}

double pooled_power(const Plane& p, double exponent, double fraction) {
  const auto [y0, y1] = crop_range(p.height(), fraction);
  const auto [x0, x1] = crop_range(p.width(), fraction);
  double acc = 0;
  for (int y = y0; y < y1; ++y) {
    const double* row = p.row(y);
    for (int x = x0; x < x1; ++x) acc += std::pow(std::abs(row[x]), exponent);
  }
  return acc;
}

SubbandSet weighted(const SubbandSet& s, const SubbandWeights& w, int level) {
  return {scaled(s.h, w.at(level, Band::kHorizontal)),
          scaled(s.v, w.at(level, Band::kVertical)),
          scaled(s.d, w.at(level, Band::kDiagonal))};
}

}  // namespace

LocalStats wd_local_stats(const WaveletPyramid& x, const WaveletPyramid& y,
                          int levels) {
  if (x.wavelet != Wavelet::kHaar || y.wavelet != Wavelet::kHaar) {
    throw Error("wavelet-domain local statistics require Haar pyramids");
  }
  require_same_geometry(x, y, "wd_local_stats");
  if (levels < 1 || levels > x.num_levels()) {
    throw Error("wd_local_stats: requested " + std::to_string(levels) +
                " levels from a " + std::to_string(x.num_levels()) + "-level pyramid");
  }
  const Plane& ax = x.approx_levels[levels - 1];
  const Plane& ay = y.approx_levels[levels - 1];
  const double mean_scale = std::ldexp(1.0, -levels);
  const double var_scale = std::ldexp(1.0, -2 * levels);

  LocalStats s{scaled(ax, mean_scale), scaled(ay, mean_scale),
               Plane(ax.width(), ax.height()), Plane(ax.width(), ax.height()),
               Plane(ax.width(), ax.height())};
  for (int k = 1; k <= levels; ++k) {
    accumulate_detail(x.levels[k - 1], y.levels[k - 1], 1 << (levels - k),
                      s.var_x, s.var_y, s.cov_xy);
  }
  for (Plane* p : {&s.var_x, &s.var_y, &s.cov_xy}) {
    for (double& v : p->samples()) v *= var_scale;
  }
  return s;
}

Plane ssim_map(const LocalStats& s, const SsimConsts& c) {
  Plane out(s.mu_x.width(), s.mu_x.height());
  auto mx = s.mu_x.samples(), my = s.mu_y.samples();
  auto vx = s.var_x.samples(), vy = s.var_y.samples(), cxy = s.cov_xy.samples();
  auto dst = out.samples();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const double num = (2 * mx[i] * my[i] + c.c1) * (2 * cxy[i] + c.c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c.c1) * (vx[i] + vy[i] + c.c2);
    dst[i] = num / den;
  }
  return out;
}

double wd_ssim(const LocalStats& stats, const SsimConsts& c) {
  const Plane map = ssim_map(stats, c);
  double acc = 0;
  for (double v : map.samples()) acc += v;
  return acc / static_cast<double>(map.size());
}

double coefficient_of_variation(std::span<const double> values, bool* zero_mean) {
  if (values.empty()) throw Error("coefficient of variation of an empty map");
  double mean = 0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (zero_mean) *zero_mean = mean == 0;
  if (mean == 0) return 0;
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size())) / mean;
}

double wd_essim(const LocalStats& stats, const SsimConsts& c, bool* zero_mean) {
  const Plane map = ssim_map(stats, c);
  return coefficient_of_variation(map.samples(), zero_mean);
}

DlmIntermediate dlm_decouple(const WaveletPyramid& ref, const WaveletPyramid& dis,
                             const DlmParams& p) {
  require_same_geometry(ref, dis, "dlm_decouple");
  const double cos_sq = std::pow(std::cos(p.angle_threshold_deg * std::numbers::pi / 180), 2);
  DlmIntermediate out;
  for (int k = 1; k <= ref.num_levels(); ++k) {
    const SubbandSet& o = ref.levels[k - 1];
    const SubbandSet& t = dis.levels[k - 1];
    const int w = o.h.width(), h = o.h.height();
    SubbandSet r{Plane(w, h), Plane(w, h), Plane(w, h)};
    SubbandSet a{Plane(w, h), Plane(w, h), Plane(w, h)};
    const Plane* os[3] = {&o.h, &o.v, &o.d};
    const Plane* ts[3] = {&t.h, &t.v, &t.d};
    Plane* rs[3] = {&r.h, &r.v, &r.d};
    Plane* as[3] = {&a.h, &a.v, &a.d};
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double oh = o.h(y, x), ov = o.v(y, x);
        const double th = t.h(y, x), tv = t.v(y, x);
        const double dot = oh * th + ov * tv;
        const double o_sq = oh * oh + ov * ov;
        const double t_sq = th * th + tv * tv;
        // Nearly parallel (H, V) orientation: the whole detail counts as
        // restored. Undefined for a zero vector.
        const bool aligned = o_sq > 0 && t_sq > 0 && dot >= 0 &&
                             dot * dot >= cos_sq * o_sq * t_sq;
        for (int b = 0; b < 3; ++b) {
          const double ov_b = (*os[b])(y, x);
          const double tv_b = (*ts[b])(y, x);
          double restored;
          if (aligned) {
            restored = tv_b;
          } else {
            const double ratio = ov_b == 0 ? 0.0 : tv_b / ov_b;
            // An unclamped gain reproduces dis; use it directly so no
            // rounding residue leaks into the additive band.
            restored = ratio <= 0 ? 0.0 : ratio >= 1 ? ov_b : tv_b;
          }
          // One of the two subtractions is exact (Sterbenz), so
          // restored + additive reproduces dis bit-exactly.
          const double additive = tv_b - restored;
          restored = tv_b - additive;
          (*rs[b])(y, x) = restored;
          (*as[b])(y, x) = additive;
        }
      }
    }
    out.restored.push_back(std::move(r));
    out.additive.push_back(std::move(a));
  }
  return out;
}

Plane dlm_masking_threshold(const SubbandSet& additive, const DlmParams& p) {
  const int w = additive.h.width(), h = additive.h.height();
  Plane energy(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      energy(y, x) = std::abs(additive.h(y, x)) + std::abs(additive.v(y, x)) +
                     std::abs(additive.d(y, x));
    }
  }
  const IntegralImage ii = build_integral(energy);
  Plane thr(w, h);
  for (int y = 0; y < h; ++y) {
    const int top = std::max(y - 1, 0), bottom = std::min(y + 2, h);
    for (int x = 0; x < w; ++x) {
      const int left = std::max(x - 1, 0), right = std::min(x + 2, w);
      const double box =
          static_cast<double>(box_sum(ii, top, left, bottom - top, right - left));
      thr(y, x) = (p.alpha * box + p.beta * energy(y, x)) / p.divisor;
    }
  }
  return thr;
}

DlmIntermediate dlm_contrast_masking(DlmIntermediate inter, const DlmParams& p) {
  inter.masked_restored.clear();
  for (std::size_t k = 0; k < inter.restored.size(); ++k) {
    const Plane thr = dlm_masking_threshold(inter.additive[k], p);
    const SubbandSet& r = inter.restored[k];
    SubbandSet m{r.h, r.v, r.d};
    for (Plane* band : {&m.h, &m.v, &m.d}) {
      auto v = band->samples();
      auto t = thr.samples();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::max(std::abs(v[i]) - t[i], 0.0);
    }
    inter.masked_restored.push_back(std::move(m));
  }
  return inter;
}

double dlm_score(const WaveletPyramid& ref, const WaveletPyramid& dis,
                 const SubbandWeights* deferred, const DlmParams& p) {
  DlmIntermediate inter = dlm_decouple(ref, dis, p);
  std::vector<SubbandSet> ref_bands = ref.levels;
  if (deferred) {
    for (int k = 1; k <= ref.num_levels(); ++k) {
      inter.restored[k - 1] = weighted(inter.restored[k - 1], *deferred, k);
      inter.additive[k - 1] = weighted(inter.additive[k - 1], *deferred, k);
      ref_bands[k - 1] = weighted(ref_bands[k - 1], *deferred, k);
    }
  }
  inter = dlm_contrast_masking(std::move(inter), p);

  const double e = p.minkowski_exponent;
  double num = 0, den = 0;
  for (std::size_t k = 0; k < ref_bands.size(); ++k) {
    const SubbandSet& m = inter.masked_restored[k];
    const SubbandSet& o = ref_bands[k];
    for (int b = 0; b < 3; ++b) {
      const Plane& mb = b == 0 ? m.h : b == 1 ? m.v : m.d;
      const Plane& ob = b == 0 ? o.h : b == 1 ? o.v : o.d;
      num += std::pow(pooled_power(mb, e, p.border_fraction), 1 / e);
      den += std::pow(pooled_power(ob, e, p.border_fraction), 1 / e);
    }
  }
  if (den == 0) throw Error("DLM is undefined for a reference without detail");
  return std::clamp(num / den, 0.0, 1.0);
}

VifSums vif_channel(const Plane& ref, const Plane& dis, const VifParams& p) {
  if (!ref.same_shape(dis)) throw Error("vif_channel: dimension mismatch");
  if (ref.empty()) throw Error("vif_channel: empty band");
  // Coarse bands of small frames can be narrower than the window.
  const int win = std::min({p.window, ref.width(), ref.height()});
  const MomentMaps m = windowed_moments(ref, dis, win, p.stride);
  VifSums sums;
  auto vx = m.var_x.samples(), vy = m.var_y.samples(), cxy = m.cov_xy.samples();
  for (std::size_t i = 0; i < vx.size(); ++i) {
    if (vx[i] < kVifEps) continue;
    const double g = cxy[i] / (vx[i] + kVifEps);
    const double sv = std::max(vy[i] - g * cxy[i], 0.0);
    sums.num += std::log2(1 + g * g * vx[i] / (sv + p.sigma_n_sq));
    sums.den += std::log2(1 + vx[i] / p.sigma_n_sq);
  }
  return sums;
}

VifSums vif_vector_channel(const Plane& ref, const Plane& dis, const VifParams& p) {
  if (!ref.same_shape(dis)) throw Error("vif_vector_channel: dimension mismatch");
  constexpr int kN = 3;
  constexpr int kDim = kN * kN;
  const int out_w = ref.width() - kN + 1, out_h = ref.height() - kN + 1;
  if (out_w < 1 || out_h < 1) throw Error("vector VIF needs bands of at least 3x3");

  using Vec = Eigen::Matrix<double, kDim, 1>;
  using Mat = Eigen::Matrix<double, kDim, kDim>;
  auto neighbourhood = [&](int r, int c) {
    Vec v;
    for (int dy = 0; dy < kN; ++dy)
      for (int dx = 0; dx < kN; ++dx) v(dy * kN + dx) = ref(r + dy, c + dx);
    return v;
  };

  const double count = static_cast<double>(out_w) * out_h;
  Vec mean = Vec::Zero();
  for (int r = 0; r < out_h; ++r)
    for (int c = 0; c < out_w; ++c) mean += neighbourhood(r, c);
  mean /= count;
  Mat cov = Mat::Zero();
  for (int r = 0; r < out_h; ++r) {
    for (int c = 0; c < out_w; ++c) {
      const Vec d = neighbourhood(r, c) - mean;
      cov.noalias() += d * d.transpose();
    }
  }
  cov /= count;
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  Vec lambda = eig.eigenvalues().cwiseMax(kEigenFloor);
  const Mat inv = eig.eigenvectors() * lambda.cwiseInverse().asDiagonal() *
                  eig.eigenvectors().transpose();

  const MomentMaps m = windowed_moments(ref, dis, kN, 1);
  VifSums sums;
  for (int r = 0; r < out_h; ++r) {
    for (int c = 0; c < out_w; ++c) {
      const double vx = m.var_x(r, c);
      if (vx < kVifEps) continue;
      const double cxy = m.cov_xy(r, c);
      const double g = cxy / (vx + kVifEps);
      const double sv = std::max(m.var_y(r, c) - g * cxy, 0.0);
      const Vec v = neighbourhood(r, c);
      const double s_sq = v.dot(inv * v) / kDim;
      for (int k = 0; k < kDim; ++k) {
        sums.num += std::log2(1 + g * g * s_sq * lambda(k) / (sv + p.sigma_n_sq));
        sums.den += std::log2(1 + s_sq * lambda(k) / p.sigma_n_sq);
      }
    }
  }
  return sums;
}

Plane approx_at_level(const WaveletPyramid& pyr, int k) {
  if (k < 1) throw Error("approximation level must be >= 1");
  if (k <= pyr.num_levels()) return pyr.approx_levels[k - 1];
  Plane current = pyr.approx();
  for (int level = pyr.num_levels(); level < k; ++level) {
    if (current.width() < 2 && current.height() < 2) {
      throw Error("approximation band for level " + std::to_string(k) + " unavailable");
    }
    current = std::move(wavelet_step(current, pyr.wavelet).approx_levels[0]);
  }
  return current;
}

double vif_feature(const WaveletPyramid& ref, const WaveletPyramid& dis,
                   VifVariant variant, int scale, const VifParams& p) {
  require_same_geometry(ref, dis, "vif_feature");
  VifSums sums;
  switch (variant) {
    case VifVariant::kScalar:
      for (int k = 1; k <= ref.num_levels(); ++k) {
        for (Band b : {Band::kHorizontal, Band::kVertical, Band::kDiagonal}) {
          sums += vif_channel(ref.band(k, b), dis.band(k, b), p);
        }
      }
      break;
    case VifVariant::kVector:
      for (int k = 1; k <= ref.num_levels(); ++k) {
        for (Band b : {Band::kHorizontal, Band::kVertical, Band::kDiagonal}) {
          sums += vif_vector_channel(ref.band(k, b), dis.band(k, b), p);
        }
      }
      break;
    case VifVariant::kEdge:
      for (int k = 1; k <= ref.num_levels(); ++k) {
        for (Band b : {Band::kHorizontal, Band::kVertical}) {
          sums += vif_channel(ref.band(k, b), dis.band(k, b), p);
        }
      }
      break;
    case VifVariant::kApprox:
      sums = vif_channel(ref.approx(), dis.approx(), p);
      break;
    case VifVariant::kScale:
      sums = vif_channel(approx_at_level(ref, scale), approx_at_level(dis, scale), p);
      break;
  }
  return sums.ratio();
}

double motion_feature(const Plane& approx_prev, const Plane& approx_cur) {
  if (!approx_prev.same_shape(approx_cur)) throw Error("motion_feature: dimension mismatch");
  if (approx_cur.empty()) throw Error("motion_feature: empty band");
  auto a = approx_prev.samples(), b = approx_cur.samples();
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(b[i] - a[i]);
  return acc / static_cast<double>(a.size());
}

}  // namespace funque
