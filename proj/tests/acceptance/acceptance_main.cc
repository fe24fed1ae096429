// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "funque/eval.h"
#include "funque/features.h"
#include "funque/fusion.h"
#include "funque/integral.h"
#include "funque/transform.h"
#include "test_util.h"

namespace {

using namespace funque;
using funque::testing::Rng;
namespace t = funque::testing;

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Wavelet-domain statistics against pixel blocks

Outcome criterion_1() {
  const auto start = std::chrono::steady_clock::now();
  const SsimConsts c;
  double worst_stats = 0, worst_ssim = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    const Plane x = t::random_plane(rng, 32, 32);
    const Plane y = t::add_noise(t::box_blur(x, static_cast<int>(seed % 2)), 5 + seed % 20, rng);
    const WaveletPyramid px = wavelet_pyramid(x, Wavelet::kHaar, 2);
    const WaveletPyramid py = wavelet_pyramid(y, Wavelet::kHaar, 2);
    for (int levels : {1, 2}) {
      const LocalStats s = wd_local_stats(px, py, levels);
      const int b = 1 << levels;
      double acc = 0;
      for (int i = 0; i < 32 / b; ++i)
        for (int j = 0; j < 32 / b; ++j) {
          const t::BlockStats o = t::block_stats(x, y, i * b, j * b, b);
          worst_stats = std::max({worst_stats, t::rel_diff(s.mu_x(i, j), o.mx), t::rel_diff(s.mu_y(i, j), o.my),
                                  t::rel_diff(s.var_x(i, j), o.vx), t::rel_diff(s.var_y(i, j), o.vy),
                                  std::abs(s.cov_xy(i, j) - o.cxy) / std::max(std::sqrt(o.vx * o.vy), 1e-300)});
          acc += t::ssim_of(o, c.c1, c.c2);
        }
      const double oracle = acc / ((32 / b) * (32 / b));
      worst_ssim = std::max(worst_ssim, t::rel_diff(wd_ssim(s), oracle));
    }
  }
  const double secs = seconds_since(start);
  const bool pass = worst_stats <= 1e-9 && worst_ssim <= 1e-9 && secs < 10;
  return {pass, fmt("max stat rel err %.3g", worst_stats) + fmt(", max WD-SSIM rel err %.3g", worst_ssim) +
                    fmt(", %.2f s (limits 1e-9, 1e-9, 10 s)", secs)};
}

// ---------------------------------------------------------------------------
// 2. Integral-image masking and moments

Outcome criterion_2() {
  const auto start = std::chrono::steady_clock::now();
  const double k = 1.0 / 30;
  const double kernel[3][3] = {{k, k, k}, {k, 2 * k, k}, {k, k, k}};
  double worst_mask = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(2000 + seed);
    const int w = 8 + rng.below(40), h = 8 + rng.below(40);
    SubbandSet a{t::random_plane(rng, w, h, -30, 30), t::random_plane(rng, w, h, -30, 30),
                 t::random_plane(rng, w, h, -30, 30)};
    Plane e(w, h);
    for (std::size_t i = 0; i < e.size(); ++i)
      e.samples()[i] = std::abs(a.h.samples()[i]) + std::abs(a.v.samples()[i]) + std::abs(a.d.samples()[i]);
    worst_mask = std::max(worst_mask, t::max_abs_diff(dlm_masking_threshold(a), t::dense_conv3(e, kernel)));
  }

  double worst_moment = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(3000 + seed);
    const Plane x = t::random_plane(rng, 24, 20);
    const Plane y = t::add_noise(x, 15, rng);
    const MomentMaps m = windowed_moments(x, y, 9, 1);
    for (int r = 0; r < m.mu_x.height(); ++r)
      for (int c = 0; c < m.mu_x.width(); ++c) {
        const t::BlockStats o = t::block_stats(x, y, r, c, 9);
        worst_moment = std::max({worst_moment, t::rel_diff(m.mu_x(r, c), o.mx), t::rel_diff(m.mu_y(r, c), o.my),
                                 t::rel_diff(m.var_x(r, c), o.vx), t::rel_diff(m.var_y(r, c), o.vy),
                                 std::abs(m.cov_xy(r, c) - o.cxy) / std::sqrt(o.vx * o.vy)});
      }
  }
  const double secs = seconds_since(start);
  const bool pass = worst_mask <= 1e-9 && worst_moment <= 1e-6 && secs < 10;
  return {pass, fmt("masking max abs err %.3g", worst_mask) + fmt(", moments max rel err %.3g", worst_moment) +
                    fmt(", %.2f s (limits 1e-9, 1e-6, 10 s)", secs)};
}

// ---------------------------------------------------------------------------
// 3. Identity

Outcome criterion_3() {
  const FeatureExtractor fx(default_transform_config(), all_feature_names());
  double worst = 0;
  for (int f = 0; f < 10; ++f) {
    const Plane x = t::textured_plane(40 + f, 160, 120);
    // Static content: the previous frame is the same picture.
    const FrameFeatures first = fx.extract(x, x, nullptr);
    const FrameFeatures again = fx.extract(x, x, &first.ref_approx);
    for (std::size_t i = 0; i < again.features.schema.size(); ++i) {
      const std::string& n = again.features.schema[i];
      const double want = (n == "wd_essim" || n == "motion") ? 0.0 : 1.0;
      worst = std::max(worst, std::abs(again.features.values[i] - want));
    }
  }
  return {worst <= 1e-9, fmt("max deviation %.3g over 10 frames x 12 features (limit 1e-9)", worst)};
}

// ---------------------------------------------------------------------------
// 4. Transform invariants

Outcome criterion_4() {
  double worst_energy = 0, worst_recon = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(4000 + seed);
    const int levels = 1 + static_cast<int>(seed % 3);
    const Plane x = t::random_plane(rng, 64, 48, -128, 128);
    const WaveletPyramid p = wavelet_pyramid(x, Wavelet::kHaar, levels);
    double e = t::energy(p.approx());
    for (const SubbandSet& s : p.levels) e += t::energy(s.h) + t::energy(s.v) + t::energy(s.d);
    worst_energy = std::max(worst_energy, t::rel_diff(e, t::energy(x)));
    worst_recon = std::max(worst_recon, t::max_abs_diff(t::haar_reconstruct(p), x) / 128);
  }

  const CsfKernel k = build_spatial_csf_kernel(32);
  double asym = 0;
  for (int i = 0; i < kCsfTaps; ++i) asym = std::max(asym, std::abs(k.taps[i] - k.taps[kCsfTaps - 1 - i]));
  const double dc = k.dc_gain();

  // 2-D grating cos(2 pi u x) cos(2 pi u y); the curve predicts CSF(u ppd)^2.
  double worst_atten = 0, worst_u = 0;
  for (int i = 1; i <= 10; ++i) {
    const double u = 0.04 * i;
    const int n = 160;
    Plane in(n, n);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) in(y, x) = std::cos(2 * kPi * u * x) * std::cos(2 * kPi * u * y);
    const Plane out = apply_spatial_csf(in, k);
    double num = 0, den = 0;
    for (int y = 12; y < n - 12; ++y)
      for (int x = 12; x < n - 12; ++x) {
        num += out(y, x) * in(y, x);
        den += in(y, x) * in(y, x);
      }
    const double want = csf_value(u * 32) * csf_value(u * 32);
    const double err = std::abs(num / den - want) / want;
    if (err > worst_atten) {
      worst_atten = err;
      worst_u = u;
    }
  }
  const bool pass = worst_energy <= 1e-9 && worst_recon <= 1e-9 && asym == 0 && std::abs(dc - 0.31) <= 1e-3 &&
                    worst_atten <= 0.02;
  return {pass, fmt("energy rel err %.3g", worst_energy) + fmt(", reconstruction rel err %.3g", worst_recon) +
                    fmt(", kernel asymmetry %.3g", asym) + fmt(", DC gain %.6f", dc) +
                    fmt(", worst sinusoid attenuation error %.1f%%", 100 * worst_atten) +
                    fmt(" at u=%.2f cyc/px (limits 1e-9, 1e-9, 0, 0.31+-1e-3, 2%%)", worst_u)};
}

// ---------------------------------------------------------------------------
// 5. Weighting and decoupling commute

Outcome criterion_5() {
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(5000 + seed);
    const int levels = 1 + static_cast<int>(seed % 4);
    const Plane x = t::textured_plane(5000 + seed, 128, 96);
    const Plane y = t::add_noise(t::box_blur(x, 1 + static_cast<int>(seed % 2)), 3 + seed, rng);
    const WaveletPyramid r = wavelet_pyramid(x, Wavelet::kHaar, levels);
    const WaveletPyramid d = wavelet_pyramid(y, Wavelet::kHaar, levels);
    for (const SubbandWeights& w : {SubbandWeights::li(32, levels), SubbandWeights::watson()}) {
      const double first = dlm_score(subband_weighting(r, w), subband_weighting(d, w));
      const double second = dlm_score(r, d, &w);
      worst = std::max(worst, std::abs(first - second));
    }
  }
  return {worst <= 1e-9, fmt("max |DLM difference| %.3g over 20 pairs x {li, watson} (limit 1e-9)", worst)};
}

// ---------------------------------------------------------------------------
// 6. Protocol machinery

const std::vector<std::string> kPlanted = {"dlm", "vif_scale2", "wd_essim"};

// One column per atom of the default selection space; MOS depends on the
// planted columns only.
Dataset planted_dataset(std::uint64_t seed, int rows) {
  Rng rng(seed);
  Dataset d;
  d.name = "planted";
  for (const auto& cat : default_selection_space().categories)
    for (const auto& n : cat) d.schema.push_back(n);
  for (int r = 0; r < rows; ++r) {
    DatasetRow row{"v" + std::to_string(r), {}, 0, "c" + std::to_string(r)};
    double target = 0;
    for (const std::string& n : d.schema) {
      const double v = rng.uniform();
      row.features.push_back(v);
      if (std::count(kPlanted.begin(), kPlanted.end(), n)) target += v;
    }
    row.mos = 20 + 60 * target / kPlanted.size();
    d.rows.push_back(std::move(row));
  }
  return d;
}

Outcome criterion_6() {
  const auto start = std::chrono::steady_clock::now();
  const double r = srocc(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{2, 1, 4, 3, 5});
  const double fixed = fisher_average(std::vector<double>{0.6, 0.6, 0.6});
  const double hand = fisher_average(std::vector<double>{0.9, 0.2});
  const double hand_want = std::tanh((std::atanh(0.9) + std::atanh(0.2)) / 2);

  CvOptions cv;
  cv.n_splits = 200;
  cv.threads = 4;
  const double separable = cross_validate(t::synthetic_dataset(6, 60, 1, 0), cv).mean_srocc;

  CvOptions sel;
  sel.n_splits = 20;
  sel.threads = 8;
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    sel.seed = seed;
    const SelectionResult res = exhaustive_select(default_selection_space(), planted_dataset(600 + seed, 60), sel);
    hits += res.best_schema == kPlanted;
  }
  const double secs = seconds_since(start);
  const bool pass = r == 0.8 && std::abs(fixed - 0.6) <= 1e-9 && std::abs(hand - hand_want) <= 1e-9 &&
                    separable >= 0.99 && hits >= 19 && secs < 300;
  return {pass, fmt("srocc %.17g", r) + fmt(", fisher fixed point err %.3g", std::abs(fixed - 0.6)) +
                    fmt(", CV SROCC %.4f", separable) + fmt(", selection %.0f/20", hits) +
                    fmt(", %.1f s (limits exact 0.8, 1e-9, 0.99, 19/20, 300 s)", secs)};
}

// ---------------------------------------------------------------------------
// 7. Efficiency

Outcome criterion_7() {
  const TransformConfig cfg = default_transform_config();
  const double ratio = ops_ratio(cfg, default_schema());

  const int w = 1920, h = 1080, frames = 10;
  std::vector<Plane> ref, dis;
  Rng rng(7);
  for (int f = 0; f < frames; ++f) {
    ref.push_back(t::textured_plane(700 + f, w, h));
    dis.push_back(t::add_noise(t::box_blur(ref.back(), 1), 6, rng));
  }
  const FeatureExtractor fx(cfg, default_schema());
  auto start = std::chrono::steady_clock::now();
  Plane prev_approx;
  for (int f = 0; f < frames; ++f) {
    FrameFeatures ff = fx.extract(ref[f], dis[f], f > 0 ? &prev_approx : nullptr);
    prev_approx = std::move(ff.ref_approx);
  }
  const double ours = seconds_since(start);

  const ReferencePipeline pipe;
  start = std::chrono::steady_clock::now();
  for (int f = 0; f < frames; ++f) (void)pipe.evaluate(ref[f], dis[f], f > 0 ? &ref[f - 1] : nullptr);
  const double theirs = seconds_since(start);

  const double speedup = theirs / ours;
  return {ratio >= 4 && speedup >= 2,
          fmt("ops ratio %.2f", ratio) + fmt(", 1080p wall clock %.3f s", ours) + fmt(" vs %.3f s", theirs) +
              fmt(" (speedup %.2fx; limits ratio >= 4, speedup >= 2)", speedup)};
}

// ---------------------------------------------------------------------------
// 8. End-to-end monotonicity

Plane degrade(const Plane& x, int step, bool blur, std::uint64_t seed) {
  if (step == 0) return x;
  if (blur) return t::box_blur(x, step);
  // Fixed noise field scaled by the step.
  Rng rng(seed);
  Plane out = x;
  for (double& v : out.samples()) v = std::clamp(v + 6.0 * step * rng.normal(), 0.0, 255.0);
  return out;
}

FeatureVector clip_features(const FeatureExtractor& fx, std::uint64_t content, int step, bool blur) {
  std::vector<FeatureVector> frames;
  Plane prev;
  for (int f = 0; f < 2; ++f) {
    const Plane x = t::textured_plane(content * 10 + f, 128, 96);
    FrameFeatures ff = fx.extract(x, degrade(x, step, blur, content * 31 + f), f > 0 ? &prev : nullptr);
    prev = std::move(ff.ref_approx);
    frames.push_back(std::move(ff.features));
  }
  return aggregate_video_features(frames);
}

Outcome criterion_8() {
  const FeatureExtractor fx(default_transform_config(), default_schema());
  // Training contents are disjoint from the evaluation contents.
  Dataset train;
  train.name = "synthetic-ladder";
  train.schema = default_schema();
  for (std::uint64_t content = 1; content <= 6; ++content)
    for (bool blur : {false, true})
      for (int step = 0; step <= 4; ++step) {
        const FeatureVector f = clip_features(fx, content, step, blur);
        train.rows.push_back({"c" + std::to_string(content) + (blur ? "b" : "n") + std::to_string(step), f.values,
                              90.0 - 15.0 * step, "c" + std::to_string(content)});
      }
  const SvrModel model = svr_train(train);

  double worst_rise = 0;
  for (std::uint64_t content = 101; content <= 103; ++content)
    for (bool blur : {false, true}) {
      double last = 1e300;
      for (int step = 0; step <= 4; ++step) {
        const double s = svr_predict(model, clip_features(fx, content, step, blur));
        worst_rise = std::max(worst_rise, s - last);
        last = s;
      }
    }
  return {worst_rise <= 0.01, fmt("largest score increase along a ladder %.4f", std::max(worst_rise, 0.0)) +
                                  " over 3 contents x {noise, blur} x 5 steps (limit 0.01)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 wavelet-domain statistics match pixel blocks", criterion_1},
      {"2 integral-image masking and moments", criterion_2},
      {"3 identity suite", criterion_3},
      {"4 transform invariants", criterion_4},
      {"5 weighting/decoupling order", criterion_5},
      {"6 protocol machinery", criterion_6},
      {"7 efficiency", criterion_7},
      {"8 end-to-end monotonicity", criterion_8},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed;
}
