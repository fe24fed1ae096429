#include "funque/eval.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "funque/error.h"
#include "funque/features.h"

namespace funque {
namespace {

constexpr double kMaxAbsR = 1.0 - 1e-12;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Unbiased draw in [0, bound) by rejection; portable across standard
// libraries, unlike the distribution classes.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % bound;
}

double correlation_or_zero(std::span<const double> pred, std::span<const double> mos) {
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  if (constant(pred) || constant(mos)) return 0.0;
  return srocc(pred, mos);
}

template <typename Fn>
void parallel_for(int n, int threads, Fn fn) {
  threads = std::clamp(threads, 1, std::max(n, 1));
  std::vector<std::exception_ptr> errors(threads);
  auto worker = [&](int t) {
    try {
      for (int i = t; i < n; i += threads) fn(i);
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
  }
  for (auto& e : errors) if (e) std::rethrow_exception(e);
}

// Area of level-k bands relative to the frame, given the area after SAST.
double level_area(double a0, int k) { return a0 * std::pow(0.25, k); }

double wavelet_ops(Wavelet w) { return w == Wavelet::kHaar ? 4.0 : 8.0; }

// Integral tables for 5 maps (2 ops each), 5 four-lookup box sums, moment
// and information arithmetic.
constexpr double kVifScalarOps = 10 + 5 * 4 + 8 + 10;
// Global 9x9 covariance accumulation, quadratic form, and the 3x3 moment
// pass of the scalar channel.
constexpr double kVifVectorOps = 45 + 81 + kVifScalarOps;
constexpr double kDlmBandOps = 8 + 2 + 4;    // decouple, mask, pool both
constexpr double kDlmMaskIntegral = 8;       // |A| sum, table, box, centre
constexpr double kDlmMaskDense = 3 + 9;      // |A| sum, 3x3 MAC
constexpr double kSsimStatOps = 9;           // x^2, y^2, xy for 3 bands
constexpr double kSsimBlockOps = 15;

}  // namespace

std::vector<double> fractional_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2 + 1;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double srocc(std::span<const double> pred, std::span<const double> mos) {
  if (pred.size() != mos.size()) {
    throw Error("srocc: " + std::to_string(pred.size()) + " predictions vs " +
                std::to_string(mos.size()) + " scores");
  }
  if (pred.size() < 3) throw Error("srocc needs at least 3 pairs");
  const std::vector<double> rp = fractional_ranks(pred), rm = fractional_ranks(mos);
  const double n = static_cast<double>(rp.size());
  const double mean = (n + 1) / 2;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rp.size(); ++i) {
    const double a = rp[i] - mean, b = rm[i] - mean;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (sxx == 0 || syy == 0) throw Error("srocc undefined for a constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double fisher_average(std::span<const double> correlations) {
  if (correlations.empty()) throw Error("fisher_average of an empty list");
  double z = 0;
  for (double r : correlations) {
    if (!(std::abs(r) < 1)) throw Error("fisher_average needs |r| < 1, got " + format_double(r));
    z += std::atanh(r);
  }
  return std::tanh(z / static_cast<double>(correlations.size()));
}

std::vector<Split> make_splits(const Dataset& data, const CvOptions& opt) {
  data.validate();
  if (opt.n_splits < 1) throw Error("n_splits must be at least 1");
  if (!(opt.train_fraction > 0 && opt.train_fraction < 1)) {
    throw Error("train_fraction must lie in (0, 1)");
  }
  std::map<std::string, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    const std::string key = opt.group_by_content ? data.rows[i].content_id
                                                 : data.rows[i].video_id + '\x1f' + std::to_string(i);
    by_id[key].push_back(i);
  }
  std::vector<std::vector<std::size_t>> groups;
  for (auto& [id, rows] : by_id) groups.push_back(std::move(rows));
  const std::size_t g = groups.size();
  if (g < 2) {
    throw Error("need at least 2 content groups for a train/test split, have " + std::to_string(g));
  }
  const std::size_t n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(opt.train_fraction * static_cast<double>(g))), 1, g - 1);

  std::vector<Split> splits(opt.n_splits);
  std::vector<std::size_t> order(g);
  for (int s = 0; s < opt.n_splits; ++s) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(splitmix64(opt.seed ^ splitmix64(static_cast<std::uint64_t>(s))));
    for (std::size_t i = g - 1; i > 0; --i) std::swap(order[i], order[bounded(rng, i + 1)]);
    Split& sp = splits[s];
    for (std::size_t i = 0; i < g; ++i) {
      auto& side = i < n_train ? sp.train : sp.test;
      side.insert(side.end(), groups[order[i]].begin(), groups[order[i]].end());
    }
    std::sort(sp.train.begin(), sp.train.end());
    std::sort(sp.test.begin(), sp.test.end());
    if (sp.test.size() < 3) {
      throw Error("too few content groups for a " + format_double(opt.train_fraction) +
                  " split: test side of split " + std::to_string(s) + " has " +
                  std::to_string(sp.test.size()) + " rows (need 3)");
    }
  }
  return splits;
}

CvResult cross_validate(const Dataset& data, const CvOptions& opt) {
  const std::vector<Split> splits = make_splits(data, opt);
  CvResult out;
  out.split_srocc.assign(splits.size(), 0.0);
  parallel_for(static_cast<int>(splits.size()), opt.threads, [&](int s) {
    const Split& sp = splits[s];
    const SvrModel model = svr_train(data.subset(sp.train), opt.hyper);
    std::vector<double> pred, mos;
    for (std::size_t i : sp.test) {
      pred.push_back(svr_predict_values(model, data.rows[i].features));
      mos.push_back(data.rows[i].mos);
    }
    out.split_srocc[s] = std::clamp(correlation_or_zero(pred, mos), -kMaxAbsR, kMaxAbsR);
  });
  out.mean_srocc = fisher_average(out.split_srocc);
  return out;
}

void SelectionSpace::validate() const {
  if (categories.empty()) throw Error("selection space has no categories");
  std::set<std::string> seen;
  for (const auto& cat : categories) {
    if (cat.empty()) throw Error("selection space has an empty category");
    for (const auto& name : cat) {
      if (!seen.insert(name).second) throw Error("candidate '" + name + "' appears twice");
    }
  }
  validate_schema(std::vector<std::string>(seen.begin(), seen.end()));
}

SelectionSpace default_selection_space() {
  return {{{"dlm"},
           {"wd_ssim", "wd_essim"},
           {"vif_scalar", "vif_vector", "vif_edge", "vif_approx", "vif_scale1", "vif_scale2",
            "vif_scale3", "vif_scale4"},
           {"motion"}}};
}

std::uint64_t count_subsets(const SelectionSpace& space) {
  std::uint64_t n = 1;
  for (const auto& cat : space.categories) n *= cat.size() + 1;
  return n - 1;
}

std::vector<std::vector<std::string>> enumerate_subsets(const SelectionSpace& space) {
  space.validate();
  std::vector<std::vector<std::string>> out;
  std::vector<std::size_t> pick(space.categories.size(), 0);  // 0 = skip
  while (true) {
    std::vector<std::string> schema;
    for (std::size_t c = 0; c < pick.size(); ++c) {
      if (pick[c] > 0) schema.push_back(space.categories[c][pick[c] - 1]);
    }
    if (!schema.empty()) {
      std::sort(schema.begin(), schema.end());
      out.push_back(std::move(schema));
    }
    std::size_t c = 0;
    while (c < pick.size() && ++pick[c] > space.categories[c].size()) pick[c++] = 0;
    if (c == pick.size()) break;
  }
  std::sort(out.begin(), out.end());
  return out;
}

SelectionResult exhaustive_select(const SelectionSpace& space, const Dataset& data,
                                  const CvOptions& opt) {
  const auto subsets = enumerate_subsets(space);
  CvOptions inner = opt;
  inner.threads = 1;
  SelectionResult res;
  res.ranked.resize(subsets.size());
  parallel_for(static_cast<int>(subsets.size()), opt.threads, [&](int i) {
    res.ranked[i] = {subsets[i], cross_validate(data.project(subsets[i]), inner).mean_srocc};
  });
  std::sort(res.ranked.begin(), res.ranked.end(), [](const SubsetScore& a, const SubsetScore& b) {
    if (a.cv_srocc != b.cv_srocc) return a.cv_srocc > b.cv_srocc;
    if (a.schema.size() != b.schema.size()) return a.schema.size() < b.schema.size();
    return a.schema < b.schema;
  });
  res.best_schema = res.ranked.front().schema;
  res.best_score = res.ranked.front().cv_srocc;
  return res;
}

std::vector<OpCost> ops_breakdown(const TransformConfig& cfg,
                                  const std::vector<std::string>& schema, int width,
                                  int height) {
  cfg.validate();
  validate_schema(schema);
  std::vector<OpCost> out;
  if (schema.empty()) return out;  // nothing consumes the transform
  const double a0 = cfg.sast ? 0.25 : 1.0;
  if (cfg.sast) out.push_back({"sast", 2 * 1.0});

  switch (cfg.csf) {
    case CsfMode::kSpatialFilter:
      out.push_back({"csf_spatial", 2 * 2 * kCsfTaps * a0});
      break;
    case CsfMode::kFrequencyFilter: {
      const double n = std::max(1.0, a0 * width * height);
      out.push_back({"csf_frequency", 2 * a0 * (2 * 5 * std::log2(n) + 1)});
      break;
    }
    case CsfMode::kLiSw:
    case CsfMode::kWatsonSw: {
      double coeffs = 0;
      for (int k = 0; k < cfg.levels; ++k) coeffs += level_area(a0, k);
      out.push_back({"csf_weighting", 2 * coeffs});
      break;
    }
    case CsfMode::kNone:
      break;
  }

  const int levels = cfg.levels;
  double wt = 0;
  for (int k = 0; k < levels; ++k) wt += 2 * wavelet_ops(cfg.wavelet) * level_area(a0, k);
  out.push_back({"wavelet", wt});

  auto detail_area = [&] {
    double s = 0;
    for (int k = 1; k <= levels; ++k) s += level_area(a0, k);
    return s;
  };
  const double approx_area = level_area(a0, levels);
  const bool has_ssim = std::count(schema.begin(), schema.end(), "wd_ssim") +
                            std::count(schema.begin(), schema.end(), "wd_essim") > 0;
  if (has_ssim) out.push_back({"wd_local_stats", kSsimStatOps * detail_area() + 4 * approx_area});

  int deepest_extra = levels;
  for (const std::string& n : schema) {
    double c = 0;
    if (n == "wd_ssim") c = kSsimBlockOps * approx_area;
    else if (n == "wd_essim") c = (kSsimBlockOps + 2) * approx_area;
    else if (n == "dlm") c = (3 * kDlmBandOps + kDlmMaskIntegral) * detail_area();
    else if (n == "vif_scalar") c = 3 * kVifScalarOps * detail_area();
    else if (n == "vif_vector") c = 3 * kVifVectorOps * detail_area();
    else if (n == "vif_edge") c = 2 * kVifScalarOps * detail_area();
    else if (n == "vif_approx") c = kVifScalarOps * approx_area;
    else if (n == "motion") c = 2 * approx_area;
    else if (n.starts_with("vif_scale")) {
      const int k = n.back() - '0';
      c = kVifScalarOps * level_area(a0, k);
      for (int j = deepest_extra; j < k; ++j) c += 2 * wavelet_ops(cfg.wavelet) * level_area(a0, j);
      deepest_extra = std::max(deepest_extra, k);
    }
    out.push_back({n, c});
  }
  return out;
}

double ops_per_pixel(const TransformConfig& cfg, const std::vector<std::string>& schema,
                     int width, int height) {
  double total = 0;
  for (const OpCost& c : ops_breakdown(cfg, schema, width, height)) total += c.ops_per_pixel;
  return total;
}

std::vector<OpCost> reference_ops_breakdown() {
  constexpr int taps[] = {17, 9, 5, 3};
  std::vector<OpCost> out;
  for (int s = 0; s < 4; ++s) {
    const double area = std::pow(0.25, s);
    // 3 products, 5 filtered maps, per-pixel information terms.
    double c = (3 + 5 * 2 * taps[s] + 10) * area;
    // Anti-alias filtering of both inputs before decimation.
    if (s < 3) c += 2 * 2 * taps[s + 1] * area;
    out.push_back({"vif_scale" + std::to_string(s), c});
  }
  double wt = 0, detail = 0;
  for (int k = 0; k < 4; ++k) {
    wt += 2 * wavelet_ops(Wavelet::kDb2) * std::pow(0.25, k);
    detail += std::pow(0.25, k + 1);
  }
  out.push_back({"adm_wavelet", wt});
  out.push_back({"adm", (3 * kDlmBandOps + kDlmMaskDense * 3) * detail});
  out.push_back({"motion", 2 * 5 + 2});
  return out;
}

double reference_ops_per_pixel() {
  double total = 0;
  for (const OpCost& c : reference_ops_breakdown()) total += c.ops_per_pixel;
  return total;
}

double ops_ratio(const TransformConfig& cfg, const std::vector<std::string>& schema) {
  const double ours = ops_per_pixel(cfg, schema);
  if (!(ours > 0)) throw Error("ops ratio undefined for a zero-cost configuration");
  return reference_ops_per_pixel() / ours;
}

namespace {

TransformConfig reference_config() {
  TransformConfig cfg;
  cfg.wavelet = Wavelet::kDb2;
  cfg.levels = 4;
  cfg.csf = CsfMode::kWatsonSw;
  cfg.csf_shared = true;
  cfg.sast = false;
  return cfg;
}

}  // namespace

ReferencePipeline::ReferencePipeline() : transform_(reference_config()) {}

std::vector<double> ReferencePipeline::evaluate(const Plane& ref, const Plane& dis,
                                                const Plane* prev_ref) const {
  if (!ref.same_shape(dis)) throw Error("reference and distorted frames differ in size");
  std::vector<double> out;
  Plane r = ref, d = dis;
  for (int s = 0; s < 4; ++s) {
    if (s > 0) {
      r = sast_rescale(r);
      d = sast_rescale(d);
    }
    out.push_back(vif_channel(r, d).ratio());
  }
  out.push_back(dlm_score(transform_(ref), transform_(dis)));
  out.push_back(prev_ref ? motion_feature(*prev_ref, ref) : 0.0);
  return out;
}

}  // namespace funque
