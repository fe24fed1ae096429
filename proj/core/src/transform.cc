#include "funque/transform.h"

#include <fftw3.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>

#include "funque/error.h"

#ifndef FUNQUE_DEFAULT_ASSET_DIR
#define FUNQUE_DEFAULT_ASSET_DIR "assets"
#endif
#ifndef FUNQUE_INSTALL_ASSET_DIR
#define FUNQUE_INSTALL_ASSET_DIR FUNQUE_DEFAULT_ASSET_DIR
#endif

namespace funque {
namespace {

std::atomic<std::uint64_t> g_transform_calls{0};

// The FFTW planner is not reentrant.
std::mutex g_fftw_mutex;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw Error("expected a boolean, got '" + v + "'");
}

double parse_double(const std::string& v) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw Error("expected a number, got '" + v + "'");
  }
  return out;
}

int mirror(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

// One analysis step along rows of `in` (even width): writes low/high halves.
void analyze_rows(const Plane& in, std::span<const double> lo,
                  std::span<const double> hi, Plane& low, Plane& high) {
  const int n = in.width();
  const int half = n / 2;
  const int offset = (static_cast<int>(lo.size()) - 2) / 2;
  low = Plane(half, in.height());
  high = Plane(half, in.height());
  for (int y = 0; y < in.height(); ++y) {
    const double* src = in.row(y);
    double* l = low.row(y);
    double* h = high.row(y);
    for (int i = 0; i < half; ++i) {
      double sl = 0, sh = 0;
      for (std::size_t k = 0; k < lo.size(); ++k) {
        const double v = src[mirror(2 * i + static_cast<int>(k) - offset, n)];
        sl += lo[k] * v;
        sh += hi[k] * v;
      }
      l[i] = sl;
      h[i] = sh;
    }
  }
}

Plane transpose(const Plane& p) {
  Plane out(p.height(), p.width());
  for (int y = 0; y < p.height(); ++y)
    for (int x = 0; x < p.width(); ++x) out(x, y) = p(y, x);
  return out;
}

void haar_step(const Plane& in, Plane& a, SubbandSet& bands) {
  const int w = in.width() / 2, h = in.height() / 2;
  a = Plane(w, h);
  bands.h = Plane(w, h);
  bands.v = Plane(w, h);
  bands.d = Plane(w, h);
  for (int y = 0; y < h; ++y) {
    const double* top = in.row(2 * y);
    const double* bot = in.row(2 * y + 1);
    for (int x = 0; x < w; ++x) {
      const double tl = top[2 * x], tr = top[2 * x + 1];
      const double bl = bot[2 * x], br = bot[2 * x + 1];
      a(y, x) = (tl + tr + bl + br) / 2;
      bands.h(y, x) = (tl + tr - bl - br) / 2;
      bands.v(y, x) = (tl - tr + bl - br) / 2;
      bands.d(y, x) = (tl - tr - bl + br) / 2;
    }
  }
}

void db2_step(const Plane& in, Plane& a, SubbandSet& bands) {
  const double s3 = std::sqrt(3.0);
  const double norm = 4 * std::numbers::sqrt2;
  const std::array<double, 4> lo = {(1 + s3) / norm, (3 + s3) / norm,
                                    (3 - s3) / norm, (1 - s3) / norm};
  const std::array<double, 4> hi = {lo[3], -lo[2], lo[1], -lo[0]};
  Plane lx, hx;
  analyze_rows(in, lo, hi, lx, hx);
  Plane ll, lh, hl, hh;
  analyze_rows(transpose(lx), lo, hi, ll, lh);
  analyze_rows(transpose(hx), lo, hi, hl, hh);
  a = transpose(ll);
  bands.h = transpose(lh);
  bands.v = transpose(hl);
  bands.d = transpose(hh);
}

}  // namespace

std::string_view to_string(Wavelet w) {
  return w == Wavelet::kHaar ? "haar" : "db2";
}

std::string_view to_string(CsfMode m) {
  switch (m) {
    case CsfMode::kNone: return "none";
    case CsfMode::kSpatialFilter: return "spatial_filter";
    case CsfMode::kFrequencyFilter: return "frequency_filter";
    case CsfMode::kLiSw: return "li_sw";
    case CsfMode::kWatsonSw: return "watson_sw";
  }
  return "unknown";
}

std::string_view to_string(Band b) {
  switch (b) {
    case Band::kApprox: return "A";
    case Band::kHorizontal: return "H";
    case Band::kVertical: return "V";
    case Band::kDiagonal: return "D";
  }
  return "?";
}

Wavelet parse_wavelet(std::string_view name) {
  if (name == "haar") return Wavelet::kHaar;
  if (name == "db2") return Wavelet::kDb2;
  throw Error("unknown wavelet '" + std::string(name) + "' (expected haar or db2)");
}

CsfMode parse_csf_mode(std::string_view name) {
  for (auto m : {CsfMode::kNone, CsfMode::kSpatialFilter, CsfMode::kFrequencyFilter,
                 CsfMode::kLiSw, CsfMode::kWatsonSw}) {
    if (name == to_string(m)) return m;
  }
  if (name == "spatial") return CsfMode::kSpatialFilter;
  if (name == "frequency") return CsfMode::kFrequencyFilter;
  throw Error("unknown csf mode '" + std::string(name) +
              "' (expected spatial_filter, frequency_filter, li_sw, watson_sw or none)");
}

void TransformConfig::validate() const {
  if (levels < 1 || levels > 4) {
    throw Error("wavelet levels must be in [1, 4], got " + std::to_string(levels));
  }
  if (!(pixels_per_degree > 0)) throw Error("pixels per degree must be positive");
  if (!csf_shared &&
      (csf == CsfMode::kSpatialFilter || csf == CsfMode::kFrequencyFilter)) {
    throw Error("spatial and frequency CSF filters are applied before the "
                "wavelet transform and must be shared");
  }
}

TransformConfig parse_transform_config(std::string_view text) {
  TransformConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key == "wavelet") cfg.wavelet = parse_wavelet(value);
    else if (key == "levels") cfg.levels = static_cast<int>(parse_double(value));
    else if (key == "csf") cfg.csf = parse_csf_mode(value);
    else if (key == "csf_shared") cfg.csf_shared = parse_bool(value);
    else if (key == "sast") cfg.sast = parse_bool(value);
    else if (key == "ppd") cfg.pixels_per_degree = parse_double(value);
    else throw Error("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

std::string format_transform_config(const TransformConfig& cfg) {
  std::ostringstream out;
  out << "wavelet = " << to_string(cfg.wavelet) << "\n"
      << "levels = " << cfg.levels << "\n"
      << "csf = " << to_string(cfg.csf) << "\n"
      << "csf_shared = " << (cfg.csf_shared ? "true" : "false") << "\n"
      << "sast = " << (cfg.sast ? "true" : "false") << "\n";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, cfg.pixels_per_degree);
  out << "ppd = " << std::string_view(buf, res.ptr - buf) << "\n";
  return out.str();
}

const Plane& WaveletPyramid::band(int level, Band b) const {
  if (level < 1 || level > num_levels()) {
    throw Error("pyramid has no level " + std::to_string(level));
  }
  const SubbandSet& s = levels[level - 1];
  switch (b) {
    case Band::kApprox: return approx_levels[level - 1];
    case Band::kHorizontal: return s.h;
    case Band::kVertical: return s.v;
    case Band::kDiagonal: return s.d;
  }
  return s.h;
}

Plane& WaveletPyramid::band(int level, Band b) {
  return const_cast<Plane&>(std::as_const(*this).band(level, b));
}

double csf_value(double f) {
  if (!(f >= 0)) throw Error("CSF frequency must be non-negative");
  return (0.31 + 0.69 * f) * std::exp(-0.29 * f);
}

double CsfKernel::dc_gain() const {
  double s = 0;
  for (double t : taps) s += t;
  return s;
}

CsfKernel build_spatial_csf_kernel(double ppd) {
  if (!(ppd > 0)) throw Error("pixels per degree must be positive");
  constexpr int half = kCsfTaps / 2;
  std::vector<double> response(kCsfGridSize);
  std::vector<double> freq(kCsfGridSize);
  for (int k = 0; k < kCsfGridSize; ++k) {
    freq[k] = static_cast<double>(k - kCsfGridSize / 2) / kCsfGridSize;
    response[k] = csf_value(std::abs(freq[k]) * ppd);
  }
  // The response is real and even, so the inverse DFT reduces to a cosine sum.
  CsfKernel kernel;
  for (int n = 0; n <= half; ++n) {
    double acc = 0;
    for (int k = 0; k < kCsfGridSize; ++k) {
      acc += response[k] * std::cos(2 * std::numbers::pi * freq[k] * n);
    }
    kernel.taps[half + n] = kernel.taps[half - n] = acc / kCsfGridSize;
  }
  // Truncation leaves the DC gain off CSF(0). Spreading the deficit evenly
  // over the taps is the smallest change in the sampled response.
  const double deficit = csf_value(0) - kernel.dc_gain();
  for (double& t : kernel.taps) t += deficit / kCsfTaps;
  return kernel;
}

Plane apply_spatial_csf(const Plane& plane, const CsfKernel& kernel) {
  if (plane.width() < kCsfTaps || plane.height() < kCsfTaps) {
    throw Error("spatial CSF needs a plane of at least 21x21 samples, got " +
                std::to_string(plane.width()) + "x" + std::to_string(plane.height()));
  }
  constexpr int half = kCsfTaps / 2;
  const int w = plane.width(), h = plane.height();
  Plane tmp(w, h);
  for (int y = 0; y < h; ++y) {
    const double* src = plane.row(y);
    double* dst = tmp.row(y);
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      if (x >= half && x < w - half) {
        for (int k = 0; k < kCsfTaps; ++k) acc += kernel.taps[k] * src[x + k - half];
      } else {
        for (int k = 0; k < kCsfTaps; ++k) acc += kernel.taps[k] * src[mirror(x + k - half, w)];
      }
      dst[x] = acc;
    }
  }
  Plane out(w, h);
  for (int y = 0; y < h; ++y) {
    double* dst = out.row(y);
    for (int k = 0; k < kCsfTaps; ++k) {
      const double t = kernel.taps[k];
      const double* src = tmp.row(mirror(y + k - half, h));
      for (int x = 0; x < w; ++x) dst[x] += t * src[x];
    }
  }
  return out;
}

Plane apply_frequency_csf(const Plane& plane, double ppd) {
  if (plane.empty()) throw Error("frequency CSF on an empty plane");
  if (!(ppd > 0)) throw Error("pixels per degree must be positive");
  const int w = plane.width(), h = plane.height();
  const std::size_t n = plane.size();
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  if (!buf) throw Error("fftw_malloc failed");
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(g_fftw_mutex);
    fwd = fftw_plan_dft_2d(h, w, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    inv = fftw_plan_dft_2d(h, w, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  auto samples = plane.samples();
  for (std::size_t i = 0; i < n; ++i) {
    buf[i][0] = samples[i];
    buf[i][1] = 0;
  }
  fftw_execute(fwd);
  auto gain = [ppd](int k, int len) {
    const double u = (k <= len / 2 ? k : k - len) / static_cast<double>(len);
    return csf_value(std::abs(u) * ppd);
  };
  std::vector<double> gx(w), gy(h);
  for (int k = 0; k < w; ++k) gx[k] = gain(k, w);
  for (int k = 0; k < h; ++k) gy[k] = gain(k, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double g = gy[y] * gx[x] / static_cast<double>(n);
      buf[static_cast<std::size_t>(y) * w + x][0] *= g;
      buf[static_cast<std::size_t>(y) * w + x][1] *= g;
    }
  }
  fftw_execute(inv);
  Plane out(w, h);
  auto dst = out.samples();
  for (std::size_t i = 0; i < n; ++i) dst[i] = buf[i][0];
  {
    std::lock_guard lock(g_fftw_mutex);
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  fftw_free(buf);
  return out;
}

Plane sast_rescale(const Plane& plane) {
  if (plane.empty()) throw Error("SAST on an empty plane");
  const Plane even = pad_replicate(plane, plane.width() + plane.width() % 2,
                                   plane.height() + plane.height() % 2);
  Plane out(even.width() / 2, even.height() / 2);
  for (int y = 0; y < out.height(); ++y) {
    const double* top = even.row(2 * y);
    const double* bot = even.row(2 * y + 1);
    for (int x = 0; x < out.width(); ++x) {
      out(y, x) = (top[2 * x] + top[2 * x + 1] + bot[2 * x] + bot[2 * x + 1]) / 4;
    }
  }
  return out;
}

WaveletPyramid wavelet_step(const Plane& plane, Wavelet wavelet) {
  if (plane.empty()) throw Error("wavelet transform of an empty plane");
  const Plane even = pad_replicate(plane, plane.width() + plane.width() % 2,
                                   plane.height() + plane.height() % 2);
  WaveletPyramid pyr;
  pyr.wavelet = wavelet;
  pyr.levels.resize(1);
  pyr.approx_levels.resize(1);
  if (wavelet == Wavelet::kHaar) {
    haar_step(even, pyr.approx_levels[0], pyr.levels[0]);
  } else {
    if (even.width() < 4 || even.height() < 4) {
      throw Error("db2 analysis needs at least 4 samples per axis");
    }
    db2_step(even, pyr.approx_levels[0], pyr.levels[0]);
  }
  return pyr;
}

WaveletPyramid wavelet_pyramid(const Plane& plane, Wavelet wavelet, int levels) {
  if (levels < 1 || levels > 4) {
    throw Error("wavelet levels must be in [1, 4], got " + std::to_string(levels));
  }
  WaveletPyramid pyr;
  pyr.wavelet = wavelet;
  const Plane* current = &plane;
  for (int k = 0; k < levels; ++k) {
    WaveletPyramid step = wavelet_step(*current, wavelet);
    pyr.levels.push_back(std::move(step.levels[0]));
    pyr.approx_levels.push_back(std::move(step.approx_levels[0]));
    current = &pyr.approx_levels.back();
  }
  return pyr;
}

double SubbandWeights::at(int level, Band band) const {
  auto it = table_.find({level, band});
  if (it == table_.end()) {
    throw Error("no subband weight for level " + std::to_string(level) +
                " band " + std::string(to_string(band)));
  }
  return it->second;
}

bool SubbandWeights::covers(int levels) const {
  for (int k = 1; k <= levels; ++k) {
    for (Band b : {Band::kApprox, Band::kHorizontal, Band::kVertical, Band::kDiagonal}) {
      if (!table_.contains({k, b})) return false;
    }
  }
  return true;
}

int SubbandWeights::max_level() const {
  int m = 0;
  for (const auto& [key, w] : table_) m = std::max(m, key.first);
  return m;
}

SubbandWeights SubbandWeights::li(double ppd, int levels) {
  SubbandWeights w;
  for (int k = 1; k <= levels; ++k) {
    const double f = ppd * std::ldexp(1.0, -(k + 1));
    w.set(k, Band::kApprox, 1.0);
    w.set(k, Band::kHorizontal, csf_value(f));
    w.set(k, Band::kVertical, csf_value(f));
    w.set(k, Band::kDiagonal, csf_value(f * std::numbers::sqrt2));
  }
  return w;
}

SubbandWeights SubbandWeights::parse(std::string_view text) {
  SubbandWeights w;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    std::istringstream fields(line);
    int level = 0;
    std::string band;
    std::string value;
    if (!(fields >> level >> band >> value)) {
      throw Error("weight table line " + std::to_string(lineno) +
                  ": expected `level band weight`");
    }
    Band b;
    if (band == "A") b = Band::kApprox;
    else if (band == "H") b = Band::kHorizontal;
    else if (band == "V") b = Band::kVertical;
    else if (band == "D") b = Band::kDiagonal;
    else throw Error("weight table line " + std::to_string(lineno) + ": unknown band '" + band + "'");
    w.set(level, b, parse_double(value));
  }
  return w;
}

SubbandWeights SubbandWeights::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read weight table '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::filesystem::path asset_dir() {
  if (const char* env = std::getenv("FUNQUE_ASSET_DIR"); env && *env) return env;
  // Source tree first so an uninstalled build finds its assets.
  const std::filesystem::path local = FUNQUE_DEFAULT_ASSET_DIR;
  std::error_code ec;
  if (std::filesystem::exists(local / "watson_sw.txt", ec)) return local;
  return FUNQUE_INSTALL_ASSET_DIR;
}

SubbandWeights SubbandWeights::watson() {
  static const SubbandWeights table = load(asset_dir() / "watson_sw.txt");
  return table;
}

WaveletPyramid subband_weighting(const WaveletPyramid& pyr,
                                 const SubbandWeights& weights) {
  WaveletPyramid out = pyr;
  for (int k = 1; k <= pyr.num_levels(); ++k) {
    for (Band b : {Band::kApprox, Band::kHorizontal, Band::kVertical, Band::kDiagonal}) {
      const double w = weights.at(k, b);
      for (double& v : out.band(k, b).samples()) v *= w;
    }
  }
  return out;
}

std::optional<SubbandWeights> weights_for(const TransformConfig& cfg) {
  if (cfg.csf == CsfMode::kLiSw) return SubbandWeights::li(cfg.pixels_per_degree, cfg.levels);
  if (cfg.csf == CsfMode::kWatsonSw) {
    SubbandWeights w = SubbandWeights::watson();
    if (!w.covers(cfg.levels)) {
      throw Error("Watson weight table does not cover " + std::to_string(cfg.levels) + " levels");
    }
    return w;
  }
  return std::nullopt;
}

namespace {

WaveletPyramid run_transform(const Plane& plane, const TransformConfig& cfg,
                             const CsfKernel* kernel,
                             const SubbandWeights* shared_weights) {
  g_transform_calls.fetch_add(1, std::memory_order_relaxed);
  Plane work = cfg.sast ? sast_rescale(plane) : plane;
  if (cfg.csf == CsfMode::kSpatialFilter) {
    work = apply_spatial_csf(work, *kernel);
  } else if (cfg.csf == CsfMode::kFrequencyFilter) {
    work = apply_frequency_csf(work, cfg.pixels_per_degree);
  }
  WaveletPyramid pyr = wavelet_pyramid(work, cfg.wavelet, cfg.levels);
  if (shared_weights) pyr = subband_weighting(pyr, *shared_weights);
  return pyr;
}

}  // namespace

WaveletPyramid unified_transform(const Plane& plane, const TransformConfig& cfg,
                                 const CsfKernel* kernel) {
  cfg.validate();
  if ((cfg.csf == CsfMode::kSpatialFilter) != (kernel != nullptr)) {
    throw Error("a CSF kernel must be supplied exactly when csf = spatial_filter");
  }
  std::optional<SubbandWeights> weights;
  if (cfg.csf_shared) weights = weights_for(cfg);
  return run_transform(plane, cfg, kernel, weights ? &*weights : nullptr);
}

std::uint64_t unified_transform_invocations() {
  return g_transform_calls.load(std::memory_order_relaxed);
}

UnifiedTransform::UnifiedTransform(TransformConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.csf == CsfMode::kSpatialFilter) {
    kernel_ = build_spatial_csf_kernel(cfg_.pixels_per_degree);
  }
  weights_ = weights_for(cfg_);
  deferred_ = weights_.has_value() && !cfg_.csf_shared;
}

WaveletPyramid UnifiedTransform::operator()(const Plane& plane) const {
  return run_transform(plane, cfg_, kernel_ ? &*kernel_ : nullptr,
                       weights_ && !deferred_ ? &*weights_ : nullptr);
}

}  // namespace funque
