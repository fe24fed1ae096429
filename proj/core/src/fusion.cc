#include "funque/fusion.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>
#include <tuple>
#include <cstdio>

#include "funque/error.h"

namespace funque {
namespace {

constexpr double kTau = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

int scale_index(std::string_view name) {
  constexpr std::string_view prefix = "vif_scale";
  if (name.substr(0, prefix.size()) != prefix || name.size() != prefix.size() + 1) return 0;
  const char c = name.back();
  return (c >= '1' && c <= '4') ? c - '0' : 0;
}

double kernel_value(KernelType k, double gamma, std::span<const double> a,
                    std::span<const double> b) {
  if (k == KernelType::kLinear) {
    double dot = 0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return dot;
  }
  double d2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-gamma * d2);
}

// Dual solver for the nu-SVR problem with 2l variables (alpha, alpha*):
//   min 1/2 b'Qb + p'b,  y'b = 0,  e'b = C l nu,  0 <= b <= C,
// with Q_st = y_s y_t K(s mod l, t mod l). Working pairs are chosen among
// variables of the same sign by the second-order rule.
class NuSolver {
 public:
  NuSolver(const std::vector<double>& kernel, int l, std::vector<double> p,
           std::vector<double> alpha, double c)
      : kernel_(kernel), l_(l), n_(2 * l), p_(std::move(p)),
        alpha_(std::move(alpha)), c_(c), grad_(n_, 0.0) {
    for (int t = 0; t < n_; ++t) {
      grad_[t] = p_[t];
    }
    for (int s = 0; s < n_; ++s) {
      if (alpha_[s] == 0) continue;
      for (int t = 0; t < n_; ++t) grad_[t] += q(t, s) * alpha_[s];
    }
  }

  // Returns false when the iteration cap is hit.
  bool solve(double eps, long max_iter) {
    for (long iter = 0; iter < max_iter; ++iter) {
      int i = -1, j = -1;
      if (select_working_set(eps, i, j)) return true;
      update(i, j);
    }
    return false;
  }

  const std::vector<double>& alpha() const { return alpha_; }

  double rho() const {
    int free1 = 0, free2 = 0;
    double ub1 = kInf, ub2 = kInf, lb1 = -kInf, lb2 = -kInf, sum1 = 0, sum2 = 0;
    for (int t = 0; t < n_; ++t) {
      if (sign(t) > 0) {
        if (upper(t)) lb1 = std::max(lb1, grad_[t]);
        else if (lower(t)) ub1 = std::min(ub1, grad_[t]);
        else { ++free1; sum1 += grad_[t]; }
      } else {
        if (upper(t)) lb2 = std::max(lb2, grad_[t]);
        else if (lower(t)) ub2 = std::min(ub2, grad_[t]);
        else { ++free2; sum2 += grad_[t]; }
      }
    }
    const double r1 = free1 > 0 ? sum1 / free1 : (ub1 + lb1) / 2;
    const double r2 = free2 > 0 ? sum2 / free2 : (ub2 + lb2) / 2;
    return (r1 - r2) / 2;
  }

 private:
  int sign(int t) const { return t < l_ ? 1 : -1; }
  double k(int s, int t) const {
    return kernel_[static_cast<std::size_t>(s % l_) * l_ + t % l_];
  }
  double q(int s, int t) const { return sign(s) * sign(t) * k(s, t); }
  bool upper(int t) const { return alpha_[t] >= c_; }
  bool lower(int t) const { return alpha_[t] <= 0; }

  bool select_working_set(double eps, int& out_i, int& out_j) const {
    double gmaxp = -kInf, gmaxp2 = -kInf, gmaxn = -kInf, gmaxn2 = -kInf;
    int ip = -1, in = -1;
    for (int t = 0; t < n_; ++t) {
      if (sign(t) > 0) {
        if (!upper(t) && -grad_[t] >= gmaxp) { gmaxp = -grad_[t]; ip = t; }
      } else {
        if (!lower(t) && grad_[t] >= gmaxn) { gmaxn = grad_[t]; in = t; }
      }
    }
    int jmin = -1;
    double obj_min = kInf;
    for (int t = 0; t < n_; ++t) {
      if (sign(t) > 0) {
        if (lower(t)) continue;
        gmaxp2 = std::max(gmaxp2, grad_[t]);
        const double diff = gmaxp + grad_[t];
        if (ip >= 0 && diff > 0) {
          double quad = k(ip, ip) + k(t, t) - 2 * q(ip, t);
          if (quad <= 0) quad = kTau;
          const double obj = -(diff * diff) / quad;
          if (obj <= obj_min) { jmin = t; obj_min = obj; }
        }
      } else {
        if (upper(t)) continue;
        gmaxn2 = std::max(gmaxn2, -grad_[t]);
        const double diff = gmaxn - grad_[t];
        if (in >= 0 && diff > 0) {
          double quad = k(in, in) + k(t, t) - 2 * q(in, t);
          if (quad <= 0) quad = kTau;
          const double obj = -(diff * diff) / quad;
          if (obj <= obj_min) { jmin = t; obj_min = obj; }
        }
      }
    }
    if (std::max(gmaxp + gmaxp2, gmaxn + gmaxn2) < eps || jmin == -1) return true;
    out_i = sign(jmin) > 0 ? ip : in;
    out_j = jmin;
    return false;
  }

  void update(int i, int j) {
    const double old_i = alpha_[i], old_j = alpha_[j];
    double quad = k(i, i) + k(j, j) - 2 * q(i, j);
    if (quad <= 0) quad = kTau;
    const double delta = (grad_[i] - grad_[j]) / quad;
    const double sum = alpha_[i] + alpha_[j];
    alpha_[i] -= delta;
    alpha_[j] += delta;
    if (sum > c_) {
      if (alpha_[i] > c_) { alpha_[i] = c_; alpha_[j] = sum - c_; }
    } else {
      if (alpha_[j] < 0) { alpha_[j] = 0; alpha_[i] = sum; }
    }
    if (sum > c_) {
      if (alpha_[j] > c_) { alpha_[j] = c_; alpha_[i] = sum - c_; }
    } else {
      if (alpha_[i] < 0) { alpha_[i] = 0; alpha_[j] = sum; }
    }
    const double di = alpha_[i] - old_i, dj = alpha_[j] - old_j;
    for (int t = 0; t < n_; ++t) grad_[t] += q(t, i) * di + q(t, j) * dj;
  }

  const std::vector<double>& kernel_;
  int l_;
  int n_;
  std::vector<double> p_;
  std::vector<double> alpha_;
  double c_;
  std::vector<double> grad_;
};

std::vector<double> normalize(const SvrModel& m, std::span<const double> values) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto [lo, hi] = m.feature_ranges[i];
    out[i] = std::clamp((values[i] - lo) / (hi - lo), 0.0, 1.0);
  }
  return out;
}

std::string expect_line(std::istringstream& in, std::string_view key) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto sp = line.find(' ');
    const std::string got = line.substr(0, sp);
    if (got != key) {
      throw Error("model file: expected '" + std::string(key) + "', found '" + got + "'");
    }
    return sp == std::string::npos ? std::string() : line.substr(sp + 1);
  }
  throw Error("model file truncated: missing '" + std::string(key) + "'");
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

const std::vector<std::string>& all_feature_names() {
  static const std::vector<std::string> names = {
      "dlm",        "wd_ssim",    "wd_essim",   "vif_scalar",
      "vif_vector", "vif_edge",   "vif_approx", "vif_scale1",
      "vif_scale2", "vif_scale3", "vif_scale4", "motion"};
  return names;
}

std::vector<std::string> default_schema() {
  return {"wd_essim", "vif_scale1", "vif_scale2", "dlm", "motion"};
}

TransformConfig default_transform_config() {
  TransformConfig cfg;
  cfg.wavelet = Wavelet::kHaar;
  cfg.levels = 1;
  cfg.csf = CsfMode::kSpatialFilter;
  cfg.csf_shared = true;
  cfg.sast = true;
  return cfg;
}

void validate_schema(const std::vector<std::string>& schema) {
  const auto& names = all_feature_names();
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (std::find(names.begin(), names.end(), schema[i]) == names.end()) {
      std::string valid;
      for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
      throw Error("unknown feature '" + schema[i] + "'; valid names: " + valid);
    }
    if (std::find(schema.begin(), schema.begin() + i, schema[i]) != schema.begin() + i) {
      throw Error("feature '" + schema[i] + "' listed twice");
    }
  }
}

std::vector<std::string> parse_schema(std::string_view text) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in{std::string(text)};
  while (std::getline(in, field, ',')) {
    const auto b = field.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(field.substr(b, field.find_last_not_of(" \t") - b + 1));
  }
  if (out.empty()) throw Error("empty feature schema");
  validate_schema(out);
  return out;
}

FeatureExtractor::FeatureExtractor(TransformConfig cfg, std::vector<std::string> schema)
    : transform_(cfg), schema_(std::move(schema)) {
  validate_schema(schema_);
  for (std::size_t i = 0; i < schema_.size(); ++i) {
    const std::string& n = schema_[i];
    if ((n == "wd_ssim" || n == "wd_essim") && cfg.wavelet != Wavelet::kHaar) {
      throw Error("feature '" + n + "' requires the Haar wavelet");
    }
    if (n == "motion") motion_index_ = static_cast<int>(i);
  }
}

FrameFeatures FeatureExtractor::extract(const Plane& ref, const Plane& dis,
                                        const Plane* prev_ref_approx) const {
  if (!ref.same_shape(dis)) throw Error("reference and distorted frames differ in size");
  const WaveletPyramid pr = transform_(ref);
  const WaveletPyramid pd = transform_(dis);
  const int levels = transform_.config().levels;

  std::optional<LocalStats> stats;
  auto local_stats = [&]() -> const LocalStats& {
    if (!stats) stats = wd_local_stats(pr, pd, levels);
    return *stats;
  };

  FrameFeatures out;
  out.features.schema = schema_;
  for (const std::string& n : schema_) {
    double v = 0;
    if (n == "dlm") v = dlm_score(pr, pd, transform_.deferred_weights());
    else if (n == "wd_ssim") v = wd_ssim(local_stats());
    else if (n == "wd_essim") v = wd_essim(local_stats());
    else if (n == "vif_scalar") v = vif_feature(pr, pd, VifVariant::kScalar);
    else if (n == "vif_vector") v = vif_feature(pr, pd, VifVariant::kVector);
    else if (n == "vif_edge") v = vif_feature(pr, pd, VifVariant::kEdge);
    else if (n == "vif_approx") v = vif_feature(pr, pd, VifVariant::kApprox);
    else if (int k = scale_index(n)) v = vif_feature(pr, pd, VifVariant::kScale, k);
    else if (n == "motion") v = prev_ref_approx ? motion_feature(*prev_ref_approx, pr.approx()) : 0.0;
    out.features.values.push_back(v);
  }
  out.ref_approx = pr.approx();
  return out;
}

std::vector<FeatureVector> FeatureExtractor::extract_video(
    const std::filesystem::path& ref, const std::filesystem::path& dis,
    const VideoSpec& spec, int threads) const {
  const int frames = [&] {
    FrameSource r(ref, spec), d(dis, spec);
    if (r.frame_count() != d.frame_count()) {
      throw Error("frame counts differ: reference has " + std::to_string(r.frame_count()) +
                  ", distorted has " + std::to_string(d.frame_count()));
    }
    return r.frame_count();
  }();
  threads = std::clamp(threads, 1, frames);

  std::vector<FrameFeatures> results(frames);
  std::vector<std::exception_ptr> errors(threads);
  auto worker = [&](int t) {
    try {
      FrameSource r(ref, spec), d(dis, spec);
      for (int i = t; i < frames; i += threads) {
        results[i] = extract(r.read_luma(i), d.read_luma(i), nullptr);
      }
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

  std::vector<FeatureVector> out;
  out.reserve(frames);
  for (int i = 0; i < frames; ++i) {
    if (motion_index_ >= 0 && i > 0) {
      results[i].features.values[motion_index_] =
          motion_feature(results[i - 1].ref_approx, results[i].ref_approx);
    }
    out.push_back(std::move(results[i].features));
  }
  return out;
}

FrameFeatures extract_frame_features(const Plane& ref, const Plane& dis,
                                     const Plane* prev_ref_approx,
                                     const TransformConfig& cfg,
                                     const std::vector<std::string>& schema) {
  return FeatureExtractor(cfg, schema).extract(ref, dis, prev_ref_approx);
}

FeatureVector aggregate_video_features(std::span<const FeatureVector> frames) {
  if (frames.empty()) throw Error("cannot aggregate an empty frame list");
  FeatureVector out{std::vector<double>(frames.front().values.size(), 0.0),
                    frames.front().schema};
  for (const FeatureVector& f : frames) {
    if (f.schema != out.schema || f.values.size() != out.values.size()) {
      throw Error("frames use different feature schemas");
    }
    for (std::size_t i = 0; i < f.values.size(); ++i) out.values[i] += f.values[i];
  }
  for (double& v : out.values) v /= static_cast<double>(frames.size());
  return out;
}

std::string_view to_string(KernelType k) {
  return k == KernelType::kRbf ? "rbf" : "linear";
}

KernelType parse_kernel_type(std::string_view name) {
  if (name == "rbf") return KernelType::kRbf;
  if (name == "linear") return KernelType::kLinear;
  throw Error("unknown kernel '" + std::string(name) + "' (expected rbf or linear)");
}

void SvrModel::validate() const {
  if (schema.empty()) throw Error("model has an empty schema");
  if (feature_ranges.size() != schema.size()) throw Error("model ranges do not match schema");
  if (support_vectors.size() != dual_coefs.size()) {
    throw Error("model has " + std::to_string(support_vectors.size()) +
                " support vectors but " + std::to_string(dual_coefs.size()) + " coefficients");
  }
  for (const auto& sv : support_vectors) {
    if (sv.size() != schema.size()) throw Error("support vector width does not match schema");
  }
  for (double a : dual_coefs) {
    if (!(std::abs(a) <= c)) throw Error("dual coefficient outside [-C, C]");
  }
  for (const auto& [lo, hi] : feature_ranges) {
    if (!(lo < hi)) throw Error("degenerate feature range in model");
  }
  if (!(score_range.first <= score_range.second)) throw Error("invalid score range");
}

SvrModel svr_train(const Dataset& data, const SvrHyper& hyper) {
  data.validate();
  const int l = static_cast<int>(data.rows.size());
  const std::size_t dims = data.schema.size();
  if (l < 2) throw Error("SVR training needs at least 2 rows");
  if (!(hyper.c > 0) || !(hyper.nu > 0 && hyper.nu <= 1)) {
    throw Error("SVR needs C > 0 and nu in (0, 1]");
  }

  SvrModel m;
  m.kernel = hyper.kernel;
  m.gamma = hyper.gamma > 0 ? hyper.gamma : 1.0 / static_cast<double>(dims);
  m.c = hyper.c;
  m.nu = hyper.nu;
  m.schema = data.schema;
  for (std::size_t f = 0; f < dims; ++f) {
    double lo = kInf, hi = -kInf;
    for (const DatasetRow& r : data.rows) {
      lo = std::min(lo, r.features[f]);
      hi = std::max(hi, r.features[f]);
    }
    if (!(lo < hi)) {
      throw Error("feature '" + data.schema[f] + "' is constant over the training set");
    }
    m.feature_ranges.emplace_back(lo, hi);
  }
  double mos_lo = kInf, mos_hi = -kInf;
  for (const DatasetRow& r : data.rows) {
    mos_lo = std::min(mos_lo, r.mos);
    mos_hi = std::max(mos_hi, r.mos);
  }
  m.score_range = {mos_lo, mos_hi};

  struct Sample {
    std::vector<double> x;
    double y;
  };
  std::vector<Sample> samples;
  samples.reserve(l);
  for (const DatasetRow& r : data.rows) {
    samples.push_back({normalize(m, r.features), r.mos});
  }
  std::sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) {
    return std::tie(a.x, a.y) < std::tie(b.x, b.y);
  });

  std::vector<double> kernel(static_cast<std::size_t>(l) * l);
  for (int s = 0; s < l; ++s) {
    for (int t = s; t < l; ++t) {
      const double v = kernel_value(m.kernel, m.gamma, samples[s].x, samples[t].x);
      kernel[static_cast<std::size_t>(s) * l + t] = v;
      kernel[static_cast<std::size_t>(t) * l + s] = v;
    }
  }

  std::vector<double> p(2 * l), alpha(2 * l);
  double budget = hyper.c * hyper.nu * l / 2;
  for (int i = 0; i < l; ++i) {
    alpha[i] = alpha[i + l] = std::min(budget, hyper.c);
    budget -= alpha[i];
    p[i] = -samples[i].y;
    p[i + l] = samples[i].y;
  }
  NuSolver solver(kernel, l, std::move(p), std::move(alpha), hyper.c);
  if (!solver.solve(hyper.tolerance, hyper.max_iterations)) {
    throw Error("SVR solver did not converge within " +
                std::to_string(hyper.max_iterations) + " iterations; check C/nu/gamma");
  }
  const auto& a = solver.alpha();
  for (int i = 0; i < l; ++i) {
    const double coef = a[i] - a[i + l];
    if (coef != 0) {
      m.support_vectors.push_back(samples[i].x);
      m.dual_coefs.push_back(coef);
    }
  }
  m.bias = -solver.rho();
  m.validate();
  return m;
}

double svr_predict_values(const SvrModel& m, std::span<const double> values) {
  if (values.size() != m.schema.size()) {
    throw Error("expected " + std::to_string(m.schema.size()) + " feature values, got " +
                std::to_string(values.size()));
  }
  const std::vector<double> x = normalize(m, values);
  double acc = m.bias;
  for (std::size_t i = 0; i < m.support_vectors.size(); ++i) {
    acc += m.dual_coefs[i] * kernel_value(m.kernel, m.gamma, m.support_vectors[i], x);
  }
  return std::clamp(acc, m.score_range.first, m.score_range.second);
}

double svr_predict(const SvrModel& m, const FeatureVector& f) {
  if (f.schema != m.schema) {
    std::string want, got;
    for (const auto& n : m.schema) want += (want.empty() ? "" : ",") + n;
    for (const auto& n : f.schema) got += (got.empty() ? "" : ",") + n;
    throw Error("feature schema [" + got + "] does not match model schema [" + want + "]");
  }
  return svr_predict_values(m, f.values);
}

std::uint64_t schema_hash(const std::vector<std::string>& schema) {
  std::uint64_t h = 1469598103934665603ull;
  for (const std::string& n : schema) {
    for (unsigned char c : n) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0xff;
    h *= 1099511628211ull;
  }
  return h;
}

std::string serialize_model(const SvrModel& m) {
  m.validate();
  if (m.support_vectors.empty()) throw Error("refusing to save a model without support vectors");
  std::ostringstream out;
  out << "funque-svr " << kModelFormatVersion << "\n";
  std::string names;
  for (const auto& n : m.schema) names += (names.empty() ? "" : ",") + n;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(schema_hash(m.schema)));
  out << "schema " << names << "\n"
      << "schema_hash " << hash << "\n"
      << "kernel " << to_string(m.kernel) << "\n"
      << "gamma " << format_double(m.gamma) << "\n"
      << "C " << format_double(m.c) << "\n"
      << "nu " << format_double(m.nu) << "\n"
      << "bias " << format_double(m.bias) << "\n"
      << "score_range " << format_double(m.score_range.first) << " "
      << format_double(m.score_range.second) << "\n";
  for (std::size_t i = 0; i < m.schema.size(); ++i) {
    out << "feature_range " << m.schema[i] << " " << format_double(m.feature_ranges[i].first)
        << " " << format_double(m.feature_ranges[i].second) << "\n";
  }
  out << "support_vectors " << m.support_vectors.size() << "\n";
  for (std::size_t i = 0; i < m.support_vectors.size(); ++i) {
    out << "sv " << format_double(m.dual_coefs[i]);
    for (double v : m.support_vectors[i]) out << " " << format_double(v);
    out << "\n";
  }
  out << "end\n";
  return out.str();
}

SvrModel parse_model(std::string_view text) {
  std::istringstream in{std::string(text)};
  const std::string version = expect_line(in, "funque-svr");
  if (version != std::to_string(kModelFormatVersion)) {
    throw Error("unsupported model format version '" + version + "'");
  }
  SvrModel m;
  std::string names = expect_line(in, "schema");
  std::istringstream ns(names);
  for (std::string n; std::getline(ns, n, ',');) m.schema.push_back(n);
  const std::string hash = expect_line(in, "schema_hash");
  char want[17];
  std::snprintf(want, sizeof want, "%016llx", static_cast<unsigned long long>(schema_hash(m.schema)));
  if (hash != want) throw Error("model schema hash mismatch");
  m.kernel = parse_kernel_type(expect_line(in, "kernel"));
  m.gamma = parse_double_field(expect_line(in, "gamma"), "model gamma");
  m.c = parse_double_field(expect_line(in, "C"), "model C");
  m.nu = parse_double_field(expect_line(in, "nu"), "model nu");
  m.bias = parse_double_field(expect_line(in, "bias"), "model bias");
  const auto range = split_ws(expect_line(in, "score_range"));
  if (range.size() != 2) throw Error("model score_range needs two values");
  m.score_range = {parse_double_field(range[0], "model score_range"),
                   parse_double_field(range[1], "model score_range")};
  for (const std::string& name : m.schema) {
    const auto f = split_ws(expect_line(in, "feature_range"));
    if (f.size() != 3 || f[0] != name) throw Error("model feature_range entry for '" + name + "' malformed");
    m.feature_ranges.emplace_back(parse_double_field(f[1], "model feature_range"),
                                  parse_double_field(f[2], "model feature_range"));
  }
  const long count = static_cast<long>(
      parse_double_field(expect_line(in, "support_vectors"), "model support_vectors"));
  for (long i = 0; i < count; ++i) {
    const auto f = split_ws(expect_line(in, "sv"));
    if (f.size() != m.schema.size() + 1) throw Error("model support vector " + std::to_string(i) + " malformed");
    m.dual_coefs.push_back(parse_double_field(f[0], "model sv"));
    std::vector<double> sv;
    for (std::size_t j = 1; j < f.size(); ++j) sv.push_back(parse_double_field(f[j], "model sv"));
    m.support_vectors.push_back(std::move(sv));
  }
  expect_line(in, "end");
  m.validate();
  return m;
}

void save_model(const SvrModel& model, const std::filesystem::path& path) {
  const std::string text = serialize_model(model);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << text;
    if (!out) throw Error("write failed on '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

SvrModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read model '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

}  // namespace funque
