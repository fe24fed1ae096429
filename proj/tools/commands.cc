#include "commands.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "funque/dataset.h"
#include "funque/error.h"
#include "funque/eval.h"
#include "funque/fusion.h"
#include "funque/transform.h"
#include "funque/video_io.h"

namespace funque::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr const char* kModelDirEnv = "FUNQUE_MODEL_DIR";
constexpr const char* kDefaultModelName = "funque_default.model";

enum class Format { kTable, kCsv, kJson };

struct TransformFlags {
  std::string wavelet = "haar";
  int levels = 1;
  std::string csf = "spatial_filter";
  bool no_csf_share = false;
  bool no_sast = false;
  double ppd = 32.0;

  void add(CLI::App* app) {
    app->add_option("--wavelet", wavelet, "haar or db2")->capture_default_str();
    app->add_option("--levels", levels, "wavelet levels (1-4)")->capture_default_str();
    app->add_option("--csf", csf, "spatial_filter, frequency_filter, li_sw, watson_sw, none")
        ->capture_default_str();
    app->add_flag("--no-csf-share", no_csf_share,
                  "apply subband CSF weights inside DLM only");
    app->add_flag("--no-sast", no_sast, "skip the 2x viewing-distance downscale");
    app->add_option("--ppd", ppd, "pixels per degree")->capture_default_str();
  }

  TransformConfig build() const {
    TransformConfig cfg;
    cfg.wavelet = parse_wavelet(wavelet);
    cfg.levels = levels;
    cfg.csf = parse_csf_mode(csf);
    cfg.csf_shared = !no_csf_share;
    cfg.sast = !no_sast;
    cfg.pixels_per_degree = ppd;
    cfg.validate();
    return cfg;
  }
};

struct VideoFlags {
  std::string ref, dis;
  int width = 0, height = 0;
  std::string pix_fmt = "yuv420p";
  int bitdepth = 8;

  void add(CLI::App* app, bool required) {
    auto* r = app->add_option("--ref", ref, "reference raw YUV file");
    auto* d = app->add_option("--dis", dis, "distorted raw YUV file");
    auto* w = app->add_option("--width", width, "frame width");
    auto* h = app->add_option("--height", height, "frame height");
    if (required) {
      r->required();
      d->required();
      w->required();
      h->required();
    }
    app->add_option("--pix-fmt", pix_fmt, "yuv420p, yuv422p or yuv444p")->capture_default_str();
    app->add_option("--bitdepth", bitdepth, "8, 10 or 12")->capture_default_str();
  }

  VideoSpec spec() const {
    VideoSpec s{width, height, parse_pixel_format(pix_fmt), bitdepth};
    s.validate();
    return s;
  }
};

struct OutputFlags {
  std::string out;
  std::string format = "table";

  void add(CLI::App* app, bool with_format) {
    app->add_option("--out", out, "write the report here instead of stdout");
    if (with_format) {
      app->add_option("--format", format, "table, csv or json")
          ->check(CLI::IsMember({"table", "csv", "json"}))
          ->capture_default_str();
    }
  }

  Format fmt() const {
    if (format == "csv") return Format::kCsv;
    if (format == "json") return Format::kJson;
    return Format::kTable;
  }
};

void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write '" + tmp.string() + "'");
    f << text;
    if (!f) throw Error("write failed on '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

void emit(const OutputFlags& o, const std::string& text, std::ostream& out) {
  if (o.out.empty()) {
    out << text;
  } else {
    write_atomic(o.out, text);
  }
}

std::string join(const std::vector<std::string>& v, std::string_view sep) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : std::string(sep)) + x;
  return s;
}

fs::path resolve_model(const std::string& flag) {
  if (!flag.empty()) return flag;
  const char* dir = std::getenv(kModelDirEnv);
  if (!dir || !*dir) {
    throw Error(std::string("no model given: pass --model or set ") + kModelDirEnv);
  }
  const fs::path p = fs::path(dir) / kDefaultModelName;
  if (!fs::exists(p)) throw Error("default model '" + p.string() + "' not found");
  return p;
}

std::vector<FeatureCsvRow> read_all_features(const std::vector<std::string>& paths) {
  std::vector<FeatureCsvRow> rows;
  for (const auto& p : paths) {
    auto part = read_feature_csv(fs::path(p));
    if (!rows.empty() && !part.empty() && part.front().features.schema != rows.front().features.schema) {
      throw Error("'" + p + "' uses a different feature schema from earlier files");
    }
    rows.insert(rows.end(), std::make_move_iterator(part.begin()),
                std::make_move_iterator(part.end()));
  }
  return rows;
}

// Rows sharing a database label; entries without one fall under the file name.
std::map<std::string, std::vector<MosEntry>> by_database(const std::vector<MosEntry>& mos,
                                                         const std::string& fallback) {
  std::map<std::string, std::vector<MosEntry>> out;
  for (const auto& m : mos) out[m.database.empty() ? fallback : m.database].push_back(m);
  return out;
}

// ---------------------------------------------------------------------------

struct ScoreArgs {
  VideoFlags video;
  TransformFlags transform;
  OutputFlags output;
  std::string model;
  std::uint64_t seed = 0;
  int threads = 1;
};

int cmd_score(const ScoreArgs& a, std::ostream& out) {
  const SvrModel model = load_model(resolve_model(a.model));
  const VideoSpec spec = a.video.spec();
  const FeatureExtractor fx(a.transform.build(), model.schema);
  const std::vector<FeatureVector> frames = fx.extract_video(a.video.ref, a.video.dis, spec, a.threads);
  std::vector<double> scores;
  for (const auto& f : frames) scores.push_back(svr_predict(model, f));
  const double pooled = svr_predict(model, aggregate_video_features(frames));

  std::ostringstream s;
  switch (a.output.fmt()) {
    case Format::kTable:
      s << "# funque score  seed=" << a.seed << "  schema=" << join(model.schema, ",") << "\n";
      s << std::left << std::setw(8) << "frame" << "score\n";
      for (std::size_t i = 0; i < scores.size(); ++i) {
        s << std::left << std::setw(8) << i << format_double(scores[i]) << "\n";
      }
      s << std::left << std::setw(8) << "pooled" << format_double(pooled) << "\n";
      break;
    case Format::kCsv:
      s << "# seed=" << a.seed << "\nframe,score\n";
      for (std::size_t i = 0; i < scores.size(); ++i) s << i << "," << format_double(scores[i]) << "\n";
      s << "pooled," << format_double(pooled) << "\n";
      break;
    case Format::kJson: {
      ordered_json j;
      j["seed"] = a.seed;
      j["schema"] = model.schema;
      j["frames"] = scores;
      j["pooled"] = pooled;
      s << j.dump(2) << "\n";
      break;
    }
  }
  emit(a.output, s.str(), out);
  return kOk;
}

// ---------------------------------------------------------------------------

struct ExtractArgs {
  VideoFlags video;
  TransformFlags transform;
  OutputFlags output;
  std::string schema;
  std::string video_id;
  int threads = 1;
};

int cmd_extract(const ExtractArgs& a, std::ostream& out) {
  const std::vector<std::string> schema =
      a.schema.empty() ? default_schema() : parse_schema(a.schema);
  const TransformConfig cfg = a.transform.build();
  const VideoSpec spec = a.video.spec();
  const FeatureExtractor fx(cfg, schema);
  const auto frames = fx.extract_video(a.video.ref, a.video.dis, spec, a.threads);
  const std::string id = a.video_id.empty() ? fs::path(a.video.dis).stem().string() : a.video_id;
  std::vector<FeatureCsvRow> rows;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    rows.push_back({id, static_cast<int>(i), frames[i]});
  }
  std::ostringstream s;
  write_feature_csv(s, rows);
  emit(a.output, s.str(), out);
  return kOk;
}

// ---------------------------------------------------------------------------

struct HyperFlags {
  std::string kernel = "rbf";
  double gamma = 0;
  double c = 4.0;
  double nu = 0.9;

  void add(CLI::App* app) {
    app->add_option("--kernel", kernel, "rbf or linear")->capture_default_str();
    app->add_option("--gamma", gamma, "RBF width; 0 selects 1/num_features")->capture_default_str();
    app->add_option("--C", c, "SVR cost")->capture_default_str();
    app->add_option("--nu", nu, "SVR nu")->capture_default_str();
  }

  SvrHyper build() const {
    SvrHyper h;
    h.kernel = parse_kernel_type(kernel);
    h.gamma = gamma;
    h.c = c;
    h.nu = nu;
    return h;
  }
};

struct DataFlags {
  std::vector<std::string> features;
  std::string mos;
  std::string schema;

  void add(CLI::App* app) {
    app->add_option("--features", features, "feature CSV files")->required();
    app->add_option("--mos", mos, "MOS CSV (video_id,mos,content_id[,database])")->required();
    app->add_option("--schema", schema, "comma-separated subset of the CSV columns");
  }

  Dataset load(const std::vector<MosEntry>& entries, const std::string& name) const {
    Dataset d = join_dataset(read_all_features(features), entries, name);
    if (!schema.empty()) d = d.project(parse_schema(schema));
    return d;
  }
};

struct TrainArgs {
  DataFlags data;
  HyperFlags hyper;
  std::string model_out;
  std::uint64_t seed = 0;
  OutputFlags output;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto entries = read_mos_csv(fs::path(a.data.mos));
  const Dataset d = a.data.load(entries, fs::path(a.data.mos).stem().string());
  const SvrModel model = svr_train(d, a.hyper.build());
  save_model(model, a.model_out);
  std::vector<double> pred;
  for (std::size_t i = 0; i < d.rows.size(); ++i) pred.push_back(svr_predict(model, d.features(i)));
  const std::vector<double> mos = d.mos();
  const double fit = d.rows.size() >= 3 ? srocc(pred, mos) : 0.0;

  std::ostringstream s;
  s << "# funque train  seed=" << a.seed << "\n"
    << "model            " << a.model_out << "\n"
    << "schema           " << join(model.schema, ",") << "\n"
    << "rows             " << d.rows.size() << "\n"
    << "support_vectors  " << model.support_vectors.size() << "\n"
    << "train_srocc      " << format_double(fit) << "\n";
  emit(a.output, s.str(), out);
  return kOk;
}

// ---------------------------------------------------------------------------

struct CvFlags {
  int splits = 5000;
  double train_fraction = 0.8;
  bool no_content_groups = false;

  void add(CLI::App* app) {
    app->add_option("--splits", splits, "number of random train/test splits")->capture_default_str();
    app->add_option("--train-fraction", train_fraction, "share of content groups used for training")
        ->capture_default_str();
    app->add_flag("--no-content-groups", no_content_groups,
                  "split rows independently instead of by content_id");
  }
};

CvOptions cv_options(const CvFlags& f, const HyperFlags& h, std::uint64_t seed, int threads) {
  CvOptions o;
  o.n_splits = f.splits;
  o.train_fraction = f.train_fraction;
  o.group_by_content = !f.no_content_groups;
  o.seed = seed;
  o.threads = threads;
  o.hyper = h.build();
  return o;
}

// "dlm|wd_ssim,wd_essim|vif_scale1,vif_scale2|motion"
SelectionSpace parse_space(const std::string& text) {
  SelectionSpace space;
  std::istringstream in(text);
  for (std::string cat; std::getline(in, cat, '|');) {
    space.categories.push_back(parse_schema(cat));
  }
  space.validate();
  return space;
}

struct SelectArgs {
  DataFlags data;
  HyperFlags hyper;
  CvFlags cv;
  OutputFlags output;
  std::string space;
  std::uint64_t seed = 0;
  int threads = 1;
};

int cmd_select(const SelectArgs& a, std::ostream& out) {
  const SelectionSpace space = a.space.empty() ? default_selection_space() : parse_space(a.space);
  space.validate();
  const auto entries = read_mos_csv(fs::path(a.data.mos));
  const Dataset d = a.data.load(entries, fs::path(a.data.mos).stem().string());
  const SelectionResult r = exhaustive_select(space, d, cv_options(a.cv, a.hyper, a.seed, a.threads));

  std::ostringstream s;
  s << "# funque select  seed=" << a.seed << "  splits=" << a.cv.splits
    << "  subsets=" << r.ranked.size() << "\n";
  s << "rank,schema,cv_srocc\n";
  for (std::size_t i = 0; i < r.ranked.size(); ++i) {
    s << i + 1 << "," << join(r.ranked[i].schema, "+") << "," << format_double(r.ranked[i].cv_srocc)
      << "\n";
  }
  emit(a.output, s.str(), out);
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  DataFlags data;
  HyperFlags hyper;
  CvFlags cv;
  OutputFlags output;
  std::string model;
  std::uint64_t seed = 0;
  int threads = 1;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto entries = read_mos_csv(fs::path(a.data.mos));
  const std::string fallback = fs::path(a.data.mos).stem().string();
  std::optional<SvrModel> model;
  if (!a.model.empty()) model = load_model(a.model);

  std::vector<std::pair<std::string, double>> results;
  for (const auto& [db, group] : by_database(entries, fallback)) {
    Dataset d = a.data.load(group, db);
    double r = 0;
    if (model) {
      d = d.project(model->schema);
      std::vector<double> pred;
      for (std::size_t i = 0; i < d.rows.size(); ++i) pred.push_back(svr_predict(*model, d.features(i)));
      r = srocc(pred, d.mos());
    } else {
      r = cross_validate(d, cv_options(a.cv, a.hyper, a.seed, a.threads)).mean_srocc;
    }
    results.emplace_back(db, r);
  }
  std::vector<double> rs;
  for (const auto& [db, r] : results) rs.push_back(std::clamp(r, -1 + 1e-12, 1 - 1e-12));
  const double avg = fisher_average(rs);

  const std::string mode = model ? "model" : "cross_validation";
  std::ostringstream s;
  switch (a.output.fmt()) {
    case Format::kTable:
      s << "# funque evaluate  seed=" << a.seed << "  mode=" << mode << "\n";
      s << std::left << std::setw(24) << "database" << "srocc\n";
      for (const auto& [db, r] : results) s << std::left << std::setw(24) << db << format_double(r) << "\n";
      s << std::left << std::setw(24) << "fisher_average" << format_double(avg) << "\n";
      break;
    case Format::kCsv:
      s << "# seed=" << a.seed << " mode=" << mode << "\ndatabase,srocc\n";
      for (const auto& [db, r] : results) s << db << "," << format_double(r) << "\n";
      s << "fisher_average," << format_double(avg) << "\n";
      break;
    case Format::kJson: {
      ordered_json j;
      j["seed"] = a.seed;
      j["mode"] = mode;
      ordered_json dbs = ordered_json::object();
      for (const auto& [db, r] : results) dbs[db] = r;
      j["databases"] = dbs;
      j["fisher_average"] = avg;
      s << j.dump(2) << "\n";
      break;
    }
  }
  emit(a.output, s.str(), out);
  return kOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  VideoFlags video;
  TransformFlags transform;
  OutputFlags output;
  std::string schema;
  std::string model;
  bool reference = false;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  const TransformConfig cfg = a.transform.build();
  std::vector<std::string> schema = a.schema.empty() ? default_schema() : parse_schema(a.schema);
  std::optional<SvrModel> model;
  if (!a.model.empty()) {
    model = load_model(a.model);
    schema = model->schema;
  }
  const int w = a.video.width > 0 ? a.video.width : 1920;
  const int h = a.video.height > 0 ? a.video.height : 1080;
  const auto ours = ops_breakdown(cfg, schema, w, h);
  const double total = ops_per_pixel(cfg, schema, w, h);
  const double ref_total = reference_ops_per_pixel();

  std::ostringstream s;
  s << "# funque bench  seed=" << a.seed << "  schema=" << join(schema, ",") << "\n";
  s << std::left << std::setw(28) << "stage" << "ops_per_pixel\n";
  for (const auto& c : ours) s << std::left << std::setw(28) << c.stage << format_double(c.ops_per_pixel) << "\n";
  s << std::left << std::setw(28) << "total" << format_double(total) << "\n";
  s << std::left << std::setw(28) << "reference_total" << format_double(ref_total) << "\n";
  s << std::left << std::setw(28) << "ops_ratio" << format_double(total > 0 ? ref_total / total : 0) << "\n";

  if (!a.video.ref.empty() && !a.video.dis.empty()) {
    if (a.video.width <= 0 || a.video.height <= 0) throw Error("timing needs --width and --height");
    const VideoSpec spec = a.video.spec();
    const FeatureExtractor fx(cfg, schema);
    const auto t0 = std::chrono::steady_clock::now();
    const auto frames = fx.extract_video(a.video.ref, a.video.dis, spec, 1);
    if (model) {
      for (const auto& f : frames) (void)svr_predict(*model, f);
    }
    const auto t1 = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count() / frames.size();
    s << std::left << std::setw(28) << "ms_per_frame" << std::fixed << std::setprecision(3) << ms << "\n";
    if (a.reference) {
      FrameSource r(a.video.ref, spec), d(a.video.dis, spec);
      const ReferencePipeline pipe;
      const auto t2 = std::chrono::steady_clock::now();
      Plane prev;
      for (int i = 0; i < r.frame_count(); ++i) {
        Plane cur = r.read_luma(i);
        (void)pipe.evaluate(cur, d.read_luma(i), i > 0 ? &prev : nullptr);
        prev = std::move(cur);
      }
      const auto t3 = std::chrono::steady_clock::now();
      const double ref_ms = std::chrono::duration<double, std::milli>(t3 - t2).count() / r.frame_count();
      s << std::left << std::setw(28) << "reference_ms_per_frame" << ref_ms << "\n";
      s << std::left << std::setw(28) << "speedup" << ref_ms / ms << "\n";
    }
  }
  emit(a.output, s.str(), out);
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Full-reference video quality toolkit"};
  app.name("funque");
  app.require_subcommand(1);

  ScoreArgs score;
  auto* sc = app.add_subcommand("score", "predict quality of a distorted clip");
  score.video.add(sc, true);
  score.transform.add(sc);
  score.output.add(sc, true);
  sc->add_option("--model", score.model, "model file (default: $FUNQUE_MODEL_DIR/funque_default.model)");
  sc->add_option("--seed", score.seed, "echoed in the report")->capture_default_str();
  sc->add_option("--threads", score.threads, "frame-level workers")->capture_default_str();

  ExtractArgs extract;
  auto* ex = app.add_subcommand("extract", "write per-frame features as CSV");
  extract.video.add(ex, true);
  extract.transform.add(ex);
  extract.output.add(ex, false);
  ex->add_option("--schema", extract.schema, "comma-separated feature names");
  ex->add_option("--video-id", extract.video_id, "id column value (default: distorted file stem)");
  ex->add_option("--threads", extract.threads, "frame-level workers")->capture_default_str();

  TrainArgs train;
  auto* tr = app.add_subcommand("train", "fit the SVR on features and MOS");
  train.data.add(tr);
  train.hyper.add(tr);
  train.output.add(tr, false);
  tr->add_option("--model-out", train.model_out, "where to save the model")->required();
  tr->add_option("--seed", train.seed, "echoed in the report")->capture_default_str();

  SelectArgs select;
  auto* se = app.add_subcommand("select", "exhaustive category-constrained feature selection");
  select.data.add(se);
  select.hyper.add(se);
  select.cv.add(se);
  select.output.add(se, false);
  se->add_option("--space", select.space, "categories as a|b,c|d (default: all atom features)");
  se->add_option("--seed", select.seed, "split seed")->capture_default_str();
  se->add_option("--threads", select.threads, "worker threads")->capture_default_str();

  EvaluateArgs evaluate;
  auto* ev = app.add_subcommand("evaluate", "per-database SROCC and Fisher average");
  evaluate.data.add(ev);
  evaluate.hyper.add(ev);
  evaluate.cv.add(ev);
  evaluate.output.add(ev, true);
  ev->add_option("--model", evaluate.model, "score with this model instead of cross-validating");
  ev->add_option("--seed", evaluate.seed, "split seed")->capture_default_str();
  ev->add_option("--threads", evaluate.threads, "worker threads")->capture_default_str();

  BenchArgs bench;
  auto* be = app.add_subcommand("bench", "operation counts and wall-clock timing");
  bench.video.add(be, false);
  bench.transform.add(be);
  bench.output.add(be, false);
  be->add_option("--schema", bench.schema, "comma-separated feature names");
  be->add_option("--model", bench.model, "include prediction in the timing");
  be->add_flag("--reference", bench.reference, "also time the pixel-domain reference pipeline");
  be->add_option("--seed", bench.seed, "echoed in the report")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*sc) return cmd_score(score, out);
    if (*ex) {
      // Unknown names are a usage problem, reported before touching files.
      if (!extract.schema.empty()) {
        try {
          (void)parse_schema(extract.schema);
        } catch (const Error& e) {
          err << "usage error: " << e.what() << "\n";
          return kUsageError;
        }
      }
      return cmd_extract(extract, out);
    }
    if (*tr) return cmd_train(train, out);
    if (*se) return cmd_select(select, out);
    if (*ev) return cmd_evaluate(evaluate, out);
    if (*be) return cmd_bench(bench, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace funque::cli
