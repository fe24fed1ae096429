#include "commands.h"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "funque/dataset.h"
#include "funque/fusion.h"
#include "funque/video_io.h"
#include "test_util.h"

namespace funque {
namespace {

using testing::Rng;
using testing::TempDir;

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "funque");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const VideoSpec kSpec{64, 48, PixelFormat::kYuv420p, 8};

void write_clip(const std::filesystem::path& path, int frames, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  YuvWriter w(path, kSpec);
  for (int f = 0; f < frames; ++f) {
    Plane p = testing::textured_plane(100 + f, kSpec.width, kSpec.height);
    if (sigma > 0) p = testing::add_noise(p, sigma, rng);
    for (double& v : p.samples()) v = std::round(v);
    w.write(p);
  }
  w.close();
}

std::vector<std::string> video_args(const TempDir& dir, const std::string& dis) {
  return {"--ref", (dir / "ref.yuv").string(), "--dis", (dir / dis).string(), "--width", "64", "--height", "48"};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

int count_lines(const std::string& s) {
  return static_cast<int>(std::count(s.begin(), s.end(), '\n'));
}

TEST(Cli, ExtractThreeFrames) {
  TempDir dir("cli_extract");
  write_clip(dir / "ref.yuv", 3, 0, 1);
  write_clip(dir / "dis.yuv", 3, 10, 2);
  const Result r = run_cli(concat({"extract"}, video_args(dir, "dis.yuv")));
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  const auto rows = read_feature_csv(in);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].features.schema, default_schema());
  EXPECT_EQ(rows[2].frame, 2);
  EXPECT_EQ(rows[0].video_id, "dis");
  // version comment + header + three rows
  EXPECT_EQ(count_lines(r.out), 5);
}

TEST(Cli, UnknownSchemaIsUsageError) {
  const Result r = run_cli({"extract", "--ref", "/nonexistent/a.yuv", "--dis", "/nonexistent/b.yuv",
                            "--width", "64", "--height", "48", "--schema", "dlm,psnr"});
  EXPECT_EQ(r.code, cli::kUsageError);
  EXPECT_NE(r.err.find("psnr"), std::string::npos);
  EXPECT_NE(r.err.find("vif_scale1"), std::string::npos);
}

TEST(Cli, MissingArgumentsAreUsageErrors) {
  EXPECT_EQ(run_cli({}).code, cli::kUsageError);
  EXPECT_EQ(run_cli({"score"}).code, cli::kUsageError);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kUsageError);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, MissingModelFails) {
  TempDir dir("cli_nomodel");
  write_clip(dir / "ref.yuv", 1, 0, 1);
  write_clip(dir / "dis.yuv", 1, 5, 2);
  const Result r = run_cli(concat({"score", "--model", (dir / "none.model").string()}, video_args(dir, "dis.yuv")));
  EXPECT_EQ(r.code, cli::kRuntimeError);
  EXPECT_NE(r.err.find("none.model"), std::string::npos);

  ::unsetenv("FUNQUE_MODEL_DIR");
  const Result e = run_cli(concat({"score"}, video_args(dir, "dis.yuv")));
  EXPECT_EQ(e.code, cli::kRuntimeError);
  EXPECT_NE(e.err.find("FUNQUE_MODEL_DIR"), std::string::npos);
}

TEST(Cli, FrameCountMismatchFails) {
  TempDir dir("cli_mismatch");
  write_clip(dir / "ref.yuv", 3, 0, 1);
  write_clip(dir / "dis.yuv", 2, 5, 2);
  const Result r = run_cli(concat({"extract"}, video_args(dir, "dis.yuv")));
  EXPECT_EQ(r.code, cli::kRuntimeError);
  EXPECT_NE(r.err.find("frame counts differ"), std::string::npos);
}

// Builds eight distorted clips, extracts them and writes a MOS file whose
// scores fall with the noise level.
struct Corpus {
  TempDir dir{"cli_corpus"};
  std::vector<std::string> feature_files;

  Corpus() {
    write_clip(dir / "ref.yuv", 2, 0, 1);
    std::string mos = "video_id,mos,content_id,database\n";
    for (int i = 0; i < 8; ++i) {
      const std::string name = "d" + std::to_string(i);
      write_clip(dir / (name + ".yuv"), 2, 2.0 + 5 * i, 10 + i);
      const std::string csv = (dir / (name + ".csv")).string();
      const Result r = run_cli(concat({"extract", "--schema", "dlm,vif_scale1,wd_ssim", "--out", csv},
                                      video_args(dir, name + ".yuv")));
      EXPECT_EQ(r.code, 0) << r.err;
      feature_files.push_back(csv);
      mos += name + "," + std::to_string(90 - 9 * i) + ",c" + std::to_string(i) + "," +
             (i % 2 ? "odd" : "even") + "\n";
    }
    testing::write_bytes(dir / "mos.csv", mos);
  }

  std::vector<std::string> data_args() const {
    std::vector<std::string> a = {"--mos", (dir / "mos.csv").string(), "--features"};
    a.insert(a.end(), feature_files.begin(), feature_files.end());
    return a;
  }
};

TEST(Cli, ExtractTrainScoreRoundTrip) {
  Corpus c;
  const std::string model = (c.dir / "m.model").string();
  const Result t = run_cli(concat({"train", "--model-out", model, "--seed", "17"}, c.data_args()));
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("seed=17"), std::string::npos);
  EXPECT_NE(t.out.find("rows             8"), std::string::npos);

  const Result s = run_cli(concat({"score", "--model", model, "--format", "json", "--seed", "5"},
                                  video_args(c.dir, "d3.yuv")));
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_NE(s.out.find("\"seed\": 5"), std::string::npos);

  // Same prediction computed in-process.
  const SvrModel m = load_model(model);
  const FeatureExtractor fx(default_transform_config(), m.schema);
  const auto frames = fx.extract_video(c.dir / "ref.yuv", c.dir / "d3.yuv", kSpec);
  const double pooled = svr_predict(m, aggregate_video_features(frames));
  const auto pos = s.out.find("\"pooled\": ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_NEAR(std::stod(s.out.substr(pos + 10)), pooled, 1e-9);

  // Repeated runs are byte-identical.
  const Result again = run_cli(concat({"score", "--model", model, "--format", "json", "--seed", "5"},
                                      video_args(c.dir, "d3.yuv")));
  EXPECT_EQ(again.out, s.out);

  // CSV output has one line per frame plus the pooled line.
  const Result csv = run_cli(concat({"score", "--model", model, "--format", "csv", "--threads", "2"},
                                    video_args(c.dir, "d3.yuv")));
  ASSERT_EQ(csv.code, 0) << csv.err;
  EXPECT_EQ(count_lines(csv.out), 2 + 2 + 1);

  // Default model location.
  std::filesystem::copy_file(model, c.dir / "funque_default.model");
  ::setenv("FUNQUE_MODEL_DIR", c.dir.path().c_str(), 1);
  const Result env = run_cli(concat({"score", "--format", "json", "--seed", "5"}, video_args(c.dir, "d3.yuv")));
  ::unsetenv("FUNQUE_MODEL_DIR");
  EXPECT_EQ(env.out, s.out);
}

TEST(Cli, EvaluateReportsEachDatabase) {
  Corpus c;
  const std::string model = (c.dir / "m.model").string();
  ASSERT_EQ(run_cli(concat({"train", "--model-out", model}, c.data_args())).code, 0);
  const Result e = run_cli(concat({"evaluate", "--model", model, "--format", "csv"}, c.data_args()));
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("\neven,"), std::string::npos);
  EXPECT_NE(e.out.find("\nodd,"), std::string::npos);
  EXPECT_NE(e.out.find("fisher_average,"), std::string::npos);
}

TEST(Cli, SelectListsEverySubset) {
  Corpus c;
  const std::string out = (c.dir / "sel.csv").string();
  const Result r = run_cli(concat({"select", "--space", "dlm|vif_scale1,wd_ssim", "--splits", "5",
                                   "--train-fraction", "0.5", "--no-content-groups", "--out", out},
                                  c.data_args()));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string text = testing::read_text(out);
  EXPECT_NE(text.find("rank,schema,cv_srocc\n"), std::string::npos);
  EXPECT_NE(text.find("dlm+vif_scale1"), std::string::npos);
  EXPECT_EQ(count_lines(text), 2 + 5);
  EXPECT_FALSE(std::filesystem::exists(out + ".tmp"));
}

TEST(Cli, BenchPrintsOperationCounts) {
  const Result r = run_cli({"bench"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* key : {"sast", "csf_spatial", "wavelet", "dlm", "total", "reference_total", "ops_ratio"})
    EXPECT_NE(r.out.find(key), std::string::npos) << key;
  EXPECT_EQ(r.out.find("ms_per_frame"), std::string::npos);

  TempDir dir("cli_bench");
  write_clip(dir / "ref.yuv", 2, 0, 1);
  write_clip(dir / "dis.yuv", 2, 5, 2);
  const Result t = run_cli(concat({"bench", "--reference"}, video_args(dir, "dis.yuv")));
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("ms_per_frame"), std::string::npos);
  EXPECT_NE(t.out.find("speedup"), std::string::npos);
}

}  // namespace
}  // namespace funque
