#ifndef FUNQUE_DATASET_H_
#define FUNQUE_DATASET_H_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace funque {

// Ordered feature values with their names.
struct FeatureVector {
  std::vector<double> values;
  std::vector<std::string> schema;

  // Throws when `name` is not in the schema.
  double value(std::string_view name) const;
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

struct DatasetRow {
  std::string video_id;
  std::vector<double> features;  // ordered as Dataset::schema
  double mos = 0;
  std::string content_id;
};

// One row per video: aggregated features, subjective score and the content
// group used to keep splits free of shared source material.
struct Dataset {
  std::string name;
  std::vector<std::string> schema;
  std::vector<DatasetRow> rows;

  // Uniform row width, non-empty schema, content ids present.
  void validate() const;
  // Columns reordered/subset to `schema`; throws on unknown names.
  Dataset project(const std::vector<std::string>& schema) const;
  Dataset subset(const std::vector<std::size_t>& indices) const;
  std::vector<double> mos() const;
  FeatureVector features(std::size_t row) const;
};

// ---------------------------------------------------------------------------
// CSV interchange
// ---------------------------------------------------------------------------

inline constexpr std::string_view kFeatureCsvVersionLine = "# funque-features v1";

struct FeatureCsvRow {
  std::string video_id;
  int frame = 0;
  FeatureVector features;
};

// Header comment, then `video_id,frame,<schema...>`, one row per frame.
// Numbers are written in shortest round-trip form.
void write_feature_csv(std::ostream& out, const std::vector<FeatureCsvRow>& rows);
std::vector<FeatureCsvRow> read_feature_csv(std::istream& in,
                                            std::string_view source = "<stream>");
std::vector<FeatureCsvRow> read_feature_csv(const std::filesystem::path& path);

struct MosEntry {
  std::string video_id;
  double mos = 0;
  std::string content_id;
  std::string database;  // optional fourth column
};

// Header `video_id,mos,content_id[,database]`.
std::vector<MosEntry> read_mos_csv(std::istream& in, std::string_view source = "<stream>");
std::vector<MosEntry> read_mos_csv(const std::filesystem::path& path);

// Averages the per-frame rows of each video and attaches its MOS entry.
// Every MOS entry must have features; feature rows without a MOS entry are
// ignored.
Dataset join_dataset(const std::vector<FeatureCsvRow>& frames,
                     const std::vector<MosEntry>& mos, std::string name);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double_field(std::string_view text, std::string_view context);

}  // namespace funque

#endif  // FUNQUE_DATASET_H_
