#include "funque/dataset.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "funque/error.h"

namespace funque {
namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool skippable(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#';
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read '" + path.string() + "'");
  return in;
}

}  // namespace

double FeatureVector::value(std::string_view name) const {
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i] == name) return values.at(i);
  }
  throw Error("feature '" + std::string(name) + "' not in schema");
}

void Dataset::validate() const {
  if (schema.empty()) throw Error("dataset '" + name + "' has an empty schema");
  for (const DatasetRow& r : rows) {
    if (r.features.size() != schema.size()) {
      throw Error("dataset '" + name + "': row '" + r.video_id + "' has " +
                  std::to_string(r.features.size()) + " features, schema has " +
                  std::to_string(schema.size()));
    }
    if (r.content_id.empty()) {
      throw Error("dataset '" + name + "': row '" + r.video_id + "' lacks a content id");
    }
  }
}

Dataset Dataset::project(const std::vector<std::string>& target) const {
  std::vector<std::size_t> cols;
  for (const std::string& n : target) {
    auto it = std::find(schema.begin(), schema.end(), n);
    if (it == schema.end()) throw Error("dataset '" + name + "' has no feature '" + n + "'");
    cols.push_back(static_cast<std::size_t>(it - schema.begin()));
  }
  Dataset out{name, target, {}};
  out.rows.reserve(rows.size());
  for (const DatasetRow& r : rows) {
    DatasetRow p{r.video_id, {}, r.mos, r.content_id};
    for (std::size_t c : cols) p.features.push_back(r.features.at(c));
    out.rows.push_back(std::move(p));
  }
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out{name, schema, {}};
  out.rows.reserve(indices.size());
  for (std::size_t i : indices) out.rows.push_back(rows.at(i));
  return out;
}

std::vector<double> Dataset::mos() const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const DatasetRow& r : rows) out.push_back(r.mos);
  return out;
}

FeatureVector Dataset::features(std::size_t row) const {
  return {rows.at(row).features, schema};
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double_field(std::string_view text, std::string_view context) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw Error(std::string(context) + ": expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

void write_feature_csv(std::ostream& out, const std::vector<FeatureCsvRow>& rows) {
  out << kFeatureCsvVersionLine << "\n";
  if (rows.empty()) return;
  const auto& schema = rows.front().features.schema;
  out << "video_id,frame";
  for (const auto& n : schema) out << "," << n;
  out << "\n";
  for (const FeatureCsvRow& r : rows) {
    if (r.features.schema != schema) throw Error("feature CSV rows must share one schema");
    out << r.video_id << "," << r.frame;
    for (double v : r.features.values) out << "," << format_double(v);
    out << "\n";
  }
}

std::vector<FeatureCsvRow> read_feature_csv(std::istream& in, std::string_view source) {
  std::string line;
  int lineno = 0;
  bool versioned = false;
  std::vector<std::string> header;
  std::vector<FeatureCsvRow> rows;
  const std::string where(source);
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("# funque-features", 0) == 0) {
      if (line != kFeatureCsvVersionLine) {
        throw Error(where + ":" + std::to_string(lineno) + ": unsupported feature CSV version '" + line + "'");
      }
      versioned = true;
      continue;
    }
    if (skippable(line)) continue;
    std::vector<std::string> fields = split_csv(line);
    if (header.empty()) {
      if (fields.size() < 3 || fields[0] != "video_id" || fields[1] != "frame") {
        throw Error(where + ":" + std::to_string(lineno) +
                    ": header must start with video_id,frame and name at least one feature");
      }
      header = std::move(fields);
      continue;
    }
    if (fields.size() != header.size()) {
      throw Error(where + ":" + std::to_string(lineno) + ": expected " +
                  std::to_string(header.size()) + " columns, found " +
                  std::to_string(fields.size()));
    }
    FeatureCsvRow row;
    row.video_id = fields[0];
    row.frame = static_cast<int>(parse_double_field(
        fields[1], where + ":" + std::to_string(lineno) + " column frame"));
    row.features.schema.assign(header.begin() + 2, header.end());
    for (std::size_t c = 2; c < fields.size(); ++c) {
      row.features.values.push_back(parse_double_field(
          fields[c], where + ":" + std::to_string(lineno) + " column " + header[c]));
    }
    rows.push_back(std::move(row));
  }
  if (!versioned) throw Error(where + ": missing '" + std::string(kFeatureCsvVersionLine) + "' line");
  return rows;
}

std::vector<FeatureCsvRow> read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in = open_or_throw(path);
  return read_feature_csv(in, path.string());
}

std::vector<MosEntry> read_mos_csv(std::istream& in, std::string_view source) {
  std::string line;
  int lineno = 0;
  bool have_header = false;
  bool have_db = false;
  std::vector<MosEntry> out;
  const std::string where(source);
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (skippable(line)) continue;
    std::vector<std::string> f = split_csv(line);
    if (!have_header) {
      if (f.size() < 3 || f[0] != "video_id" || f[1] != "mos" || f[2] != "content_id" ||
          (f.size() == 4 && f[3] != "database") || f.size() > 4) {
        throw Error(where + ":" + std::to_string(lineno) +
                    ": MOS header must be video_id,mos,content_id[,database]");
      }
      have_db = f.size() == 4;
      have_header = true;
      continue;
    }
    if (f.size() != (have_db ? 4u : 3u)) {
      throw Error(where + ":" + std::to_string(lineno) + ": wrong number of columns");
    }
    MosEntry e{f[0], parse_double_field(f[1], where + ":" + std::to_string(lineno) + " column mos"),
               f[2], have_db ? f[3] : std::string()};
    if (e.video_id.empty() || e.content_id.empty()) {
      throw Error(where + ":" + std::to_string(lineno) + ": empty video_id or content_id");
    }
    out.push_back(std::move(e));
  }
  if (!have_header) throw Error(where + ": empty MOS table");
  return out;
}

std::vector<MosEntry> read_mos_csv(const std::filesystem::path& path) {
  std::ifstream in = open_or_throw(path);
  return read_mos_csv(in, path.string());
}

Dataset join_dataset(const std::vector<FeatureCsvRow>& frames,
                     const std::vector<MosEntry>& mos, std::string name) {
  if (frames.empty()) throw Error("no feature rows to join");
  const std::vector<std::string>& schema = frames.front().features.schema;
  std::map<std::string, std::pair<std::vector<double>, int>> sums;
  for (const FeatureCsvRow& r : frames) {
    if (r.features.schema != schema) throw Error("feature rows use different schemas");
    auto& [acc, n] = sums[r.video_id];
    if (acc.empty()) acc.assign(schema.size(), 0.0);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += r.features.values[i];
    ++n;
  }
  Dataset out{std::move(name), schema, {}};
  std::set<std::string> seen;
  for (const MosEntry& e : mos) {
    if (!seen.insert(e.video_id).second) throw Error("duplicate MOS entry for '" + e.video_id + "'");
    auto it = sums.find(e.video_id);
    if (it == sums.end()) throw Error("no features for video '" + e.video_id + "'");
    DatasetRow row{e.video_id, it->second.first, e.mos, e.content_id};
    for (double& v : row.features) v /= it->second.second;
    out.rows.push_back(std::move(row));
  }
  out.validate();
  return out;
}

}  // namespace funque
