#ifndef FUNQUE_FUSION_H_
#define FUNQUE_FUSION_H_

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "funque/dataset.h"
#include "funque/features.h"
#include "funque/plane.h"
#include "funque/transform.h"
#include "funque/video_io.h"

namespace funque {

// ---------------------------------------------------------------------------
// Feature assembly
// ---------------------------------------------------------------------------

// Every atom feature the extractor can compute, in canonical order.
const std::vector<std::string>& all_feature_names();

// WD-ESSIM, VIF scales 1 and 2, DLM, Motion.
std::vector<std::string> default_schema();

// Haar, one level, spatial CSF, SAST.
TransformConfig default_transform_config();

// Throws an Error listing the valid names when any entry is unknown or
// repeated.
void validate_schema(const std::vector<std::string>& schema);
std::vector<std::string> parse_schema(std::string_view comma_separated);

struct FrameFeatures {
  FeatureVector features;
  Plane ref_approx;  // reference A_L, carried to the next frame's Motion
};

// Runs the unified transform once per input and evaluates every schema
// feature on the shared pyramids.
class FeatureExtractor {
 public:
  FeatureExtractor(TransformConfig cfg, std::vector<std::string> schema);

  const TransformConfig& config() const { return transform_.config(); }
  const std::vector<std::string>& schema() const { return schema_; }

  // Motion is 0 when `prev_ref_approx` is null (first frame).
  FrameFeatures extract(const Plane& ref, const Plane& dis,
                        const Plane* prev_ref_approx) const;

  // Per-frame features of a whole clip pair. Frames fan out over `threads`
  // workers, each with its own readers; Motion is paired afterwards, so the
  // result does not depend on the thread count.
  std::vector<FeatureVector> extract_video(const std::filesystem::path& ref,
                                           const std::filesystem::path& dis,
                                           const VideoSpec& spec, int threads = 1) const;

 private:
  UnifiedTransform transform_;
  std::vector<std::string> schema_;
  int motion_index_ = -1;
};

FrameFeatures extract_frame_features(const Plane& ref, const Plane& dis,
                                     const Plane* prev_ref_approx,
                                     const TransformConfig& cfg,
                                     const std::vector<std::string>& schema);

// Per-feature arithmetic mean over frames.
FeatureVector aggregate_video_features(std::span<const FeatureVector> frames);

// ---------------------------------------------------------------------------
// Support vector regression
// ---------------------------------------------------------------------------

enum class KernelType { kRbf, kLinear };

std::string_view to_string(KernelType k);
KernelType parse_kernel_type(std::string_view name);

struct SvrHyper {
  KernelType kernel = KernelType::kRbf;
  double gamma = 0;  // <= 0 selects 1 / num_features
  double c = 4.0;
  double nu = 0.9;
  double tolerance = 1e-6;
  long max_iterations = 10'000'000;
};

struct SvrModel {
  KernelType kernel = KernelType::kRbf;
  double gamma = 0;
  double c = 0;
  double nu = 0;
  std::vector<std::string> schema;
  // Normalized to [0, 1] with feature_ranges.
  std::vector<std::vector<double>> support_vectors;
  std::vector<double> dual_coefs;
  double bias = 0;
  std::vector<std::pair<double, double>> feature_ranges;
  std::pair<double, double> score_range{0, 0};

  // Sizes agree, coefficients lie in [-C, C], ranges are non-degenerate.
  void validate() const;
};

// nu-SVR on min-max normalized features, solved by sequential minimal
// optimization. Rows are put in a canonical order first, so the model does
// not depend on the order of the input rows.
SvrModel svr_train(const Dataset& data, const SvrHyper& hyper = {});

// Throws when the vector's schema differs from the model's.
double svr_predict(const SvrModel& model, const FeatureVector& features);
// Values must be ordered as model.schema.
double svr_predict_values(const SvrModel& model, std::span<const double> values);

inline constexpr int kModelFormatVersion = 1;

std::string serialize_model(const SvrModel& model);
SvrModel parse_model(std::string_view text);
// Written to a temporary file and renamed into place.
void save_model(const SvrModel& model, const std::filesystem::path& path);
SvrModel load_model(const std::filesystem::path& path);

std::uint64_t schema_hash(const std::vector<std::string>& schema);

}  // namespace funque

#endif  // FUNQUE_FUSION_H_
