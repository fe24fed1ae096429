#ifndef FUNQUE_EVAL_H_
#define FUNQUE_EVAL_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "funque/dataset.h"
#include "funque/fusion.h"
#include "funque/transform.h"

namespace funque {

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

// Average ranks (1-based); ties share the mean of their positions.
std::vector<double> fractional_ranks(std::span<const double> values);

// Spearman rank-order correlation. Needs equal lengths >= 3; throws when
// either input is constant.
double srocc(std::span<const double> pred, std::span<const double> mos);

// tanh of the mean Fisher z. Throws when any |r| >= 1.
double fisher_average(std::span<const double> correlations);

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct CvOptions {
  int n_splits = 5000;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  // When false every row is its own group.
  bool group_by_content = true;
  int threads = 1;
  SvrHyper hyper;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Seeded content-grouped splits. Groups are ordered by id before shuffling,
// so the splits depend on the row set, not the row order. Throws when there
// are fewer than 2 groups or a test side would hold fewer than 3 rows.
std::vector<Split> make_splits(const Dataset& data, const CvOptions& opt);

struct CvResult {
  double mean_srocc = 0;  // Fisher average
  std::vector<double> split_srocc;
};

// Trains on each split's train side and scores the test side. A split whose
// test predictions (or MOS) are constant contributes r = 0; correlations are
// clipped to +-(1 - 1e-12) before averaging. The result does not depend on
// opt.threads.
CvResult cross_validate(const Dataset& data, const CvOptions& opt);

// ---------------------------------------------------------------------------
// Feature selection
// ---------------------------------------------------------------------------

// Candidate names per category; a subset takes at most one from each.
struct SelectionSpace {
  std::vector<std::vector<std::string>> categories;

  // Throws on an empty space, empty category, unknown or repeated name.
  void validate() const;
};

// DLM | SSIM variants | VIF variants | Motion.
SelectionSpace default_selection_space();

// prod(n_c + 1) - 1.
std::uint64_t count_subsets(const SelectionSpace& space);

// Every non-empty subset, each sorted by name.
std::vector<std::vector<std::string>> enumerate_subsets(const SelectionSpace& space);

struct SubsetScore {
  std::vector<std::string> schema;
  double cv_srocc = 0;
};

struct SelectionResult {
  std::vector<std::string> best_schema;
  double best_score = 0;
  // Best first: higher score, then fewer features, then lexicographic schema.
  std::vector<SubsetScore> ranked;
};

// Cross-validates every subset on the same seeded splits.
SelectionResult exhaustive_select(const SelectionSpace& space, const Dataset& data,
                                  const CvOptions& opt);

// ---------------------------------------------------------------------------
// Operations per pixel
// ---------------------------------------------------------------------------
//
// Cost convention: a multiply-accumulate counts as one op; a window statistic
// read from an integral image costs 4 lookups plus its arithmetic. Costs are
// per input pixel of a frame pair, so work on both inputs is counted.

struct OpCost {
  std::string stage;
  double ops_per_pixel = 0;
};

// Per-stage costs for `cfg` and `schema` at the given frame size (only the
// frequency-domain CSF depends on it). An empty schema costs nothing.
// Throws on unknown feature names.
std::vector<OpCost> ops_breakdown(const TransformConfig& cfg,
                                  const std::vector<std::string>& schema,
                                  int width = 1920, int height = 1080);
double ops_per_pixel(const TransformConfig& cfg, const std::vector<std::string>& schema,
                     int width = 1920, int height = 1080);

// The pixel-domain reference pipeline: 4-scale VIF with 17/9/5/3-tap
// Gaussian filters, 4-level db2 detail loss with dense 3x3 masking, and
// blurred-frame motion.
std::vector<OpCost> reference_ops_breakdown();
double reference_ops_per_pixel();

// reference_ops_per_pixel() / ops_per_pixel(cfg, schema).
double ops_ratio(const TransformConfig& cfg, const std::vector<std::string>& schema);

// ---------------------------------------------------------------------------
// Reference timing pipeline
// ---------------------------------------------------------------------------

// The toolkit's own conventional pipeline, used as the timing baseline:
// 4-scale pixel-domain VIF (2x2 mean downsampling between scales), 4-level
// db2 DLM with Watson weights and no SAST, full-resolution motion.
class ReferencePipeline {
 public:
  ReferencePipeline();

  // {vif_scale0..3, dlm, motion}. `prev_ref` may be null.
  std::vector<double> evaluate(const Plane& ref, const Plane& dis,
                               const Plane* prev_ref) const;

 private:
  UnifiedTransform transform_;
};

}  // namespace funque

#endif  // FUNQUE_EVAL_H_
