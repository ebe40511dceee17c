#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "groundcheck/dataset.hpp"
#include "groundcheck/geometry.hpp"
#include "groundcheck/refgame.hpp"

namespace groundcheck {

inline constexpr double kDefaultSlackRadius = 40.0;
inline constexpr double kDefaultRecallIou = 0.5;

enum class TaskVariant { continuous, binary };

// Per-example task measurement: pixel distance for point tasks, 0/1 for
// choice tasks.
struct TaskScore {
  std::string id;
  std::string text_id;
  TaskVariant variant = TaskVariant::continuous;
  double value = 0.0;

  bool correct(double slack = kDefaultSlackRadius) const {
    return variant == TaskVariant::binary ? value >= 0.5 : value <= slack;
  }
};

struct GroundingScore {
  std::string id;
  std::vector<double> phrase_ious;  // one per annotated phrase
  double mean_iou = 0.0;
  int missing_predictions = 0;

  bool has_annotations() const { return !phrase_ious.empty(); }
};

struct RankedBox {
  BoundingBox box;
  double confidence = 0.0;
};

// One prediction per phrase: either a probability map (mask mode) or a
// confidence-ranked box list (boxes mode).
struct PhrasePrediction {
  int span_begin = 0;
  int span_end = 0;
  std::optional<SegMap> mask;
  std::vector<RankedBox> boxes;
};

struct PredictionRecord {
  std::string id;
  Point task_point;
  std::vector<PhrasePrediction> phrases;
};

enum class GroundingMode { mask, boxes };

// True iff the Euclidean distance is within the slack radius (inclusive).
bool sdr_accuracy(Point pred, Point gold, double slack = kDefaultSlackRadius);

// Fraction of unique text ids whose every example is accurate.
double consistency(const std::vector<TaskScore>& scores,
                   double slack = kDefaultSlackRadius);

// Per-phrase IoU against gold regions. Mask-mode predictions are
// normalize-thresholded at `threshold` first; boxes mode scores the top-1
// box. A missing prediction for an annotated phrase scores 0 and is
// flagged.
GroundingScore grounding_scores(const Example& ex, const PredictionRecord& pred,
                                GroundingMode mode, double threshold = 0.5);

// True iff any of the first k boxes reaches `iou_threshold` against gold.
bool recall_at_k(const std::vector<RankedBox>& ranked, const Region& gold,
                 int k, double iou_threshold = kDefaultRecallIou);

// Sample Pearson correlation; throws UndefinedCorrelation on zero variance.
double pearson(std::span<const double> xs, std::span<const double> ys);

// (M1 - M0) / s_n * sqrt(p q), with s_n the population standard deviation.
// Algebraically equal to pearson(bins-as-reals, ys).
double point_biserial(const std::vector<int>& bins, const std::vector<double>& ys);

struct Correlation {
  double r = 0.0;
  TaskVariant variant = TaskVariant::continuous;
};

// Dataset-level correlation between task and grounding quality. Binary
// tasks use point-biserial(success, mean-IoU); continuous tasks use
// pearson(-distance, mean-IoU). Pairs are matched by example id; throws
// UndefinedCorrelation when degenerate.
Correlation correlate(const std::vector<TaskScore>& task,
                      const std::vector<GroundingScore>& grounding,
                      double slack = kDefaultSlackRadius);

std::vector<double> default_threshold_grid();  // 0.05, 0.10, ..., 0.95

// Grid member maximizing validation mean-IoU; ties take the smallest t.
double calibrate_threshold(const std::vector<SegMap>& val_preds,
                           const std::vector<Region>& val_golds,
                           const std::vector<double>& grid = default_threshold_grid());

struct ReportConfig {
  GroundingMode mode = GroundingMode::boxes;
  double threshold = 0.5;           // mask mode
  double slack = kDefaultSlackRadius;
  std::vector<int> recall_ks = {1, 5, 10};
  double recall_iou = kDefaultRecallIou;
  bool micro_average = false;       // also report micro mean-IoU
  std::string tag = "head";
};

struct MetricReport {
  std::string tag;
  TaskVariant task_variant = TaskVariant::continuous;
  std::size_t n_examples = 0;
  std::size_t n_grounded_examples = 0;
  std::size_t n_missing_predictions = 0;
  double task_accuracy = 0.0;
  double consistency = 0.0;
  std::optional<double> mean_distance;  // point tasks only
  double mean_iou = 0.0;                // macro: mean of example means
  double mean_iou_micro = 0.0;          // mean over all phrases
  std::map<int, std::optional<double>> recall;  // k -> rate (boxes mode)
  std::optional<double> correlation;    // empty => n/a
  TaskVariant correlation_variant = TaskVariant::continuous;

  static std::string csv_header();
  std::string csv_row() const;
  std::string to_text() const;
};

// Computes per-example scores in id order and aggregates them. Orphan ids
// on either side raise ValidationError listing them.
MetricReport report(const ExampleSet& examples,
                    const std::vector<PredictionRecord>& predictions,
                    const ReportConfig& config);

// Prediction JSONL:
// {"id":..., "task_point":[x,y], "phrases":[{"span":[i,j],
//   "mask_ref":"rel/path.gtf" | "boxes":[{"x_min":..,...,"conf":..}]}]}
// mask_ref paths resolve relative to the JSONL file's directory.
std::vector<PredictionRecord> load_predictions(const std::string& path);
void save_predictions(const std::vector<PredictionRecord>& records,
                      const std::string& path);

// Derives per-example task and grounding scores for an example/prediction
// set (used by report, correlate CLI and the synthetic sweep).
std::pair<std::vector<TaskScore>, std::vector<GroundingScore>> score_examples(
    const ExampleSet& examples, const std::vector<PredictionRecord>& predictions,
    const ReportConfig& config);

}  // namespace groundcheck
