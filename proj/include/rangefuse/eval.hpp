#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "rangefuse/decode.hpp"

namespace rangefuse {

/// One ground-truth object in the evaluation frame (viewpoint 0).
struct GtInstance {
  std::array<BevBox, kHorizons> boxes;
  double actor_speed = 0.0;
};

struct MatchResult {
  std::vector<std::pair<int, int>> matches;  // (pred index, gt index)
  std::vector<int> false_positives;
  std::vector<int> false_negatives;
};

/// Greedy matching in descending score order (ties to the lower pred
/// index): each prediction takes the unmatched ground truth with the
/// highest t=0 IoU, if that IoU >= eps.
MatchResult match_detections(const std::vector<BoxTrajectory>& preds,
                             const std::vector<GtInstance>& gts, double eps);

struct ScoredDetection {
  double score = 0.0;
  bool true_positive = false;
};

/// Area under the precision-recall curve with all-point interpolation.
/// Undefined (nullopt) when there are no ground-truth objects.
std::optional<double> average_precision(std::vector<ScoredDetection> dets, int total_gt);

/// One matched true positive at the L2 matching threshold.
struct L2Sample {
  double actor_speed = 0.0;
  double ego_speed = 0.0;
  std::array<double, kHorizons> l2_m{};  // center distance per horizon
};

/// Mean center distance at one horizon, in centimeters. Absent when no
/// samples matched.
std::optional<double> l2_error_cm(const std::vector<L2Sample>& samples, int horizon);

/// Pooled evaluation results for one fusion strategy.
struct StrategyEval {
  std::string strategy;
  std::optional<double> ap;
  std::vector<ScoredDetection> ap_pool;
  int total_gt = 0;
  std::vector<L2Sample> l2_samples;
  // Information-loss diagnostics averaged over windows.
  double mean_step_drop = 0.0;
  double mean_oneshot_drop = 0.0;
  int n_windows = 0;
  int n_detections = 0;

  void finalize();  // fills `ap`
};

struct BinnedRow {
  std::string bin_kind;  // "actor_speed" or "ego_speed"
  double lo = 0.0, hi = 0.0;
  std::vector<int> counts;         // per strategy
  std::vector<double> l2_cm;       // per strategy, at the report horizon
  std::vector<double> rel_improvement_pct;  // vs the first strategy
};

/// Per-bin L2 at `horizon` for each strategy plus relative improvement
/// over the first (reference) strategy. Bins where any strategy has no
/// samples are omitted.
std::vector<BinnedRow> binned_report(const std::vector<StrategyEval>& strategies, int horizon,
                                     const std::vector<double>& actor_speed_edges,
                                     const std::vector<double>& ego_speed_edges);

void write_eval_csv(const std::string& path, const StrategyEval& eval);
void write_binned_csv(const std::string& path, const std::vector<StrategyEval>& strategies,
                      const std::vector<BinnedRow>& rows, int horizon);

}  // namespace rangefuse
