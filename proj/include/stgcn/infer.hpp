#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "stgcn/config.hpp"
#include "stgcn/graph.hpp"

namespace stgcn {

class Model;

/// Fused per-timestep class probabilities.
struct ScoreTimeline {
  /// [T x C]; rows with zero coverage are zero.
  Tensor scores;
  std::vector<std::uint32_t> coverage;
  LabelMode mode = LabelMode::single;
};

/// 0, hop, 2*hop, ... plus a final start flush with the end. A single start
/// of 0 when steps <= window.
std::vector<std::size_t> window_starts(std::size_t steps, std::size_t window, std::size_t hop);

/// Weight of each window at each timestep: entry [w][t] for window w and
/// timestep t, zero outside the window. Columns of covered timesteps sum to 1.
std::vector<std::vector<double>> fusion_weights(std::size_t steps, std::size_t window, std::size_t hop,
                                                FusionWeighting weighting);

/// Maps a window-length sequence to [window x C] logits.
using WindowScorer = std::function<Tensor(const StgSequence&)>;

/// Scores each window, converts logits to probabilities (softmax for single,
/// sigmoid for multi) and fuses them with fusion_weights. Sequences shorter
/// than the window run once, zero-padded and masked.
ScoreTimeline sliding_infer(const StgSequence& seq, const WindowScorer& scorer, std::size_t window, std::size_t hop,
                            FusionWeighting weighting = FusionWeighting::uniform);

ScoreTimeline sliding_infer(const StgSequence& seq, const Model& model, const TrainConfig& cfg);

/// k indices round(i * (T - 1) / (k - 1)), i = 0..k-1.
std::vector<std::size_t> select_eval_points(std::size_t available, std::size_t k = 25);

struct ClassScore {
  std::size_t support = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// Average precision; NaN when the class has no positive.
  double ap = 0.0;
};

struct F1Result {
  double macro_f1 = 0.0;
  std::vector<ClassScore> per_class;
};

/// Macro F1 over the classes that occur in `truth`. `weights` (one per item,
/// e.g. frame counts) scale each item's contribution; empty means 1 each.
/// Throws ValidationError on empty or mismatched input.
F1Result f1_detail(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& truth, std::size_t classes,
                   const std::vector<double>& weights = {});
double f1_score(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& truth, std::size_t classes,
                const std::vector<double>& weights = {});

/// AP of one ranking: mean precision at each positive, ties kept in input
/// order. NaN when there is no positive.
double average_precision(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth);

/// Mean AP over classes with at least one positive. `scores` is [N x C] and
/// `truth` is [N x C] row-major 0/1. Throws ValidationError when no class has
/// a positive.
double mean_ap(const Tensor& scores, const std::vector<std::uint8_t>& truth, std::vector<double>* per_class = nullptr);

struct EvalReport {
  LabelMode mode = LabelMode::single;
  std::size_t classes = 0;
  /// single mode
  double macro_f1 = 0.0;
  /// multi mode: over select_eval_points of each sequence, and over every
  /// masked-in timestep.
  double map_points = 0.0;
  double map_full = 0.0;
  std::vector<ClassScore> per_class;

  /// macro_f1 or map_points.
  double headline() const { return mode == LabelMode::single ? macro_f1 : map_points; }
};

/// Evaluates fused timelines against masked-in labels. With `per_frame`,
/// single-label items are weighted by frame_counts instead of counting each
/// timestep once.
EvalReport evaluate_timelines(const std::vector<StgSequence>& data, const std::vector<ScoreTimeline>& timelines,
                              std::size_t eval_points, bool per_frame = false);

EvalReport evaluate(const Model& model, const std::vector<StgSequence>& data, const TrainConfig& cfg,
                    bool per_frame = false);

std::string to_json(const EvalReport& report);

}  // namespace stgcn
