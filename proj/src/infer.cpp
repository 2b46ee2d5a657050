#include "stgcn/infer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "stgcn/errors.hpp"
#include "stgcn/model.hpp"

namespace stgcn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void to_probabilities(Tensor& scores, LabelMode mode) {
  for (std::size_t t = 0; t < scores.rows(); ++t) {
    if (mode == LabelMode::multi) {
      for (std::size_t c = 0; c < scores.cols(); ++c) scores.at(t, c) = 1.0f / (1.0f + std::exp(-scores.at(t, c)));
      continue;
    }
    float top = scores.at(t, 0);
    for (std::size_t c = 1; c < scores.cols(); ++c) top = std::max(top, scores.at(t, c));
    double total = 0.0;
    for (std::size_t c = 0; c < scores.cols(); ++c) total += std::exp(static_cast<double>(scores.at(t, c) - top));
    for (std::size_t c = 0; c < scores.cols(); ++c)
      scores.at(t, c) = static_cast<float>(std::exp(static_cast<double>(scores.at(t, c) - top)) / total);
  }
}

}  // namespace

std::vector<std::size_t> window_starts(std::size_t steps, std::size_t window, std::size_t hop) {
  if (window == 0 || hop == 0) throw ValidationError("window and hop must be positive");
  if (steps <= window) return {0};
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + window <= steps; s += hop) starts.push_back(s);
  if (starts.back() + window < steps) starts.push_back(steps - window);
  return starts;
}

std::vector<std::vector<double>> fusion_weights(std::size_t steps, std::size_t window, std::size_t hop,
                                                FusionWeighting weighting) {
  const auto starts = window_starts(steps, window, hop);
  const std::size_t span = std::min(window, steps);
  std::vector<std::vector<double>> w(starts.size(), std::vector<double>(steps, 0.0));
  for (std::size_t k = 0; k < starts.size(); ++k) {
    for (std::size_t i = 0; i < span; ++i) {
      w[k][starts[k] + i] =
          weighting == FusionWeighting::uniform ? 1.0 : static_cast<double>(std::min(i + 1, span - i));
    }
  }
  for (std::size_t t = 0; t < steps; ++t) {
    double total = 0.0;
    for (const auto& row : w) total += row[t];
    if (total > 0.0)
      for (auto& row : w) row[t] /= total;
  }
  return w;
}

ScoreTimeline sliding_infer(const StgSequence& seq, const WindowScorer& scorer, std::size_t window, std::size_t hop,
                            FusionWeighting weighting) {
  const std::size_t T = seq.steps;
  const auto starts = window_starts(T, window, hop);
  const auto weights = fusion_weights(T, window, hop, weighting);
  ScoreTimeline out{Tensor(Shape{T, seq.classes}), std::vector<std::uint32_t>(T, 0), seq.mode};
  std::vector<double> fused(T * seq.classes, 0.0);
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const StgSequence piece = T < window ? pad_steps(seq, window) : crop_steps(seq, starts[k], window);
    Tensor scores = scorer(piece);
    if (scores.rank() != 2 || scores.rows() != piece.steps || scores.cols() != seq.classes) {
      throw DimensionError("window scorer returned " + shape_string(scores.shape()) + ", expected [" +
                           std::to_string(piece.steps) + " x " + std::to_string(seq.classes) + "]");
    }
    to_probabilities(scores, seq.mode);
    const std::size_t span = std::min(window, T);
    for (std::size_t i = 0; i < span; ++i) {
      const std::size_t t = starts[k] + i;
      ++out.coverage[t];
      for (std::size_t c = 0; c < seq.classes; ++c) fused[t * seq.classes + c] += weights[k][t] * scores.at(i, c);
    }
  }
  for (std::size_t i = 0; i < fused.size(); ++i) out.scores[i] = static_cast<float>(fused[i]);
  return out;
}

ScoreTimeline sliding_infer(const StgSequence& seq, const Model& model, const TrainConfig& cfg) {
  return sliding_infer(
      seq, [&](const StgSequence& piece) { return model.predict(piece); }, cfg.window, cfg.hop(), cfg.fusion);
}

std::vector<std::size_t> select_eval_points(std::size_t available, std::size_t k) {
  if (available == 0 || k == 0) throw ValidationError("eval point selection needs available >= 1 and k >= 1");
  if (k == 1) return {0};
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = static_cast<std::size_t>(
        std::llround(static_cast<double>(i) * static_cast<double>(available - 1) / static_cast<double>(k - 1)));
  }
  return out;
}

F1Result f1_detail(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& truth, std::size_t classes,
                   const std::vector<double>& weights) {
  if (pred.empty()) throw ValidationError("f1_score: empty input");
  if (pred.size() != truth.size()) throw ValidationError("f1_score: prediction and truth lengths differ");
  if (!weights.empty() && weights.size() != pred.size()) throw ValidationError("f1_score: weight length differs");
  std::vector<double> tp(classes, 0.0), fp(classes, 0.0), fn(classes, 0.0);
  F1Result out;
  out.per_class.resize(classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (auto v : {pred[i], truth[i]})
      if (v < 0 || static_cast<std::size_t>(v) >= classes) throw ValidationError("f1_score: label out of range");
    const double w = weights.empty() ? 1.0 : weights[i];
    const auto p = static_cast<std::size_t>(pred[i]);
    const auto y = static_cast<std::size_t>(truth[i]);
    ++out.per_class[y].support;
    if (p == y) {
      tp[y] += w;
    } else {
      fp[p] += w;
      fn[y] += w;
    }
  }
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    ClassScore& s = out.per_class[c];
    s.precision = tp[c] + fp[c] > 0.0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
    s.recall = tp[c] + fn[c] > 0.0 ? tp[c] / (tp[c] + fn[c]) : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    s.ap = kNaN;
    if (s.support == 0) continue;
    total += s.f1;
    ++present;
  }
  out.macro_f1 = total / static_cast<double>(present);
  return out;
}

double f1_score(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& truth, std::size_t classes,
                const std::vector<double>& weights) {
  return f1_detail(pred, truth, classes, weights).macro_f1;
}

double average_precision(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth) {
  if (scores.size() != truth.size()) throw ValidationError("average_precision: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (!truth[order[rank]]) continue;
    ++hits;
    total += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  return hits == 0 ? kNaN : total / static_cast<double>(hits);
}

double mean_ap(const Tensor& scores, const std::vector<std::uint8_t>& truth, std::vector<double>* per_class) {
  if (scores.rank() != 2 || truth.size() != scores.size()) throw ValidationError("mean_ap: scores/truth mismatch");
  const std::size_t n = scores.rows(), classes = scores.cols();
  double total = 0.0;
  std::size_t counted = 0;
  if (per_class) per_class->assign(classes, kNaN);
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> col(n);
    std::vector<std::uint8_t> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      col[i] = scores.at(i, c);
      pos[i] = truth[i * classes + c];
    }
    const double ap = average_precision(col, pos);
    if (per_class) (*per_class)[c] = ap;
    if (std::isnan(ap)) continue;
    total += ap;
    ++counted;
  }
  if (counted == 0) throw ValidationError("mean_ap: no positive labels in the ground truth");
  return total / static_cast<double>(counted);
}

EvalReport evaluate_timelines(const std::vector<StgSequence>& data, const std::vector<ScoreTimeline>& timelines,
                              std::size_t eval_points, bool per_frame) {
  if (data.empty() || data.size() != timelines.size()) throw ValidationError("evaluate: no data or timeline mismatch");
  EvalReport report;
  report.mode = data.front().mode;
  report.classes = data.front().classes;
  const std::size_t C = report.classes;
  for (const auto& seq : data)
    if (seq.mode != report.mode || seq.classes != C) throw ValidationError("evaluate: sequences disagree on mode or C");

  if (report.mode == LabelMode::single) {
    std::vector<std::int32_t> pred, truth;
    std::vector<double> weights;
    for (std::size_t s = 0; s < data.size(); ++s) {
      const Tensor& sc = timelines[s].scores;
      for (std::size_t t = 0; t < data[s].steps; ++t) {
        if (!data[s].label_mask[t]) continue;
        std::size_t best = 0;
        for (std::size_t c = 1; c < C; ++c)
          if (sc.at(t, c) > sc.at(t, best)) best = c;
        pred.push_back(static_cast<std::int32_t>(best));
        truth.push_back(data[s].labels[t]);
        weights.push_back(per_frame ? data[s].frame_counts[t] : 1.0);
      }
    }
    const F1Result f1 = f1_detail(pred, truth, C, weights);
    report.macro_f1 = f1.macro_f1;
    report.per_class = f1.per_class;
    return report;
  }

  auto gather = [&](bool points) {
    std::vector<std::pair<std::size_t, std::size_t>> items;
    for (std::size_t s = 0; s < data.size(); ++s) {
      std::vector<std::size_t> available;
      for (std::size_t t = 0; t < data[s].steps; ++t)
        if (data[s].label_mask[t]) available.push_back(t);
      if (available.empty()) continue;
      if (!points) {
        for (auto t : available) items.emplace_back(s, t);
        continue;
      }
      for (auto i : select_eval_points(available.size(), eval_points)) items.emplace_back(s, available[i]);
    }
    Tensor scores(Shape{std::max<std::size_t>(items.size(), 1), C});
    std::vector<std::uint8_t> truth(scores.size(), 0);
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto [s, t] = items[i];
      for (std::size_t c = 0; c < C; ++c) {
        scores.at(i, c) = timelines[s].scores.at(t, c);
        truth[i * C + c] = data[s].target(t, c) ? 1 : 0;
      }
    }
    return std::pair{scores, truth};
  };
  const auto [ps, pt] = gather(true);
  std::vector<double> ap;
  report.map_points = mean_ap(ps, pt, &ap);
  const auto [fs, ft] = gather(false);
  report.map_full = mean_ap(fs, ft);
  report.per_class.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    report.per_class[c].ap = ap[c];
    for (std::size_t i = 0; i < ps.rows(); ++i) report.per_class[c].support += pt[i * C + c];
  }
  return report;
}

EvalReport evaluate(const Model& model, const std::vector<StgSequence>& data, const TrainConfig& cfg,
                    bool per_frame) {
  std::vector<ScoreTimeline> timelines;
  timelines.reserve(data.size());
  for (const auto& seq : data) timelines.push_back(sliding_infer(seq, model, cfg));
  return evaluate_timelines(data, timelines, cfg.eval_points, per_frame);
}

std::string to_json(const EvalReport& report) {
  using nlohmann::json;
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  json classes = json::object();
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const ClassScore& s = report.per_class[c];
    json entry{{"support", s.support}};
    if (report.mode == LabelMode::single) {
      entry["precision"] = s.precision;
      entry["recall"] = s.recall;
      entry["f1"] = s.f1;
    } else {
      entry["ap"] = num(s.ap);
    }
    classes[std::to_string(c)] = entry;
  }
  json out{{"mode", to_string(report.mode)}, {"per_class", classes}};
  if (report.mode == LabelMode::single) {
    out["macro_f1"] = report.macro_f1;
  } else {
    out["mAP"] = report.map_points;
    out["mAP_full"] = report.map_full;
  }
  return out.dump(2);
}

}  // namespace stgcn
