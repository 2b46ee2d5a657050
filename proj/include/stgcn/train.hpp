#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "stgcn/config.hpp"
#include "stgcn/model.hpp"

namespace stgcn {

/// Mean over masked-in (t, c) of the sigmoid cross-entropy. `targets` is
/// [T x C] row-major 0/1. Throws ValidationError when every step is masked out.
Var masked_bce_loss(Var scores, const std::vector<std::uint8_t>& targets, const std::vector<std::uint8_t>& mask);

/// Mean softmax cross-entropy over masked-in timesteps.
Var masked_ce_loss(Var scores, const std::vector<std::int32_t>& labels, const std::vector<std::uint8_t>& mask);

/// The loss matching the sequence's label mode.
Var sequence_loss(Var scores, const StgSequence& seq);

/// lr0 * drop^floor(epoch / step).
float step_lr(std::size_t epoch, const TrainConfig& cfg);

/// p <- p - lr * v with v <- momentum * v + g (v = g when momentum is 0).
/// `velocity` is only touched when momentum > 0.
void sgd_step(ParameterSet& params, const std::map<std::string, Var>& bound, const Gradients& grads, float lr,
              float momentum, ParameterSet& velocity);

/// A random max_T-step window of `seq`, or `seq` zero-padded and masked up
/// to max_T when shorter.
StgSequence train_window_sample(const StgSequence& seq, std::size_t max_T, std::mt19937_64& rng);

struct CurvePoint {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  /// Macro F1 (single) or mAP (multi); NaN when not computed.
  double metric = 0.0;

  /// Bitwise on the numbers, so unscored (NaN) metrics compare equal.
  friend bool operator==(const CurvePoint& a, const CurvePoint& b) {
    return a.epoch == b.epoch && a.split == b.split && std::bit_cast<std::uint64_t>(a.loss) == std::bit_cast<std::uint64_t>(b.loss) &&
           std::bit_cast<std::uint64_t>(a.metric) == std::bit_cast<std::uint64_t>(b.metric);
  }
};

std::string curve_csv(const std::vector<CurvePoint>& curve);

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  /// Epochs completed.
  std::size_t epoch = 0;
  ParameterSet params;
  /// Momentum buffers; empty without momentum.
  ParameterSet velocity;
  /// Textual mt19937_64 state of the training sampler.
  std::string rng_state;
};

/// Writes `path` (JSON manifest) and `path`.bin (tensor blobs in key order).
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
bool bitwise_equal(const Checkpoint& a, const Checkpoint& b);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<CurvePoint> curve;
};

/// Called after every epoch with the state so far.
using EpochCallback = std::function<void(const Checkpoint&, const std::vector<CurvePoint>&)>;

struct TrainOptions {
  /// Scored with the sliding-window evaluator after each epoch when non-empty.
  const std::vector<StgSequence>* validation = nullptr;
  EpochCallback on_epoch;
  /// Continue from this state instead of a fresh initialization.
  const Checkpoint* resume = nullptr;
};

/// Deterministic in (data, configs). Throws NumericalError naming the epoch
/// and sequence when the loss stops being finite.
TrainResult train(const std::vector<StgSequence>& data, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const TrainOptions& options = {});

struct FoldResult {
  std::string held_out;
  TrainResult result;
  double metric = 0.0;
};

/// Leave-one-subject-out cross-validation; each fold trains on the other
/// subjects and is scored on its own. Folds run on up to `threads` threads.
std::vector<FoldResult> cross_validate(const std::vector<StgSequence>& data, const ModelConfig& model_cfg,
                                       const TrainConfig& train_cfg, std::size_t threads = 1);

}  // namespace stgcn
