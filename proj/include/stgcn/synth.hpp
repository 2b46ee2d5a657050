#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "stgcn/graph.hpp"

namespace stgcn {

/// A group of identical tracks in generated sequences.
struct SynthNodeSpec {
  NodeType type = NodeType::other;
  std::size_t cluster = 0;
  std::size_t count = 1;
};

/// Parameters of the synthetic graph-sequence task.
///
/// Every node of spec g at a timestep with label y carries
/// mean[g][y] + noise * N(0, I). Labels are piecewise constant with segment
/// lengths drawn uniformly from [min_segment, max_segment].
struct SynthConfig {
  std::size_t classes = 5;
  LabelMode mode = LabelMode::single;
  std::size_t min_steps = 30;
  std::size_t max_steps = 80;
  float noise = 0.3f;
  /// Standard deviation of the class-mean entries.
  float class_scale = 1.0f;
  std::vector<std::size_t> cluster_lengths{16, 12};
  std::vector<SynthNodeSpec> nodes{{NodeType::actor, 0, 1}, {NodeType::object, 1, 2}};
  std::size_t min_segment = 6;
  std::size_t max_segment = 16;
  float spatial_weight = 0.1f;
  float temporal_weight = 1.0f;
  std::size_t temporal_span = 3;
  /// Scales each temporal link by 1 / delta.
  bool temporal_decay = false;
  /// Probability that a node is present at a timestep.
  float presence_rate = 1.0f;
  /// Upper bound on simultaneously active classes in multi mode.
  std::size_t max_active = 2;
  /// Number of distinct subject ids cycled over generated sequences.
  std::size_t subjects = 4;

  void validate() const;
};

/// Ground-truth generative parameters: class means per node spec, each
/// [classes x feature_len].
struct SynthModel {
  SynthConfig config;
  std::uint64_t seed = 0;
  std::vector<Tensor> means;
};

struct SynthDataset {
  SynthModel model;
  std::vector<StgSequence> sequences;
};

SynthModel make_synth_model(const SynthConfig& config, std::uint64_t seed);

/// One sequence drawn from `model`; deterministic in (model, seed).
StgSequence synth_sequence(const SynthModel& model, std::uint64_t seed, std::size_t index = 0);

/// `count` sequences sharing one generative model; deterministic in seed.
SynthDataset synth_generate(const SynthConfig& config, std::uint64_t seed, std::size_t count);

/// Closed-form nearest-mean classifier over all present nodes at each
/// timestep (single-label mode). Absent timesteps predict class 0.
std::vector<std::int32_t> oracle_predict(const SynthModel& model, const StgSequence& seq);

}  // namespace stgcn
