#include "stgcn/synth.hpp"

#include <algorithm>
#include <limits>
#include <random>

#include "stgcn/errors.hpp"

namespace stgcn {

namespace {

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

void SynthConfig::validate() const {
  if (classes < 2) throw ValidationError("synthetic task needs at least 2 classes");
  if (cluster_lengths.empty()) throw ValidationError("synthetic task needs at least 1 cluster");
  for (auto len : cluster_lengths)
    if (len == 0) throw ValidationError("cluster feature length must be positive");
  if (nodes.empty()) throw ValidationError("synthetic task needs at least one node spec");
  for (const auto& n : nodes) {
    if (n.cluster >= cluster_lengths.size()) throw ValidationError("node spec references unknown cluster");
    if (n.count == 0) throw ValidationError("node spec count must be positive");
  }
  if (min_steps == 0 || max_steps < min_steps) throw ValidationError("invalid sequence length range");
  if (min_segment == 0 || max_segment < min_segment) throw ValidationError("invalid segment length range");
  if (!(noise >= 0.0f) || !(class_scale > 0.0f)) throw ValidationError("noise must be >= 0 and class scale > 0");
  if (spatial_weight < 0.0f || temporal_weight < 0.0f) throw ValidationError("edge weights must be nonnegative");
  if (!(presence_rate > 0.0f && presence_rate <= 1.0f)) throw ValidationError("presence rate must be in (0, 1]");
  if (temporal_span == 0) throw ValidationError("temporal span must be >= 1");
  if (mode == LabelMode::multi && (max_active == 0 || max_active > classes)) {
    throw ValidationError("max_active must be in [1, classes]");
  }
  if (subjects == 0) throw ValidationError("subjects must be positive");
}

SynthModel make_synth_model(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  SynthModel model{config, seed, {}};
  auto rng = derived_rng(seed, std::numeric_limits<std::uint64_t>::max());
  std::normal_distribution<float> normal(0.0f, config.class_scale);
  for (const auto& spec : config.nodes) {
    Tensor means(Shape{config.classes, config.cluster_lengths[spec.cluster]});
    for (auto& v : means.data()) v = normal(rng);
    model.means.push_back(std::move(means));
  }
  return model;
}

StgSequence synth_sequence(const SynthModel& model, std::uint64_t seed, std::size_t index) {
  const SynthConfig& cfg = model.config;
  auto rng = derived_rng(seed, index);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::bernoulli_distribution keep(cfg.presence_rate);

  StgSequence seq;
  seq.steps = uniform_index(rng, cfg.min_steps, cfg.max_steps);
  seq.classes = cfg.classes;
  seq.mode = cfg.mode;
  seq.subject = "s" + std::to_string(index % cfg.subjects);
  for (std::size_t c = 0; c < cfg.cluster_lengths.size(); ++c) seq.clusters.push_back({c, cfg.cluster_lengths[c]});
  const std::size_t T = seq.steps;

  // Piecewise-constant labels.
  std::vector<std::vector<std::size_t>> active(T);
  std::vector<std::size_t> current;
  for (std::size_t t = 0; t < T;) {
    const std::size_t len = uniform_index(rng, cfg.min_segment, cfg.max_segment);
    std::vector<std::size_t> next;
    if (cfg.mode == LabelMode::single) {
      std::size_t c = uniform_index(rng, 0, cfg.classes - 1);
      if (!current.empty() && c == current.front()) c = (c + 1 + uniform_index(rng, 0, cfg.classes - 2)) % cfg.classes;
      next = {c};
    } else {
      const std::size_t k = uniform_index(rng, 1, cfg.max_active);
      std::vector<std::size_t> all(cfg.classes);
      for (std::size_t c = 0; c < cfg.classes; ++c) all[c] = c;
      std::shuffle(all.begin(), all.end(), rng);
      next.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
      std::sort(next.begin(), next.end());
    }
    current = next;
    for (std::size_t i = 0; i < len && t < T; ++i, ++t) active[t] = current;
  }
  seq.label_mask.assign(T, 1);
  seq.frame_counts.assign(T, 1);
  if (cfg.mode == LabelMode::single) {
    seq.labels.resize(T);
    for (std::size_t t = 0; t < T; ++t) seq.labels[t] = static_cast<std::int32_t>(active[t].front());
  } else {
    seq.multi_labels.assign(T * cfg.classes, 0);
    for (std::size_t t = 0; t < T; ++t)
      for (auto c : active[t]) seq.multi_labels[t * cfg.classes + c] = 1;
  }

  for (std::size_t g = 0; g < cfg.nodes.size(); ++g) {
    const auto& spec = cfg.nodes[g];
    const std::size_t len = cfg.cluster_lengths[spec.cluster];
    for (std::size_t r = 0; r < spec.count; ++r) {
      NodeTrack tr;
      tr.track_id = std::string(to_string(spec.type)) + "_" + std::to_string(g) + "_" + std::to_string(r);
      tr.type = spec.type;
      tr.cluster = spec.cluster;
      tr.presence.resize(T);
      tr.features = Tensor(Shape{T, len});
      for (std::size_t t = 0; t < T; ++t) {
        tr.presence[t] = cfg.presence_rate >= 1.0f || keep(rng) ? 1 : 0;
        for (std::size_t j = 0; j < len; ++j) {
          const float eps = normal(rng);
          if (!tr.presence[t]) continue;
          float mean = 0.0f;
          for (auto c : active[t]) mean += model.means[g].at(c, j);
          tr.features.at(t, j) = mean + cfg.noise * eps;
        }
      }
      seq.tracks.push_back(std::move(tr));
    }
  }
  connect_spatial_fully(seq, cfg.spatial_weight);
  connect_tracks_temporally(seq, cfg.temporal_span, cfg.temporal_weight, cfg.temporal_decay);
  validate(seq);
  return seq;
}

SynthDataset synth_generate(const SynthConfig& config, std::uint64_t seed, std::size_t count) {
  SynthDataset ds{make_synth_model(config, seed), {}};
  ds.sequences.reserve(count);
  for (std::size_t i = 0; i < count; ++i) ds.sequences.push_back(synth_sequence(ds.model, seed, i));
  return ds;
}

std::vector<std::int32_t> oracle_predict(const SynthModel& model, const StgSequence& seq) {
  if (seq.mode != LabelMode::single) throw ValidationError("nearest-mean oracle is defined for single-label data");
  // Track -> node spec, by generation order.
  std::vector<std::size_t> spec_of;
  for (std::size_t g = 0; g < model.config.nodes.size(); ++g)
    for (std::size_t r = 0; r < model.config.nodes[g].count; ++r) spec_of.push_back(g);
  if (spec_of.size() != seq.tracks.size()) throw ValidationError("sequence does not match the synthetic model");

  std::vector<std::int32_t> out(seq.steps, 0);
  for (std::size_t t = 0; t < seq.steps; ++t) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < seq.classes; ++c) {
      double dist = 0.0;
      for (std::size_t k = 0; k < seq.tracks.size(); ++k) {
        if (!seq.tracks[k].present(t)) continue;
        const Tensor& mu = model.means[spec_of[k]];
        for (std::size_t j = 0; j < mu.cols(); ++j) {
          const double d = static_cast<double>(seq.tracks[k].features.at(t, j)) - mu.at(c, j);
          dist += d * d;
        }
      }
      if (dist < best) {
        best = dist;
        out[t] = static_cast<std::int32_t>(c);
      }
    }
  }
  return out;
}

}  // namespace stgcn
