#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stgcn/graph.hpp"
#include "stgcn/hourglass.hpp"
#include "stgcn/synth.hpp"

namespace stgcn {

/// How heterogeneous node features reach a common width.
enum class Harmonization {
  /// One 1x1 convolution per node type to d_model, then a shared spatial GCN.
  projection,
  /// One spatial GCN weight per feature cluster; cross-cluster spatial edges
  /// travel through the temporal adjacency.
  per_cluster,
};

std::string_view to_string(Harmonization h);
Harmonization harmonization_from_string(std::string_view name);

struct ModelConfig {
  /// Feature length of each cluster, indexed by cluster id.
  std::vector<std::size_t> cluster_lengths;
  /// Feature length per node type; consulted in projection mode.
  std::vector<std::pair<NodeType, std::size_t>> type_lengths;
  std::size_t d_model = 512;
  std::size_t d_out = 512;
  Harmonization harmonization = Harmonization::per_cluster;
  std::size_t span = 3;
  HourglassConfig hourglass;
  LabelMode mode = LabelMode::single;
  std::size_t classes = 0;
  bool subtract_mean = false;
  bool bias = false;

  void validate() const;
  /// Throws ValidationError when `seq` cannot be fed to this model.
  void check_compatible(const StgSequence& seq) const;
};

enum class FusionWeighting { uniform, triangular };

std::string_view to_string(FusionWeighting w);
FusionWeighting fusion_weighting_from_string(std::string_view name);

struct TrainConfig {
  LabelMode mode = LabelMode::single;
  float lr0 = 0.0004f;
  std::size_t sched_step = 1;
  float sched_drop = 0.9f;
  /// Training window length.
  std::size_t max_steps = 50;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  float momentum = 0.0f;
  /// Sliding-window inference.
  std::size_t window = 50;
  std::size_t overlap = 40;
  FusionWeighting fusion = FusionWeighting::uniform;
  std::size_t eval_points = 25;

  void validate() const;
  std::size_t hop() const { return window - overlap; }
};

std::string to_json(const ModelConfig& cfg);
std::string to_json(const TrainConfig& cfg);
std::string to_json(const SynthConfig& cfg);
ModelConfig model_config_from_json(std::string_view text);
TrainConfig train_config_from_json(std::string_view text);
SynthConfig synth_config_from_json(std::string_view text);

/// A run preset: model and training configuration together.
struct Preset {
  ModelConfig model;
  TrainConfig train;
};

std::string to_json(const Preset& preset);
Preset preset_from_json(std::string_view text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace stgcn
