#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stgcn/tensor.hpp"

namespace stgcn {

enum class NodeType { actor, object, scene, action, other };

std::string_view to_string(NodeType type);
NodeType node_type_from_string(std::string_view name);
inline constexpr std::size_t kNodeTypeCount = 5;

enum class LabelMode { single, multi };

std::string_view to_string(LabelMode mode);
LabelMode label_mode_from_string(std::string_view name);

/// Group of tracks sharing one feature length.
struct FeatureCluster {
  std::size_t id = 0;
  std::size_t feature_len = 0;

  friend bool operator==(const FeatureCluster&, const FeatureCluster&) = default;
};

/// One node followed through time.
///
/// `features` is [T x feature_len]; rows where `presence` is false are zero.
struct NodeTrack {
  std::string track_id;
  NodeType type = NodeType::other;
  std::size_t cluster = 0;
  std::vector<std::uint8_t> presence;
  Tensor features;

  bool present(std::size_t t) const { return presence[t] != 0; }
  friend bool operator==(const NodeTrack&, const NodeTrack&) = default;
};

/// Undirected edge between two tracks at one timestep.
struct SpatialEdge {
  std::size_t step = 0;
  std::size_t a = 0;
  std::size_t b = 0;
  float weight = 0.0f;

  friend bool operator==(const SpatialEdge&, const SpatialEdge&) = default;
};

/// Edge from (track_a, step) to (track_b, step + delta), delta >= 1.
struct TemporalEdge {
  std::size_t track_a = 0;
  std::size_t step = 0;
  std::size_t track_b = 0;
  std::size_t delta = 1;
  float weight = 0.0f;

  friend bool operator==(const TemporalEdge&, const TemporalEdge&) = default;
};

/// A temporal sequence of spatial graphs with per-timestep labels.
struct StgSequence {
  std::size_t steps = 0;
  std::size_t classes = 0;
  LabelMode mode = LabelMode::single;
  std::vector<FeatureCluster> clusters;
  std::vector<NodeTrack> tracks;
  std::vector<SpatialEdge> spatial_edges;
  std::vector<TemporalEdge> temporal_edges;
  /// single mode: class index per timestep (ignored where label_mask is 0).
  std::vector<std::int32_t> labels;
  /// multi mode: [T x C] row-major 0/1 targets.
  std::vector<std::uint8_t> multi_labels;
  std::vector<std::uint8_t> label_mask;
  /// Frames covered by each timestep; all ones unless ingested from segments.
  std::vector<std::uint32_t> frame_counts;
  /// Grouping key for leave-one-group-out splits.
  std::string subject;

  std::size_t nodes_per_step() const { return tracks.size(); }
  std::size_t flat_index(std::size_t track, std::size_t step) const { return step * tracks.size() + track; }
  bool target(std::size_t t, std::size_t c) const { return multi_labels[t * classes + c] != 0; }

  friend bool operator==(const StgSequence&, const StgSequence&) = default;
};

/// Throws ValidationError describing the first violated invariant.
void validate(const StgSequence& seq);

/// Spatial and temporal adjacency over the node x time flattening
/// (timestep-major: index = t * N_s + track).
///
/// `spatial` is block-diagonal over time: block t holds the spatial graph at
/// timestep t. Both matrices are [N_t x N_t], symmetric, nonnegative, with a
/// zero diagonal.
struct AdjacencyPair {
  Tensor spatial;
  Tensor temporal;
  std::size_t nodes_per_step = 0;
  std::size_t steps = 0;

  std::size_t size() const { return nodes_per_step * steps; }
};

/// Assembles adjacency matrices from the sequence's edge lists.
///
/// Temporal edges with delta > span are left out. When
/// `cross_cluster_in_temporal` is set, spatial edges joining different
/// clusters are routed into the temporal matrix. Repeated or directed input
/// edges are symmetrized by max.
AdjacencyPair build_adjacency(const StgSequence& seq, std::size_t span, bool cross_cluster_in_temporal);

/// Marks the listed (track, step) nodes absent and removes their edges.
StgSequence apply_deformation(const StgSequence& seq,
                              const std::vector<std::pair<std::size_t, std::size_t>>& drops);

/// Replaces spatial edges with a fully connected graph among present nodes
/// at every timestep.
void connect_spatial_fully(StgSequence& seq, float weight);

/// Replaces temporal edges with same-track links for every delta in
/// [1, span] whose endpoints are both present. With `inverse_delta` a link
/// over delta steps weighs weight / delta.
void connect_tracks_temporally(StgSequence& seq, std::size_t span, float weight, bool inverse_delta = false);

/// Timesteps [begin, begin + length) as a standalone sequence; edges leaving
/// the window are dropped.
StgSequence crop_steps(const StgSequence& seq, std::size_t begin, std::size_t length);

/// Extends to `length` timesteps with absent nodes and masked-out labels.
StgSequence pad_steps(const StgSequence& seq, std::size_t length);

/// Per flat node (t * N_s + track): 1 when present.
std::vector<std::uint8_t> flat_presence(const StgSequence& seq);

}  // namespace stgcn
