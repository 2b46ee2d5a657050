#include "stgcn/graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <type_traits>

#include "stgcn/errors.hpp"

namespace stgcn {

namespace {

constexpr std::array<std::string_view, kNodeTypeCount> kTypeNames = {"actor", "object", "scene", "action", "other"};

std::string where(std::size_t track, std::size_t step) {
  return "(track " + std::to_string(track) + ", t=" + std::to_string(step) + ")";
}

void check_weight(float w, const char* kind) {
  if (!std::isfinite(w) || w < 0.0f) {
    throw ValidationError(std::string(kind) + " edge weight must be finite and nonnegative, got " + std::to_string(w));
  }
}

void symmetric_max(Tensor& m, std::size_t i, std::size_t j, float w) {
  const float v = std::max(m.at(i, j), w);
  m.at(i, j) = v;
  m.at(j, i) = v;
}

}  // namespace

std::string_view to_string(NodeType type) { return kTypeNames[static_cast<std::size_t>(type)]; }

NodeType node_type_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i)
    if (kTypeNames[i] == name) return static_cast<NodeType>(i);
  throw ValidationError("unknown node type '" + std::string(name) + "'");
}

std::string_view to_string(LabelMode mode) { return mode == LabelMode::single ? "single" : "multi"; }

LabelMode label_mode_from_string(std::string_view name) {
  if (name == "single") return LabelMode::single;
  if (name == "multi") return LabelMode::multi;
  throw ValidationError("unknown label mode '" + std::string(name) + "'");
}

void validate(const StgSequence& seq) {
  const std::size_t T = seq.steps;
  if (T == 0) throw ValidationError("sequence has no timesteps");
  if (seq.classes == 0) throw ValidationError("sequence declares zero classes");
  if (seq.tracks.empty()) throw ValidationError("sequence has no tracks");
  for (std::size_t c = 0; c < seq.clusters.size(); ++c) {
    if (seq.clusters[c].id != c) throw ValidationError("cluster ids must be 0..K-1 in order");
    if (seq.clusters[c].feature_len == 0) throw ValidationError("cluster feature length must be positive");
  }
  for (std::size_t k = 0; k < seq.tracks.size(); ++k) {
    const NodeTrack& tr = seq.tracks[k];
    if (tr.cluster >= seq.clusters.size()) {
      throw ValidationError("track " + std::to_string(k) + " references unknown cluster " + std::to_string(tr.cluster));
    }
    if (tr.presence.size() != T) throw ValidationError("track " + std::to_string(k) + " presence length != T");
    const std::size_t len = seq.clusters[tr.cluster].feature_len;
    if (tr.features.shape() != Shape{T, len}) {
      throw ValidationError("track " + std::to_string(k) + " features " + shape_string(tr.features.shape()) +
                            " do not match [T x " + std::to_string(len) + "]");
    }
    if (!tr.features.all_finite()) throw ValidationError("track " + std::to_string(k) + " has non-finite features");
    for (std::size_t t = 0; t < T; ++t) {
      if (tr.present(t)) continue;
      for (std::size_t j = 0; j < len; ++j) {
        if (tr.features.at(t, j) != 0.0f) {
          throw ValidationError("features recorded for absent node " + where(k, t));
        }
      }
    }
  }

  const std::size_t n = seq.tracks.size();
  for (const auto& e : seq.spatial_edges) {
    check_weight(e.weight, "spatial");
    if (e.step >= T || e.a >= n || e.b >= n) throw ValidationError("spatial edge index out of range");
    if (e.a == e.b) throw ValidationError("spatial self-loop at " + where(e.a, e.step));
    if (!seq.tracks[e.a].present(e.step)) throw ValidationError("spatial edge touches absent node " + where(e.a, e.step));
    if (!seq.tracks[e.b].present(e.step)) throw ValidationError("spatial edge touches absent node " + where(e.b, e.step));
  }
  for (const auto& e : seq.temporal_edges) {
    check_weight(e.weight, "temporal");
    if (e.delta == 0) throw ValidationError("temporal edge must advance time (delta >= 1)");
    if (e.track_a >= n || e.track_b >= n || e.step + e.delta >= T) {
      throw ValidationError("temporal edge index out of range");
    }
    if (!seq.tracks[e.track_a].present(e.step)) {
      throw ValidationError("temporal edge touches absent node " + where(e.track_a, e.step));
    }
    if (!seq.tracks[e.track_b].present(e.step + e.delta)) {
      throw ValidationError("temporal edge touches absent node " + where(e.track_b, e.step + e.delta));
    }
  }

  if (seq.label_mask.size() != T) throw ValidationError("label mask length != T");
  if (seq.frame_counts.size() != T) throw ValidationError("frame count length != T");
  if (seq.mode == LabelMode::single) {
    if (seq.labels.size() != T) throw ValidationError("single-label sequence needs one label per timestep");
    for (std::size_t t = 0; t < T; ++t) {
      if (seq.label_mask[t] && (seq.labels[t] < 0 || static_cast<std::size_t>(seq.labels[t]) >= seq.classes)) {
        throw ValidationError("label " + std::to_string(seq.labels[t]) + " at t=" + std::to_string(t) +
                              " outside [0, " + std::to_string(seq.classes) + ")");
      }
    }
  } else {
    if (seq.multi_labels.size() != T * seq.classes) throw ValidationError("multi-label targets must be T x C");
    for (auto v : seq.multi_labels)
      if (v > 1) throw ValidationError("multi-label targets must be 0/1");
  }
}

AdjacencyPair build_adjacency(const StgSequence& seq, std::size_t span, bool cross_cluster_in_temporal) {
  validate(seq);
  if (span == 0) throw ValidationError("temporal span must be >= 1");
  const std::size_t n = seq.nodes_per_step();
  const std::size_t size = n * seq.steps;
  AdjacencyPair adj{Tensor(Shape{size, size}), Tensor(Shape{size, size}), n, seq.steps};

  for (const auto& e : seq.spatial_edges) {
    const std::size_t i = seq.flat_index(e.a, e.step);
    const std::size_t j = seq.flat_index(e.b, e.step);
    const bool cross = seq.tracks[e.a].cluster != seq.tracks[e.b].cluster;
    symmetric_max(cross && cross_cluster_in_temporal ? adj.temporal : adj.spatial, i, j, e.weight);
  }
  for (const auto& e : seq.temporal_edges) {
    if (e.delta > span) continue;
    symmetric_max(adj.temporal, seq.flat_index(e.track_a, e.step), seq.flat_index(e.track_b, e.step + e.delta),
                  e.weight);
  }
  return adj;
}

StgSequence apply_deformation(const StgSequence& seq, const std::vector<std::pair<std::size_t, std::size_t>>& drops) {
  StgSequence out = seq;
  if (drops.empty()) return out;
  for (const auto& [track, step] : drops) {
    if (track >= out.tracks.size() || step >= out.steps) {
      throw ValidationError("deformation refers to " + where(track, step) + " outside the sequence");
    }
    NodeTrack& tr = out.tracks[track];
    tr.presence[step] = 0;
    for (std::size_t j = 0; j < tr.features.cols(); ++j) tr.features.at(step, j) = 0.0f;
  }
  auto present = [&](std::size_t track, std::size_t step) { return out.tracks[track].present(step); };
  std::erase_if(out.spatial_edges,
                [&](const SpatialEdge& e) { return !present(e.a, e.step) || !present(e.b, e.step); });
  std::erase_if(out.temporal_edges, [&](const TemporalEdge& e) {
    return !present(e.track_a, e.step) || !present(e.track_b, e.step + e.delta);
  });
  return out;
}

void connect_spatial_fully(StgSequence& seq, float weight) {
  check_weight(weight, "spatial");
  seq.spatial_edges.clear();
  for (std::size_t t = 0; t < seq.steps; ++t)
    for (std::size_t a = 0; a < seq.tracks.size(); ++a)
      for (std::size_t b = a + 1; b < seq.tracks.size(); ++b)
        if (seq.tracks[a].present(t) && seq.tracks[b].present(t)) seq.spatial_edges.push_back({t, a, b, weight});
}

void connect_tracks_temporally(StgSequence& seq, std::size_t span, float weight, bool inverse_delta) {
  check_weight(weight, "temporal");
  seq.temporal_edges.clear();
  for (std::size_t k = 0; k < seq.tracks.size(); ++k)
    for (std::size_t t = 0; t < seq.steps; ++t)
      for (std::size_t d = 1; d <= span && t + d < seq.steps; ++d)
        if (seq.tracks[k].present(t) && seq.tracks[k].present(t + d))
          seq.temporal_edges.push_back({k, t, k, d, inverse_delta ? weight / static_cast<float>(d) : weight});
}

StgSequence crop_steps(const StgSequence& seq, std::size_t begin, std::size_t length) {
  if (length == 0 || begin + length > seq.steps) {
    throw ValidationError("crop [" + std::to_string(begin) + ", " + std::to_string(begin + length) +
                          ") outside sequence of " + std::to_string(seq.steps) + " steps");
  }
  StgSequence out;
  out.steps = length;
  out.classes = seq.classes;
  out.mode = seq.mode;
  out.clusters = seq.clusters;
  out.subject = seq.subject;
  for (const auto& tr : seq.tracks) {
    NodeTrack c;
    c.track_id = tr.track_id;
    c.type = tr.type;
    c.cluster = tr.cluster;
    c.presence.assign(tr.presence.begin() + static_cast<std::ptrdiff_t>(begin),
                      tr.presence.begin() + static_cast<std::ptrdiff_t>(begin + length));
    const std::size_t len = tr.features.cols();
    std::vector<float> data(tr.features.data().begin() + static_cast<std::ptrdiff_t>(begin * len),
                            tr.features.data().begin() + static_cast<std::ptrdiff_t>((begin + length) * len));
    c.features = Tensor(Shape{length, len}, std::move(data));
    out.tracks.push_back(std::move(c));
  }
  const std::size_t end = begin + length;
  for (const auto& e : seq.spatial_edges)
    if (e.step >= begin && e.step < end) out.spatial_edges.push_back({e.step - begin, e.a, e.b, e.weight});
  for (const auto& e : seq.temporal_edges)
    if (e.step >= begin && e.step + e.delta < end)
      out.temporal_edges.push_back({e.track_a, e.step - begin, e.track_b, e.delta, e.weight});

  auto window = [&](const auto& v, std::size_t per_step) {
    using V = std::decay_t<decltype(v)>;
    return V(v.begin() + static_cast<std::ptrdiff_t>(begin * per_step),
             v.begin() + static_cast<std::ptrdiff_t>(end * per_step));
  };
  if (seq.mode == LabelMode::single) out.labels = window(seq.labels, 1);
  else out.multi_labels = window(seq.multi_labels, seq.classes);
  out.label_mask = window(seq.label_mask, 1);
  out.frame_counts = window(seq.frame_counts, 1);
  return out;
}

StgSequence pad_steps(const StgSequence& seq, std::size_t length) {
  if (length < seq.steps) throw ValidationError("pad target shorter than sequence");
  StgSequence out = seq;
  if (length == seq.steps) return out;
  out.steps = length;
  for (auto& tr : out.tracks) {
    tr.presence.resize(length, 0);
    std::vector<float> data(tr.features.values());
    data.resize(length * tr.features.cols(), 0.0f);
    tr.features = Tensor(Shape{length, tr.features.cols()}, std::move(data));
  }
  if (out.mode == LabelMode::single) out.labels.resize(length, 0);
  else out.multi_labels.resize(length * out.classes, 0);
  out.label_mask.resize(length, 0);
  out.frame_counts.resize(length, 0);
  return out;
}

std::vector<std::uint8_t> flat_presence(const StgSequence& seq) {
  std::vector<std::uint8_t> out(seq.steps * seq.tracks.size());
  for (std::size_t t = 0; t < seq.steps; ++t)
    for (std::size_t k = 0; k < seq.tracks.size(); ++k) out[seq.flat_index(k, t)] = seq.tracks[k].presence[t];
  return out;
}

}  // namespace stgcn
