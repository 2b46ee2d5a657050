#include "stgcn/gcn.hpp"

#include <cmath>

#include "stgcn/errors.hpp"
#include "stgcn/ops.hpp"

namespace stgcn {

NormalizedAdjacency normalize_adjacency(const Tensor& a) {
  if (a.rank() != 2 || a.rows() != a.cols()) {
    throw ValidationError("adjacency must be square, got " + shape_string(a.shape()));
  }
  const std::size_t n = a.rows();
  std::vector<double> inv_sqrt_degree(n);
  for (std::size_t i = 0; i < n; ++i) {
    double degree = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      const float v = a.at(i, j);
      if (!(v >= 0.0f) || !std::isfinite(v)) throw ValidationError("adjacency entries must be finite and nonnegative");
      if (v != a.at(j, i)) throw ValidationError("adjacency must be symmetric");
      degree += v;
    }
    inv_sqrt_degree[i] = 1.0 / std::sqrt(degree);
  }
  Tensor out(Shape{n, n});
  // Upper triangle mirrored, so the result is symmetric bit for bit.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double hat = a.at(i, j) + (i == j ? 1.0 : 0.0);
      if (hat != 0.0) out.at(i, j) = out.at(j, i) = static_cast<float>(inv_sqrt_degree[i] * hat * inv_sqrt_degree[j]);
    }
  }
  return NormalizedAdjacency(std::move(out));
}

NormalizedPair normalize(const AdjacencyPair& adj) {
  return {normalize_adjacency(adj.spatial), normalize_adjacency(adj.temporal), adj.nodes_per_step, adj.steps};
}

namespace {

Var stacked_spatial(const Var& h, const StgcnWeights& w, const char* op) {
  if (w.spatial.empty()) throw DimensionError(std::string(op) + ": no spatial weights");
  std::size_t rows = 0;
  for (const auto& ws : w.spatial) {
    if (ws.value().rank() != 2) throw DimensionError(std::string(op) + ": spatial weight must be a matrix");
    if (ws.value().cols() != w.spatial.front().value().cols()) {
      throw DimensionError(std::string(op) + ": spatial weights disagree on d_model");
    }
    rows += ws.value().rows();
  }
  if (h.value().rank() != 2 || h.value().cols() != rows) {
    throw DimensionError(std::string(op) + ": input " + shape_string(h.shape()) + " does not match cluster widths " +
                         "summing to " + std::to_string(rows));
  }
  return w.spatial.size() == 1 ? w.spatial.front() : ops::concat(w.spatial, 0);
}

Var activate(Var pre, const StgcnWeights& w) {
  if (w.bias) pre = ops::add_row(pre, *w.bias);
  return ops::relu(pre);
}

}  // namespace

Var stgcn_layer(Var h, const NormalizedPair& adj, const StgcnWeights& w) {
  Tape& tape = h.tape();
  const Var ws = stacked_spatial(h, w, "stgcn_layer");
  const std::size_t n = h.value().rows();
  if (adj.spatial.size() != n || adj.temporal.size() != n) {
    throw DimensionError("stgcn_layer: input has " + std::to_string(n) + " rows, adjacency is " +
                         std::to_string(adj.temporal.size()));
  }
  const Var hs = ops::matmul(tape.constant(adj.spatial.matrix()), ops::matmul(h, ws));
  const Var ht = ops::matmul(tape.constant(adj.temporal.matrix()), ops::matmul(hs, w.temporal));
  return activate(ht, w);
}

Var stgcn_layer_grid(Var h, const NormalizedAdjacency& spatial, const StgcnWeights& w) {
  Tape& tape = h.tape();
  const Var ws = stacked_spatial(h, w, "stgcn_layer_grid");
  if (spatial.size() != h.value().rows()) throw DimensionError("stgcn_layer_grid: adjacency/input row mismatch");
  const Var hs = ops::matmul(tape.constant(spatial.matrix()), ops::matmul(h, ws));
  return activate(ops::matmul(hs, w.temporal), w);
}

namespace {

PackedFeatures pack(const StgSequence& seq, const std::vector<std::size_t>& block_of_track,
                    const std::vector<std::size_t>& widths) {
  std::vector<std::size_t> offsets(widths.size(), 0);
  std::size_t total = 0;
  for (std::size_t b = 0; b < widths.size(); ++b) {
    offsets[b] = total;
    total += widths[b];
  }
  const std::size_t rows = seq.steps * seq.tracks.size();
  PackedFeatures out{Tensor(Shape{rows, total}), Tensor(Shape{rows, total}), widths};
  for (std::size_t k = 0; k < seq.tracks.size(); ++k) {
    const NodeTrack& tr = seq.tracks[k];
    const std::size_t b = block_of_track[k];
    if (tr.features.cols() != widths[b]) throw ConfigurationError("track feature width disagrees with its block");
    for (std::size_t t = 0; t < seq.steps; ++t) {
      if (!tr.present(t)) continue;
      const std::size_t row = seq.flat_index(k, t);
      for (std::size_t j = 0; j < widths[b]; ++j) {
        out.values.at(row, offsets[b] + j) = tr.features.at(t, j);
        out.membership.at(row, offsets[b] + j) = 1.0f;
      }
    }
  }
  return out;
}

}  // namespace

PackedFeatures pack_by_cluster(const StgSequence& seq) {
  std::vector<std::size_t> widths;
  for (const auto& c : seq.clusters) widths.push_back(c.feature_len);
  std::vector<std::size_t> block;
  for (const auto& tr : seq.tracks) block.push_back(tr.cluster);
  return pack(seq, block, widths);
}

PackedFeatures pack_by_type(const StgSequence& seq, std::vector<NodeType>* block_types) {
  std::array<std::size_t, kNodeTypeCount> width{};
  for (const auto& tr : seq.tracks) {
    auto& w = width[static_cast<std::size_t>(tr.type)];
    if (w != 0 && w != tr.features.cols()) {
      throw ConfigurationError("node type '" + std::string(to_string(tr.type)) + "' has tracks of differing lengths");
    }
    w = tr.features.cols();
  }
  std::array<std::size_t, kNodeTypeCount> block_index{};
  std::vector<std::size_t> widths;
  std::vector<NodeType> types;
  for (std::size_t t = 0; t < kNodeTypeCount; ++t) {
    if (width[t] == 0) continue;
    block_index[t] = widths.size();
    widths.push_back(width[t]);
    types.push_back(static_cast<NodeType>(t));
  }
  std::vector<std::size_t> block;
  for (const auto& tr : seq.tracks) block.push_back(block_index[static_cast<std::size_t>(tr.type)]);
  if (block_types) *block_types = types;
  return pack(seq, block, widths);
}

Var harmonize_projection(Tape& tape, const StgSequence& seq, const TypeKernels& kernels) {
  std::vector<NodeType> types;
  const PackedFeatures packed = pack_by_type(seq, &types);
  return harmonize_projection(tape, packed, types, kernels);
}

Var harmonize_projection(Tape& tape, const PackedFeatures& packed, const std::vector<NodeType>& types,
                         const TypeKernels& kernels) {
  if (types.size() != packed.block_widths.size()) throw DimensionError("harmonize_projection: block/type mismatch");
  std::vector<Var> stacked;
  for (std::size_t b = 0; b < types.size(); ++b) {
    const auto& kernel = kernels[static_cast<std::size_t>(types[b])];
    if (!kernel) {
      throw ConfigurationError("no projection kernel for node type '" + std::string(to_string(types[b])) + "'");
    }
    const Tensor& kv = kernel->value();
    if (kv.rank() != 2 || kv.rows() != packed.block_widths[b]) {
      throw ConfigurationError("projection kernel for '" + std::string(to_string(types[b])) + "' is " +
                               shape_string(kv.shape()) + ", features have length " +
                               std::to_string(packed.block_widths[b]));
    }
    if (!stacked.empty() && kv.cols() != stacked.front().value().cols()) {
      throw ConfigurationError("projection kernels disagree on the output length");
    }
    stacked.push_back(*kernel);
  }
  const Var w = stacked.size() == 1 ? stacked.front() : ops::concat(stacked, 0);
  return ops::matmul(tape.constant(packed.values), w);
}

Tensor subtract_mean(const Tensor& h, const Tensor& membership, std::size_t nodes_per_step) {
  if (h.shape() != membership.shape() || h.rank() != 2) {
    throw DimensionError("subtract_mean: features and membership must be matching matrices");
  }
  if (nodes_per_step == 0 || h.rows() % nodes_per_step != 0) {
    throw DimensionError("subtract_mean: row count is not a multiple of nodes per step");
  }
  Tensor out = h;
  const std::size_t steps = h.rows() / nodes_per_step;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < h.cols(); ++c) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t k = 0; k < nodes_per_step; ++k) {
        const std::size_t row = t * nodes_per_step + k;
        if (membership.at(row, c) == 0.0f) continue;
        sum += h.at(row, c);
        ++count;
      }
      if (count == 0) continue;
      const double mean = sum / static_cast<double>(count);
      for (std::size_t k = 0; k < nodes_per_step; ++k) {
        const std::size_t row = t * nodes_per_step + k;
        if (membership.at(row, c) != 0.0f) out.at(row, c) = static_cast<float>(h.at(row, c) - mean);
      }
    }
  }
  return out;
}

}  // namespace stgcn
