#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "stgcn/graph.hpp"
#include "stgcn/tape.hpp"

namespace stgcn {

/// D^-1/2 (I + A) D^-1/2 with D the degree matrix of I + A.
class NormalizedAdjacency {
 public:
  NormalizedAdjacency() = default;
  const Tensor& matrix() const { return matrix_; }
  std::size_t size() const { return matrix_.rows(); }

 private:
  friend NormalizedAdjacency normalize_adjacency(const Tensor& adjacency);
  explicit NormalizedAdjacency(Tensor m) : matrix_(std::move(m)) {}
  Tensor matrix_;
};

/// Throws ValidationError unless `adjacency` is square, symmetric and
/// nonnegative.
NormalizedAdjacency normalize_adjacency(const Tensor& adjacency);

struct NormalizedPair {
  NormalizedAdjacency spatial;
  NormalizedAdjacency temporal;
  std::size_t nodes_per_step = 0;
  std::size_t steps = 0;
};

NormalizedPair normalize(const AdjacencyPair& adj);

/// Weights of one STGCN layer bound on a tape.
///
/// `spatial` holds one [d_cluster x d_model] matrix per column block of the
/// layer input, in block order. `temporal` is [d_model x d_out].
struct StgcnWeights {
  std::vector<Var> spatial;
  Var temporal;
  std::optional<Var> bias;
};

/// relu(N(A_t) * (N(A_s) * H * W_s) * W_t).
///
/// H is [N_t x sum(d_cluster)] with each node's features confined to its
/// cluster's column block, so the stacked W_s applies one matrix per cluster.
Var stgcn_layer(Var h, const NormalizedPair& adj, const StgcnWeights& w);

/// relu(N(A_s) * H * W_s * W_t), the fixed grid-temporal form.
Var stgcn_layer_grid(Var h, const NormalizedAdjacency& spatial, const StgcnWeights& w);

/// Node features laid out for the layers: [N_t x sum(block widths)] where
/// the track's block holds its features and every other entry is zero.
/// `membership` marks the entries belonging to a present node's own block.
struct PackedFeatures {
  Tensor values;
  Tensor membership;
  std::vector<std::size_t> block_widths;
};

/// One column block per feature cluster.
PackedFeatures pack_by_cluster(const StgSequence& seq);

/// One column block per node type present in the sequence, in enum order.
/// All tracks of a type must share a feature length.
PackedFeatures pack_by_type(const StgSequence& seq, std::vector<NodeType>* block_types = nullptr);

/// Per-node-type 1x1 convolution kernels ([d_type x d_model]); empty slots
/// for types without a kernel.
using TypeKernels = std::array<std::optional<Var>, kNodeTypeCount>;

/// Maps every node vector through its type's kernel to d_model. Absent
/// nodes give zero rows. Throws ConfigurationError when a present type has
/// no kernel or the kernel width disagrees with the features.
Var harmonize_projection(Tape& tape, const StgSequence& seq, const TypeKernels& kernels);

/// Same, on features already packed by pack_by_type (possibly mean-subtracted).
Var harmonize_projection(Tape& tape, const PackedFeatures& by_type, const std::vector<NodeType>& block_types,
                         const TypeKernels& kernels);

/// Per timestep and channel, subtracts the mean over the nodes whose
/// `membership` entry is set; other entries stay as they are (zero for
/// absent rows).
Tensor subtract_mean(const Tensor& h, const Tensor& membership, std::size_t nodes_per_step);

}  // namespace stgcn
