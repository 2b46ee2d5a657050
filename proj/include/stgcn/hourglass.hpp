#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "stgcn/gcn.hpp"

namespace stgcn {

struct HourglassConfig {
  /// Encoder/decoder stages; 0 degenerates to a single STGCN layer.
  std::size_t levels = 2;
  std::size_t stride = 2;
  /// Strided-conv and deconv kernel length.
  std::size_t kernel = 2;
  std::size_t stack_depth = 1;
  bool skip = true;
  /// Adds an STGCN layer after each decoder stage.
  bool decoder_stgcn = false;

  void validate() const;
};

/// Normalized adjacency per hourglass level; level l covers
/// ceil(T / stride^l) timesteps.
using LevelAdjacency = std::vector<NormalizedPair>;

/// Keeps timesteps 0, s, 2s, ... of both matrices (raw, unnormalized).
AdjacencyPair subsample_adjacency(const AdjacencyPair& adj, std::size_t stride);

/// Levels 0..count-1, each subsampled from the previous one and normalized.
LevelAdjacency build_levels(const AdjacencyPair& adj, std::size_t count, std::size_t stride);

/// Temporal extent at each level for a level-0 extent of `steps`.
std::vector<std::size_t> level_steps(std::size_t steps, std::size_t count, std::size_t stride);

/// Weights of one hourglass block bound on a tape. `down[l]` and `up[l]` are
/// [kernel x d x d] temporal kernels between levels l and l + 1.
struct HourglassWeights {
  std::vector<StgcnWeights> encoder;
  std::vector<Var> down;
  std::vector<Var> up;
  std::vector<StgcnWeights> decoder;
};

/// Encoder: per level, STGCN layer then strided conv. Decoder: per level,
/// deconv cropped to the level's extent, then the same-level encoder output
/// added when skips are on. Rows keep the timestep-major node flattening;
/// the output has the input's temporal extent.
Var hourglass_forward(Var h, const LevelAdjacency& levels, const HourglassWeights& w, const HourglassConfig& cfg);

/// Hourglass blocks applied in sequence.
Var stack_forward(Var h, const LevelAdjacency& levels, const std::vector<HourglassWeights>& blocks,
                  const HourglassConfig& cfg);

/// Mean over present nodes per timestep followed by an affine map to class
/// scores: [N_t x d] -> [T x C]. Timesteps with no present node score the
/// bias.
Var head_forward(Var h, const std::vector<std::uint8_t>& flat_presence, std::size_t nodes_per_step, Var weight,
                 Var bias);

}  // namespace stgcn
