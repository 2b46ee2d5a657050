#include "stgcn/hourglass.hpp"

#include "stgcn/errors.hpp"
#include "stgcn/ops.hpp"

namespace stgcn {

void HourglassConfig::validate() const {
  if (stride == 0) throw ConfigurationError("hourglass stride must be positive");
  if (kernel == 0) throw ConfigurationError("hourglass kernel must be positive");
  if (stack_depth == 0) throw ConfigurationError("stack depth must be positive");
}

AdjacencyPair subsample_adjacency(const AdjacencyPair& adj, std::size_t stride) {
  if (stride == 0) throw ValidationError("subsampling stride must be positive");
  if (stride == 1) return adj;
  const std::size_t n = adj.nodes_per_step;
  const std::size_t steps = (adj.steps + stride - 1) / stride;
  const std::size_t size = n * steps;
  AdjacencyPair out{Tensor(Shape{size, size}), Tensor(Shape{size, size}), n, steps};
  // Row r of the output is row (r / n) * stride * n + r % n of the input.
  auto source = [&](std::size_t r) { return (r / n) * stride * n + r % n; };
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t si = source(i);
    for (std::size_t j = 0; j < size; ++j) {
      const std::size_t sj = source(j);
      out.spatial.at(i, j) = adj.spatial.at(si, sj);
      out.temporal.at(i, j) = adj.temporal.at(si, sj);
    }
  }
  return out;
}

LevelAdjacency build_levels(const AdjacencyPair& adj, std::size_t count, std::size_t stride) {
  LevelAdjacency levels;
  AdjacencyPair current = adj;
  for (std::size_t l = 0; l < count; ++l) {
    if (l > 0) current = subsample_adjacency(current, stride);
    levels.push_back(normalize(current));
  }
  return levels;
}

std::vector<std::size_t> level_steps(std::size_t steps, std::size_t count, std::size_t stride) {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < count; ++l) {
    out.push_back(steps);
    steps = (steps + stride - 1) / stride;
  }
  return out;
}

namespace {

// [T*N x d] -> strided conv over T -> [ceil(T/s)*N x d]
Var downsample(Var x, std::size_t steps, std::size_t nodes, Var kernel, const HourglassConfig& cfg) {
  const std::size_t d = x.value().cols();
  const std::size_t target = (steps + cfg.stride - 1) / cfg.stride;
  const std::size_t needed = (target - 1) * cfg.stride + cfg.kernel;
  Var tracks = ops::reshape(x, {steps, nodes, d});
  if (steps < needed) tracks = ops::pad_axis0(tracks, needed);
  Var y = ops::conv1d_temporal(tracks, kernel, cfg.stride);
  if (y.value().dim(0) > target) y = ops::slice(y, 0, 0, target);
  if (y.value().dim(0) != target) throw ContractError("hourglass: encoder produced an unexpected temporal extent");
  return ops::reshape(y, {target * nodes, y.value().dim(2)});
}

// [T'*N x d] -> deconv over T' -> cropped or padded to [T*N x d]
Var upsample(Var x, std::size_t steps, std::size_t nodes, Var kernel, const HourglassConfig& cfg) {
  const std::size_t d = x.value().cols();
  const std::size_t coarse = x.value().rows() / nodes;
  Var y = ops::deconv1d_temporal(ops::reshape(x, {coarse, nodes, d}), kernel, cfg.stride);
  const std::size_t produced = y.value().dim(0);
  if (produced + cfg.stride <= steps || produced >= steps + cfg.stride + cfg.kernel) {
    throw ContractError("hourglass: decoder extent " + std::to_string(produced) + " drifted from " +
                        std::to_string(steps));
  }
  if (produced > steps) y = ops::slice(y, 0, 0, steps);
  if (produced < steps) y = ops::pad_axis0(y, steps);
  return ops::reshape(y, {steps * nodes, y.value().dim(2)});
}

}  // namespace

Var hourglass_forward(Var h, const LevelAdjacency& levels, const HourglassWeights& w, const HourglassConfig& cfg) {
  const std::size_t depth = cfg.levels;
  if (levels.size() < std::max<std::size_t>(depth, 1)) throw DimensionError("hourglass: missing level adjacency");
  if (w.encoder.size() < std::max<std::size_t>(depth, 1)) throw DimensionError("hourglass: missing encoder weights");
  if (h.value().rows() != levels[0].spatial.size()) {
    throw DimensionError("hourglass: input rows do not match level-0 adjacency");
  }
  if (depth == 0) return stgcn_layer(h, levels[0], w.encoder[0]);
  if (w.down.size() < depth || w.up.size() < depth) throw DimensionError("hourglass: missing resampling kernels");
  if (cfg.decoder_stgcn && w.decoder.size() < depth) throw DimensionError("hourglass: missing decoder weights");

  std::vector<Var> skips;
  Var x = h;
  for (std::size_t l = 0; l < depth; ++l) {
    x = stgcn_layer(x, levels[l], w.encoder[l]);
    skips.push_back(x);
    x = downsample(x, levels[l].steps, levels[l].nodes_per_step, w.down[l], cfg);
  }
  for (std::size_t l = depth; l-- > 0;) {
    x = upsample(x, levels[l].steps, levels[l].nodes_per_step, w.up[l], cfg);
    if (cfg.skip) x = ops::add(x, skips[l]);
    if (cfg.decoder_stgcn) x = stgcn_layer(x, levels[l], w.decoder[l]);
  }
  return x;
}

Var stack_forward(Var h, const LevelAdjacency& levels, const std::vector<HourglassWeights>& blocks,
                  const HourglassConfig& cfg) {
  if (blocks.empty()) throw DimensionError("stack_forward: no hourglass blocks");
  for (const auto& block : blocks) h = hourglass_forward(h, levels, block, cfg);
  return h;
}

Var head_forward(Var h, const std::vector<std::uint8_t>& flat_presence, std::size_t nodes_per_step, Var weight,
                 Var bias) {
  const std::size_t rows = h.value().rows();
  if (nodes_per_step == 0 || rows % nodes_per_step != 0 || flat_presence.size() != rows) {
    throw DimensionError("head_forward: presence mask does not match the node flattening");
  }
  const std::size_t steps = rows / nodes_per_step;
  Tensor pool(Shape{steps, rows});
  for (std::size_t t = 0; t < steps; ++t) {
    std::size_t count = 0;
    for (std::size_t k = 0; k < nodes_per_step; ++k) count += flat_presence[t * nodes_per_step + k] ? 1 : 0;
    for (std::size_t k = 0; k < nodes_per_step; ++k) {
      if (flat_presence[t * nodes_per_step + k]) pool.at(t, t * nodes_per_step + k) = 1.0f / static_cast<float>(count);
    }
  }
  const Var pooled = ops::matmul(h.tape().constant(std::move(pool)), h);
  return ops::add_row(ops::matmul(pooled, weight), bias);
}

}  // namespace stgcn
