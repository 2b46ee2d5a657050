#include "stgcn/model.hpp"

#include <cmath>
#include <random>

#include "stgcn/errors.hpp"
#include "stgcn/gcn.hpp"
#include "stgcn/hourglass.hpp"

namespace stgcn {

namespace {

std::string block_prefix(std::size_t b) { return "block" + std::to_string(b) + "/"; }

void add_layer(std::vector<ParameterSpec>& out, const std::string& prefix, const std::vector<std::size_t>& in_widths,
               const ModelConfig& cfg) {
  for (std::size_t c = 0; c < in_widths.size(); ++c)
    out.push_back({prefix + "spatial" + std::to_string(c), {in_widths[c], cfg.d_model}, in_widths[c]});
  out.push_back({prefix + "temporal", {cfg.d_model, cfg.d_out}, cfg.d_model});
  if (cfg.bias) out.push_back({prefix + "bias", {cfg.d_out}, 0});
}

StgcnWeights bind_layer(const std::map<std::string, Var>& bound, const std::string& prefix, std::size_t blocks,
                        bool bias) {
  StgcnWeights w;
  for (std::size_t c = 0; c < blocks; ++c) w.spatial.push_back(bound.at(prefix + "spatial" + std::to_string(c)));
  w.temporal = bound.at(prefix + "temporal");
  if (bias) w.bias = bound.at(prefix + "bias");
  return w;
}

}  // namespace

std::vector<ParameterSpec> parameter_specs(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ParameterSpec> out;
  std::vector<std::size_t> first_widths;
  if (cfg.harmonization == Harmonization::projection) {
    for (const auto& [type, len] : cfg.type_lengths)
      out.push_back({"proj/" + std::string(to_string(type)), {len, cfg.d_model}, len});
    first_widths = {cfg.d_model};
  } else {
    first_widths = cfg.cluster_lengths;
  }
  const HourglassConfig& hg = cfg.hourglass;
  const std::size_t layers = std::max<std::size_t>(hg.levels, 1);
  for (std::size_t b = 0; b < hg.stack_depth; ++b) {
    const std::string p = block_prefix(b);
    for (std::size_t l = 0; l < layers; ++l) {
      const bool first = b == 0 && l == 0;
      add_layer(out, p + "enc" + std::to_string(l) + "/", first ? first_widths : std::vector{cfg.d_out}, cfg);
    }
    for (std::size_t l = 0; l < hg.levels; ++l) {
      const std::size_t fan = hg.kernel * cfg.d_out;
      out.push_back({p + "down" + std::to_string(l), {hg.kernel, cfg.d_out, cfg.d_out}, fan});
      out.push_back({p + "up" + std::to_string(l), {hg.kernel, cfg.d_out, cfg.d_out}, fan});
      if (hg.decoder_stgcn) add_layer(out, p + "dec" + std::to_string(l) + "/", {cfg.d_out}, cfg);
    }
  }
  out.push_back({"head/weight", {cfg.d_out, cfg.classes}, cfg.d_out});
  out.push_back({"head/bias", {cfg.classes}, 0});
  return out;
}

ParameterSet init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParameterSet params;
  for (const auto& spec : parameter_specs(cfg)) {
    Tensor t(spec.shape);
    if (spec.fan_in > 0) {
      const float bound = 1.0f / std::sqrt(static_cast<float>(spec.fan_in));
      std::uniform_real_distribution<float> dist(-bound, bound);
      for (auto& v : t.data()) v = dist(rng);
    }
    params.emplace(spec.name, std::move(t));
  }
  return params;
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), params_(init_parameters(cfg_, seed)) {}

Model::Model(ModelConfig cfg, ParameterSet params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  const auto specs = parameter_specs(cfg_);
  if (specs.size() != params_.size()) {
    throw ValidationError("parameter set has " + std::to_string(params_.size()) + " tensors, config needs " +
                          std::to_string(specs.size()));
  }
  for (const auto& spec : specs) {
    const auto it = params_.find(spec.name);
    if (it == params_.end()) throw ValidationError("missing parameter '" + spec.name + "'");
    if (it->second.shape() != spec.shape) {
      throw ValidationError("parameter '" + spec.name + "' is " + shape_string(it->second.shape()) + ", expected " +
                            shape_string(spec.shape));
    }
  }
}

Model::Forward Model::forward(Tape& tape, const StgSequence& seq, bool trainable) const {
  Forward out;
  for (const auto& [name, value] : params_)
    out.bound.emplace(name, trainable ? tape.parameter(value) : tape.constant(value));
  out.logits = forward(tape, seq, out.bound);
  return out;
}

Var Model::forward(Tape& tape, const StgSequence& seq, const std::map<std::string, Var>& bound) const {
  cfg_.check_compatible(seq);

  const HourglassConfig& hg = cfg_.hourglass;
  const bool per_cluster = cfg_.harmonization == Harmonization::per_cluster;
  const AdjacencyPair adj = build_adjacency(seq, cfg_.span, per_cluster);
  const LevelAdjacency levels = build_levels(adj, std::max<std::size_t>(hg.levels, 1), hg.stride);

  Var h;
  std::size_t first_blocks = 1;
  if (per_cluster) {
    PackedFeatures packed = pack_by_cluster(seq);
    if (cfg_.subtract_mean) packed.values = subtract_mean(packed.values, packed.membership, seq.nodes_per_step());
    h = tape.constant(std::move(packed.values));
    first_blocks = cfg_.cluster_lengths.size();
  } else {
    std::vector<NodeType> types;
    PackedFeatures packed = pack_by_type(seq, &types);
    if (cfg_.subtract_mean) packed.values = subtract_mean(packed.values, packed.membership, seq.nodes_per_step());
    TypeKernels kernels;
    for (const auto& [type, len] : cfg_.type_lengths)
      kernels[static_cast<std::size_t>(type)] = bound.at("proj/" + std::string(to_string(type)));
    h = harmonize_projection(tape, packed, types, kernels);
  }

  std::vector<HourglassWeights> blocks(hg.stack_depth);
  const std::size_t layers = std::max<std::size_t>(hg.levels, 1);
  for (std::size_t b = 0; b < hg.stack_depth; ++b) {
    const std::string p = block_prefix(b);
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t count = b == 0 && l == 0 ? first_blocks : 1;
      blocks[b].encoder.push_back(bind_layer(bound, p + "enc" + std::to_string(l) + "/", count, cfg_.bias));
    }
    for (std::size_t l = 0; l < hg.levels; ++l) {
      blocks[b].down.push_back(bound.at(p + "down" + std::to_string(l)));
      blocks[b].up.push_back(bound.at(p + "up" + std::to_string(l)));
      if (hg.decoder_stgcn)
        blocks[b].decoder.push_back(bind_layer(bound, p + "dec" + std::to_string(l) + "/", 1, cfg_.bias));
    }
  }
  const Var features = stack_forward(h, levels, blocks, hg);
  return head_forward(features, flat_presence(seq), seq.nodes_per_step(), bound.at("head/weight"),
                      bound.at("head/bias"));
}

Tensor Model::predict(const StgSequence& seq) const {
  Tape tape;
  return forward(tape, seq, false).logits.value();
}

}  // namespace stgcn
