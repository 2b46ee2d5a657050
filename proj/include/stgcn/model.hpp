#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stgcn/config.hpp"
#include "stgcn/tape.hpp"

namespace stgcn {

/// Parameter tensors keyed by a stable path such as "block0/enc1/temporal".
using ParameterSet = std::map<std::string, Tensor>;

struct ParameterSpec {
  std::string name;
  Shape shape;
  /// Fan-in of the init bound; 0 for zero-initialized biases.
  std::size_t fan_in = 0;
};

/// Every parameter the configuration needs, in a fixed order.
std::vector<ParameterSpec> parameter_specs(const ModelConfig& cfg);

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; biases zero.
ParameterSet init_parameters(const ModelConfig& cfg, std::uint64_t seed);

/// Stacked hourglass STGCN with a pooled classification head.
class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);
  /// Throws ValidationError when `params` misses a tensor or has a wrong shape.
  Model(ModelConfig cfg, ParameterSet params);

  const ModelConfig& config() const { return cfg_; }
  const ParameterSet& parameters() const { return params_; }
  ParameterSet& parameters() { return params_; }

  struct Forward {
    /// [T x C] unnormalized scores.
    Var logits;
    /// Tape handle of each parameter, keyed like ParameterSet.
    std::map<std::string, Var> bound;
  };

  /// Builds the forward graph of `seq`. Parameters are recorded as
  /// trainable leaves when `trainable`, as constants otherwise.
  Forward forward(Tape& tape, const StgSequence& seq, bool trainable) const;

  /// Same graph on caller-bound parameter handles, keyed like ParameterSet.
  Var forward(Tape& tape, const StgSequence& seq, const std::map<std::string, Var>& bound) const;

  /// Scores without gradient bookkeeping.
  Tensor predict(const StgSequence& seq) const;

 private:
  ModelConfig cfg_;
  ParameterSet params_;
};

}  // namespace stgcn
