#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <unordered_map>
#include <vector>

#include "stgcn/tensor.hpp"

namespace stgcn {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// is alive and has not been reset.
class Var {
 public:
  Var() = default;

  Tape& tape() const;
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id, std::uint64_t generation)
      : tape_(tape), id_(id), generation_(generation) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
  std::uint64_t generation_ = 0;
};

/// What a backward rule sees when the tape replays it.
struct BackwardArgs {
  const Tensor& grad_output;
  const Tensor& output;
  std::vector<const Tensor*> inputs;
  std::vector<bool> needs_grad;
};

/// Returns one entry per input; entries for inputs with needs_grad == false
/// may be left empty.
using BackwardFn = std::function<std::vector<std::optional<Tensor>>(const BackwardArgs&)>;

/// Gradients of a scalar loss with respect to every parameter on the tape.
class Gradients {
 public:
  const Tensor& operator[](Var param) const;
  bool contains(Var param) const { return grads_.count(param.id()) != 0; }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> grads_;
};

/// Single-threaded reverse-mode differentiation record.
///
/// Values are appended in evaluation order. backward() replays the rules in
/// reverse and may be called once per recording; reset() starts a new one.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  /// Records an op output. The backward rule is kept only when some input
  /// requires gradients.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  Gradients backward(Var loss);
  void reset();

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_parameter = false;
  };

  void check_owned(Var v) const;

  std::vector<Node> nodes_;
  std::uint64_t generation_ = 0;
  bool backward_done_ = false;
};

}  // namespace stgcn
