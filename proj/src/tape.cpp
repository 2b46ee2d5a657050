#include "stgcn/tape.hpp"

#include "stgcn/errors.hpp"

namespace stgcn {

Tape& Var::tape() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(*this); }

bool Var::requires_grad() const { return tape().requires_grad(*this); }

const Tensor& Gradients::operator[](Var param) const {
  auto it = grads_.find(param.id());
  if (it == grads_.end()) throw ContractError("no gradient recorded for a non-parameter value");
  return it->second;
}

void Tape::check_owned(Var v) const {
  if (v.tape_ != this || v.generation_ != generation_ || v.id_ >= nodes_.size()) {
    throw ContractError("Var does not belong to this tape (or the tape was reset)");
  }
}

Var Tape::constant(Tensor value) {
  require_finite(value, "Tape::constant");
  nodes_.push_back(Node{std::move(value), {}, {}, false, false});
  return Var(this, nodes_.size() - 1, generation_);
}

Var Tape::parameter(Tensor value) {
  require_finite(value, "Tape::parameter");
  nodes_.push_back(Node{std::move(value), {}, {}, true, true});
  return Var(this, nodes_.size() - 1, generation_);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (backward_done_) throw ContractError("recording on a tape after backward(); call reset() first");
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    check_owned(in);
    node.inputs.push_back(in.id_);
    node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1, generation_);
}

const Tensor& Tape::value(Var v) const {
  check_owned(v);
  return nodes_[v.id_].value;
}

bool Tape::requires_grad(Var v) const {
  check_owned(v);
  return nodes_[v.id_].requires_grad;
}

Gradients Tape::backward(Var loss) {
  check_owned(loss);
  if (backward_done_) throw ContractError("backward() already ran on this tape; call reset() first");
  if (nodes_[loss.id_].value.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + shape_string(nodes_[loss.id_].value.shape()));
  }
  backward_done_ = true;

  std::vector<std::optional<Tensor>> acc(nodes_.size());
  acc[loss.id_] = Tensor(nodes_[loss.id_].value.shape(), 1.0f);

  for (std::size_t idx = loss.id_ + 1; idx-- > 0;) {
    Node& node = nodes_[idx];
    if (!acc[idx] || !node.backward) continue;

    BackwardArgs args{*acc[idx], node.value, {}, {}};
    args.inputs.reserve(node.inputs.size());
    for (auto in : node.inputs) {
      args.inputs.push_back(&nodes_[in].value);
      args.needs_grad.push_back(nodes_[in].requires_grad);
    }
    auto grads = node.backward(args);
    if (grads.size() != node.inputs.size()) throw ContractError("backward rule returned wrong arity");

    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const auto in = node.inputs[k];
      if (!nodes_[in].requires_grad || !grads[k]) continue;
      Tensor& g = *grads[k];
      if (g.shape() != nodes_[in].value.shape()) {
        throw ContractError("backward rule produced gradient " + shape_string(g.shape()) + " for input " +
                            shape_string(nodes_[in].value.shape()));
      }
      if (!acc[in]) {
        acc[in] = std::move(g);
      } else {
        auto dst = acc[in]->data();
        auto src = g.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
    if (!node.is_parameter) acc[idx].reset();
  }

  Gradients out;
  for (std::size_t idx = 0; idx < nodes_.size(); ++idx) {
    if (!nodes_[idx].is_parameter) continue;
    Tensor g = acc[idx] ? std::move(*acc[idx]) : Tensor(nodes_[idx].value.shape(), 0.0f);
    require_finite(g, "Tape::backward");
    out.grads_.emplace(idx, std::move(g));
  }
  return out;
}

void Tape::reset() {
  nodes_.clear();
  ++generation_;
  backward_done_ = false;
}

}  // namespace stgcn
