#include "cladnet/tape.hpp"

#include "cladnet/params.hpp"

namespace cladnet {

const Tensor& Var::value() const { return tape_->value_of(id_); }

bool Var::requires_grad() const { return tape_->requires_grad_of(id_); }

const Tensor* Gradients::find_param(const std::string& name) const {
  auto it = by_param.find(name);
  return it == by_param.end() ? nullptr : &it->second;
}

const Tensor& Gradients::param(const std::string& name) const {
  const Tensor* g = find_param(name);
  if (!g) throw NumericError("no gradient recorded for parameter '" + name + "'");
  return *g;
}

const Tensor& Gradients::at(const Var& v) const {
  if (!has(v)) throw NumericError("no gradient recorded for node " + std::to_string(v.id()));
  return by_node[v.id()];
}

bool Gradients::has(const Var& v) const {
  return v.id() < by_node.size() && !by_node[v.id()].empty();
}

Var Tape::constant(Tensor value) { return leaf(std::move(value), false); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const ParameterStore& store, const std::string& name) {
  auto it = leased_.find(name);
  if (it != leased_.end()) return Var(this, it->second);
  Node n;
  n.value = store.at(name);
  n.requires_grad = true;
  n.param_name = name;
  nodes_.push_back(std::move(n));
  const std::size_t id = nodes_.size() - 1;
  leased_.emplace(name, id);
  return Var(this, id);
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, BackwardFn backward) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw NumericError("record: parent node from a different tape");
    needs = needs || p.requires_grad();
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& loss) const {
  if (loss.tape() != this) throw NumericError("backward: loss recorded on a different tape");
  if (loss.value().numel() != 1) {
    throw NumericError("backward: loss must be scalar, got shape " + shape_str(loss.value().shape()));
  }
  Gradients grads;
  grads.by_node.resize(nodes_.size());
  grads.by_node[loss.id()] = Tensor(loss.value().shape(), {1.0});

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!node.requires_grad || grads.by_node[i].empty()) continue;
    if (node.backward) node.backward(*this, grads.by_node[i], grads.by_node);
  }

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].param_name.empty() && !grads.by_node[i].empty()) {
      grads.by_param.emplace(nodes_[i].param_name, grads.by_node[i]);
    }
  }
  return grads;
}

void accumulate_grad(Tensor& slot, const Tensor& delta, const Shape& shape) {
  if (slot.empty()) {
    slot = Tensor(shape);
  }
  check_same_shape(slot, delta, "accumulate_grad");
  double* out = slot.values().data();
  const double* in = delta.data().data();
  for (std::size_t i = 0; i < delta.numel(); ++i) out[i] += in[i];
}

}  // namespace cladnet
