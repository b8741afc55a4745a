#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cladnet/tensor.hpp"

namespace cladnet {

class Tape;
class ParameterStore;

// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  bool requires_grad() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Gradients produced by one backward pass. Parameter gradients are keyed by
// the name the parameter was leased under; map order is deterministic.
struct Gradients {
  std::vector<Tensor> by_node;  // indexed by node id; empty tensor = no gradient
  std::map<std::string, Tensor> by_param;

  const Tensor* find_param(const std::string& name) const;
  const Tensor& param(const std::string& name) const;
  const Tensor& at(const Var& v) const;
  bool has(const Var& v) const;
};

using BackwardFn =
    std::function<void(const Tape& tape, const Tensor& upstream, std::vector<Tensor>& grads)>;

// Define-by-run reverse-mode tape. Rebuilt for every forward pass; single
// owner, never shared across threads. Node ids are stable (append-only).
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that never receives a gradient (inputs, masks, teacher outputs).
  Var constant(Tensor value);
  Var leaf(Tensor value, bool requires_grad);
  // Leases a named parameter onto the tape (the value is copied, the store
  // is never written). Repeated leases of the same name return the same
  // node, so gradients accumulate in one slot.
  Var param(const ParameterStore& store, const std::string& name);

  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn backward);

  // Reverse replay from a scalar loss. May be called again; the replay is
  // pure and re-derives identical gradients.
  Gradients backward(const Var& loss) const;

  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad_of(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    BackwardFn backward;     // null for leaves
    std::string param_name;  // non-empty only for parameter leaves
  };

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> leased_;
};

// Adds delta into slot, materializing zeros on first touch.
void accumulate_grad(Tensor& slot, const Tensor& delta, const Shape& shape);

}  // namespace cladnet
