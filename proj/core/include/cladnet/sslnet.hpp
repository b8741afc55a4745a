#pragma once

#include <optional>
#include <random>
#include <string>

#include "cladnet/ops.hpp"
#include "cladnet/params.hpp"

namespace cladnet {

// Disjoint grouping of sensor channels by mounting location. `query` indexes
// the group whose embedding drives every attention branch.
struct BodyPartition {
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::string> names;  // optional, same length as groups when set
  std::size_t query = 0;

  std::size_t part_count() const { return groups.size(); }
  void validate(std::size_t channels) const;
};

// Splits [len x d] into one [len x d_i] matrix per part, channel order kept.
std::vector<Tensor> partition_window(const Tensor& x, const BodyPartition& p);

enum class AttentionKind { kCross, kSelf };

std::string to_string(AttentionKind kind);
AttentionKind attention_kind_from_string(const std::string& s);

struct TransformerConfig {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ff_hidden = 0;  // 0 = 2 * d_model
  double dropout = 0.1;
  AttentionKind attention = AttentionKind::kCross;
  double layer_norm_eps = 1e-5;

  std::size_t ff_width() const { return ff_hidden ? ff_hidden : 2 * d_model; }
};

// Row-stochastic attention maps recorded during a forward pass, one entry
// per (branch, head) in branch-major order.
struct AttentionTrace {
  std::vector<Tensor> weights;
};

void init_transformer_params(ParameterStore& params, const BodyPartition& partition,
                             const std::vector<std::size_t>& part_widths,
                             const TransformerConfig& cfg, std::mt19937_64& rng,
                             const std::string& prefix = "transformer");

// Linear projection of one body-part segment plus sinusoidal positions.
Var embed_part(Tape& tape, const ParameterStore& params, const Tensor& x_part, std::size_t part,
               const TransformerConfig& cfg, const std::string& prefix = "transformer");

// Multi-head scaled dot-product attention of z_q against z_kv, heads
// concatenated then projected back to d_model.
Var cross_attention_branch(Tape& tape, const ParameterStore& params, Var z_q, Var z_kv,
                           std::size_t branch, const TransformerConfig& cfg,
                           const std::string& prefix = "transformer",
                           AttentionTrace* trace = nullptr);

// Elementwise mean over branches; identity for a single branch.
Var aggregate_branches(const std::vector<Var>& branches);

// Full forward: partition -> embed+positions -> attention branches ->
// aggregate -> three feedforward blocks with residual Add&Norm -> temporal
// mean pooling. Returns the pooled representation [1 x d_model].
Var transformer_forward(Tape& tape, const ParameterStore& params, const Tensor& window,
                        const BodyPartition& partition, const TransformerConfig& cfg,
                        bool train_mode = false, std::mt19937_64* dropout_rng = nullptr,
                        const std::string& prefix = "transformer",
                        AttentionTrace* trace = nullptr);

// Eval-mode convenience; deterministic.
Tensor transformer_represent(const ParameterStore& params, const Tensor& window,
                             const BodyPartition& partition, const TransformerConfig& cfg,
                             const std::string& prefix = "transformer");

}  // namespace cladnet
