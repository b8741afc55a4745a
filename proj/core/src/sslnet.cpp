#include "cladnet/sslnet.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace cladnet {

void BodyPartition::validate(std::size_t channels) const {
  if (groups.empty()) throw ShapeError("body partition has no groups");
  if (query >= groups.size()) {
    throw ShapeError("query part index " + std::to_string(query) + " out of range, have " +
                     std::to_string(groups.size()) + " parts");
  }
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (const auto& group : groups) {
    if (group.empty()) throw ShapeError("body partition has an empty group");
    for (std::size_t ch : group) {
      if (ch >= channels) {
        throw ShapeError("partition channel index " + std::to_string(ch) +
                         " out of range for " + std::to_string(channels) + " channels");
      }
      if (!seen.insert(ch).second) {
        throw ShapeError("channel " + std::to_string(ch) + " appears in two parts");
      }
      ++total;
    }
  }
  if (total != channels) {
    throw ShapeError("partition covers " + std::to_string(total) + " of " +
                     std::to_string(channels) + " channels");
  }
}

std::vector<Tensor> partition_window(const Tensor& x, const BodyPartition& p) {
  check_matrix(x, "partition_window");
  p.validate(x.cols());
  const std::size_t len = x.rows();
  std::vector<Tensor> parts;
  parts.reserve(p.groups.size());
  for (const auto& group : p.groups) {
    Tensor part({len, group.size()});
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t j = 0; j < group.size(); ++j) part(t, j) = x(t, group[j]);
    parts.push_back(std::move(part));
  }
  return parts;
}

std::string to_string(AttentionKind kind) {
  return kind == AttentionKind::kCross ? "cross" : "self";
}

AttentionKind attention_kind_from_string(const std::string& s) {
  if (s == "cross") return AttentionKind::kCross;
  if (s == "self") return AttentionKind::kSelf;
  throw std::invalid_argument("unknown attention kind '" + s + "'");
}

namespace {

std::string part_key(const std::string& prefix, const char* group, std::size_t i) {
  return prefix + "/" + group + std::to_string(i);
}

}  // namespace

void init_transformer_params(ParameterStore& params, const BodyPartition& partition,
                             const std::vector<std::size_t>& part_widths,
                             const TransformerConfig& cfg, std::mt19937_64& rng,
                             const std::string& prefix) {
  if (part_widths.size() != partition.part_count()) {
    throw ShapeError("part width list does not match partition size");
  }
  const std::size_t dm = cfg.d_model;
  for (std::size_t i = 0; i < partition.part_count(); ++i) {
    params.create(part_key(prefix, "embed", i) + "/weight",
                  glorot_uniform({part_widths[i], dm}, part_widths[i], dm, rng));
    params.create(part_key(prefix, "embed", i) + "/bias", Tensor({1, dm}));
  }
  for (std::size_t i = 0; i < partition.part_count(); ++i) {
    const std::string branch = part_key(prefix, "branch", i);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::string head = branch + "/head" + std::to_string(h);
      params.create(head + "/wq", glorot_uniform({dm, dm}, dm, dm, rng));
      params.create(head + "/wk", glorot_uniform({dm, dm}, dm, dm, rng));
      params.create(head + "/wv", glorot_uniform({dm, dm}, dm, dm, rng));
    }
    params.create(branch + "/w_out", glorot_uniform({cfg.heads * dm, dm}, cfg.heads * dm, dm, rng));
  }
  const std::size_t ff = cfg.ff_width();
  for (std::size_t k = 0; k < 3; ++k) {
    const std::string block = part_key(prefix, "ff", k);
    params.create(block + "/w1", glorot_uniform({dm, ff}, dm, ff, rng));
    params.create(block + "/b1", Tensor({1, ff}));
    params.create(block + "/w2", glorot_uniform({ff, dm}, ff, dm, rng));
    params.create(block + "/b2", Tensor({1, dm}));
    params.create(block + "/ln_gain", Tensor::filled({1, dm}, 1.0));
    params.create(block + "/ln_bias", Tensor({1, dm}));
  }
}

Var embed_part(Tape& tape, const ParameterStore& params, const Tensor& x_part, std::size_t part,
               const TransformerConfig& cfg, const std::string& prefix) {
  Var w = tape.param(params, part_key(prefix, "embed", part) + "/weight");
  Var b = tape.param(params, part_key(prefix, "embed", part) + "/bias");
  if (x_part.cols() != w.value().rows()) {
    throw ShapeError("embed_part: part " + std::to_string(part) + " has " +
                     std::to_string(x_part.cols()) + " channels, embedding expects " +
                     std::to_string(w.value().rows()));
  }
  Var projected = add_rowvec(matmul(tape.constant(x_part), w), b);
  Var pe = tape.constant(positional_encoding(x_part.rows(), cfg.d_model));
  return add(projected, pe);
}

Var cross_attention_branch(Tape& tape, const ParameterStore& params, Var z_q, Var z_kv,
                           std::size_t branch, const TransformerConfig& cfg,
                           const std::string& prefix, AttentionTrace* trace) {
  const std::string branch_key = part_key(prefix, "branch", branch);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  std::vector<Var> heads;
  heads.reserve(cfg.heads);
  Var concat;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const std::string head_key = branch_key + "/head" + std::to_string(h);
    Var q = matmul(z_q, tape.param(params, head_key + "/wq"));
    Var k = matmul(z_kv, tape.param(params, head_key + "/wk"));
    Var v = matmul(z_kv, tape.param(params, head_key + "/wv"));
    Var scores = mul_scalar(matmul(q, transpose(k)), scale);
    Var weights = softmax_rows(scores);
    if (trace) trace->weights.push_back(weights.value());
    Var head = matmul(weights, v);
    concat = (h == 0) ? head : concat_cols(concat, head);
  }
  return matmul(concat, tape.param(params, branch_key + "/w_out"));
}

Var aggregate_branches(const std::vector<Var>& branches) {
  if (branches.empty()) throw ShapeError("aggregate_branches: need at least one branch");
  Var acc = branches.front();
  for (std::size_t i = 1; i < branches.size(); ++i) acc = add(acc, branches[i]);
  if (branches.size() == 1) return acc;
  return mul_scalar(acc, 1.0 / static_cast<double>(branches.size()));
}

Var transformer_forward(Tape& tape, const ParameterStore& params, const Tensor& window,
                        const BodyPartition& partition, const TransformerConfig& cfg,
                        bool train_mode, std::mt19937_64* dropout_rng, const std::string& prefix,
                        AttentionTrace* trace) {
  if (train_mode && cfg.dropout > 0.0 && dropout_rng == nullptr) {
    throw NumericError("transformer_forward: train mode with dropout needs an rng");
  }
  const std::vector<Tensor> parts = partition_window(window, partition);

  std::vector<Var> embedded;
  embedded.reserve(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    embedded.push_back(embed_part(tape, params, parts[i], i, cfg, prefix));
  }

  Var z_query = embedded[partition.query];
  std::vector<Var> branches;
  branches.reserve(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    Var q = cfg.attention == AttentionKind::kCross ? z_query : embedded[i];
    branches.push_back(cross_attention_branch(tape, params, q, embedded[i], i, cfg, prefix, trace));
  }
  Var a = aggregate_branches(branches);

  for (std::size_t k = 0; k < 3; ++k) {
    const std::string block = part_key(prefix, "ff", k);
    Var hidden = relu(add_rowvec(matmul(a, tape.param(params, block + "/w1")),
                                 tape.param(params, block + "/b1")));
    Var ff = add_rowvec(matmul(hidden, tape.param(params, block + "/w2")),
                        tape.param(params, block + "/b2"));
    if (train_mode && cfg.dropout > 0.0) {
      ff = dropout(ff, cfg.dropout, true, *dropout_rng);
    }
    a = layer_norm_rows(add(a, ff), tape.param(params, block + "/ln_gain"),
                        tape.param(params, block + "/ln_bias"), cfg.layer_norm_eps);
  }
  return mean_rows(a);
}

Tensor transformer_represent(const ParameterStore& params, const Tensor& window,
                             const BodyPartition& partition, const TransformerConfig& cfg,
                             const std::string& prefix) {
  Tape tape;
  return transformer_forward(tape, params, window, partition, cfg, false, nullptr, prefix).value();
}

}  // namespace cladnet
