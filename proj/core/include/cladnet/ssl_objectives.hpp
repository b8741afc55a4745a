#pragma once

#include <optional>

#include "cladnet/adam.hpp"
#include "cladnet/augment.hpp"
#include "cladnet/dataio.hpp"
#include "cladnet/sslnet.hpp"

namespace cladnet {

enum class SslLossKind { kBarlowTwins, kNtXent, kByol };

std::string to_string(SslLossKind kind);
SslLossKind ssl_loss_from_string(const std::string& s);

// Feature cross-correlation of two view batches [B x d]: entry (i, j) is the
// batch inner product of feature i of the first view with feature j of the
// second, normalized by the feature norms (eps-guarded).
Var cross_correlation(Var r1, Var r2);

// sum_i (1 - C_ii)^2 + lambda * sum_{i != j} C_ij^2
Var barlow_twins_loss(Var r1, Var r2, double lambda_bt);

// Normalized-temperature cross entropy over the 2B cosine-similarity rows;
// positives are the matched views, self-similarity masked out.
Var ntxent_loss(Var r1, Var r2, double temperature);

// target <- momentum * target + (1 - momentum) * online, matched by name.
void ema_update(ParameterStore& target, const ParameterStore& online, double momentum,
                const std::vector<std::string>& names);

struct SslConfig {
  SslLossKind loss = SslLossKind::kBarlowTwins;
  double lambda_bt = 1.0;
  double temperature = 0.5;
  double byol_momentum = 0.99;
  AugmentSpec augment;
  double lr = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
};

// Owns the optimizer state, augmentation rng and (for the momentum-target
// loss) the target network copy and predictor head. One instance per stream
// run; the transformer parameters live in the caller's store.
class SslTrainer {
 public:
  SslTrainer(SslConfig cfg, BodyPartition partition, TransformerConfig transformer,
             std::uint64_t seed);

  // Augments every window twice, runs both views through the transformer in
  // train mode, applies the configured loss and one optimizer update.
  // Returns the pre-update loss. Uses no labels. Batch size must be >= 2.
  double train_step(const std::vector<const SensorWindow*>& batch, ParameterStore& params);

  const SslConfig& config() const { return cfg_; }
  const ParameterStore* byol_target() const { return target_ ? &*target_ : nullptr; }

 private:
  Var batch_representations(Tape& tape, ParameterStore& params,
                            const std::vector<Tensor>& views, bool train_mode);

  SslConfig cfg_;
  BodyPartition partition_;
  TransformerConfig transformer_;
  AdamOptimizer opt_;
  std::mt19937_64 aug_rng_;
  std::mt19937_64 dropout_rng_;
  std::optional<ParameterStore> target_;  // momentum target, lazily initialized
  bool predictor_ready_ = false;
};

}  // namespace cladnet
