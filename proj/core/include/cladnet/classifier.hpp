#pragma once

#include <functional>
#include <optional>

#include "cladnet/adam.hpp"
#include "cladnet/dataio.hpp"
#include "cladnet/ops.hpp"
#include "cladnet/params.hpp"

namespace cladnet {

struct CnnConfig {
  std::size_t kernel = 5;
  std::vector<std::size_t> widths = {32, 64, 128};
  std::size_t convs_per_block = 4;
  std::size_t pool_window = 2;
  std::size_t pool_stride = 2;
  double layer_norm_eps = 1e-5;
};

void init_cnn_params(ParameterStore& params, std::size_t in_channels, const CnnConfig& cfg,
                     std::mt19937_64& rng, const std::string& prefix = "cnn");

// Stacked conv blocks with pooled projection shortcuts and per-timestep
// layer norm over channels; temporal average to a [1 x widths.back()] row.
Var cnn_forward(Tape& tape, const ParameterStore& params, const Tensor& window, const CnnConfig& cfg,
                const std::string& prefix = "cnn");

void init_head_params(ParameterStore& params, std::size_t in_width, std::size_t classes,
                      std::mt19937_64& rng, const std::string& prefix = "head");

// logits = affine(concat(features, repr)); repr enters as a constant so no
// gradient reaches its producer.
Var fuse_and_classify(Tape& tape, const ParameterStore& params, Var features,
                      const std::optional<Var>& repr, const std::string& prefix = "head");

enum class DistillMode { kL2Logits, kKlSoftmax };

std::string to_string(DistillMode mode);
DistillMode distill_mode_from_string(const std::string& s);

// Teacher outputs are constants. l2_logits: mean over the batch of squared
// logit distance. kl_softmax: mean KL(softmax(teacher) || softmax(student)).
Var distillation_loss(Var student_logits, const Tensor& teacher_logits, DistillMode mode);

// Mean softmax cross entropy from logits, no label smoothing.
Var cross_entropy_loss(Var logits, const std::vector<int>& labels);

// Frozen copy of the classification path taken after finishing a subject.
struct ModelSnapshot {
  ParameterStore params;
  int trained_through = -1;

  std::uint64_t checksum() const { return params.checksum(); }
};

ModelSnapshot snapshot_classifier(const ParameterStore& params, int trained_through,
                                  const std::vector<std::string>& prefixes = {"cnn/", "head/"});

// Forward-only logits for one window under the given store (used for the
// teacher and for evaluation).
Tensor classifier_logits(const ParameterStore& params, const Tensor& window, const CnnConfig& cfg,
                         const Tensor* repr);

struct SupervisedStepResult {
  double total = 0.0;
  double ce = 0.0;
  double distill = 0.0;
  bool skipped = false;   // no labeled window in the batch
  std::size_t labeled = 0;
};

// One training update of the CNN + head. `reprs`, when given, must align
// with `batch`; the teacher consumes the same windows and representations.
// Only parameters leased on the supervised tape (cnn/head and any penalty
// parameters) are updated.
SupervisedStepResult supervised_train_step(
    const std::vector<const SensorWindow*>& batch, ParameterStore& params, const CnnConfig& cfg,
    const std::vector<const Tensor*>* reprs, const ModelSnapshot* teacher, double lambda_distill,
    DistillMode mode, AdamOptimizer& opt,
    const std::function<Var(Tape&, ParameterStore&)>& extra_penalty = {});

}  // namespace cladnet
