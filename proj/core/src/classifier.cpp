#include "cladnet/classifier.hpp"

#include <cmath>

namespace cladnet {

namespace {

std::string block_key(const std::string& prefix, std::size_t i) {
  return prefix + "/block" + std::to_string(i);
}

Tensor transpose_value(const Tensor& m) {
  Tensor out({m.cols(), m.rows()});
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

}  // namespace

void init_cnn_params(ParameterStore& params, std::size_t in_channels, const CnnConfig& cfg,
                     std::mt19937_64& rng, const std::string& prefix) {
  if (cfg.widths.empty()) throw ShapeError("cnn config needs at least one block width");
  if (cfg.kernel % 2 == 0) {
    throw ShapeError("cnn kernel size must be odd to keep conv outputs length-preserving, got " +
                     std::to_string(cfg.kernel));
  }
  std::size_t c_in = in_channels;
  for (std::size_t b = 0; b < cfg.widths.size(); ++b) {
    const std::size_t c_out = cfg.widths[b];
    const std::string block = block_key(prefix, b);
    std::size_t conv_in = c_in;
    for (std::size_t j = 0; j < cfg.convs_per_block; ++j) {
      const std::string conv = block + "/conv" + std::to_string(j);
      params.create(conv + "/kernel", glorot_uniform({c_out, conv_in, cfg.kernel},
                                                     conv_in * cfg.kernel, c_out, rng));
      params.create(conv + "/bias", Tensor({c_out, 1}));
      conv_in = c_out;
    }
    params.create(block + "/proj/kernel", glorot_uniform({c_out, c_in, 1}, c_in, c_out, rng));
    params.create(block + "/ln_gain", Tensor::filled({1, c_out}, 1.0));
    params.create(block + "/ln_bias", Tensor({1, c_out}));
    c_in = c_out;
  }
}

Var cnn_forward(Tape& tape, const ParameterStore& params, const Tensor& window, const CnnConfig& cfg,
                const std::string& prefix) {
  check_matrix(window, "cnn_forward input");
  const std::size_t pad = (cfg.kernel - 1) / 2;
  Var h = tape.constant(transpose_value(window));  // [channels x len]

  for (std::size_t b = 0; b < cfg.widths.size(); ++b) {
    const std::string block = block_key(prefix, b);
    Var t = h;
    for (std::size_t j = 0; j < cfg.convs_per_block; ++j) {
      const std::string conv = block + "/conv" + std::to_string(j);
      t = add_colvec(conv1d(t, tape.param(params, conv + "/kernel"), 1, pad),
                     tape.param(params, conv + "/bias"));
    }
    t = relu(avg_pool1d(t, cfg.pool_window, cfg.pool_stride));
    Var shortcut = avg_pool1d(conv1d(h, tape.param(params, block + "/proj/kernel"), 1, 0),
                              cfg.pool_window, cfg.pool_stride);
    Var merged = transpose(add(shortcut, t));  // [len' x c_out]
    Var normed = layer_norm_rows(merged, tape.param(params, block + "/ln_gain"),
                                 tape.param(params, block + "/ln_bias"), cfg.layer_norm_eps);
    h = transpose(normed);
  }
  return transpose(mean_cols(h));  // temporal average -> [1 x c_last]
}

void init_head_params(ParameterStore& params, std::size_t in_width, std::size_t classes,
                      std::mt19937_64& rng, const std::string& prefix) {
  params.create(prefix + "/weight", glorot_uniform({in_width, classes}, in_width, classes, rng));
  params.create(prefix + "/bias", Tensor({1, classes}));
}

Var fuse_and_classify(Tape& tape, const ParameterStore& params, Var features,
                      const std::optional<Var>& repr, const std::string& prefix) {
  Var input = repr ? concat_cols(features, *repr) : features;
  Var w = tape.param(params, prefix + "/weight");
  if (input.value().cols() != w.value().rows()) {
    throw ShapeError("fuse_and_classify: fused width " + std::to_string(input.value().cols()) +
                     " does not match head input width " + std::to_string(w.value().rows()));
  }
  return add_rowvec(matmul(input, w), tape.param(params, prefix + "/bias"));
}

std::string to_string(DistillMode mode) {
  return mode == DistillMode::kL2Logits ? "l2_logits" : "kl_softmax";
}

DistillMode distill_mode_from_string(const std::string& s) {
  if (s == "l2_logits") return DistillMode::kL2Logits;
  if (s == "kl_softmax") return DistillMode::kKlSoftmax;
  throw std::invalid_argument("unknown distillation mode '" + s + "'");
}

Var distillation_loss(Var student_logits, const Tensor& teacher_logits, DistillMode mode) {
  check_same_shape(student_logits.value(), teacher_logits, "distillation_loss");
  Tape& tape = *student_logits.tape();
  const double inv_b = 1.0 / static_cast<double>(student_logits.value().rows());
  if (mode == DistillMode::kL2Logits) {
    Var diff = sub(student_logits, tape.constant(teacher_logits));
    return mul_scalar(sum(square(diff)), inv_b);
  }
  // KL(p_teacher || p_student) = sum p log p - sum p log q, teacher term constant
  const Tensor p = softmax_rows_value(teacher_logits);
  double entropy_term = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j)
      if (p(i, j) > 0.0) entropy_term += p(i, j) * std::log(p(i, j));
  Var cross = sum(mul(log_softmax_rows(student_logits), tape.constant(p)));
  return mul_scalar(add_scalar(mul_scalar(cross, -1.0), entropy_term), inv_b);
}

Var cross_entropy_loss(Var logits, const std::vector<int>& labels) {
  check_matrix(logits.value(), "cross_entropy_loss");
  const std::size_t b = logits.value().rows(), c = logits.value().cols();
  if (labels.size() != b) {
    throw ShapeError("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(b) + " logit rows");
  }
  Tensor onehot({b, c});
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw DataError("label " + std::to_string(labels[i]) + " out of range for " +
                      std::to_string(c) + " classes");
    }
    onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  Tape& tape = *logits.tape();
  Var picked = sum(mul(log_softmax_rows(logits), tape.constant(std::move(onehot))));
  return mul_scalar(picked, -1.0 / static_cast<double>(b));
}

ModelSnapshot snapshot_classifier(const ParameterStore& params, int trained_through,
                                  const std::vector<std::string>& prefixes) {
  ModelSnapshot snap;
  snap.params = params.clone(prefixes);
  snap.trained_through = trained_through;
  return snap;
}

Tensor classifier_logits(const ParameterStore& params, const Tensor& window, const CnnConfig& cfg,
                         const Tensor* repr) {
  Tape tape;
  Var features = cnn_forward(tape, params, window, cfg);
  std::optional<Var> r;
  if (repr) r = tape.constant(*repr);
  return fuse_and_classify(tape, params, features, r).value();
}

SupervisedStepResult supervised_train_step(
    const std::vector<const SensorWindow*>& batch, ParameterStore& params, const CnnConfig& cfg,
    const std::vector<const Tensor*>* reprs, const ModelSnapshot* teacher, double lambda_distill,
    DistillMode mode, AdamOptimizer& opt,
    const std::function<Var(Tape&, ParameterStore&)>& extra_penalty) {
  if (lambda_distill < 0.0) throw NumericError("lambda_distill must be >= 0");
  if (reprs && reprs->size() != batch.size()) {
    throw ShapeError("supervised_train_step: representation list does not match batch size");
  }

  SupervisedStepResult result;
  std::vector<std::size_t> labeled_idx;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i]->label) labeled_idx.push_back(i);
  }
  result.labeled = labeled_idx.size();
  if (labeled_idx.empty()) {
    result.skipped = true;
    return result;
  }

  Tape tape;
  std::vector<Var> logit_rows;
  std::vector<int> labels;
  logit_rows.reserve(labeled_idx.size());
  for (std::size_t i : labeled_idx) {
    Var features = cnn_forward(tape, params, batch[i]->data, cfg);
    std::optional<Var> r;
    if (reprs) r = tape.constant(*(*reprs)[i]);
    logit_rows.push_back(fuse_and_classify(tape, params, features, r));
    labels.push_back(*batch[i]->label);
  }
  Var logits = stack_rows(logit_rows);
  Var loss = cross_entropy_loss(logits, labels);
  result.ce = loss.value().scalar_value();

  if (teacher && lambda_distill > 0.0) {
    Tensor teacher_logits({labeled_idx.size(), logits.value().cols()});
    for (std::size_t row = 0; row < labeled_idx.size(); ++row) {
      const std::size_t i = labeled_idx[row];
      const Tensor t =
          classifier_logits(teacher->params, batch[i]->data, cfg, reprs ? (*reprs)[i] : nullptr);
      for (std::size_t j = 0; j < t.numel(); ++j) teacher_logits(row, j) = t.at_flat(j);
    }
    Var distill = distillation_loss(logits, teacher_logits, mode);
    result.distill = distill.value().scalar_value();
    loss = add(loss, mul_scalar(distill, lambda_distill));
  }
  if (extra_penalty) {
    loss = add(loss, extra_penalty(tape, params));
  }
  result.total = loss.value().scalar_value();

  Gradients grads = tape.backward(loss);
  opt.step(params, grads);
  return result;
}

}  // namespace cladnet
