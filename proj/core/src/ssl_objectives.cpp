#include "cladnet/ssl_objectives.hpp"

#include <cmath>

namespace cladnet {

std::string to_string(SslLossKind kind) {
  switch (kind) {
    case SslLossKind::kBarlowTwins: return "barlow_twins";
    case SslLossKind::kNtXent: return "ntxent";
    case SslLossKind::kByol: return "byol";
  }
  return "?";
}

SslLossKind ssl_loss_from_string(const std::string& s) {
  if (s == "barlow_twins") return SslLossKind::kBarlowTwins;
  if (s == "ntxent") return SslLossKind::kNtXent;
  if (s == "byol") return SslLossKind::kByol;
  throw std::invalid_argument("unknown ssl loss '" + s + "'");
}

namespace {
constexpr double kNormEps = 1e-12;
}

Var cross_correlation(Var r1, Var r2) {
  check_matrix(r1.value(), "cross_correlation");
  check_same_shape(r1.value(), r2.value(), "cross_correlation");
  if (r1.value().rows() < 2) {
    throw ShapeError("cross_correlation: batch dimension must be >= 2, got " +
                     std::to_string(r1.value().rows()));
  }
  Var raw = matmul(transpose(r1), r2);                      // [d x d]
  Var n1 = sqrt_eps(col_sums(square(r1)), kNormEps);        // [1 x d]
  Var n2 = sqrt_eps(col_sums(square(r2)), kNormEps);        // [1 x d]
  Var denom = matmul(transpose(n1), n2);                    // outer product [d x d]
  return div(raw, denom);
}

Var barlow_twins_loss(Var r1, Var r2, double lambda_bt) {
  Var c = cross_correlation(r1, r2);
  Tape& tape = *c.tape();
  const std::size_t d = c.value().rows();
  Var eye = tape.constant(Tensor::identity(d));
  Tensor off(Tensor::filled({d, d}, 1.0));
  for (std::size_t i = 0; i < d; ++i) off(i, i) = 0.0;
  Var invariance = sum(square(mul(sub(eye, c), eye)));
  Var redundancy = sum(square(mul(c, tape.constant(std::move(off)))));
  return add(invariance, mul_scalar(redundancy, lambda_bt));
}

Var ntxent_loss(Var r1, Var r2, double temperature) {
  check_matrix(r1.value(), "ntxent_loss");
  check_same_shape(r1.value(), r2.value(), "ntxent_loss");
  if (temperature <= 0.0) throw NumericError("ntxent_loss: temperature must be > 0");
  const std::size_t b = r1.value().rows();
  if (b < 2) throw ShapeError("ntxent_loss: batch dimension must be >= 2");
  const std::size_t n = 2 * b;

  Var z = concat_rows(r1, r2);  // [2B x d]
  Var norms = sqrt_eps(row_sums(square(z)), kNormEps);
  Var unit = div_colvec(z, norms);
  Var sims = mul_scalar(matmul(unit, transpose(unit)), 1.0 / temperature);

  Tape& tape = *z.tape();
  // Mask self-similarity with a large negative constant before the softmax.
  Tensor self_mask({n, n});
  for (std::size_t i = 0; i < n; ++i) self_mask(i, i) = -1e9;
  Var masked = add(sims, tape.constant(std::move(self_mask)));
  Var log_probs = log_softmax_rows(masked);

  Tensor positives({n, n});
  for (std::size_t i = 0; i < b; ++i) {
    positives(i, b + i) = 1.0;
    positives(b + i, i) = 1.0;
  }
  Var picked = sum(mul(log_probs, tape.constant(std::move(positives))));
  return mul_scalar(picked, -1.0 / static_cast<double>(n));
}

void ema_update(ParameterStore& target, const ParameterStore& online, double momentum,
                const std::vector<std::string>& names) {
  if (momentum < 0.0 || momentum >= 1.0) throw NumericError("ema momentum must be in [0, 1)");
  for (const auto& name : names) {
    Tensor& t = target.at(name);
    const Tensor& o = online.at(name);
    check_same_shape(t, o, "ema_update");
    for (std::size_t i = 0; i < t.numel(); ++i) {
      t.at_flat(i) = momentum * t.at_flat(i) + (1.0 - momentum) * o.at_flat(i);
    }
  }
}

SslTrainer::SslTrainer(SslConfig cfg, BodyPartition partition, TransformerConfig transformer,
                       std::uint64_t seed)
    : cfg_(cfg),
      partition_(std::move(partition)),
      transformer_(transformer),
      opt_(cfg.lr),
      aug_rng_(seed),
      dropout_rng_(seed ^ 0x9e3779b97f4a7c15ull) {}

Var SslTrainer::batch_representations(Tape& tape, ParameterStore& params,
                                      const std::vector<Tensor>& views, bool train_mode) {
  std::vector<Var> rows;
  rows.reserve(views.size());
  for (const Tensor& view : views) {
    rows.push_back(transformer_forward(tape, params, view, partition_, transformer_, train_mode,
                                       &dropout_rng_));
  }
  return stack_rows(rows);
}

double SslTrainer::train_step(const std::vector<const SensorWindow*>& batch,
                              ParameterStore& params) {
  if (batch.size() < 2) throw DataError("ssl_train_step: batch size must be >= 2");

  std::vector<Tensor> views1, views2;
  views1.reserve(batch.size());
  views2.reserve(batch.size());
  for (const SensorWindow* w : batch) {
    views1.push_back(apply_augment(w->data, cfg_.augment, aug_rng_));
    views2.push_back(apply_augment(w->data, cfg_.augment, aug_rng_));
  }

  if (cfg_.loss == SslLossKind::kByol) {
    if (!target_) {
      target_ = params.clone({"transformer/"});
    }
    if (!predictor_ready_) {
      std::mt19937_64 init_rng(aug_rng_());
      const std::size_t dm = transformer_.d_model;
      params.create("byol_predictor/w1", glorot_uniform({dm, dm}, dm, dm, init_rng));
      params.create("byol_predictor/b1", Tensor({1, dm}));
      params.create("byol_predictor/w2", glorot_uniform({dm, dm}, dm, dm, init_rng));
      params.create("byol_predictor/b2", Tensor({1, dm}));
      predictor_ready_ = true;
    }

    auto target_batch = [&](const std::vector<Tensor>& views) {
      Tensor out({views.size(), transformer_.d_model});
      for (std::size_t i = 0; i < views.size(); ++i) {
        const Tensor r = transformer_represent(*target_, views[i], partition_, transformer_);
        double norm = 0.0;
        for (double v : r.data()) norm += v * v;
        norm = std::sqrt(norm + kNormEps);
        for (std::size_t j = 0; j < r.numel(); ++j) out(i, j) = r.at_flat(j) / norm;
      }
      return out;
    };

    Tape tape;
    auto predict = [&](Var online) {
      Var hidden = relu(add_rowvec(matmul(online, tape.param(params, "byol_predictor/w1")),
                                   tape.param(params, "byol_predictor/b1")));
      return add_rowvec(matmul(hidden, tape.param(params, "byol_predictor/w2")),
                        tape.param(params, "byol_predictor/b2"));
    };
    auto normalize_rows = [&](Var m) {
      return div_colvec(m, sqrt_eps(row_sums(square(m)), kNormEps));
    };

    Var q1 = normalize_rows(predict(batch_representations(tape, params, views1, true)));
    Var q2 = normalize_rows(predict(batch_representations(tape, params, views2, true)));
    Var t1 = tape.constant(target_batch(views1));
    Var t2 = tape.constant(target_batch(views2));
    Var loss = mul_scalar(add(sum(square(sub(q1, t2))), sum(square(sub(q2, t1)))),
                          1.0 / (2.0 * static_cast<double>(batch.size())));
    const double value = loss.value().scalar_value();
    Gradients grads = tape.backward(loss);
    opt_.step(params, grads);
    ema_update(*target_, params, cfg_.byol_momentum, params.names_with_prefix("transformer/"));
    return value;
  }

  Tape tape;
  Var rep1 = batch_representations(tape, params, views1, true);
  Var rep2 = batch_representations(tape, params, views2, true);
  Var loss = cfg_.loss == SslLossKind::kBarlowTwins
                 ? barlow_twins_loss(rep1, rep2, cfg_.lambda_bt)
                 : ntxent_loss(rep1, rep2, cfg_.temperature);
  const double value = loss.value().scalar_value();
  Gradients grads = tape.backward(loss);
  opt_.step(params, grads);
  return value;
}

}  // namespace cladnet
