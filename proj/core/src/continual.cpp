#include "cladnet/continual.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cladnet {

namespace {

void check_accuracy_matrix(const AccuracyMatrix& a) {
  if (a.empty()) throw NumericError("accuracy matrix is empty");
  for (const auto& row : a) {
    if (row.size() != a.size()) throw NumericError("accuracy matrix must be square");
    for (double v : row) {
      if (v < 0.0 || v > 1.0) throw NumericError("accuracy entries must lie in [0, 1]");
    }
  }
}

}  // namespace

double final_accuracy(const AccuracyMatrix& a) {
  check_accuracy_matrix(a);
  const std::size_t t = a.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < t; ++i) acc += a[i][t - 1];
  return acc / static_cast<double>(t);
}

double forgetting_measure(const AccuracyMatrix& a) {
  check_accuracy_matrix(a);
  const std::size_t t = a.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    const double best = *std::max_element(a[i].begin(), a[i].end());
    acc += best - a[i][t - 1];
  }
  return acc / static_cast<double>(t);
}

double learning_accuracy(const AccuracyMatrix& a) {
  check_accuracy_matrix(a);
  const std::size_t t = a.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < t; ++i) acc += a[i][i];
  return acc / static_cast<double>(t);
}

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kClad: return "clad";
    case StrategyKind::kCladNoDistill: return "clad_no_distill";
    case StrategyKind::kLwf: return "lwf";
    case StrategyKind::kEwc: return "ewc";
    case StrategyKind::kEr: return "er";
    case StrategyKind::kNaive: return "naive";
  }
  return "?";
}

StrategyKind strategy_from_string(const std::string& s) {
  if (s == "clad") return StrategyKind::kClad;
  if (s == "clad_no_distill") return StrategyKind::kCladNoDistill;
  if (s == "lwf") return StrategyKind::kLwf;
  if (s == "ewc") return StrategyKind::kEwc;
  if (s == "er") return StrategyKind::kEr;
  if (s == "naive") return StrategyKind::kNaive;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

void StrategyConfig::validate() const {
  if (lambda_distill < 0.0) throw NumericError("lambda_distill must be >= 0");
  if (lambda_ewc < 0.0) throw NumericError("lambda_ewc must be >= 0");
  if (replay_fraction < 0.0 || replay_fraction > 1.0)
    throw NumericError("replay_fraction must be in [0, 1]");
  if (kind == StrategyKind::kEwc && fisher_batches == 0)
    throw NumericError("ewc strategy needs fisher_batches >= 1");
}

void ReplayBuffer::insert(const SensorWindow& w, std::mt19937_64& rng) {
  if (capacity_ == 0) return;
  ++seen_;
  if (items_.size() < capacity_) {
    items_.push_back(w);
    return;
  }
  std::uniform_int_distribution<std::size_t> slot(0, seen_ - 1);
  const std::size_t j = slot(rng);
  if (j < capacity_) items_[j] = w;
}

std::vector<const SensorWindow*> ReplayBuffer::sample(std::size_t k, std::mt19937_64& rng) const {
  std::vector<const SensorWindow*> out;
  if (items_.empty() || k == 0) return out;
  k = std::min(k, items_.size());
  std::vector<std::size_t> order(items_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(&items_[order[i]]);
  return out;
}

FisherInfo ewc_prepare(ParameterStore& params, const CnnConfig& cfg,
                       const std::vector<SensorWindow>& data, std::size_t batches,
                       std::size_t batch_size, std::mt19937_64& rng) {
  std::vector<const SensorWindow*> labeled;
  for (const auto& w : data) {
    if (w.label) labeled.push_back(&w);
  }
  if (labeled.empty()) throw DataError("ewc_prepare: no labeled windows");

  FisherInfo fisher;
  const auto names = params.names();
  for (const auto& name : names) fisher.importance.create(name, params.at(name).shape());
  fisher.anchor = params.clone();

  std::uniform_int_distribution<std::size_t> pick(0, labeled.size() - 1);
  for (std::size_t b = 0; b < batches; ++b) {
    Tape tape;
    std::vector<Var> rows;
    const std::size_t take = std::min(batch_size, labeled.size());
    std::vector<const SensorWindow*> batch;
    for (std::size_t i = 0; i < take; ++i) batch.push_back(labeled[pick(rng)]);

    std::vector<int> predicted;
    for (const SensorWindow* w : batch) {
      Var features = cnn_forward(tape, params, w->data, cfg);
      Var logits = fuse_and_classify(tape, params, features, std::nullopt);
      rows.push_back(logits);
      const Tensor& lv = logits.value();
      std::size_t best = 0;
      for (std::size_t j = 1; j < lv.cols(); ++j)
        if (lv(0, j) > lv(0, best)) best = j;
      predicted.push_back(static_cast<int>(best));
    }
    Var loss = cross_entropy_loss(stack_rows(rows), predicted);
    Gradients grads = tape.backward(loss);
    for (const auto& [name, grad] : grads.by_param) {
      Tensor& f = fisher.importance.at(name);
      for (std::size_t i = 0; i < f.numel(); ++i) {
        f.at_flat(i) += grad.at_flat(i) * grad.at_flat(i);
      }
    }
  }
  for (const auto& name : names) {
    Tensor& f = fisher.importance.at(name);
    for (double& v : f.values()) v /= static_cast<double>(batches);
  }
  return fisher;
}

void ewc_accumulate(FisherInfo& fisher, FisherInfo update) {
  if (fisher.empty()) {
    fisher = std::move(update);
    return;
  }
  for (const auto& name : update.importance.names()) {
    if (!fisher.importance.contains(name)) {
      fisher.importance.create(name, update.importance.at(name));
      continue;
    }
    Tensor& f = fisher.importance.at(name);
    const Tensor& u = update.importance.at(name);
    for (std::size_t i = 0; i < f.numel(); ++i) f.at_flat(i) += u.at_flat(i);
  }
  fisher.anchor = std::move(update.anchor);
}

Var ewc_penalty(Tape& tape, const ParameterStore& params, const FisherInfo& fisher, double lambda_ewc) {
  Var total;
  bool first = true;
  for (const auto& name : fisher.importance.names()) {
    if (!params.contains(name)) continue;
    Var theta = tape.param(params, name);
    const Tensor& anchor = fisher.anchor.at(name);
    const Tensor& importance = fisher.importance.at(name);
    // Flatten tensors of any rank through sum() of the weighted squares.
    Var diff = sub(theta, tape.constant(anchor));
    Var weighted = mul(square(diff), tape.constant(importance));
    Var term = sum(weighted);
    total = first ? term : add(total, term);
    first = false;
  }
  if (first) return mul_scalar(tape.constant(Tensor::scalar(0.0)), 0.0);
  return mul_scalar(total, lambda_ewc / 2.0);
}

namespace {

struct EvalModel {
  const ParameterStore& params;
  const RunConfig& run;
  bool use_transformer;
};

double evaluate_accuracy(const EvalModel& model, const std::vector<SensorWindow>& test) {
  std::size_t correct = 0, total = 0;
  for (const auto& w : test) {
    if (!w.label) continue;
    Tensor repr;
    const Tensor* repr_ptr = nullptr;
    if (model.use_transformer) {
      repr = transformer_represent(model.params, w.data, model.run.partition,
                                   model.run.transformer);
      repr_ptr = &repr;
    }
    const Tensor logits = classifier_logits(model.params, w.data, model.run.cnn, repr_ptr);
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j)
      if (logits(0, j) > logits(0, best)) best = j;
    if (static_cast<int>(best) == *w.label) ++correct;
    ++total;
  }
  if (total == 0) throw DataError("evaluation set has no labeled windows");
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

StreamResult run_stream(SubjectDataAccess& data, const RunConfig& run,
                        const StrategyConfig& strategy,
                        const std::function<void(std::size_t, int, const ParameterStore&)>&
                            on_subject_done) {
  strategy.validate();
  if (data.count() < 2) throw DataError("run_stream needs at least 2 subjects");
  if (run.classes < 2) throw DataError("run_stream needs at least 2 classes");
  if (run.batch_size < 2) throw DataError("batch size must be >= 2");

  const std::size_t t_count = data.count();
  const bool use_transformer = strategy.uses_transformer();
  const bool use_distill = strategy.uses_distillation();

  // Derive independent, deterministic rng streams from the run seed.
  std::mt19937_64 seeder(run.seed);
  const std::uint64_t init_seed = seeder();
  const std::uint64_t ssl_seed = seeder();
  const std::uint64_t shuffle_seed = seeder();
  const std::uint64_t er_seed = seeder();
  const std::uint64_t fisher_seed = seeder();

  ParameterStore params;
  std::mt19937_64 init_rng(init_seed);
  std::size_t channels = 0;
  {
    const auto& first_train = data.train_windows(0);
    if (first_train.empty()) throw DataError("first subject has no training windows");
    channels = first_train.front().data.cols();
  }
  std::vector<std::size_t> part_widths;
  if (use_transformer) {
    run.partition.validate(channels);
    for (const auto& g : run.partition.groups) part_widths.push_back(g.size());
    init_transformer_params(params, run.partition, part_widths, run.transformer, init_rng);
  }
  init_cnn_params(params, channels, run.cnn, init_rng);
  const std::size_t head_width =
      run.cnn.widths.back() + (use_transformer ? run.transformer.d_model : 0);
  init_head_params(params, head_width, run.classes, init_rng);

  std::optional<SslTrainer> ssl;
  if (use_transformer) ssl.emplace(run.ssl, run.partition, run.transformer, ssl_seed);

  AdamOptimizer sup_opt(run.lr);
  std::mt19937_64 shuffle_rng(shuffle_seed);
  std::mt19937_64 er_rng(er_seed);
  std::mt19937_64 fisher_rng(fisher_seed);

  std::optional<ModelSnapshot> teacher;
  ReplayBuffer buffer(strategy.kind == StrategyKind::kEr ? strategy.er_capacity : 0);
  FisherInfo fisher;

  StreamResult result;
  result.accuracy.assign(t_count, std::vector<double>(t_count, 0.0));

  for (std::size_t task = 0; task < t_count; ++task) {
    const auto& train = data.train_windows(task);
    TaskLog log;
    log.subject = data.subject_id(task);

    // Fresh optimizer state per subject: each task is trained for a fixed
    // epoch budget with its own adaptive-moment history.
    sup_opt.reset();

    // --- long-term memory: self-supervised pass over every window ---
    if (use_transformer && !train.empty()) {
      std::vector<const SensorWindow*> order;
      order.reserve(train.size());
      for (const auto& w : train) order.push_back(&w);
      bool first_step = true;
      for (std::size_t epoch = 0; epoch < run.ssl.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += run.ssl.batch_size) {
          const std::size_t end = std::min(start + run.ssl.batch_size, order.size());
          if (end - start < 2) continue;  // correlation losses need >= 2 views
          std::vector<const SensorWindow*> batch(order.begin() + start, order.begin() + end);
          const double loss = ssl->train_step(batch, params);
          if (first_step) {
            log.ssl_loss_first = loss;
            first_step = false;
          }
          log.ssl_loss_last = loss;
        }
      }
    }

    // --- short-term memory: supervised pass over labeled windows ---
    std::vector<const SensorWindow*> labeled;
    for (const auto& w : train) {
      if (w.label) labeled.push_back(&w);
    }
    log.labeled_windows = labeled.size();

    // The transformer is frozen during the supervised phase, so each
    // window's representation can be computed once.
    std::vector<Tensor> repr_store;
    std::vector<const Tensor*> reprs;
    if (use_transformer) {
      repr_store.reserve(labeled.size());
      for (const SensorWindow* w : labeled) {
        repr_store.push_back(
            transformer_represent(params, w->data, run.partition, run.transformer));
      }
      for (const Tensor& r : repr_store) reprs.push_back(&r);
    }

    std::function<Var(Tape&, ParameterStore&)> penalty;
    if (strategy.kind == StrategyKind::kEwc && !fisher.empty()) {
      penalty = [&fisher, &strategy](Tape& tape, ParameterStore& p) {
        return ewc_penalty(tape, p, fisher, strategy.lambda_ewc);
      };
    }

    bool first_sup = true;
    std::vector<std::size_t> idx(labeled.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t epoch = 0; epoch < run.epochs; ++epoch) {
      std::shuffle(idx.begin(), idx.end(), shuffle_rng);
      for (std::size_t start = 0; start < idx.size(); start += run.batch_size) {
        const std::size_t end = std::min(start + run.batch_size, idx.size());
        std::vector<const SensorWindow*> batch;
        std::vector<const Tensor*> batch_reprs;
        for (std::size_t i = start; i < end; ++i) {
          batch.push_back(labeled[idx[i]]);
          if (use_transformer) batch_reprs.push_back(reprs[idx[i]]);
        }
        if (strategy.kind == StrategyKind::kEr) {
          if (epoch == 0) {
            for (std::size_t i = start; i < end; ++i) buffer.insert(*labeled[idx[i]], er_rng);
          }
          const auto replay = buffer.sample(
              static_cast<std::size_t>(std::llround(strategy.replay_fraction *
                                                    static_cast<double>(run.batch_size))),
              er_rng);
          for (const SensorWindow* w : replay) batch.push_back(w);
        }
        const SupervisedStepResult step = supervised_train_step(
            batch, params, run.cnn, use_transformer ? &batch_reprs : nullptr,
            (use_distill && teacher) ? &*teacher : nullptr, strategy.lambda_distill,
            strategy.distill_mode, sup_opt, penalty);
        if (step.skipped) {
          ++log.skipped_batches;
          continue;
        }
        if (first_sup) {
          log.sup_loss_first = step.total;
          first_sup = false;
        }
        log.sup_loss_last = step.total;
      }
    }

    // --- post-subject bookkeeping ---
    if (use_distill) {
      teacher = snapshot_classifier(params, data.subject_id(task));
    }
    if (strategy.kind == StrategyKind::kEwc && !labeled.empty()) {
      std::vector<SensorWindow> labeled_copy;
      labeled_copy.reserve(labeled.size());
      for (const SensorWindow* w : labeled) labeled_copy.push_back(*w);
      ewc_accumulate(fisher, ewc_prepare(params, run.cnn, labeled_copy, strategy.fisher_batches,
                                         run.batch_size, fisher_rng));
    }

    EvalModel model{params, run, use_transformer};
    for (std::size_t t = 0; t < t_count; ++t) {
      result.accuracy[t][task] = evaluate_accuracy(model, data.test_windows(t));
    }
    result.logs.push_back(log);
    if (on_subject_done) on_subject_done(task, data.subject_id(task), params);
  }

  result.params = std::move(params);
  return result;
}

}  // namespace cladnet
