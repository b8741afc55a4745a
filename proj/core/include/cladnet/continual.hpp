#pragma once

#include <functional>
#include <span>

#include "cladnet/classifier.hpp"
#include "cladnet/ssl_objectives.hpp"

namespace cladnet {

// A[t][t'] = accuracy on subject t's test set after training through the
// t'-th task. The full matrix is stored, including columns before a subject
// was trained on.
using AccuracyMatrix = std::vector<std::vector<double>>;

double final_accuracy(const AccuracyMatrix& a);
double forgetting_measure(const AccuracyMatrix& a);
double learning_accuracy(const AccuracyMatrix& a);

enum class StrategyKind { kClad, kCladNoDistill, kLwf, kEwc, kEr, kNaive };

std::string to_string(StrategyKind kind);
StrategyKind strategy_from_string(const std::string& s);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::kClad;
  double lambda_distill = 1.0;
  DistillMode distill_mode = DistillMode::kL2Logits;
  double lambda_ewc = 100.0;
  std::size_t fisher_batches = 10;
  std::size_t er_capacity = 200;
  double replay_fraction = 0.5;

  bool uses_transformer() const {
    return kind == StrategyKind::kClad || kind == StrategyKind::kCladNoDistill;
  }
  bool uses_distillation() const {
    return kind == StrategyKind::kClad || kind == StrategyKind::kLwf;
  }
  void validate() const;
};

// Reservoir-sampled store of past labeled windows; the only cross-subject
// storage any strategy is allowed.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  void insert(const SensorWindow& w, std::mt19937_64& rng);
  std::vector<const SensorWindow*> sample(std::size_t k, std::mt19937_64& rng) const;

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t seen() const { return seen_; }

 private:
  std::size_t capacity_;
  std::size_t seen_ = 0;
  std::vector<SensorWindow> items_;
};

// Diagonal importance estimates with the anchor parameters they refer to.
struct FisherInfo {
  ParameterStore importance;
  ParameterStore anchor;

  bool empty() const { return importance.size() == 0; }
};

// Empirical diagonal Fisher: mean squared gradient of the log-likelihood of
// the model's own predicted labels over sampled batches.
FisherInfo ewc_prepare(ParameterStore& params, const CnnConfig& cfg,
                       const std::vector<SensorWindow>& data, std::size_t batches,
                       std::size_t batch_size, std::mt19937_64& rng);

// Adds `update` into `fisher` (importances sum, anchor replaced).
void ewc_accumulate(FisherInfo& fisher, FisherInfo update);

// (lambda / 2) * sum_k F_k (theta_k - anchor_k)^2 over the fisher's names.
Var ewc_penalty(Tape& tape, const ParameterStore& params, const FisherInfo& fisher, double lambda_ewc);

// Everything run_stream reads goes through this interface so tests can log
// which subject's data is touched when.
class SubjectDataAccess {
 public:
  virtual ~SubjectDataAccess() = default;
  virtual std::size_t count() const = 0;
  virtual int subject_id(std::size_t index) const = 0;
  virtual const std::vector<SensorWindow>& train_windows(std::size_t index) = 0;
  virtual const std::vector<SensorWindow>& test_windows(std::size_t index) = 0;
};

class VectorDataAccess : public SubjectDataAccess {
 public:
  explicit VectorDataAccess(std::vector<SubjectData> subjects)
      : subjects_(std::move(subjects)) {}

  std::size_t count() const override { return subjects_.size(); }
  int subject_id(std::size_t index) const override { return subjects_[index].subject_id; }
  const std::vector<SensorWindow>& train_windows(std::size_t index) override {
    return subjects_[index].train;
  }
  const std::vector<SensorWindow>& test_windows(std::size_t index) override {
    return subjects_[index].test;
  }

  std::vector<SubjectData>& subjects() { return subjects_; }

 private:
  std::vector<SubjectData> subjects_;
};

struct RunConfig {
  TransformerConfig transformer;
  CnnConfig cnn;
  BodyPartition partition;
  std::size_t classes = 0;
  SslConfig ssl;
  std::size_t epochs = 50;      // supervised epochs per subject
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct TaskLog {
  int subject = 0;
  double ssl_loss_first = 0.0;
  double ssl_loss_last = 0.0;
  double sup_loss_first = 0.0;
  double sup_loss_last = 0.0;
  std::size_t labeled_windows = 0;
  std::size_t skipped_batches = 0;
};

struct StreamResult {
  AccuracyMatrix accuracy;
  std::vector<TaskLog> logs;
  ParameterStore params;
};

// Subject-sequential protocol: train on each subject in order under the
// strategy, then evaluate on every subject's test set to fill one column of
// the accuracy matrix. Training never touches raw data of earlier subjects;
// the replay buffer is the strategy's own storage.
StreamResult run_stream(SubjectDataAccess& data, const RunConfig& run,
                        const StrategyConfig& strategy,
                        const std::function<void(std::size_t task_index, int subject_id,
                                                 const ParameterStore&)>& on_subject_done = {});

}  // namespace cladnet
