#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "spdnn/comm_plan.hpp"
#include "spdnn/model.hpp"
#include "spdnn/partition.hpp"
#include "spdnn/sparse.hpp"

namespace spdnn {

struct MessageRecord {
  int layer = 0;
  char phase = 'x';  // 'x' forward activations, 's' backward contributions
  int from = 0;
  int to = 0;
  std::vector<int> rows;
};

/// Communication and work counters observed while executing steps.
struct StepTrace {
  int parts = 0;
  // [layer-1][rank], counted at the sender
  std::vector<std::vector<std::int64_t>> x_words, x_messages;
  std::vector<std::vector<std::int64_t>> s_words, s_messages;
  std::vector<std::vector<std::int64_t>> flops;
  double final_loss = 0.0;

  bool capture_messages = false;
  std::vector<MessageRecord> messages;

  void init(int layers, int n_parts);
  void accumulate(const StepTrace& other);
  std::int64_t layer_words(int k) const;       // X plus S
  std::int64_t rank_words(int rank) const;     // X plus S, all layers
  std::int64_t rank_messages(int rank) const;
  std::int64_t rank_flops(int rank) const;
  std::int64_t total_words() const;
};

/// Simulated cluster of P logical processors executing the per-layer
/// feedforward and backpropagation exchanges of one model under a fixed
/// partition and plan. Ranks run bulk-synchronously: within each layer,
/// every rank first posts its sends and computes with locally owned
/// entries, then (after a barrier) consumes its inbox in ascending sender
/// order. Numeric results are therefore identical for any worker count.
class SimCluster {
 public:
  SimCluster(SparseModel model, ModelPartition part, CommPlan plan,
             int threads = 1);
  ~SimCluster();
  SimCluster(SimCluster&&) noexcept;
  SimCluster& operator=(SimCluster&&) noexcept;

  int parts() const;
  int num_layers() const;

  /// Runs the forward pass for one input; returns the gathered output
  /// activations. Forward state is retained for a following backprop call.
  Vec feedforward(const Vec& x0, StepTrace* trace = nullptr);

  /// Backpropagates from the most recent feedforward and updates the owned
  /// weight blocks in place.
  void backprop(const Vec& y, double eta, StepTrace* trace = nullptr);

  /// feedforward + loss + backprop; returns the pre-update loss.
  double sgd_step(const Vec& x0, const Vec& y, double eta,
                  StepTrace* trace = nullptr);

  /// Reassembles the current weights from the distributed blocks.
  SparseModel gather_model() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct SgdResult {
  SparseModel model;
  std::vector<double> loss_history;  // pre-update loss per step
  StepTrace trace;                   // accumulated over steps
};

/// Runs `steps` SGD steps on the simulated cluster, cycling through the
/// dataset. Deterministic for a fixed model/partition regardless of
/// `threads`.
SgdResult run_sgd(const SparseModel& model, const ModelPartition& part,
                  const Dataset& data, double eta, int steps, int threads = 1,
                  bool capture_messages = false);

/// Single-process reference: the same arithmetic with no distribution.
std::pair<SparseModel, std::vector<double>> sequential_sgd(SparseModel model,
                                                           const Dataset& data,
                                                           double eta,
                                                           int steps);

Vec sequential_feedforward(const SparseModel& model, const Vec& x0);

/// Loss gradient with respect to every stored nonzero, without updating the
/// model: grad_k(j,i) = delta_k(j) * x_{k-1}(i) on the layer-k pattern.
std::vector<SpMat> sequential_gradients(const SparseModel& model,
                                        const Vec& x0, const Vec& y);

}  // namespace spdnn
