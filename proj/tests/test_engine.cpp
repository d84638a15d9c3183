#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "spdnn/comm_plan.hpp"
#include "spdnn/engine.hpp"
#include "spdnn/hypergraph.hpp"

using namespace spdnn;

namespace {

Dataset random_dataset(int count, int input_dim, int neurons,
                       std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  Dataset data;
  for (int i = 0; i < count; ++i) {
    Vec x = Vec::Zero(input_dim);
    for (int t = 0; t < input_dim; ++t) x[t] = double(eng() % 2);
    Vec y = Vec::Zero(neurons);
    y[static_cast<Eigen::Index>(eng() % std::uint64_t(neurons))] = 1.0;
    data.inputs.push_back(std::move(x));
    data.labels.push_back(std::move(y));
  }
  return data;
}

ModelPartition single_part(const SparseModel& model) {
  ModelPartition part;
  part.parts = 1;
  part.layer_rows.assign(std::size_t(model.num_layers()),
                         std::vector<int>(std::size_t(model.neurons), 0));
  part.input_rows.assign(std::size_t(model.input_dim), 0);
  return part;
}

double max_rel_diff(const SpMat& a, const SpMat& b) {
  REQUIRE(a.nonZeros() == b.nonZeros());
  double worst = 0.0;
  for (int r = 0; r < a.rows(); ++r) {
    SpMat::InnerIterator ia(a, r), ib(b, r);
    for (; ia && ib; ++ia, ++ib) {
      REQUIRE(ia.col() == ib.col());
      worst = std::max(worst, std::abs(ia.value() - ib.value()) /
                                  std::max(1.0, std::abs(ib.value())));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("single rank matches the sequential oracle bitwise") {
  const SparseModel model = generate_synthetic(4, 32, 4, 50);
  const ModelPartition part = single_part(model);
  const Dataset data = random_dataset(4, 32, 32, 9);

  SUBCASE("feedforward, zero messages") {
    CommPlan plan = build_comm_plan(model, part);
    SimCluster cluster(model, part, std::move(plan), 1);
    StepTrace trace;
    const Vec got = cluster.feedforward(data.inputs[0], &trace);
    const Vec want = sequential_feedforward(model, data.inputs[0]);
    REQUIRE(got.size() == want.size());
    for (int i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
    CHECK(trace.total_words() == 0);
    for (const auto& layer : trace.x_messages)
      for (auto count : layer) CHECK(count == 0);
  }

  SUBCASE("ten SGD steps, bitwise identical weights and losses") {
    const SgdResult parallel = run_sgd(model, part, data, 0.01, 10);
    const auto [oracle, losses] = sequential_sgd(model, data, 0.01, 10);
    REQUIRE(parallel.loss_history.size() == losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i)
      CHECK(parallel.loss_history[i] == losses[i]);
    for (int k = 1; k <= model.num_layers(); ++k)
      CHECK(exact_equal(parallel.model.layer(k), oracle.layer(k)));
  }
}

TEST_CASE("worked example: observed layer-2 messages match the quoted sets") {
  const SparseModel model = testutil::worked_example_model();
  const ModelPartition part = testutil::worked_example_partition();
  CommPlan plan = build_comm_plan(model, part);
  SimCluster cluster(model, part, std::move(plan), 1);

  Vec x0(4);
  x0 << 1.0, 0.0, 1.0, 1.0;
  StepTrace trace;
  trace.capture_messages = true;
  cluster.feedforward(x0, &trace);

  std::vector<MessageRecord> layer2;
  for (const MessageRecord& m : trace.messages)
    if (m.layer == 2 && m.phase == 'x') layer2.push_back(m);
  REQUIRE(layer2.size() == 2);
  CHECK(layer2[0].from == 0);
  CHECK(layer2[0].to == 1);
  CHECK(layer2[0].rows == std::vector<int>{2, 3});
  CHECK(layer2[1].from == 1);
  CHECK(layer2[1].to == 0);
  CHECK(layer2[1].rows == std::vector<int>{0, 1});
}

TEST_CASE("gathered results match the oracle across part counts") {
  const SparseModel model = generate_synthetic(6, 64, 8, 99);
  const Dataset data = random_dataset(5, 64, 64, 31);
  for (int parts : {2, 4}) {
    const ModelPartition part = partition_model(
        model, parts, PartitionMethod::hypergraph, 0.01, 7);

    const Vec got = [&] {
      CommPlan plan = build_comm_plan(model, part);
      SimCluster cluster(model, part, std::move(plan), 1);
      return cluster.feedforward(data.inputs[0]);
    }();
    const Vec want = sequential_feedforward(model, data.inputs[0]);
    for (int i = 0; i < got.size(); ++i)
      CHECK(std::abs(got[i] - want[i]) <=
            1e-10 * std::max(1.0, std::abs(want[i])));

    const SgdResult parallel = run_sgd(model, part, data, 0.01, 10);
    const auto [oracle, losses] = sequential_sgd(model, data, 0.01, 10);
    for (std::size_t i = 0; i < losses.size(); ++i)
      CHECK(std::abs(parallel.loss_history[i] - losses[i]) < 1e-6);
    for (int k = 1; k <= model.num_layers(); ++k)
      CHECK(max_rel_diff(parallel.model.layer(k), oracle.layer(k)) < 1e-8);
  }
}

TEST_CASE("labels equal to the output leave every weight untouched") {
  const SparseModel model = generate_synthetic(3, 16, 3, 123);
  const ModelPartition part =
      partition_model(model, 2, PartitionMethod::random, 0.01, 5);
  CommPlan plan = build_comm_plan(model, part);
  SimCluster cluster(model, part, std::move(plan), 1);
  Vec x0 = Vec::Zero(16);
  x0[3] = 1.0;
  const Vec y = cluster.feedforward(x0);
  cluster.backprop(y, 0.01);
  const SparseModel after = cluster.gather_model();
  for (int k = 1; k <= 3; ++k)
    CHECK(exact_equal(after.layer(k), model.layer(k)));
}

TEST_CASE("zero steps leave the model unchanged") {
  const SparseModel model = generate_synthetic(2, 16, 3, 4);
  const ModelPartition part =
      partition_model(model, 2, PartitionMethod::random, 0.01, 5);
  const SgdResult result =
      run_sgd(model, part, random_dataset(2, 16, 16, 1), 0.01, 0);
  CHECK(result.loss_history.empty());
  for (int k = 1; k <= 2; ++k)
    CHECK(exact_equal(result.model.layer(k), model.layer(k)));
  CHECK(result.trace.total_words() == 0);
}

TEST_CASE("observed traffic equals the plan, per rank and per layer") {
  const SparseModel model = generate_synthetic(5, 48, 6, 61);
  const Dataset data = random_dataset(3, 48, 48, 2);
  const int steps = 6;
  for (PartitionMethod method :
       {PartitionMethod::hypergraph, PartitionMethod::random}) {
    const ModelPartition part = partition_model(model, 4, method, 0.01, 11);
    const CommPlan plan = build_comm_plan(model, part);
    const CommMetrics planned = compute_metrics(plan, model, part);
    const SgdResult result = run_sgd(model, part, data, 0.01, steps);

    for (int m = 0; m < 4; ++m) {
      CHECK(result.trace.rank_words(m) ==
            steps * planned.send_words[std::size_t(m)]);
      CHECK(result.trace.rank_messages(m) ==
            steps * planned.send_messages[std::size_t(m)]);
      CHECK(result.trace.rank_flops(m) ==
            steps * planned.flops[std::size_t(m)]);
    }
    for (int k = 1; k <= 5; ++k)
      CHECK(result.trace.layer_words(k) == steps * plan.layer_words(k));
  }
}

TEST_CASE("worker count does not change any output bit") {
  const SparseModel model = generate_synthetic(4, 40, 5, 21);
  const ModelPartition part =
      partition_model(model, 4, PartitionMethod::hypergraph, 0.01, 13);
  const Dataset data = random_dataset(4, 40, 40, 77);
  const SgdResult one = run_sgd(model, part, data, 0.01, 8, 1);
  const SgdResult four = run_sgd(model, part, data, 0.01, 8, 4);
  REQUIRE(one.loss_history.size() == four.loss_history.size());
  for (std::size_t i = 0; i < one.loss_history.size(); ++i)
    CHECK(one.loss_history[i] == four.loss_history[i]);
  for (int k = 1; k <= 4; ++k)
    CHECK(exact_equal(one.model.layer(k), four.model.layer(k)));
  CHECK(one.trace.total_words() == four.trace.total_words());
}

TEST_CASE("plan built from a different partition is rejected") {
  const SparseModel model = generate_synthetic(3, 24, 4, 33);
  const ModelPartition part_a =
      partition_model(model, 3, PartitionMethod::random, 0.01, 1);
  const ModelPartition part_b =
      partition_model(model, 3, PartitionMethod::random, 0.01, 2);
  CommPlan plan_b = build_comm_plan(model, part_b);
  CHECK_THROWS_AS(SimCluster(model, part_a, std::move(plan_b), 1),
                  DataError);
}

TEST_CASE("a dropped receive surfaces as an unconsumed message") {
  const SparseModel model = generate_synthetic(2, 16, 4, 8);
  const ModelPartition part =
      partition_model(model, 2, PartitionMethod::random, 0.01, 3);
  CommPlan plan = build_comm_plan(model, part);
  // Remove one planned receive: the matching send is then never consumed.
  bool removed = false;
  for (int k = 1; k <= 2 && !removed; ++k)
    for (auto& rank : plan.layers[std::size_t(k - 1)].xrecv)
      if (!rank.empty()) {
        rank.pop_back();
        removed = true;
        break;
      }
  REQUIRE(removed);
  Vec x0 = Vec::Zero(16);
  CHECK_THROWS_AS(
      [&] {
        SimCluster cluster(model, part, std::move(plan), 1);
        cluster.feedforward(x0);
      }(),
      std::exception);
}

TEST_CASE("backprop gradients match central finite differences") {
  // Three layers, eight neurons, three connections per neuron.
  SparseModel model = generate_synthetic(3, 8, 3, 2024);
  const Dataset data = random_dataset(1, 8, 8, 5);
  const Vec& x0 = data.inputs[0];
  const Vec& y = data.labels[0];
  const std::vector<SpMat> grads = sequential_gradients(model, x0, y);

  const double h = 1e-6;
  for (int k = 1; k <= 3; ++k) {
    const SpMat& w = model.layer(k);
    for (int r = 0; r < w.rows(); ++r)
      for (SpMat::InnerIterator it(w, r); it; ++it) {
        SparseModel plus = model, minus = model;
        plus.layer(k).coeffRef(r, it.col()) += h;
        minus.layer(k).coeffRef(r, it.col()) -= h;
        const double fd = (mse_loss(sequential_feedforward(plus, x0), y) -
                           mse_loss(sequential_feedforward(minus, x0), y)) /
                          (2.0 * h);
        CHECK(std::abs(grads[std::size_t(k - 1)].coeff(r, it.col()) - fd) <
              1e-4);
      }
  }
}

TEST_CASE("backprop requires a preceding feedforward") {
  const SparseModel model = generate_synthetic(2, 8, 2, 6);
  const ModelPartition part = single_part(model);
  CommPlan plan = build_comm_plan(model, part);
  SimCluster cluster(model, part, std::move(plan), 1);
  CHECK_THROWS_AS(cluster.backprop(Vec::Zero(8), 0.01), std::logic_error);
}
