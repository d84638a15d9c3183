#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>
#include <vector>

#include "helpers.hpp"
#include "spdnn/comm_plan.hpp"
#include "spdnn/hypergraph.hpp"

using namespace spdnn;

namespace {

// Independent reconstruction of the exchange sets: a raw scan over every
// nonzero, keyed by (owner of the column's source row, owner of the row).
using PairRowsMap = std::map<std::pair<int, int>, std::set<int>>;

PairRowsMap scan_layer_sends(const SparseModel& model,
                             const ModelPartition& part, int k) {
  PairRowsMap sends;
  const SpMat& w = model.layer(k);
  const auto& owner = part.feed_rows(k);
  const auto& row_part = part.layer_rows[std::size_t(k - 1)];
  for (int r = 0; r < w.rows(); ++r)
    for (SpMat::InnerIterator it(w, r); it; ++it) {
      const int m = owner[std::size_t(it.col())];
      const int n = row_part[std::size_t(r)];
      if (m != n) sends[{m, n}].insert(static_cast<int>(it.col()));
    }
  return sends;
}

PairRowsMap plan_layer_sends(const CommPlan& plan, int k) {
  PairRowsMap sends;
  const LayerComm& lc = plan.layer(k);
  for (int m = 0; m < plan.parts; ++m)
    for (const PeerRows& pr : lc.xsend[std::size_t(m)])
      sends[{m, pr.peer}] =
          std::set<int>(pr.rows.begin(), pr.rows.end());
  return sends;
}

ModelPartition relabel(const ModelPartition& part, int shift) {
  ModelPartition out = part;
  for (auto& rows : out.layer_rows)
    for (int& p : rows) p = (p + shift) % part.parts;
  for (int& p : out.input_rows) p = (p + shift) % part.parts;
  return out;
}

}  // namespace

TEST_CASE("single part plans are empty") {
  const SparseModel model = generate_synthetic(3, 16, 4, 5);
  ModelPartition part;
  part.parts = 1;
  part.layer_rows.assign(3, std::vector<int>(16, 0));
  part.input_rows.assign(16, 0);
  const CommPlan plan = build_comm_plan(model, part);
  CHECK(plan.total_words() == 0);
  for (int k = 1; k <= 3; ++k) {
    for (const auto& side : {plan.layer(k).xsend, plan.layer(k).xrecv,
                             plan.layer(k).ssend, plan.layer(k).srecv})
      for (const auto& rank : side) CHECK(rank.empty());
  }
  const CommMetrics m = compute_metrics(plan, model, part);
  CHECK(m.avg_volume == 0.0);
  CHECK(m.max_volume == 0.0);
  CHECK(m.avg_messages == 0.0);
  CHECK(m.max_messages == 0.0);
  CHECK(m.comp_imbalance == 1.0);
}

TEST_CASE("worked example: layer-2 exchange matches the quoted row sets") {
  const SparseModel model = testutil::worked_example_model();
  const ModelPartition part = testutil::worked_example_partition();
  const CommPlan plan = build_comm_plan(model, part);

  const auto& lc = plan.layer(2);
  REQUIRE(lc.xsend[0].size() == 1);
  CHECK(lc.xsend[0][0].peer == 1);
  CHECK(lc.xsend[0][0].rows == std::vector<int>{2, 3});  // x1(3), x1(4)
  REQUIRE(lc.xsend[1].size() == 1);
  CHECK(lc.xsend[1][0].peer == 0);
  CHECK(lc.xsend[1][0].rows == std::vector<int>{0, 1});  // x1(1), x1(2)

  // Backward duals mirror the forward sets.
  REQUIRE(lc.ssend[0].size() == 1);
  CHECK(lc.ssend[0][0].peer == 1);
  CHECK(lc.ssend[0][0].rows == std::vector<int>{0, 1});
  REQUIRE(lc.srecv[1].size() == 1);
  CHECK(lc.srecv[1][0].rows == std::vector<int>{0, 1});
}

TEST_CASE("plan equals the brute-force per-nonzero ownership scan") {
  const SparseModel model = generate_synthetic(4, 48, 6, 17);
  for (std::uint64_t seed : {3u, 4u}) {
    const ModelPartition part =
        partition_model(model, 4, PartitionMethod::random, 0.01, seed);
    const CommPlan plan = build_comm_plan(model, part);
    for (int k = 1; k <= 4; ++k)
      CHECK(plan_layer_sends(plan, k) == scan_layer_sends(model, part, k));
  }
}

TEST_CASE("plan structural invariants") {
  const SparseModel model = generate_synthetic(3, 32, 5, 23);
  const ModelPartition part =
      partition_model(model, 4, PartitionMethod::hypergraph, 0.01, 9);
  const CommPlan plan = build_comm_plan(model, part);
  for (int k = 1; k <= 3; ++k) {
    const LayerComm& lc = plan.layer(k);
    for (int m = 0; m < 4; ++m) {
      for (const PeerRows& pr : lc.xsend[std::size_t(m)]) {
        CHECK(pr.peer != m);
        CHECK(!pr.rows.empty());
        CHECK(std::is_sorted(pr.rows.begin(), pr.rows.end()));
        // Symmetric entry on the receiver, same rows.
        bool found = false;
        for (const PeerRows& q : lc.xrecv[std::size_t(pr.peer)])
          if (q.peer == m) {
            found = true;
            CHECK(q.rows == pr.rows);
          }
        CHECK(found);
      }
      // Duality: ssend mirrors xrecv, srecv mirrors xsend.
      REQUIRE(lc.ssend[std::size_t(m)].size() ==
              lc.xrecv[std::size_t(m)].size());
      for (std::size_t i = 0; i < lc.ssend[std::size_t(m)].size(); ++i) {
        CHECK(lc.ssend[std::size_t(m)][i].peer ==
              lc.xrecv[std::size_t(m)][i].peer);
        CHECK(lc.ssend[std::size_t(m)][i].rows ==
              lc.xrecv[std::size_t(m)][i].rows);
      }
      REQUIRE(lc.srecv[std::size_t(m)].size() ==
              lc.xsend[std::size_t(m)].size());
      for (std::size_t i = 0; i < lc.srecv[std::size_t(m)].size(); ++i) {
        CHECK(lc.srecv[std::size_t(m)][i].peer ==
              lc.xsend[std::size_t(m)][i].peer);
        CHECK(lc.srecv[std::size_t(m)][i].rows ==
              lc.xsend[std::size_t(m)][i].rows);
      }
    }
  }
}

TEST_CASE("one cut net spanning three parts costs four words in total") {
  // One layer, one column; its source lives on part 0, consumers on parts
  // 0, 1, 1, 2: two words forward, two words back.
  SparseModel model;
  model.neurons = 4;
  model.input_dim = 1;
  model.layers.push_back(csr_from_entries(
      4, 1, {{0, 0, 0.5}, {1, 0, 0.5}, {2, 0, 0.5}, {3, 0, 0.5}}));
  ModelPartition part;
  part.parts = 3;
  part.layer_rows = {{0, 1, 1, 2}};
  part.input_rows = {0};
  const CommPlan plan = build_comm_plan(model, part);
  CHECK(plan.layer_words(1) == 4);
  const CommMetrics m = compute_metrics(plan, model, part);
  // Forward words leave rank 0, one backward word from each of ranks 1, 2.
  CHECK(m.send_words == std::vector<std::int64_t>{2, 1, 1});
  CHECK(m.send_messages == std::vector<std::int64_t>{2, 1, 1});
}

TEST_CASE("volume identity holds exactly for any partition") {
  const SparseModel model = generate_synthetic(5, 40, 5, 31);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (PartitionMethod method :
         {PartitionMethod::hypergraph, PartitionMethod::random}) {
      const ModelPartition part =
          partition_model(model, 4, method, 0.01, seed);
      const CommPlan plan = build_comm_plan(model, part);
      const VolumeIdentityReport report =
          verify_volume_identity(plan, model, part);
      CHECK(report.all_equal);
      for (const auto& layer : report.layers)
        CHECK(layer.plan_words == layer.hypergraph_words);
    }
  }
}

TEST_CASE("metrics are invariant under processor relabeling") {
  const SparseModel model = generate_synthetic(3, 24, 4, 77);
  const ModelPartition part =
      partition_model(model, 3, PartitionMethod::random, 0.01, 8);
  const CommPlan plan = build_comm_plan(model, part);
  const CommMetrics base = compute_metrics(plan, model, part);
  const ModelPartition shifted = relabel(part, 1);
  const CommMetrics moved =
      compute_metrics(build_comm_plan(model, shifted), model, shifted);
  CHECK(base.avg_volume == moved.avg_volume);
  CHECK(base.max_volume == moved.max_volume);
  CHECK(base.avg_messages == moved.avg_messages);
  CHECK(base.max_messages == moved.max_messages);
  CHECK(base.comp_imbalance == moved.comp_imbalance);
}

TEST_CASE("metrics TSV round-trip") {
  testutil::TempDir dir("tsv");
  const std::vector<MetricsRow> rows = {
      {8, "hypergraph", 123.5, 140, 12, 14, 1.0078125},
      {8, "random", 253.25, 260, 14, 14, 1.046875}};
  write_metrics_tsv(dir / "m.tsv", rows);
  const auto back = read_metrics_tsv(dir / "m.tsv");
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].parts == rows[i].parts);
    CHECK(back[i].method == rows[i].method);
    CHECK(back[i].avg_vol == rows[i].avg_vol);
    CHECK(back[i].max_vol == rows[i].max_vol);
    CHECK(back[i].avg_msg == rows[i].avg_msg);
    CHECK(back[i].max_msg == rows[i].max_msg);
    CHECK(back[i].imb == rows[i].imb);
  }
  CHECK_THROWS_AS(read_metrics_tsv(dir / "missing.tsv"), DataError);
}

TEST_CASE("partition and model disagreements are rejected") {
  const SparseModel model = generate_synthetic(2, 16, 3, 1);
  ModelPartition part;
  part.parts = 2;
  part.layer_rows = {std::vector<int>(16, 0)};  // one layer missing
  part.input_rows.assign(16, 0);
  CHECK_THROWS_AS(build_comm_plan(model, part), DataError);

  part.layer_rows.assign(2, std::vector<int>(16, 0));
  part.input_rows.assign(8, 0);  // wrong input width
  CHECK_THROWS_AS(build_comm_plan(model, part), DataError);
}
