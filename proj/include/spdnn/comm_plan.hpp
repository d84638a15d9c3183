#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spdnn/model.hpp"
#include "spdnn/partition.hpp"

namespace spdnn {

/// Rows exchanged with one peer: global row ids, ascending, nonempty.
struct PeerRows {
  int peer = 0;
  std::vector<int> rows;
};

/// Per-layer exchange maps, one list of peers (ascending) per rank.
/// xsend/xrecv carry activation entries forward; ssend/srecv carry the
/// partial transpose products back and mirror them: ssend[m] has the same
/// row sets as xrecv[m], srecv[m] the same as xsend[m].
struct LayerComm {
  std::vector<std::vector<PeerRows>> xsend, xrecv, ssend, srecv;
};

struct CommPlan {
  int parts = 1;
  std::vector<LayerComm> layers;

  int num_layers() const { return static_cast<int>(layers.size()); }
  const LayerComm& layer(int k) const {  // k in [1, L]
    return layers[static_cast<std::size_t>(k - 1)];
  }
  std::int64_t layer_words(int k) const;  // X plus S words in layer k
  std::int64_t total_words() const;
};

/// Rank m sends row j of the layer-k input vector to rank n exactly when m
/// owns row j on the feeding side and some row of layer k owned by n has a
/// nonzero in column j. The S maps are the duals.
CommPlan build_comm_plan(const SparseModel& model, const ModelPartition& part);

struct CommMetrics {
  int parts = 1;
  std::vector<std::int64_t> send_words;     // per rank, both phases
  std::vector<std::int64_t> send_messages;  // per rank
  std::vector<std::int64_t> flops;          // per rank, one SGD step
  double avg_volume = 0, max_volume = 0;
  double avg_messages = 0, max_messages = 0;
  double comp_imbalance = 1.0;  // max flops / avg flops
};

CommMetrics compute_metrics(const CommPlan& plan, const SparseModel& model,
                            const ModelPartition& part);

struct VolumeIdentityLayer {
  int layer = 0;
  std::int64_t plan_words = 0;
  std::int64_t hypergraph_words = 0;  // sum of 2 * (lambda - 1) over nets
};

struct VolumeIdentityReport {
  std::vector<VolumeIdentityLayer> layers;
  bool all_equal = true;
};

/// Checks, per layer, that the planned word count equals the connectivity
/// volume of the phase hypergraph. Mismatches are reported, never thrown.
VolumeIdentityReport verify_volume_identity(const CommPlan& plan,
                                            const SparseModel& model,
                                            const ModelPartition& part);

struct MetricsRow {
  int parts = 1;
  std::string method;
  double avg_vol = 0, max_vol = 0, avg_msg = 0, max_msg = 0, imb = 1.0;
};

MetricsRow to_row(const CommMetrics& m, const std::string& method);

/// Tab-separated, header `P method avg_vol max_vol avg_msg max_msg imb`.
void write_metrics_tsv(const std::filesystem::path& path,
                       const std::vector<MetricsRow>& rows);

std::vector<MetricsRow> read_metrics_tsv(const std::filesystem::path& path);

}  // namespace spdnn
