#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "spdnn/model.hpp"
#include "spdnn/partition.hpp"
#include "spdnn/sparse.hpp"

namespace spdnn {

/// Hypergraph for one partitioning phase. One free vertex per matrix row
/// (weight = nnz of the row), one net per column whose free pins are the
/// rows with a nonzero in that column. A net may carry one fixed pin: the
/// part that owns the column's input entry, preassigned by the previous
/// phase. net_fixed_part[j] == -1 means net j has no fixed pin (first
/// phase, where no predecessor assignment exists).
struct PhaseHypergraph {
  int n_free = 0;
  std::vector<std::int64_t> vertex_weights;
  std::vector<std::vector<int>> net_pins;  // ascending vertex ids
  std::vector<int> net_fixed_part;
  int net_cost = 2;

  int n_nets() const { return static_cast<int>(net_pins.size()); }
  int n_fixed() const;
};

PhaseHypergraph build_phase_hypergraph(const SpMat& w);
PhaseHypergraph build_phase_hypergraph(const SpMat& w,
                                       const LayerPartition& prev);

/// Connectivity cut: sum over nets of cost * (lambda - 1), where lambda
/// counts the distinct parts of a net's free pins plus its fixed pin.
std::int64_t cut_size(const PhaseHypergraph& h, const LayerPartition& part);

/// Max part weight over average part weight; fixed pins carry no weight.
/// 1.0 when the hypergraph has no weight at all.
double imbalance(const PhaseHypergraph& h, const LayerPartition& part);

struct FmConfig {
  int restarts = 4;
  int max_passes = 16;
  int min_stall = 32;  // a pass stops after max(min_stall, n/16)
                       // consecutive non-improving moves
};

/// Direct K-way FM refinement of the connectivity cut under the balance cap
/// avg * (1 + epsilon), relaxed to the heaviest vertex weight when a single
/// vertex exceeds the cap. Fixed pins never move but count toward lambda.
/// Runs `restarts` seeded starts (the first one is the plain random
/// baseline assignment) and keeps the best feasible result, ties broken by
/// restart index. Deterministic per seed.
LayerPartition partition_fm(const PhaseHypergraph& h, int parts,
                            double epsilon, std::uint64_t seed,
                            const FmConfig& config = {});

/// Uniformly random assignment with part sizes differing by at most one.
LayerPartition partition_random(int n, int parts, std::uint64_t seed);

enum class PartitionMethod { hypergraph, random };

PartitionMethod parse_method(std::string_view name);

/// Partitions every layer of the model. The hypergraph method runs one FM
/// phase per layer, anchoring each phase's nets to the previous phase's
/// assignment through fixed pins, then assigns each input row to the
/// connected part with the fewest input rows so far (ties to the lowest
/// part id; rows processed in ascending order). The random method assigns
/// every layer and the input rows uniformly at random.
ModelPartition partition_model(const SparseModel& model, int parts,
                               PartitionMethod method, double epsilon,
                               std::uint64_t seed, const FmConfig& config = {});

/// Text dump: `hgr v1`, a size line, then one line per net listing the
/// fixed pin (prefixed 'f') followed by the free pin ids, all 0-indexed.
void save_hypergraph(const PhaseHypergraph& h,
                     const std::filesystem::path& path);

}  // namespace spdnn
