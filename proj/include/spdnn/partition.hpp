#pragma once

#include <vector>

namespace spdnn {

/// Row-to-part assignment for one layer (or for the input vector).
struct LayerPartition {
  int parts = 1;
  std::vector<int> assignment;  // part id per row, ids in [0, parts)

  int size() const { return static_cast<int>(assignment.size()); }
};

/// Assignments for all L layers plus the input-vector rows ("layer 0").
struct ModelPartition {
  int parts = 1;
  std::vector<std::vector<int>> layer_rows;  // [layer-1][row] -> part
  std::vector<int> input_rows;               // [input row] -> part

  int num_layers() const { return static_cast<int>(layer_rows.size()); }

  LayerPartition layer(int k) const {  // k in [1, L]
    return LayerPartition{parts, layer_rows[static_cast<std::size_t>(k - 1)]};
  }
  LayerPartition input() const { return LayerPartition{parts, input_rows}; }

  /// Ownership of the vector feeding layer k: input rows for k == 1,
  /// otherwise the previous layer's row assignment.
  const std::vector<int>& feed_rows(int k) const {
    return k == 1 ? input_rows : layer_rows[static_cast<std::size_t>(k - 2)];
  }
};

}  // namespace spdnn
