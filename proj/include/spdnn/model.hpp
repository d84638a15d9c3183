#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "spdnn/partition.hpp"
#include "spdnn/sparse.hpp"

namespace spdnn {

/// A sparse DNN: L layer matrices. Layer 1 is neurons x input_dim, every
/// later layer is neurons x neurons.
struct SparseModel {
  std::vector<SpMat> layers;
  int neurons = 0;
  int input_dim = 0;

  int num_layers() const { return static_cast<int>(layers.size()); }
  const SpMat& layer(int k) const {  // k in [1, L]
    return layers[static_cast<std::size_t>(k - 1)];
  }
  SpMat& layer(int k) { return layers[static_cast<std::size_t>(k - 1)]; }
  std::int64_t total_nnz() const;
};

struct Dataset {
  std::vector<Vec> inputs;  // 0/1 entries, length input_dim
  std::vector<Vec> labels;  // one-hot, length neurons

  std::size_t size() const { return inputs.size(); }
};

/// Random sparse model where every layer is the union of `degree` disjoint
/// permutation matrices: exactly `degree` nonzeros per row and per column.
/// Values are i.i.d. uniform on [-1, 1]. Deterministic per seed.
/// Throws DataError when degree > neurons or when a non-colliding
/// permutation cannot be drawn within 64 attempts.
SparseModel generate_synthetic(int layers, int neurons, int degree,
                               std::uint64_t seed);

/// Raw images from an IDX file (magic 0x00000803).
struct IdxImages {
  int count = 0;
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major

  const std::uint8_t* image(int i) const {
    return pixels.data() + static_cast<std::size_t>(i) * rows * cols;
  }
};

IdxImages load_idx_images(const std::filesystem::path& path);

/// Labels from an IDX file (magic 0x00000801).
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path);

/// Thresholds each pixel (byte >= threshold -> 1) and embeds the image at
/// the top-left corner of a side x side canvas, zero padding the rest.
/// Output vectors are flattened row-major, length side^2.
std::vector<Vec> preprocess_images(const IdxImages& raw, int side,
                                   std::uint8_t threshold);

/// Class ids to one-hot vectors of the given width.
std::vector<Vec> one_hot_labels(const std::vector<std::uint8_t>& labels,
                                int width);

/// Writes the manifest plus one matrix file per layer next to it.
/// Round-trip exact: load_model(save_model(m)) reproduces m bit for bit.
void save_model(const SparseModel& model,
                const std::filesystem::path& manifest_path);

SparseModel load_model(const std::filesystem::path& manifest_path);

void save_partition(const ModelPartition& part,
                    const std::filesystem::path& path);

ModelPartition load_partition(const std::filesystem::path& path);

}  // namespace spdnn
