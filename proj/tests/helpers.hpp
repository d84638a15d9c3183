#pragma once

// Shared test utilities: scratch directories, byte-level file helpers, IDX
// fixture writers, and the small network reconstructed from the worked
// two-processor example (two layers of four neurons).

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "spdnn/model.hpp"
#include "spdnn/partition.hpp"
#include "spdnn/sparse.hpp"

namespace testutil {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = fs::temp_directory_path() /
            ("spdnn_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

inline void append_u32_be(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>((v >> 24) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>(v & 0xff));
}

// Raw IDX image bytes, written independently of the library reader.
inline std::string idx_image_bytes(int count, int rows, int cols,
                                   const std::vector<std::uint8_t>& pixels) {
  std::string s;
  append_u32_be(s, 0x00000803u);
  append_u32_be(s, static_cast<std::uint32_t>(count));
  append_u32_be(s, static_cast<std::uint32_t>(rows));
  append_u32_be(s, static_cast<std::uint32_t>(cols));
  s.append(pixels.begin(), pixels.end());
  return s;
}

inline std::string idx_label_bytes(const std::vector<std::uint8_t>& labels) {
  std::string s;
  append_u32_be(s, 0x00000801u);
  append_u32_be(s, static_cast<std::uint32_t>(labels.size()));
  s.append(labels.begin(), labels.end());
  return s;
}

// Seeded random images: every pixel an independent byte.
inline std::string random_idx_images(int count, int rows, int cols,
                                     std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(count) * rows * cols);
  for (auto& b : px) b = static_cast<std::uint8_t>(eng() & 0xff);
  return idx_image_bytes(count, rows, cols, px);
}

inline std::string random_idx_labels(int count, int classes,
                                     std::uint64_t seed) {
  std::mt19937_64 eng(seed ^ 0x5bd1e995u);
  std::vector<std::uint8_t> lb(static_cast<std::size_t>(count));
  for (auto& b : lb)
    b = static_cast<std::uint8_t>(eng() % static_cast<std::uint64_t>(classes));
  return idx_label_bytes(lb);
}

// ---------------------------------------------------------------------------
// Two-layer, four-neuron fixture on two processors. Patterns (1-indexed):
//   W1 rows: {1,2}, {1,2,3}, {3,4}, {1,3,4}
//   W2 rows: {1,3}, {2,4},   {2,3}, {1,4}
// Parts (0-indexed): layer-1 rows 3,4 on part 0 and rows 1,2 on part 1;
// layer-2 rows 1,2 on part 0 and rows 3,4 on part 1. Under that layout the
// layer-2 exchange is exactly rows {3,4} from part 0 to part 1 and rows
// {1,2} from part 1 to part 0.
// ---------------------------------------------------------------------------

inline spdnn::SparseModel worked_example_model() {
  using spdnn::Entry;
  auto with_values = [](std::vector<Entry> pattern) {
    double v = 0.25;
    for (Entry& e : pattern) {
      e.value = v;
      v = v >= 0.85 ? 0.25 : v + 0.1;
    }
    return pattern;
  };
  spdnn::SparseModel model;
  model.neurons = 4;
  model.input_dim = 4;
  model.layers.push_back(spdnn::csr_from_entries(
      4, 4,
      with_values({{0, 0, 0}, {0, 1, 0}, {1, 0, 0}, {1, 1, 0}, {1, 2, 0},
                   {2, 2, 0}, {2, 3, 0}, {3, 0, 0}, {3, 2, 0}, {3, 3, 0}})));
  model.layers.push_back(spdnn::csr_from_entries(
      4, 4,
      with_values({{0, 0, 0}, {0, 2, 0}, {1, 1, 0}, {1, 3, 0}, {2, 1, 0},
                   {2, 2, 0}, {3, 0, 0}, {3, 3, 0}})));
  return model;
}

inline spdnn::ModelPartition worked_example_partition() {
  spdnn::ModelPartition part;
  part.parts = 2;
  part.layer_rows = {{1, 1, 0, 0}, {0, 0, 1, 1}};
  part.input_rows = {1, 1, 0, 0};
  return part;
}

}  // namespace testutil
