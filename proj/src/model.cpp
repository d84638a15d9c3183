#include "spdnn/model.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>

#include "spdnn/rng.hpp"
#include "spdnn/textio.hpp"

namespace spdnn {

namespace fs = std::filesystem;

std::int64_t SparseModel::total_nnz() const {
  std::int64_t n = 0;
  for (const SpMat& w : layers) n += w.nonZeros();
  return n;
}

namespace {

// Builds one random permutation whose positions avoid the taken set. Rows
// are matched greedily to random free columns; a row whose free columns are
// all taken or matched is repaired with an augmenting path, which always
// succeeds here because the remaining positions form a regular bipartite
// graph. `taken[i]` holds row i's forbidden columns, sorted.
class PermutationSampler {
 public:
  PermutationSampler(int n, const std::vector<std::vector<int>>& taken)
      : n_(n), taken_(taken) {}

  bool draw(Rng& rng, std::vector<int>& perm) {
    col_row_.assign(static_cast<std::size_t>(n_), -1);
    unused_.resize(static_cast<std::size_t>(n_));
    unused_pos_.resize(static_cast<std::size_t>(n_));
    for (int c = 0; c < n_; ++c) {
      unused_[static_cast<std::size_t>(c)] = c;
      unused_pos_[static_cast<std::size_t>(c)] = c;
    }

    for (int row = 0; row < n_; ++row) {
      int col = pick_random_free(row, rng);
      if (col >= 0) {
        col_row_[static_cast<std::size_t>(col)] = row;
        remove_unused(col);
        continue;
      }
      visited_.assign(static_cast<std::size_t>(n_), 0);
      if (!augment(row)) return false;
    }
    perm.assign(static_cast<std::size_t>(n_), -1);
    for (int c = 0; c < n_; ++c)
      perm[static_cast<std::size_t>(col_row_[static_cast<std::size_t>(c)])] =
          c;
    return true;
  }

 private:
  bool allowed(int row, int col) const {
    const auto& t = taken_[static_cast<std::size_t>(row)];
    return !std::binary_search(t.begin(), t.end(), col);
  }

  void remove_unused(int col) {
    const int pos = unused_pos_[static_cast<std::size_t>(col)];
    const int last = unused_.back();
    unused_[static_cast<std::size_t>(pos)] = last;
    unused_pos_[static_cast<std::size_t>(last)] = pos;
    unused_.pop_back();
    unused_pos_[static_cast<std::size_t>(col)] = -1;
  }

  int pick_random_free(int row, Rng& rng) {
    if (unused_.empty()) return -1;
    // A few cheap random probes, then one full scan of the free columns.
    for (int t = 0; t < 32; ++t) {
      const int col = unused_[rng.next_index(
          static_cast<std::uint32_t>(unused_.size()))];
      if (allowed(row, col)) return col;
    }
    scratch_.clear();
    for (int col : unused_)
      if (allowed(row, col)) scratch_.push_back(col);
    if (scratch_.empty()) return -1;
    return scratch_[rng.next_index(
        static_cast<std::uint32_t>(scratch_.size()))];
  }

  bool augment(int row) {
    const auto& t = taken_[static_cast<std::size_t>(row)];
    std::size_t skip = 0;
    for (int col = 0; col < n_; ++col) {
      while (skip < t.size() && t[skip] < col) ++skip;
      if (skip < t.size() && t[skip] == col) continue;
      if (visited_[static_cast<std::size_t>(col)]) continue;
      visited_[static_cast<std::size_t>(col)] = 1;
      const int owner = col_row_[static_cast<std::size_t>(col)];
      if (owner < 0 || augment(owner)) {
        col_row_[static_cast<std::size_t>(col)] = row;
        if (owner < 0) remove_unused(col);
        return true;
      }
    }
    return false;
  }

  int n_;
  const std::vector<std::vector<int>>& taken_;
  std::vector<int> col_row_;
  std::vector<int> unused_;
  std::vector<int> unused_pos_;
  std::vector<int> scratch_;
  std::vector<char> visited_;
};

// Block granularity for the structured permutations: the largest power of
// two dividing n that stays at or below max(8, n/16).
int block_size(int n) {
  const int limit = std::max(8, n / 16);
  int b = 1;
  while (b * 2 <= limit && n % (b * 2) == 0) b *= 2;
  return b;
}

// One layer pattern as the union of `degree` position-disjoint permutations.
//
// Permutations compose a block-cyclic shift with a per-permutation
// intra-block scramble. Three quarters of them stay within two blocks, so a
// column's pins concentrate in a handful of nearby row blocks (the locality
// that makes the layers partitionable, as in radix-style synthetic nets);
// the remaining quarter shifts globally so activations still mix across the
// whole network. Local permutations are drawn first, avoiding each other by
// construction (same-shift scrambles never agree at any position); the
// global ones are drawn last through the matching sampler, which avoids all
// taken positions.
std::vector<Entry> permutation_union(int n, int degree, Rng& rng,
                                     int layer_for_errors) {
  const int b = block_size(n);
  const int n_blocks = n / b;
  std::vector<std::vector<int>> row_cols(static_cast<std::size_t>(n));
  for (auto& rc : row_cols) rc.reserve(static_cast<std::size_t>(degree));
  // Per local shift value, the scrambles already used with that shift.
  std::vector<std::vector<std::vector<int>>> used_scrambles(
      static_cast<std::size_t>(std::min(n_blocks, 3)));

  auto record = [&row_cols](const std::vector<int>& perm) {
    for (std::size_t i = 0; i < perm.size(); ++i) {
      auto& rc = row_cols[i];
      rc.insert(std::lower_bound(rc.begin(), rc.end(), perm[i]), perm[i]);
    }
  };

  // Each of the <=3 local shift values admits at most b-1 disjoint
  // scrambles beyond the first; overflow routes to the global sampler.
  const int local_capacity = std::min(n_blocks, 3) * (b - 1);
  const int global_count =
      n_blocks == 1 ? degree
                    : std::max(degree / 4, degree - local_capacity);
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int d = 0; d < degree; ++d) {
    const bool global = d >= degree - global_count;
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      if (global) {
        PermutationSampler sampler(n, row_cols);
        placed = sampler.draw(rng, perm);
        continue;
      }
      const int shift =
          static_cast<int>(rng.next_index(static_cast<std::uint32_t>(
              std::min(n_blocks, 3))));
      // The scramble must differ from every earlier same-shift scramble at
      // every position; that is itself a position-avoidance draw.
      std::vector<std::vector<int>> taken(static_cast<std::size_t>(b));
      for (const auto& prev : used_scrambles[static_cast<std::size_t>(shift)])
        for (int p = 0; p < b; ++p) {
          auto& t = taken[static_cast<std::size_t>(p)];
          t.insert(std::lower_bound(t.begin(), t.end(),
                                    prev[static_cast<std::size_t>(p)]),
                   prev[static_cast<std::size_t>(p)]);
        }
      PermutationSampler sampler(b, taken);
      std::vector<int> scramble;
      if (!sampler.draw(rng, scramble)) continue;
      for (int i = 0; i < n; ++i) {
        const int block = (i / b + shift) % n_blocks;
        perm[static_cast<std::size_t>(i)] =
            block * b + scramble[static_cast<std::size_t>(i % b)];
      }
      used_scrambles[static_cast<std::size_t>(shift)].push_back(scramble);
      placed = true;
    }
    if (!placed)
      throw DataError("generate_synthetic: layer " +
                      std::to_string(layer_for_errors) +
                      ": no collision-free permutation after 64 attempts");
    record(perm);
  }

  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(n) * degree);
  for (int i = 0; i < n; ++i)
    for (int c : row_cols[static_cast<std::size_t>(i)])
      entries.push_back({i, c, 0.0});
  return entries;
}

}  // namespace

SparseModel generate_synthetic(int layers, int neurons, int degree,
                               std::uint64_t seed) {
  if (layers < 1) throw DataError("generate_synthetic: layers must be >= 1");
  if (neurons < 1) throw DataError("generate_synthetic: neurons must be >= 1");
  if (degree < 1 || degree > neurons)
    throw DataError("generate_synthetic: degree must be in [1, neurons]");

  SparseModel model;
  model.neurons = neurons;
  model.input_dim = neurons;
  model.layers.reserve(static_cast<std::size_t>(layers));
  for (int k = 1; k <= layers; ++k) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(k)));
    std::vector<Entry> entries = permutation_union(neurons, degree, rng, k);
    for (Entry& e : entries) e.value = rng.uniform(-1.0, 1.0);
    model.layers.push_back(csr_from_entries(neurons, neurons, entries));
  }
  return model;
}

namespace {

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t read_u32_be(const std::vector<std::uint8_t>& b,
                          std::size_t off) {
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

}  // namespace

IdxImages load_idx_images(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 16)
    throw DataError(path.string() + ": truncated IDX header");
  if (read_u32_be(bytes, 0) != 0x00000803u)
    throw DataError(path.string() + ": bad magic for IDX image file");
  IdxImages out;
  out.count = static_cast<int>(read_u32_be(bytes, 4));
  out.rows = static_cast<int>(read_u32_be(bytes, 8));
  out.cols = static_cast<int>(read_u32_be(bytes, 12));
  const std::size_t expect = std::size_t(out.count) * out.rows * out.cols;
  if (bytes.size() != 16 + expect)
    throw DataError(path.string() + ": payload size " +
                    std::to_string(bytes.size() - 16) +
                    " does not match declared dimensions");
  out.pixels.assign(bytes.begin() + 16, bytes.end());
  return out;
}

std::vector<std::uint8_t> load_idx_labels(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 8)
    throw DataError(path.string() + ": truncated IDX header");
  if (read_u32_be(bytes, 0) != 0x00000801u)
    throw DataError(path.string() + ": bad magic for IDX label file");
  const std::size_t count = read_u32_be(bytes, 4);
  if (bytes.size() != 8 + count)
    throw DataError(path.string() + ": payload size " +
                    std::to_string(bytes.size() - 8) +
                    " does not match declared count");
  return std::vector<std::uint8_t>(bytes.begin() + 8, bytes.end());
}

std::vector<Vec> preprocess_images(const IdxImages& raw, int side,
                                   std::uint8_t threshold) {
  if (side < raw.rows || side < raw.cols)
    throw DataError("preprocess_images: side " + std::to_string(side) +
                    " smaller than image " + std::to_string(raw.rows) + "x" +
                    std::to_string(raw.cols));
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(raw.count));
  for (int i = 0; i < raw.count; ++i) {
    Vec v = Vec::Zero(static_cast<Eigen::Index>(side) * side);
    const std::uint8_t* px = raw.image(i);
    for (int r = 0; r < raw.rows; ++r)
      for (int c = 0; c < raw.cols; ++c)
        if (px[r * raw.cols + c] >= threshold) v[r * side + c] = 1.0;
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<Vec> one_hot_labels(const std::vector<std::uint8_t>& labels,
                                int width) {
  std::vector<Vec> out;
  out.reserve(labels.size());
  for (std::uint8_t d : labels) {
    if (d >= width)
      throw DataError("one_hot_labels: class id " + std::to_string(int(d)) +
                      " >= width " + std::to_string(width));
    Vec v = Vec::Zero(width);
    v[d] = 1.0;
    out.push_back(std::move(v));
  }
  return out;
}

namespace {

std::string layer_file_name(int k) {
  std::ostringstream os;
  os << "layer_";
  std::string n = std::to_string(k);
  for (std::size_t i = n.size(); i < 3; ++i) os << '0';
  os << n << ".txt";
  return os.str();
}

}  // namespace

void save_model(const SparseModel& model, const fs::path& manifest_path) {
  const fs::path dir = manifest_path.parent_path();
  std::ostringstream manifest;
  manifest << "sparsemodel v1\n";
  manifest << "layers " << model.num_layers() << " neurons " << model.neurons
           << " input_dim " << model.input_dim << "\n";
  for (int k = 1; k <= model.num_layers(); ++k) {
    const SpMat& w = model.layer(k);
    const std::string rel = layer_file_name(k);
    manifest << "layer " << k << " nnz " << w.nonZeros() << " file " << rel
             << "\n";
    std::ofstream mf(dir / rel, std::ios::binary);
    if (!mf) throw DataError("cannot write " + (dir / rel).string());
    for (int r = 0; r < w.rows(); ++r)
      for (SpMat::InnerIterator it(w, r); it; ++it)
        mf << (r + 1) << ' ' << (it.col() + 1) << ' '
           << format_double(it.value()) << '\n';
  }
  std::ofstream out(manifest_path, std::ios::binary);
  if (!out) throw DataError("cannot write " + manifest_path.string());
  out << manifest.str();
}

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

SpMat load_layer_matrix(const fs::path& file, int k, int n_rows, int n_cols,
                        std::int64_t nnz) {
  const std::string ctx = "layer " + std::to_string(k);
  const auto lines = read_lines(file);
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(nnz));
  int prev_row = -1, prev_col = -1;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto tok = split_tokens(lines[i]);
    if (tok.size() != 3)
      throw DataError(ctx + ": malformed line " + std::to_string(i + 1) +
                      " in " + file.string());
    const int row = static_cast<int>(parse_int(tok[0], ctx)) - 1;
    const int col = static_cast<int>(parse_int(tok[1], ctx)) - 1;
    const double val = parse_double(tok[2], ctx);
    if (row < 0 || row >= n_rows || col < 0 || col >= n_cols)
      throw DataError(ctx + ": coordinate (" + std::to_string(row + 1) + "," +
                      std::to_string(col + 1) + ") out of declared range");
    if (row < prev_row || (row == prev_row && col <= prev_col))
      throw DataError(ctx + ": coordinates not sorted strictly by (row,col)");
    prev_row = row;
    prev_col = col;
    entries.push_back({row, col, val});
  }
  if (static_cast<std::int64_t>(entries.size()) != nnz)
    throw DataError(ctx + ": expected " + std::to_string(nnz) +
                    " nonzeros, file has " + std::to_string(entries.size()));
  return csr_from_entries(n_rows, n_cols, std::move(entries));
}

}  // namespace

SparseModel load_model(const fs::path& manifest_path) {
  const auto lines = read_lines(manifest_path);
  if (lines.size() < 2 || lines[0] != "sparsemodel v1")
    throw DataError(manifest_path.string() + ": not a sparsemodel v1 manifest");
  const auto head = split_tokens(lines[1]);
  if (head.size() != 6 || head[0] != "layers" || head[2] != "neurons" ||
      head[4] != "input_dim")
    throw DataError(manifest_path.string() + ": malformed header line");
  const std::string ctx = manifest_path.string();
  const int n_layers = static_cast<int>(parse_int(head[1], ctx));
  const int neurons = static_cast<int>(parse_int(head[3], ctx));
  const int input_dim = static_cast<int>(parse_int(head[5], ctx));
  if (n_layers < 1 || neurons < 1 || input_dim < 1)
    throw DataError(ctx + ": non-positive model dimensions");

  SparseModel model;
  model.neurons = neurons;
  model.input_dim = input_dim;
  const fs::path dir = manifest_path.parent_path();
  std::size_t line_idx = 2;
  for (int k = 1; k <= n_layers; ++k, ++line_idx) {
    if (line_idx >= lines.size())
      throw DataError(ctx + ": manifest truncated before layer " +
                      std::to_string(k));
    const auto tok = split_tokens(lines[line_idx]);
    if (tok.size() != 6 || tok[0] != "layer" || tok[2] != "nnz" ||
        tok[4] != "file")
      throw DataError(ctx + ": malformed layer line for layer " +
                      std::to_string(k));
    if (parse_int(tok[1], ctx) != k)
      throw DataError(ctx + ": layer lines out of order at layer " +
                      std::to_string(k));
    const std::int64_t nnz = parse_int(tok[3], ctx);
    const int n_cols = (k == 1) ? input_dim : neurons;
    model.layers.push_back(
        load_layer_matrix(dir / std::string(tok[5]), k, neurons, n_cols, nnz));
  }
  return model;
}

void save_partition(const ModelPartition& part, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "partition v1 parts " << part.parts << " layers "
      << part.num_layers() << "\n";
  for (int k = 1; k <= part.num_layers(); ++k) {
    out << "layer " << k << "\n";
    const auto& rows = part.layer_rows[static_cast<std::size_t>(k - 1)];
    for (std::size_t r = 0; r < rows.size(); ++r)
      out << (r + 1) << ' ' << rows[r] << '\n';
  }
  out << "layer 0\n";
  for (std::size_t r = 0; r < part.input_rows.size(); ++r)
    out << (r + 1) << ' ' << part.input_rows[r] << '\n';
}

ModelPartition load_partition(const fs::path& path) {
  const auto lines = read_lines(path);
  const std::string ctx = path.string();
  if (lines.empty()) throw DataError(ctx + ": empty partition file");
  const auto head = split_tokens(lines[0]);
  if (head.size() != 6 || head[0] != "partition" || head[1] != "v1" ||
      head[2] != "parts" || head[4] != "layers")
    throw DataError(ctx + ": not a partition v1 file");
  ModelPartition part;
  part.parts = static_cast<int>(parse_int(head[3], ctx));
  const int n_layers = static_cast<int>(parse_int(head[5], ctx));
  if (part.parts < 1) throw DataError(ctx + ": parts must be >= 1");
  if (n_layers < 1) throw DataError(ctx + ": layers must be >= 1");

  std::size_t i = 1;
  auto read_block = [&](int expected_layer) {
    if (i >= lines.size() )
      throw DataError(ctx + ": truncated before layer " +
                      std::to_string(expected_layer) + " block");
    const auto tok = split_tokens(lines[i]);
    if (tok.size() != 2 || tok[0] != "layer" ||
        parse_int(tok[1], ctx) != expected_layer)
      throw DataError(ctx + ": expected 'layer " +
                      std::to_string(expected_layer) + "' block header");
    ++i;
    std::vector<int> rows;
    while (i < lines.size()) {
      if (lines[i].empty()) { ++i; continue; }
      const auto t = split_tokens(lines[i]);
      if (t.size() == 2 && t[0] == "layer") break;
      if (t.size() != 2)
        throw DataError(ctx + ": malformed assignment line " +
                        std::to_string(i + 1));
      const long long row = parse_int(t[0], ctx);
      const long long p = parse_int(t[1], ctx);
      if (row != static_cast<long long>(rows.size()) + 1)
        throw DataError(ctx + ": rows must appear as 1..N in order (line " +
                        std::to_string(i + 1) + ")");
      if (p < 0 || p >= part.parts)
        throw DataError(ctx + ": part id " + std::to_string(p) +
                        " out of range");
      rows.push_back(static_cast<int>(p));
      ++i;
    }
    if (rows.empty())
      throw DataError(ctx + ": empty block for layer " +
                      std::to_string(expected_layer));
    return rows;
  };

  for (int k = 1; k <= n_layers; ++k)
    part.layer_rows.push_back(read_block(k));
  part.input_rows = read_block(0);
  if (i < lines.size())
    throw DataError(ctx + ": trailing content after layer 0 block");

  const std::size_t n = part.layer_rows.front().size();
  for (const auto& rows : part.layer_rows)
    if (rows.size() != n)
      throw DataError(ctx + ": layer blocks have differing row counts");
  return part;
}

}  // namespace spdnn
