#include "spdnn/hypergraph.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <string>

#include "spdnn/rng.hpp"

namespace spdnn {

int PhaseHypergraph::n_fixed() const {
  int n = 0;
  for (int f : net_fixed_part) n += (f >= 0);
  return n;
}

namespace {

PhaseHypergraph build_base(const SpMat& w) {
  PhaseHypergraph h;
  h.n_free = static_cast<int>(w.rows());
  h.vertex_weights.resize(static_cast<std::size_t>(w.rows()));
  h.net_pins.assign(static_cast<std::size_t>(w.cols()), {});
  h.net_fixed_part.assign(static_cast<std::size_t>(w.cols()), -1);
  for (int r = 0; r < w.rows(); ++r) {
    h.vertex_weights[static_cast<std::size_t>(r)] =
        w.outerIndexPtr()[r + 1] - w.outerIndexPtr()[r];
    for (SpMat::InnerIterator it(w, r); it; ++it)
      h.net_pins[static_cast<std::size_t>(it.col())].push_back(r);
  }
  return h;
}

}  // namespace

PhaseHypergraph build_phase_hypergraph(const SpMat& w) {
  return build_base(w);
}

PhaseHypergraph build_phase_hypergraph(const SpMat& w,
                                       const LayerPartition& prev) {
  if (prev.size() != static_cast<int>(w.cols()))
    throw DataError("build_phase_hypergraph: previous assignment covers " +
                    std::to_string(prev.size()) + " rows, matrix has " +
                    std::to_string(w.cols()) + " columns");
  PhaseHypergraph h = build_base(w);
  for (int j = 0; j < static_cast<int>(w.cols()); ++j) {
    const int p = prev.assignment[static_cast<std::size_t>(j)];
    if (p < 0 || p >= prev.parts)
      throw DataError("build_phase_hypergraph: part id out of range for "
                      "column " + std::to_string(j));
    h.net_fixed_part[static_cast<std::size_t>(j)] = p;
  }
  return h;
}

namespace {

void check_assignment(const PhaseHypergraph& h, const LayerPartition& part) {
  if (part.size() != h.n_free)
    throw DataError("assignment covers " + std::to_string(part.size()) +
                    " vertices, hypergraph has " + std::to_string(h.n_free));
  for (int p : part.assignment)
    if (p < 0 || p >= part.parts)
      throw DataError("assignment contains part id out of range");
}

// Distinct parts touched by a net (free pins plus fixed pin).
int net_lambda(const PhaseHypergraph& h, const std::vector<int>& assignment,
               int net, std::vector<int>& stamp, int generation) {
  int lambda = 0;
  const int f = h.net_fixed_part[static_cast<std::size_t>(net)];
  if (f >= 0) {
    stamp[static_cast<std::size_t>(f)] = generation;
    ++lambda;
  }
  for (int v : h.net_pins[static_cast<std::size_t>(net)]) {
    const int p = assignment[static_cast<std::size_t>(v)];
    if (stamp[static_cast<std::size_t>(p)] != generation) {
      stamp[static_cast<std::size_t>(p)] = generation;
      ++lambda;
    }
  }
  return lambda;
}

}  // namespace

std::int64_t cut_size(const PhaseHypergraph& h, const LayerPartition& part) {
  check_assignment(h, part);
  std::vector<int> stamp(static_cast<std::size_t>(part.parts), -1);
  std::int64_t cut = 0;
  for (int n = 0; n < h.n_nets(); ++n) {
    const int lambda = net_lambda(h, part.assignment, n, stamp, n);
    if (lambda > 1) cut += std::int64_t(h.net_cost) * (lambda - 1);
  }
  return cut;
}

double imbalance(const PhaseHypergraph& h, const LayerPartition& part) {
  check_assignment(h, part);
  std::vector<std::int64_t> load(static_cast<std::size_t>(part.parts), 0);
  std::int64_t total = 0;
  for (int v = 0; v < h.n_free; ++v) {
    const std::int64_t w = h.vertex_weights[static_cast<std::size_t>(v)];
    load[static_cast<std::size_t>(part.assignment[static_cast<std::size_t>(v)])] += w;
    total += w;
  }
  if (total == 0) return 1.0;
  const double avg = double(total) / double(part.parts);
  return double(*std::max_element(load.begin(), load.end())) / avg;
}

LayerPartition partition_random(int n, int parts, std::uint64_t seed) {
  if (parts < 1) throw InfeasibleError("partition_random: parts must be >= 1");
  if (n < 0) throw DataError("partition_random: negative size");
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::size_t at = 0;
  for (int p = 0; p < parts; ++p) {
    const int count = n / parts + (p < n % parts ? 1 : 0);
    for (int i = 0; i < count; ++i) ids[at++] = p;
  }
  Rng rng(seed);
  rng.shuffle(ids);
  return LayerPartition{parts, std::move(ids)};
}

// ---------------------------------------------------------------------------
// K-way FM refinement.
//
// Gain bookkeeping follows the usual two-table scheme for the connectivity
// metric. With sigma(n,p) = number of net n's free pins in part p and f(n)
// its fixed part:
//
//   gain(v: a -> b) = sum over nets n of v of
//         cost * [sigma(n,a) == 1 and f(n) != a]     (net leaves part a)
//       - cost * [sigma(n,b) == 0 and f(n) != b]     (net enters part b)
//
// The first summand depends only on v (rem table), the second on the target
// part (pen table). Both are maintained incrementally as moves change the
// sigma counts across the 0/1 and 1/2 boundaries.
// ---------------------------------------------------------------------------

namespace {

struct HeapEntry {
  int gain;
  int vertex;
  int target;
  std::uint32_t version;
};

struct HeapLess {
  // priority_queue keeps the "largest" on top: highest gain, then lowest
  // vertex id, then lowest target part id.
  bool operator()(const HeapEntry& a, const HeapEntry& b) const {
    if (a.gain != b.gain) return a.gain < b.gain;
    if (a.vertex != b.vertex) return a.vertex > b.vertex;
    if (a.target != b.target) return a.target > b.target;
    return a.version < b.version;
  }
};

class FmInstance {
 public:
  FmInstance(const PhaseHypergraph& h, int parts, double epsilon)
      : h_(h), parts_(parts) {
    vertex_nets_.assign(static_cast<std::size_t>(h.n_free), {});
    for (int n = 0; n < h.n_nets(); ++n)
      for (int v : h.net_pins[static_cast<std::size_t>(n)])
        vertex_nets_[static_cast<std::size_t>(v)].push_back(n);

    std::int64_t total = 0, max_w = 0;
    for (std::int64_t w : h.vertex_weights) {
      total += w;
      max_w = std::max(max_w, w);
    }
    cap_ = std::max(double(total) * (1.0 + epsilon) / double(parts),
                    double(max_w));
    // Moves may overshoot the cap by one vertex mid-pass; the rollback only
    // keeps prefixes whose loads all satisfy the real cap again.
    pass_cap_ = cap_ + double(max_w);
  }

  LayerPartition refine(std::vector<int> assignment, const FmConfig& cfg) {
    assignment_ = std::move(assignment);
    for (int pass = 0; pass < cfg.max_passes; ++pass)
      if (!run_pass(cfg)) break;
    return LayerPartition{parts_, assignment_};
  }

 private:
  bool feasible(int v, int target) const {
    const double w =
        double(h_.vertex_weights[static_cast<std::size_t>(v)]);
    return double(load_[static_cast<std::size_t>(target)]) + w <=
           pass_cap_ + 1e-9;
  }

  bool part_overloaded(int p) const {
    return double(load_[static_cast<std::size_t>(p)]) > cap_ + 1e-9;
  }

  int gain(int v, int target) const {
    return rem_[static_cast<std::size_t>(v)] -
           pen_[static_cast<std::size_t>(v) * parts_ + target];
  }

  // Best feasible move of v, ties to the lowest target part id.
  bool best_move(int v, HeapEntry& out) const {
    const int a = assignment_[static_cast<std::size_t>(v)];
    bool found = false;
    int best_gain = 0, best_target = -1;
    for (int b = 0; b < parts_; ++b) {
      if (b == a || !feasible(v, b)) continue;
      const int g = gain(v, b);
      if (!found || g > best_gain) {
        found = true;
        best_gain = g;
        best_target = b;
      }
    }
    if (!found) return false;
    out = {best_gain, v, best_target, version_[static_cast<std::size_t>(v)]};
    return true;
  }

  void rebuild_tables() {
    const std::size_t nets = static_cast<std::size_t>(h_.n_nets());
    sigma_.assign(nets * parts_, 0);
    load_.assign(static_cast<std::size_t>(parts_), 0);
    rem_.assign(static_cast<std::size_t>(h_.n_free), 0);
    pen_.assign(static_cast<std::size_t>(h_.n_free) * parts_, 0);
    cut_ = 0;
    for (int v = 0; v < h_.n_free; ++v)
      load_[static_cast<std::size_t>(
          assignment_[static_cast<std::size_t>(v)])] +=
          h_.vertex_weights[static_cast<std::size_t>(v)];
    for (int n = 0; n < h_.n_nets(); ++n) {
      int* s = &sigma_[static_cast<std::size_t>(n) * parts_];
      for (int v : h_.net_pins[static_cast<std::size_t>(n)])
        ++s[assignment_[static_cast<std::size_t>(v)]];
      const int f = h_.net_fixed_part[static_cast<std::size_t>(n)];
      int lambda = (f >= 0 && s[f] == 0) ? 1 : 0;
      for (int p = 0; p < parts_; ++p) lambda += (s[p] > 0);
      if (lambda > 1) cut_ += std::int64_t(h_.net_cost) * (lambda - 1);
      for (int v : h_.net_pins[static_cast<std::size_t>(n)]) {
        const int a = assignment_[static_cast<std::size_t>(v)];
        if (s[a] == 1 && f != a)
          rem_[static_cast<std::size_t>(v)] += h_.net_cost;
        int* pen_row = &pen_[static_cast<std::size_t>(v) * parts_];
        for (int p = 0; p < parts_; ++p)
          if (s[p] == 0 && f != p) pen_row[p] += h_.net_cost;
      }
    }
  }

  void touch(int v) {
    if (locked_[static_cast<std::size_t>(v)]) return;
    ++version_[static_cast<std::size_t>(v)];
    if (entries_[static_cast<std::size_t>(v)] == 0) {
      HeapEntry e;
      if (best_move(v, e)) {
        heap_.push(e);
        ++entries_[static_cast<std::size_t>(v)];
      }
    }
  }

  void apply_move(int v, int b) {
    const int a = assignment_[static_cast<std::size_t>(v)];
    for (int n : vertex_nets_[static_cast<std::size_t>(v)]) {
      int* s = &sigma_[static_cast<std::size_t>(n) * parts_];
      const int f = h_.net_fixed_part[static_cast<std::size_t>(n)];
      const auto& pins = h_.net_pins[static_cast<std::size_t>(n)];

      // Source part loses a pin.
      if (s[a] == 1) {
        if (f != a) {
          cut_ -= h_.net_cost;
          for (int u : pins)
            if (u != v) {
              pen_[static_cast<std::size_t>(u) * parts_ + a] += h_.net_cost;
              touch(u);
            }
        }
      } else if (s[a] == 2 && f != a) {
        for (int u : pins)
          if (u != v && assignment_[static_cast<std::size_t>(u)] == a) {
            rem_[static_cast<std::size_t>(u)] += h_.net_cost;
            touch(u);
          }
      }
      // Target part gains a pin.
      if (s[b] == 0) {
        if (f != b) {
          cut_ += h_.net_cost;
          for (int u : pins)
            if (u != v) {
              pen_[static_cast<std::size_t>(u) * parts_ + b] -= h_.net_cost;
              touch(u);
            }
        }
      } else if (s[b] == 1 && f != b) {
        for (int u : pins)
          if (u != v && assignment_[static_cast<std::size_t>(u)] == b) {
            rem_[static_cast<std::size_t>(u)] -= h_.net_cost;
            touch(u);
          }
      }
      --s[a];
      ++s[b];
    }
    const std::int64_t w = h_.vertex_weights[static_cast<std::size_t>(v)];
    load_[static_cast<std::size_t>(a)] -= w;
    load_[static_cast<std::size_t>(b)] += w;
    assignment_[static_cast<std::size_t>(v)] = b;
  }

  // One FM pass with rollback to the best prefix among states whose loads
  // all satisfy the real cap. Mid-pass states may exceed it by one vertex
  // (pass_cap_). States are ranked by (any part overloaded, cut); returns
  // true when the pass strictly improved that key.
  bool run_pass(const FmConfig& cfg) {
    rebuild_tables();
    locked_.assign(static_cast<std::size_t>(h_.n_free), 0);
    version_.assign(static_cast<std::size_t>(h_.n_free), 0);
    entries_.assign(static_cast<std::size_t>(h_.n_free), 0);
    heap_ = {};
    for (int v = 0; v < h_.n_free; ++v) {
      HeapEntry e;
      if (best_move(v, e)) {
        heap_.push(e);
        ++entries_[static_cast<std::size_t>(v)];
      }
    }

    int overloaded = 0;
    for (int p = 0; p < parts_; ++p) overloaded += part_overloaded(p);

    using Key = std::pair<int, std::int64_t>;  // (overloaded?, cut)
    const Key start_key{overloaded > 0 ? 1 : 0, cut_};
    Key best_key = start_key;
    std::vector<std::pair<int, int>> moves;  // (vertex, former part)
    std::size_t best_len = 0;
    int stall = 0;
    const int stall_limit = std::max(cfg.min_stall, h_.n_free / 16);

    while (!heap_.empty() && stall < stall_limit) {
      const HeapEntry e = heap_.top();
      heap_.pop();
      --entries_[static_cast<std::size_t>(e.vertex)];
      if (locked_[static_cast<std::size_t>(e.vertex)]) continue;
      const bool stale =
          e.version != version_[static_cast<std::size_t>(e.vertex)];
      if (stale || !feasible(e.vertex, e.target) ||
          e.gain != gain(e.vertex, e.target)) {
        HeapEntry fresh;
        if (best_move(e.vertex, fresh)) {
          heap_.push(fresh);
          ++entries_[static_cast<std::size_t>(e.vertex)];
        }
        continue;
      }
      const int from = assignment_[static_cast<std::size_t>(e.vertex)];
      moves.emplace_back(e.vertex, from);
      overloaded -= part_overloaded(from) + part_overloaded(e.target);
      apply_move(e.vertex, e.target);
      overloaded += part_overloaded(from) + part_overloaded(e.target);
      locked_[static_cast<std::size_t>(e.vertex)] = 1;
      const Key key{overloaded > 0 ? 1 : 0, cut_};
      if (key < best_key) {
        best_key = key;
        best_len = moves.size();
        stall = 0;
      } else {
        ++stall;
      }
    }

    // Undo everything past the best prefix.
    for (std::size_t i = moves.size(); i > best_len; --i)
      assignment_[static_cast<std::size_t>(moves[i - 1].first)] =
          moves[i - 1].second;
    return best_key < start_key;
  }

  const PhaseHypergraph& h_;
  int parts_;
  double cap_;
  double pass_cap_;
  std::vector<std::vector<int>> vertex_nets_;

  std::vector<int> assignment_;
  std::vector<int> sigma_;
  std::vector<std::int64_t> load_;
  std::vector<int> rem_;
  std::vector<int> pen_;
  std::int64_t cut_ = 0;
  std::vector<char> locked_;
  std::vector<std::uint32_t> version_;
  std::vector<int> entries_;
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapLess> heap_;
};

// Grows parts one at a time around random seeds, absorbing the unassigned
// vertex with the most pins already inside the growing part. Finds block
// and band structure that a random start hides from flat refinement.
std::vector<int> greedy_growing_initial(const PhaseHypergraph& h, int parts,
                                        std::uint64_t seed) {
  std::int64_t total = 0;
  for (std::int64_t w : h.vertex_weights) total += w;
  Rng rng(seed);
  std::vector<int> assignment(static_cast<std::size_t>(h.n_free), -1);
  std::vector<int> score(static_cast<std::size_t>(h.n_free), 0);
  std::vector<std::vector<int>> vertex_nets(
      static_cast<std::size_t>(h.n_free));
  for (int n = 0; n < h.n_nets(); ++n)
    for (int v : h.net_pins[static_cast<std::size_t>(n)])
      vertex_nets[static_cast<std::size_t>(v)].push_back(n);

  int unassigned = h.n_free;
  auto absorb = [&](int v, int part) {
    assignment[static_cast<std::size_t>(v)] = part;
    --unassigned;
    for (int n : vertex_nets[static_cast<std::size_t>(v)])
      for (int u : h.net_pins[static_cast<std::size_t>(n)])
        if (assignment[static_cast<std::size_t>(u)] < 0)
          ++score[static_cast<std::size_t>(u)];
  };

  for (int p = 0; p < parts - 1 && unassigned > 0; ++p) {
    std::fill(score.begin(), score.end(), 0);
    const std::int64_t target = total / parts;
    std::int64_t load = 0;
    // Random unassigned seed vertex.
    int start = -1;
    std::uint32_t pick = rng.next_index(static_cast<std::uint32_t>(unassigned));
    for (int v = 0; v < h.n_free && start < 0; ++v)
      if (assignment[static_cast<std::size_t>(v)] < 0 && pick-- == 0)
        start = v;
    absorb(start, p);
    load += h.vertex_weights[static_cast<std::size_t>(start)];
    while (load < target && unassigned > 0) {
      int best = -1;
      for (int v = 0; v < h.n_free; ++v)
        if (assignment[static_cast<std::size_t>(v)] < 0 &&
            (best < 0 || score[static_cast<std::size_t>(v)] >
                             score[static_cast<std::size_t>(best)]))
          best = v;
      absorb(best, p);
      load += h.vertex_weights[static_cast<std::size_t>(best)];
    }
  }
  for (int v = 0; v < h.n_free; ++v)
    if (assignment[static_cast<std::size_t>(v)] < 0)
      assignment[static_cast<std::size_t>(v)] = parts - 1;
  return assignment;
}

// Each vertex goes to the part holding the plurality of its nets' fixed
// pins, budget permitting. Anchors the assignment to the previous phase.
std::vector<int> greedy_pull_initial(const PhaseHypergraph& h, int parts,
                                     double cap) {
  std::vector<int> assignment(static_cast<std::size_t>(h.n_free), 0);
  std::vector<std::int64_t> load(static_cast<std::size_t>(parts), 0);
  std::vector<std::vector<int>> vertex_fixed(
      static_cast<std::size_t>(h.n_free));
  for (int n = 0; n < h.n_nets(); ++n) {
    const int f = h.net_fixed_part[static_cast<std::size_t>(n)];
    if (f < 0) continue;
    for (int v : h.net_pins[static_cast<std::size_t>(n)])
      vertex_fixed[static_cast<std::size_t>(v)].push_back(f);
  }
  std::vector<int> votes(static_cast<std::size_t>(parts), 0);
  for (int v = 0; v < h.n_free; ++v) {
    std::fill(votes.begin(), votes.end(), 0);
    for (int f : vertex_fixed[static_cast<std::size_t>(v)])
      ++votes[static_cast<std::size_t>(f)];
    const double w = double(h.vertex_weights[static_cast<std::size_t>(v)]);
    int best = -1;
    for (int p = 0; p < parts; ++p) {
      if (double(load[static_cast<std::size_t>(p)]) + w > cap + 1e-9)
        continue;
      if (best < 0 || votes[static_cast<std::size_t>(p)] >
                          votes[static_cast<std::size_t>(best)])
        best = p;
    }
    if (best < 0) {  // nothing fits; least loaded part
      best = 0;
      for (int p = 1; p < parts; ++p)
        if (load[static_cast<std::size_t>(p)] <
            load[static_cast<std::size_t>(best)])
          best = p;
    }
    assignment[static_cast<std::size_t>(v)] = best;
    load[static_cast<std::size_t>(best)] +=
        h.vertex_weights[static_cast<std::size_t>(v)];
  }
  return assignment;
}

}  // namespace

LayerPartition partition_fm(const PhaseHypergraph& h, int parts,
                            double epsilon, std::uint64_t seed,
                            const FmConfig& config) {
  if (parts < 1) throw InfeasibleError("partition_fm: parts must be >= 1");
  if (parts == 1 || h.n_free == 0)
    return LayerPartition{parts,
                          std::vector<int>(static_cast<std::size_t>(h.n_free), 0)};

  std::int64_t total = 0, max_w = 0;
  for (std::int64_t w : h.vertex_weights) {
    total += w;
    max_w = std::max(max_w, w);
  }
  const double strict_cap = double(total) * (1.0 + epsilon) / double(parts);
  const double cap = std::max(strict_cap, double(max_w));

  LayerPartition best;
  std::int64_t best_cut = 0;
  bool best_feasible = false, have_best = false;
  const int restarts = std::max(1, config.restarts);
  for (int r = 0; r < restarts; ++r) {
    // Restart 0 refines the plain random baseline for the same seed, so an
    // FM result never ends up worse than partition_random(n, parts, seed).
    // Restart 1 anchors to the previous phase through the fixed pins,
    // restart 2 grows parts greedily, the rest start from fresh random
    // assignments.
    std::vector<int> initial;
    if (r == 0)
      initial = partition_random(h.n_free, parts, seed).assignment;
    else if (r == 1 && h.n_fixed() > 0)
      initial = greedy_pull_initial(h, parts, cap);
    else if (r == 1 || r == 2)
      initial = greedy_growing_initial(h, parts,
                                       mix_seed(seed, 2000 + std::uint64_t(r)));
    else
      initial = partition_random(h.n_free, parts,
                                 mix_seed(seed, 1000 + std::uint64_t(r)))
                    .assignment;

    FmInstance fm(h, parts, epsilon);
    LayerPartition result = fm.refine(std::move(initial), config);
    const std::int64_t cut = cut_size(h, result);
    const bool feas = imbalance(h, result) <= (1.0 + epsilon) + 1e-9;
    const bool better =
        !have_best || (feas && !best_feasible) ||
        (feas == best_feasible && cut < best_cut);
    if (better) {
      best = std::move(result);
      best_cut = cut;
      best_feasible = feas;
      have_best = true;
    }
  }
  return best;
}

PartitionMethod parse_method(std::string_view name) {
  if (name == "hypergraph") return PartitionMethod::hypergraph;
  if (name == "random") return PartitionMethod::random;
  throw DataError("unknown partition method '" + std::string(name) + "'");
}

namespace {

// Input rows go to the connected part with the fewest input rows so far,
// ties to the lowest part id; rows without any connected part fall back to
// the globally least counted part.
std::vector<int> assign_input_rows(const SpMat& w1,
                                   const LayerPartition& layer1) {
  const int parts = layer1.parts;
  std::vector<std::vector<int>> col_parts(static_cast<std::size_t>(w1.cols()));
  for (int r = 0; r < w1.rows(); ++r) {
    const int p = layer1.assignment[static_cast<std::size_t>(r)];
    for (SpMat::InnerIterator it(w1, r); it; ++it) {
      auto& cp = col_parts[static_cast<std::size_t>(it.col())];
      if (std::find(cp.begin(), cp.end(), p) == cp.end()) cp.push_back(p);
    }
  }
  std::vector<std::int64_t> count(static_cast<std::size_t>(parts), 0);
  std::vector<int> input(static_cast<std::size_t>(w1.cols()), 0);
  for (int j = 0; j < static_cast<int>(w1.cols()); ++j) {
    auto& cp = col_parts[static_cast<std::size_t>(j)];
    int best = -1;
    if (cp.empty()) {
      best = 0;
      for (int p = 1; p < parts; ++p)
        if (count[static_cast<std::size_t>(p)] <
            count[static_cast<std::size_t>(best)])
          best = p;
    } else {
      std::sort(cp.begin(), cp.end());
      best = cp.front();
      for (int p : cp)
        if (count[static_cast<std::size_t>(p)] <
            count[static_cast<std::size_t>(best)])
          best = p;
    }
    input[static_cast<std::size_t>(j)] = best;
    ++count[static_cast<std::size_t>(best)];
  }
  return input;
}

}  // namespace

ModelPartition partition_model(const SparseModel& model, int parts,
                               PartitionMethod method, double epsilon,
                               std::uint64_t seed, const FmConfig& config) {
  if (parts < 1) throw InfeasibleError("partition_model: parts must be >= 1");
  if (model.num_layers() < 1)
    throw DataError("partition_model: model has no layers");

  ModelPartition part;
  part.parts = parts;
  if (method == PartitionMethod::random) {
    for (int k = 1; k <= model.num_layers(); ++k)
      part.layer_rows.push_back(
          partition_random(model.neurons, parts, mix_seed(seed, std::uint64_t(k)))
              .assignment);
    part.input_rows =
        partition_random(model.input_dim, parts, mix_seed(seed, 0)).assignment;
    return part;
  }

  for (int k = 1; k <= model.num_layers(); ++k) {
    PhaseHypergraph h =
        (k == 1)
            ? build_phase_hypergraph(model.layer(1))
            : build_phase_hypergraph(model.layer(k),
                                     part.layer(k - 1));
    LayerPartition assignment =
        partition_fm(h, parts, epsilon, mix_seed(seed, std::uint64_t(k)), config);
    part.layer_rows.push_back(std::move(assignment.assignment));
  }
  part.input_rows = assign_input_rows(model.layer(1), part.layer(1));
  return part;
}

void save_hypergraph(const PhaseHypergraph& h,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "hgr v1\n";
  out << "nets " << h.n_nets() << " vertices " << h.n_free << " fixed "
      << h.n_fixed() << "\n";
  for (int n = 0; n < h.n_nets(); ++n) {
    bool first = true;
    if (h.net_fixed_part[static_cast<std::size_t>(n)] >= 0) {
      out << 'f' << n;
      first = false;
    }
    for (int v : h.net_pins[static_cast<std::size_t>(n)]) {
      if (!first) out << ' ';
      out << v;
      first = false;
    }
    out << '\n';
  }
}

}  // namespace spdnn
