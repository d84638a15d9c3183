#include "spdnn/engine.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>

namespace spdnn {

void StepTrace::init(int layers, int n_parts) {
  parts = n_parts;
  const std::vector<std::vector<std::int64_t>> zeros(
      static_cast<std::size_t>(layers),
      std::vector<std::int64_t>(static_cast<std::size_t>(n_parts), 0));
  x_words = zeros;
  x_messages = zeros;
  s_words = zeros;
  s_messages = zeros;
  flops = zeros;
  final_loss = 0.0;
  messages.clear();
}

void StepTrace::accumulate(const StepTrace& other) {
  if (x_words.empty())
    init(static_cast<int>(other.x_words.size()), other.parts);
  auto add = [](std::vector<std::vector<std::int64_t>>& into,
                const std::vector<std::vector<std::int64_t>>& from) {
    for (std::size_t k = 0; k < into.size(); ++k)
      for (std::size_t m = 0; m < into[k].size(); ++m)
        into[k][m] += from[k][m];
  };
  add(x_words, other.x_words);
  add(x_messages, other.x_messages);
  add(s_words, other.s_words);
  add(s_messages, other.s_messages);
  add(flops, other.flops);
  final_loss = other.final_loss;
  messages.insert(messages.end(), other.messages.begin(),
                  other.messages.end());
}

std::int64_t StepTrace::layer_words(int k) const {
  std::int64_t words = 0;
  for (int m = 0; m < parts; ++m)
    words += x_words[std::size_t(k - 1)][std::size_t(m)] +
             s_words[std::size_t(k - 1)][std::size_t(m)];
  return words;
}

std::int64_t StepTrace::rank_words(int rank) const {
  std::int64_t words = 0;
  for (std::size_t k = 0; k < x_words.size(); ++k)
    words += x_words[k][std::size_t(rank)] + s_words[k][std::size_t(rank)];
  return words;
}

std::int64_t StepTrace::rank_messages(int rank) const {
  std::int64_t count = 0;
  for (std::size_t k = 0; k < x_messages.size(); ++k)
    count +=
        x_messages[k][std::size_t(rank)] + s_messages[k][std::size_t(rank)];
  return count;
}

std::int64_t StepTrace::rank_flops(int rank) const {
  std::int64_t count = 0;
  for (std::size_t k = 0; k < flops.size(); ++k)
    count += flops[k][std::size_t(rank)];
  return count;
}

std::int64_t StepTrace::total_words() const {
  std::int64_t words = 0;
  for (std::size_t k = 0; k < x_words.size(); ++k)
    words += layer_words(static_cast<int>(k) + 1);
  return words;
}

namespace {

// Runs fn(rank) for every rank, either inline or over a batch of worker
// threads (static round-robin). Rank functions touch disjoint state, so the
// schedule cannot affect results.
template <typename F>
void for_each_rank(int parts, int threads, F&& fn) {
  const int workers = std::max(1, std::min(threads, parts));
  if (workers == 1) {
    for (int m = 0; m < parts; ++m) fn(m);
    return;
  }
  std::vector<std::thread> pool;
  std::mutex err_mutex;
  std::exception_ptr err;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int m = w; m < parts; m += workers) fn(m);
      } catch (...) {
        std::lock_guard<std::mutex> guard(err_mutex);
        if (!err) err = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// Single-producer single-consumer slots, one per ordered rank pair; filled
// during a send substage, drained during the matching receive substage.
class Mailbox {
 public:
  explicit Mailbox(int parts) : parts_(parts) {
    slots_.resize(static_cast<std::size_t>(parts) * parts);
  }

  void put(int from, int to, std::vector<double> payload) {
    auto& slot = slots_[static_cast<std::size_t>(from) * parts_ + to];
    if (slot.has_value())
      throw std::logic_error("mailbox slot already occupied");
    slot = std::move(payload);
  }

  std::vector<double> take(int from, int to, int layer, char phase) {
    auto& slot = slots_[static_cast<std::size_t>(from) * parts_ + to];
    if (!slot.has_value())
      throw std::logic_error(
          "missing expected message from rank " + std::to_string(from) +
          " to rank " + std::to_string(to) + " in layer " +
          std::to_string(layer) + " phase " + std::string(1, phase) +
          " (plan/ownership inconsistency)");
    std::vector<double> payload = std::move(*slot);
    slot.reset();
    return payload;
  }

  void require_drained(int layer, char phase) const {
    for (const auto& slot : slots_)
      if (slot.has_value())
        throw std::logic_error("unconsumed message after layer " +
                               std::to_string(layer) + " phase " +
                               std::string(1, phase));
  }

 private:
  int parts_;
  std::vector<std::optional<std::vector<double>>> slots_;
};

struct RankLayer {
  std::vector<int> rows;  // owned global rows, ascending
  SpMat block;            // rows.size() x layer input width
  // Entry traversal grouped by the source of the column's input value:
  // group 0 = locally owned columns, group 1+i = i-th xrecv peer, columns
  // ascending within each group. perm maps grouped slots to CSR positions;
  // group_off[r * n_groups + g] marks slice starts, one past the end in the
  // final sentinel.
  int n_groups = 1;
  std::vector<int> perm;
  std::vector<int> group_off;
};

struct RankState {
  std::vector<int> input_rows;  // owned input-vector entries, ascending
  std::vector<RankLayer> layers;
  std::vector<Vec> z, x;        // per layer, local rows
  std::vector<Vec> x_stage;     // per layer, full input width of that layer
  std::vector<Vec> s_stage;     // per layer, full input width of that layer
  std::vector<Vec> delta;       // per layer, local rows
  std::vector<MessageRecord> sent;  // scratch when capturing messages
};

}  // namespace

struct SimCluster::Impl {
  int parts = 1;
  int n_layers = 0;
  int neurons = 0;
  int input_dim = 0;
  int threads = 1;
  ModelPartition part;
  CommPlan plan;
  std::vector<RankState> ranks;
  Mailbox mailbox;
  bool has_forward = false;

  Impl(SparseModel model, ModelPartition p, CommPlan pl, int n_threads)
      : parts(p.parts),
        n_layers(model.num_layers()),
        neurons(model.neurons),
        input_dim(model.input_dim),
        threads(n_threads),
        part(std::move(p)),
        plan(std::move(pl)),
        mailbox(parts) {
    if (plan.parts != parts)
      throw DataError("plan and partition disagree on the part count");
    if (plan.num_layers() != n_layers)
      throw DataError("plan and model disagree on the layer count");
    if (part.num_layers() != n_layers ||
        static_cast<int>(part.input_rows.size()) != input_dim)
      throw DataError("partition does not cover the model");

    ranks.resize(static_cast<std::size_t>(parts));
    for (int m = 0; m < parts; ++m) {
      RankState& rs = ranks[std::size_t(m)];
      rs.layers.resize(static_cast<std::size_t>(n_layers));
      rs.z.resize(static_cast<std::size_t>(n_layers));
      rs.x.resize(static_cast<std::size_t>(n_layers));
      rs.x_stage.resize(static_cast<std::size_t>(n_layers));
      rs.s_stage.resize(static_cast<std::size_t>(n_layers));
      rs.delta.resize(static_cast<std::size_t>(n_layers));
    }
    for (std::size_t j = 0; j < part.input_rows.size(); ++j) {
      const int p = part.input_rows[j];
      if (p < 0 || p >= parts) throw DataError("input row part out of range");
      ranks[std::size_t(p)].input_rows.push_back(static_cast<int>(j));
    }

    for (int k = 1; k <= n_layers; ++k) build_layer(model, k);
  }

  void build_layer(const SparseModel& model, int k) {
    const SpMat& w = model.layer(k);
    if (w.rows() != neurons)
      throw DataError("layer " + std::to_string(k) + " has wrong row count");
    const auto& row_part = part.layer_rows[std::size_t(k - 1)];
    const auto& feed = part.feed_rows(k);

    std::vector<std::vector<Entry>> entries(static_cast<std::size_t>(parts));
    for (int r = 0; r < w.rows(); ++r) {
      const int p = row_part[std::size_t(r)];
      if (p < 0 || p >= parts)
        throw DataError("layer " + std::to_string(k) +
                        " row part out of range");
      RankState& rs = ranks[std::size_t(p)];
      const int local = static_cast<int>(rs.layers[std::size_t(k - 1)].rows.size());
      rs.layers[std::size_t(k - 1)].rows.push_back(r);
      for (SpMat::InnerIterator it(w, r); it; ++it)
        entries[std::size_t(p)].push_back(
            {local, static_cast<int>(it.col()), it.value()});
    }

    for (int m = 0; m < parts; ++m) {
      RankState& rs = ranks[std::size_t(m)];
      RankLayer& rl = rs.layers[std::size_t(k - 1)];
      rl.block = csr_from_entries(static_cast<int>(rl.rows.size()),
                                  static_cast<int>(w.cols()),
                                  std::move(entries[std::size_t(m)]));

      const auto& xrecv = plan.layer(k).xrecv[std::size_t(m)];
      rl.n_groups = 1 + static_cast<int>(xrecv.size());
      // Peer rank -> group index, group 0 reserved for local columns.
      std::vector<int> group_of(static_cast<std::size_t>(parts), -1);
      for (std::size_t i = 0; i < xrecv.size(); ++i)
        group_of[std::size_t(xrecv[i].peer)] = static_cast<int>(i) + 1;

      const int n_local_rows = static_cast<int>(rl.rows.size());
      rl.perm.resize(static_cast<std::size_t>(rl.block.nonZeros()));
      rl.group_off.assign(
          static_cast<std::size_t>(n_local_rows) * rl.n_groups + 1, 0);
      std::vector<std::vector<int>> buckets(
          static_cast<std::size_t>(rl.n_groups));
      std::size_t at = 0;
      for (int r = 0; r < n_local_rows; ++r) {
        for (auto& b : buckets) b.clear();
        for (int pos = rl.block.outerIndexPtr()[r];
             pos < rl.block.outerIndexPtr()[r + 1]; ++pos) {
          const int col = rl.block.innerIndexPtr()[pos];
          const int owner = feed[std::size_t(col)];
          int g = owner == m ? 0 : group_of[std::size_t(owner)];
          if (g < 0)
            throw DataError("layer " + std::to_string(k) + " rank " +
                            std::to_string(m) +
                            ": plan has no source for column " +
                            std::to_string(col) +
                            " (plan/ownership inconsistency)");
          buckets[std::size_t(g)].push_back(pos);
        }
        for (int g = 0; g < rl.n_groups; ++g) {
          rl.group_off[std::size_t(r) * rl.n_groups + g] =
              static_cast<int>(at);
          for (int pos : buckets[std::size_t(g)])
            rl.perm[at++] = pos;
        }
      }
      rl.group_off.back() = static_cast<int>(at);

      // Planned sends must be owned here; planned S-sends must touch the
      // block, otherwise the payload would be undefined.
      for (const PeerRows& pr : plan.layer(k).xsend[std::size_t(m)])
        for (int row : pr.rows)
          if (feed[std::size_t(row)] != m)
            throw DataError("layer " + std::to_string(k) +
                            ": planned send of unowned row " +
                            std::to_string(row));

      rs.z[std::size_t(k - 1)] = Vec::Zero(n_local_rows);
      rs.x[std::size_t(k - 1)] = Vec::Zero(n_local_rows);
      rs.delta[std::size_t(k - 1)] = Vec::Zero(n_local_rows);
      rs.x_stage[std::size_t(k - 1)] = Vec::Zero(w.cols());
      rs.s_stage[std::size_t(k - 1)] = Vec::Zero(w.cols());
    }
  }

  int slice_begin(const RankLayer& rl, int row, int group) const {
    return rl.group_off[std::size_t(row) * rl.n_groups + group];
  }
  int slice_end(const RankLayer& rl, int row, int group) const {
    return rl.group_off[std::size_t(row) * rl.n_groups + group + 1];
  }

  void fold_group(RankState& rs, int k, int group) {
    RankLayer& rl = rs.layers[std::size_t(k - 1)];
    Vec& z = rs.z[std::size_t(k - 1)];
    const Vec& stage = rs.x_stage[std::size_t(k - 1)];
    const double* values = rl.block.valuePtr();
    const auto* cols = rl.block.innerIndexPtr();
    for (int r = 0; r < static_cast<int>(rl.rows.size()); ++r) {
      double acc = z[r];
      for (int t = slice_begin(rl, r, group); t < slice_end(rl, r, group);
           ++t) {
        const int pos = rl.perm[std::size_t(t)];
        acc += values[pos] * stage[cols[pos]];
      }
      z[r] = acc;
    }
  }

  void merge_captured(StepTrace* trace) {
    if (!trace || !trace->capture_messages) return;
    for (RankState& rs : ranks) {
      for (MessageRecord& mr : rs.sent)
        trace->messages.push_back(std::move(mr));
      rs.sent.clear();
    }
  }

  static void ensure_trace(StepTrace* trace, int layers, int parts) {
    if (trace && trace->x_words.empty()) trace->init(layers, parts);
  }

  Vec feedforward(const Vec& x0, StepTrace* trace) {
    if (x0.size() != input_dim)
      throw DataError("feedforward: input length " +
                      std::to_string(x0.size()) + " != input_dim " +
                      std::to_string(input_dim));
    ensure_trace(trace, n_layers, parts);

    for (int k = 1; k <= n_layers; ++k) {
      for_each_rank(parts, threads, [&](int m) {
        RankState& rs = ranks[std::size_t(m)];
        RankLayer& rl = rs.layers[std::size_t(k - 1)];
        Vec& stage = rs.x_stage[std::size_t(k - 1)];
        stage.setZero();
        if (k == 1) {
          for (int g : rs.input_rows) stage[g] = x0[g];
        } else {
          const RankLayer& prev = rs.layers[std::size_t(k - 2)];
          const Vec& xprev = rs.x[std::size_t(k - 2)];
          for (std::size_t i = 0; i < prev.rows.size(); ++i)
            stage[prev.rows[i]] = xprev[static_cast<Eigen::Index>(i)];
        }
        for (const PeerRows& pr : plan.layer(k).xsend[std::size_t(m)]) {
          std::vector<double> payload(pr.rows.size());
          for (std::size_t i = 0; i < pr.rows.size(); ++i)
            payload[i] = stage[pr.rows[i]];
          mailbox.put(m, pr.peer, std::move(payload));
          if (trace) {
            trace->x_words[std::size_t(k - 1)][std::size_t(m)] +=
                static_cast<std::int64_t>(pr.rows.size());
            trace->x_messages[std::size_t(k - 1)][std::size_t(m)] += 1;
            if (trace->capture_messages)
              rs.sent.push_back({k, 'x', m, pr.peer, pr.rows});
          }
        }
        rs.z[std::size_t(k - 1)].setZero();
        fold_group(rs, k, 0);
        if (trace)
          trace->flops[std::size_t(k - 1)][std::size_t(m)] +=
              2 * static_cast<std::int64_t>(rl.block.nonZeros());
      });
      merge_captured(trace);

      for_each_rank(parts, threads, [&](int m) {
        RankState& rs = ranks[std::size_t(m)];
        Vec& stage = rs.x_stage[std::size_t(k - 1)];
        const auto& xrecv = plan.layer(k).xrecv[std::size_t(m)];
        for (std::size_t i = 0; i < xrecv.size(); ++i) {
          const PeerRows& pr = xrecv[i];
          std::vector<double> payload = mailbox.take(pr.peer, m, k, 'x');
          if (payload.size() != pr.rows.size())
            throw std::logic_error("payload size mismatch in layer " +
                                   std::to_string(k));
          for (std::size_t t = 0; t < pr.rows.size(); ++t)
            stage[pr.rows[t]] = payload[t];
          fold_group(rs, k, static_cast<int>(i) + 1);
        }
        rs.x[std::size_t(k - 1)] = sigmoid(rs.z[std::size_t(k - 1)]);
      });
      mailbox.require_drained(k, 'x');
    }
    has_forward = true;

    Vec out = Vec::Zero(neurons);
    for (int m = 0; m < parts; ++m) {
      const RankLayer& rl = ranks[std::size_t(m)].layers[std::size_t(n_layers - 1)];
      const Vec& xl = ranks[std::size_t(m)].x[std::size_t(n_layers - 1)];
      for (std::size_t i = 0; i < rl.rows.size(); ++i)
        out[rl.rows[i]] = xl[static_cast<Eigen::Index>(i)];
    }
    return out;
  }

  void backprop(const Vec& y, double eta, StepTrace* trace) {
    if (!has_forward)
      throw std::logic_error("backprop requires a preceding feedforward");
    if (y.size() != neurons)
      throw DataError("backprop: label length " + std::to_string(y.size()) +
                      " != neurons " + std::to_string(neurons));
    ensure_trace(trace, n_layers, parts);

    const double scale = 2.0 / static_cast<double>(neurons);
    for_each_rank(parts, threads, [&](int m) {
      RankState& rs = ranks[std::size_t(m)];
      const RankLayer& rl = rs.layers[std::size_t(n_layers - 1)];
      const Vec deriv = sigmoid_deriv(rs.z[std::size_t(n_layers - 1)]);
      const Vec& xl = rs.x[std::size_t(n_layers - 1)];
      Vec& delta = rs.delta[std::size_t(n_layers - 1)];
      for (std::size_t i = 0; i < rl.rows.size(); ++i) {
        const auto idx = static_cast<Eigen::Index>(i);
        delta[idx] = (scale * (xl[idx] - y[rl.rows[i]])) * deriv[idx];
      }
    });

    for (int k = n_layers; k >= 1; --k) {
      for_each_rank(parts, threads, [&](int m) {
        RankState& rs = ranks[std::size_t(m)];
        RankLayer& rl = rs.layers[std::size_t(k - 1)];
        Vec& sstage = rs.s_stage[std::size_t(k - 1)];
        sstage.setZero();
        const SparseContribution contrib = spmv_transpose_contrib(
            rl.block, rs.delta[std::size_t(k - 1)], rl.rows);
        for (std::size_t i = 0; i < contrib.size(); ++i)
          sstage[contrib.index[i]] = contrib.value[i];
        for (const PeerRows& pr : plan.layer(k).ssend[std::size_t(m)]) {
          std::vector<double> payload(pr.rows.size());
          for (std::size_t i = 0; i < pr.rows.size(); ++i)
            payload[i] = sstage[pr.rows[i]];
          mailbox.put(m, pr.peer, std::move(payload));
          if (trace) {
            trace->s_words[std::size_t(k - 1)][std::size_t(m)] +=
                static_cast<std::int64_t>(pr.rows.size());
            trace->s_messages[std::size_t(k - 1)][std::size_t(m)] += 1;
            if (trace->capture_messages)
              rs.sent.push_back({k, 's', m, pr.peer, pr.rows});
          }
        }
        gradient_update(rl.block, rs.delta[std::size_t(k - 1)],
                        rs.x_stage[std::size_t(k - 1)], eta);
        if (trace)
          trace->flops[std::size_t(k - 1)][std::size_t(m)] +=
              4 * static_cast<std::int64_t>(rl.block.nonZeros());
      });
      merge_captured(trace);

      for_each_rank(parts, threads, [&](int m) {
        RankState& rs = ranks[std::size_t(m)];
        Vec& sstage = rs.s_stage[std::size_t(k - 1)];
        for (const PeerRows& pr : plan.layer(k).srecv[std::size_t(m)]) {
          std::vector<double> payload = mailbox.take(pr.peer, m, k, 's');
          if (payload.size() != pr.rows.size())
            throw std::logic_error("payload size mismatch in layer " +
                                   std::to_string(k));
          for (std::size_t t = 0; t < pr.rows.size(); ++t)
            sstage[pr.rows[t]] += payload[t];
        }
        if (k >= 2) {
          const RankLayer& prev = rs.layers[std::size_t(k - 2)];
          const Vec deriv = sigmoid_deriv(rs.z[std::size_t(k - 2)]);
          Vec& delta = rs.delta[std::size_t(k - 2)];
          for (std::size_t i = 0; i < prev.rows.size(); ++i) {
            const auto idx = static_cast<Eigen::Index>(i);
            delta[idx] = sstage[prev.rows[i]] * deriv[idx];
          }
        }
      });
      mailbox.require_drained(k, 's');
    }
    has_forward = false;
  }

  SparseModel gather_model() const {
    SparseModel model;
    model.neurons = neurons;
    model.input_dim = input_dim;
    for (int k = 1; k <= n_layers; ++k) {
      std::vector<Entry> entries;
      for (int m = 0; m < parts; ++m) {
        const RankLayer& rl = ranks[std::size_t(m)].layers[std::size_t(k - 1)];
        for (int r = 0; r < static_cast<int>(rl.rows.size()); ++r)
          for (SpMat::InnerIterator it(rl.block, r); it; ++it)
            entries.push_back(
                {rl.rows[std::size_t(r)], static_cast<int>(it.col()),
                 it.value()});
      }
      const int n_cols = (k == 1) ? input_dim : neurons;
      model.layers.push_back(
          csr_from_entries(neurons, n_cols, std::move(entries)));
    }
    return model;
  }
};

SimCluster::SimCluster(SparseModel model, ModelPartition part, CommPlan plan,
                       int threads)
    : impl_(std::make_unique<Impl>(std::move(model), std::move(part),
                                   std::move(plan), threads)) {}

SimCluster::~SimCluster() = default;
SimCluster::SimCluster(SimCluster&&) noexcept = default;
SimCluster& SimCluster::operator=(SimCluster&&) noexcept = default;

int SimCluster::parts() const { return impl_->parts; }
int SimCluster::num_layers() const { return impl_->n_layers; }

Vec SimCluster::feedforward(const Vec& x0, StepTrace* trace) {
  return impl_->feedforward(x0, trace);
}

void SimCluster::backprop(const Vec& y, double eta, StepTrace* trace) {
  impl_->backprop(y, eta, trace);
}

double SimCluster::sgd_step(const Vec& x0, const Vec& y, double eta,
                            StepTrace* trace) {
  const Vec out = impl_->feedforward(x0, trace);
  const double loss = mse_loss(out, y);
  if (trace) trace->final_loss = loss;
  impl_->backprop(y, eta, trace);
  return loss;
}

SparseModel SimCluster::gather_model() const { return impl_->gather_model(); }

SgdResult run_sgd(const SparseModel& model, const ModelPartition& part,
                  const Dataset& data, double eta, int steps, int threads,
                  bool capture_messages) {
  if (steps > 0 && data.size() == 0)
    throw DataError("run_sgd: empty dataset");
  CommPlan plan = build_comm_plan(model, part);
  SimCluster cluster(model, part, std::move(plan), threads);
  SgdResult result;
  result.trace.init(model.num_layers(), part.parts);
  result.trace.capture_messages = capture_messages;
  for (int step = 0; step < steps; ++step) {
    const std::size_t i = static_cast<std::size_t>(step) % data.size();
    StepTrace st;
    st.capture_messages = capture_messages;
    result.loss_history.push_back(
        cluster.sgd_step(data.inputs[i], data.labels[i], eta, &st));
    result.trace.accumulate(st);
  }
  result.model = cluster.gather_model();
  return result;
}

std::pair<SparseModel, std::vector<double>> sequential_sgd(SparseModel model,
                                                           const Dataset& data,
                                                           double eta,
                                                           int steps) {
  if (steps > 0 && data.size() == 0)
    throw DataError("sequential_sgd: empty dataset");
  const int L = model.num_layers();
  std::vector<int> all_rows(static_cast<std::size_t>(model.neurons));
  std::iota(all_rows.begin(), all_rows.end(), 0);

  std::vector<double> losses;
  std::vector<Vec> xs(static_cast<std::size_t>(L) + 1);
  std::vector<Vec> zs(static_cast<std::size_t>(L));
  for (int step = 0; step < steps; ++step) {
    const std::size_t i = static_cast<std::size_t>(step) % data.size();
    const Vec& y = data.labels[i];
    xs[0] = data.inputs[i];
    for (int k = 1; k <= L; ++k) {
      zs[std::size_t(k - 1)] = spmv(model.layer(k), xs[std::size_t(k - 1)]);
      xs[std::size_t(k)] = sigmoid(zs[std::size_t(k - 1)]);
    }
    losses.push_back(mse_loss(xs[std::size_t(L)], y));

    Vec delta = mse_grad(xs[std::size_t(L)], y)
                    .cwiseProduct(sigmoid_deriv(zs[std::size_t(L - 1)]));
    for (int k = L; k >= 1; --k) {
      const SparseContribution contrib =
          spmv_transpose_contrib(model.layer(k), delta, all_rows);
      gradient_update(model.layer(k), delta, xs[std::size_t(k - 1)], eta);
      if (k >= 2) {
        Vec s = Vec::Zero(model.layer(k).cols());
        for (std::size_t t = 0; t < contrib.size(); ++t)
          s[contrib.index[t]] = contrib.value[t];
        delta = s.cwiseProduct(sigmoid_deriv(zs[std::size_t(k - 2)]));
      }
    }
  }
  return {std::move(model), std::move(losses)};
}

Vec sequential_feedforward(const SparseModel& model, const Vec& x0) {
  Vec x = x0;
  for (int k = 1; k <= model.num_layers(); ++k)
    x = sigmoid(spmv(model.layer(k), x));
  return x;
}

std::vector<SpMat> sequential_gradients(const SparseModel& model,
                                        const Vec& x0, const Vec& y) {
  const int L = model.num_layers();
  std::vector<int> all_rows(static_cast<std::size_t>(model.neurons));
  std::iota(all_rows.begin(), all_rows.end(), 0);

  std::vector<Vec> xs(static_cast<std::size_t>(L) + 1);
  std::vector<Vec> zs(static_cast<std::size_t>(L));
  xs[0] = x0;
  for (int k = 1; k <= L; ++k) {
    zs[std::size_t(k - 1)] = spmv(model.layer(k), xs[std::size_t(k - 1)]);
    xs[std::size_t(k)] = sigmoid(zs[std::size_t(k - 1)]);
  }

  std::vector<SpMat> grads(static_cast<std::size_t>(L));
  Vec delta = mse_grad(xs[std::size_t(L)], y)
                  .cwiseProduct(sigmoid_deriv(zs[std::size_t(L - 1)]));
  for (int k = L; k >= 1; --k) {
    SpMat g = model.layer(k);  // pattern copy, values overwritten
    for (int r = 0; r < g.rows(); ++r)
      for (SpMat::InnerIterator it(g, r); it; ++it)
        it.valueRef() = delta[r] * xs[std::size_t(k - 1)][it.col()];
    grads[std::size_t(k - 1)] = std::move(g);
    if (k >= 2) {
      const SparseContribution contrib =
          spmv_transpose_contrib(model.layer(k), delta, all_rows);
      Vec s = Vec::Zero(model.layer(k).cols());
      for (std::size_t t = 0; t < contrib.size(); ++t)
        s[contrib.index[t]] = contrib.value[t];
      delta = s.cwiseProduct(sigmoid_deriv(zs[std::size_t(k - 2)]));
    }
  }
  return grads;
}

}  // namespace spdnn
