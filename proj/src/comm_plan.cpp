#include "spdnn/comm_plan.hpp"

#include <algorithm>
#include <fstream>

#include "spdnn/hypergraph.hpp"
#include "spdnn/textio.hpp"

namespace spdnn {

namespace {

std::int64_t side_words(const std::vector<std::vector<PeerRows>>& side) {
  std::int64_t words = 0;
  for (const auto& rank : side)
    for (const PeerRows& pr : rank)
      words += static_cast<std::int64_t>(pr.rows.size());
  return words;
}

void check_partition(const SparseModel& model, const ModelPartition& part) {
  if (part.parts < 1) throw DataError("partition has no parts");
  if (part.num_layers() != model.num_layers())
    throw DataError("partition covers " + std::to_string(part.num_layers()) +
                    " layers, model has " +
                    std::to_string(model.num_layers()));
  for (int k = 1; k <= model.num_layers(); ++k)
    if (static_cast<int>(part.layer_rows[std::size_t(k - 1)].size()) !=
        model.neurons)
      throw DataError("partition layer " + std::to_string(k) +
                      " does not cover all rows");
  if (static_cast<int>(part.input_rows.size()) != model.input_dim)
    throw DataError("partition input block does not cover the input vector");
  auto check_ids = [&](const std::vector<int>& rows) {
    for (int p : rows)
      if (p < 0 || p >= part.parts)
        throw DataError("partition contains part id out of range");
  };
  for (const auto& rows : part.layer_rows) check_ids(rows);
  check_ids(part.input_rows);
}

}  // namespace

std::int64_t CommPlan::layer_words(int k) const {
  const LayerComm& lc = layer(k);
  return side_words(lc.xsend) + side_words(lc.ssend);
}

std::int64_t CommPlan::total_words() const {
  std::int64_t words = 0;
  for (int k = 1; k <= num_layers(); ++k) words += layer_words(k);
  return words;
}

CommPlan build_comm_plan(const SparseModel& model,
                         const ModelPartition& part) {
  check_partition(model, part);
  const int parts = part.parts;
  CommPlan plan;
  plan.parts = parts;
  plan.layers.resize(static_cast<std::size_t>(model.num_layers()));

  for (int k = 1; k <= model.num_layers(); ++k) {
    const SpMat& w = model.layer(k);
    const std::vector<int>& owner = part.feed_rows(k);
    const std::vector<int>& row_part = part.layer_rows[std::size_t(k - 1)];

    // Parts that need each column: distinct owners of rows with a nonzero.
    std::vector<std::vector<int>> need(static_cast<std::size_t>(w.cols()));
    for (int r = 0; r < w.rows(); ++r) {
      const int p = row_part[static_cast<std::size_t>(r)];
      for (SpMat::InnerIterator it(w, r); it; ++it) {
        auto& nd = need[static_cast<std::size_t>(it.col())];
        if (std::find(nd.begin(), nd.end(), p) == nd.end()) nd.push_back(p);
      }
    }

    // (sender, receiver) -> row list; columns visited ascending keep the
    // lists sorted.
    std::vector<std::vector<int>> pair_rows(
        static_cast<std::size_t>(parts) * parts);
    for (int j = 0; j < static_cast<int>(w.cols()); ++j) {
      const int m = owner[static_cast<std::size_t>(j)];
      auto& nd = need[static_cast<std::size_t>(j)];
      std::sort(nd.begin(), nd.end());
      for (int n : nd)
        if (n != m)
          pair_rows[static_cast<std::size_t>(m) * parts + n].push_back(j);
    }

    // Scanning (m, n) in lexicographic order leaves every per-rank peer
    // list sorted ascending.
    LayerComm& lc = plan.layers[std::size_t(k - 1)];
    lc.xsend.resize(static_cast<std::size_t>(parts));
    lc.xrecv.resize(static_cast<std::size_t>(parts));
    lc.ssend.resize(static_cast<std::size_t>(parts));
    lc.srecv.resize(static_cast<std::size_t>(parts));
    for (int m = 0; m < parts; ++m)
      for (int n = 0; n < parts; ++n) {
        auto& rows = pair_rows[static_cast<std::size_t>(m) * parts + n];
        if (rows.empty()) continue;
        lc.xsend[std::size_t(m)].push_back({n, rows});
        lc.xrecv[std::size_t(n)].push_back({m, rows});
        lc.ssend[std::size_t(n)].push_back({m, rows});
        lc.srecv[std::size_t(m)].push_back({n, std::move(rows)});
      }
  }
  return plan;
}

CommMetrics compute_metrics(const CommPlan& plan, const SparseModel& model,
                            const ModelPartition& part) {
  check_partition(model, part);
  const int parts = plan.parts;
  CommMetrics m;
  m.parts = parts;
  m.send_words.assign(static_cast<std::size_t>(parts), 0);
  m.send_messages.assign(static_cast<std::size_t>(parts), 0);
  m.flops.assign(static_cast<std::size_t>(parts), 0);

  for (int k = 1; k <= plan.num_layers(); ++k) {
    const LayerComm& lc = plan.layer(k);
    for (int r = 0; r < parts; ++r) {
      for (const PeerRows& pr : lc.xsend[std::size_t(r)]) {
        m.send_words[std::size_t(r)] +=
            static_cast<std::int64_t>(pr.rows.size());
        ++m.send_messages[std::size_t(r)];
      }
      for (const PeerRows& pr : lc.ssend[std::size_t(r)]) {
        m.send_words[std::size_t(r)] +=
            static_cast<std::int64_t>(pr.rows.size());
        ++m.send_messages[std::size_t(r)];
      }
    }
  }

  // 2 flops per stored nonzero for each of: the feedforward multiply, the
  // transpose multiply, the gradient update. Only the ratio is reported.
  for (int k = 1; k <= model.num_layers(); ++k) {
    const SpMat& w = model.layer(k);
    const auto& row_part = part.layer_rows[std::size_t(k - 1)];
    for (int r = 0; r < w.rows(); ++r) {
      const std::int64_t nnz =
          w.outerIndexPtr()[r + 1] - w.outerIndexPtr()[r];
      m.flops[static_cast<std::size_t>(row_part[std::size_t(r)])] += 6 * nnz;
    }
  }

  std::int64_t total_words = 0, max_words = 0;
  std::int64_t total_msgs = 0, max_msgs = 0;
  std::int64_t total_flops = 0, max_flops = 0;
  for (int r = 0; r < parts; ++r) {
    total_words += m.send_words[std::size_t(r)];
    max_words = std::max(max_words, m.send_words[std::size_t(r)]);
    total_msgs += m.send_messages[std::size_t(r)];
    max_msgs = std::max(max_msgs, m.send_messages[std::size_t(r)]);
    total_flops += m.flops[std::size_t(r)];
    max_flops = std::max(max_flops, m.flops[std::size_t(r)]);
  }
  m.avg_volume = double(total_words) / parts;
  m.max_volume = double(max_words);
  m.avg_messages = double(total_msgs) / parts;
  m.max_messages = double(max_msgs);
  m.comp_imbalance =
      total_flops == 0 ? 1.0
                       : double(max_flops) / (double(total_flops) / parts);
  return m;
}

VolumeIdentityReport verify_volume_identity(const CommPlan& plan,
                                            const SparseModel& model,
                                            const ModelPartition& part) {
  check_partition(model, part);
  VolumeIdentityReport report;
  for (int k = 1; k <= model.num_layers(); ++k) {
    LayerPartition feed{part.parts, part.feed_rows(k)};
    const PhaseHypergraph h = build_phase_hypergraph(model.layer(k), feed);
    VolumeIdentityLayer entry;
    entry.layer = k;
    entry.plan_words = plan.layer_words(k);
    entry.hypergraph_words = cut_size(h, part.layer(k));
    report.all_equal &= entry.plan_words == entry.hypergraph_words;
    report.layers.push_back(entry);
  }
  return report;
}

MetricsRow to_row(const CommMetrics& m, const std::string& method) {
  return MetricsRow{m.parts,        method,         m.avg_volume,
                    m.max_volume,  m.avg_messages, m.max_messages,
                    m.comp_imbalance};
}

void write_metrics_tsv(const std::filesystem::path& path,
                       const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P\tmethod\tavg_vol\tmax_vol\tavg_msg\tmax_msg\timb\n";
  for (const MetricsRow& r : rows)
    out << r.parts << '\t' << r.method << '\t' << format_double(r.avg_vol)
        << '\t' << format_double(r.max_vol) << '\t'
        << format_double(r.avg_msg) << '\t' << format_double(r.max_msg)
        << '\t' << format_double(r.imb) << '\n';
}

std::vector<MetricsRow> read_metrics_tsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      split_tokens(line) !=
          std::vector<std::string_view>{"P", "method", "avg_vol", "max_vol",
                                        "avg_msg", "max_msg", "imb"})
    throw DataError(path.string() + ": missing metrics header");
  std::vector<MetricsRow> rows;
  const std::string ctx = path.string();
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tok = split_tokens(line);
    if (tok.size() != 7) throw DataError(ctx + ": malformed metrics row");
    MetricsRow r;
    r.parts = static_cast<int>(parse_int(tok[0], ctx));
    r.method = std::string(tok[1]);
    r.avg_vol = parse_double(tok[2], ctx);
    r.max_vol = parse_double(tok[3], ctx);
    r.avg_msg = parse_double(tok[4], ctx);
    r.max_msg = parse_double(tok[5], ctx);
    r.imb = parse_double(tok[6], ctx);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace spdnn
