// Command-line driver: generate models, partition them, build and check
// communication plans, train/infer on the simulated cluster, and produce
// side-by-side method comparisons.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spdnn/comm_plan.hpp"
#include "spdnn/engine.hpp"
#include "spdnn/hypergraph.hpp"
#include "spdnn/model.hpp"
#include "spdnn/textio.hpp"

namespace fs = std::filesystem;
using namespace spdnn;

namespace {

struct GenerateArgs {
  int layers = 4;
  int neurons = 64;
  int degree = 8;
  std::uint64_t seed = 1;
  std::string out;
};

void cmd_generate(const GenerateArgs& a) {
  const SparseModel model =
      generate_synthetic(a.layers, a.neurons, a.degree, a.seed);
  fs::create_directories(a.out);
  const fs::path manifest = fs::path(a.out) / "model.txt";
  save_model(model, manifest);
  std::cout << "wrote " << manifest.string() << ": " << model.num_layers()
            << " layers, " << model.neurons << " neurons, "
            << model.total_nnz() << " connections\n";
}

struct PartitionArgs {
  std::string model;
  int parts = 2;
  std::string method = "hypergraph";
  double epsilon = 0.01;
  std::uint64_t seed = 1;
  int restarts = 4;
  std::string out;
  std::string hgr_dir;  // optional per-layer hypergraph dumps
};

void cmd_partition(const PartitionArgs& a) {
  const SparseModel model = load_model(a.model);
  FmConfig config;
  config.restarts = a.restarts;
  const ModelPartition part = partition_model(
      model, a.parts, parse_method(a.method), a.epsilon, a.seed, config);
  save_partition(part, a.out);
  if (!a.hgr_dir.empty()) fs::create_directories(a.hgr_dir);

  std::int64_t total_cut = 0;
  double worst_imbalance = 1.0;
  for (int k = 1; k <= model.num_layers(); ++k) {
    const PhaseHypergraph h = build_phase_hypergraph(
        model.layer(k), LayerPartition{part.parts, part.feed_rows(k)});
    const std::int64_t cut = cut_size(h, part.layer(k));
    const double imb = imbalance(h, part.layer(k));
    total_cut += cut;
    worst_imbalance = std::max(worst_imbalance, imb);
    std::cout << "layer " << k << ": cut " << cut << " imbalance "
              << format_double(imb) << "\n";
    if (!a.hgr_dir.empty())
      save_hypergraph(h, fs::path(a.hgr_dir) /
                             ("phase_" + std::to_string(k) + ".hgr"));
  }
  std::cout << "wrote " << a.out << ": total cut " << total_cut
            << " worst imbalance " << format_double(worst_imbalance) << "\n";
}

struct PlanArgs {
  std::string model;
  std::string partition;
  std::string label = "run";
  std::string out;
};

void cmd_plan(const PlanArgs& a) {
  const SparseModel model = load_model(a.model);
  const ModelPartition part = load_partition(a.partition);
  const CommPlan plan = build_comm_plan(model, part);
  const CommMetrics m = compute_metrics(plan, model, part);
  write_metrics_tsv(a.out, {to_row(m, a.label)});

  const VolumeIdentityReport report =
      verify_volume_identity(plan, model, part);
  for (const VolumeIdentityLayer& l : report.layers)
    if (l.plan_words != l.hypergraph_words)
      std::cout << "layer " << l.layer << ": plan " << l.plan_words
                << " words != hypergraph " << l.hypergraph_words << "\n";
  std::cout << "wrote " << a.out << ": total " << plan.total_words()
            << " words, volume-identity "
            << (report.all_equal ? "OK" : "MISMATCH") << "\n";
}

struct DataArgs {
  std::string images;
  std::string labels;
  int threshold = 128;
  int count = 0;  // 0 = all
};

Dataset load_dataset(const DataArgs& a, const SparseModel& model) {
  const int side = static_cast<int>(std::lround(std::sqrt(model.input_dim)));
  if (side * side != model.input_dim)
    throw DataError("model input_dim " + std::to_string(model.input_dim) +
                    " is not a square; cannot map images onto it");
  IdxImages raw = load_idx_images(a.images);
  std::vector<std::uint8_t> classes = load_idx_labels(a.labels);
  if (static_cast<int>(classes.size()) != raw.count)
    throw DataError("image and label counts differ");
  if (a.count > 0 && a.count < raw.count) {
    raw.pixels.resize(std::size_t(a.count) * raw.rows * raw.cols);
    raw.count = a.count;
    classes.resize(std::size_t(a.count));
  }
  Dataset data;
  data.inputs =
      preprocess_images(raw, side, static_cast<std::uint8_t>(a.threshold));
  data.labels = one_hot_labels(classes, model.neurons);
  return data;
}

struct TrainArgs {
  std::string model;
  std::string partition;
  DataArgs data;
  int steps = 10;
  double eta = 0.01;
  int threads = 1;
  std::string out;
  std::string loss_log;
};

void cmd_train(const TrainArgs& a) {
  const SparseModel model = load_model(a.model);
  const ModelPartition part = load_partition(a.partition);
  const Dataset data = load_dataset(a.data, model);
  const CommPlan plan = build_comm_plan(model, part);
  const CommMetrics planned = compute_metrics(plan, model, part);

  const SgdResult result =
      run_sgd(model, part, data, a.eta, a.steps, a.threads);

  fs::create_directories(a.out);
  const fs::path manifest = fs::path(a.out) / "model.txt";
  save_model(result.model, manifest);

  if (!a.loss_log.empty()) {
    std::ofstream log(a.loss_log, std::ios::binary);
    if (!log) throw DataError("cannot write " + a.loss_log);
    log << "step\tloss\n";
    for (std::size_t i = 0; i < result.loss_history.size(); ++i)
      log << i << '\t' << format_double(result.loss_history[i]) << '\n';
  }

  // Every rank's observed traffic must equal the plan, steps times over.
  bool trace_ok = true;
  for (int m = 0; m < part.parts; ++m) {
    trace_ok &= result.trace.rank_words(m) ==
                planned.send_words[std::size_t(m)] * a.steps;
    trace_ok &= result.trace.rank_messages(m) ==
                planned.send_messages[std::size_t(m)] * a.steps;
  }
  std::cout << "wrote " << manifest.string() << ": " << a.steps
            << " steps, final loss "
            << (result.loss_history.empty()
                    ? "n/a"
                    : format_double(result.loss_history.back()))
            << ", trace-vs-plan " << (trace_ok ? "OK" : "MISMATCH") << "\n";
}

struct InferArgs {
  std::string model;
  std::string partition;
  DataArgs data;
  int threads = 1;
  std::string out;
};

void cmd_infer(const InferArgs& a) {
  const SparseModel model = load_model(a.model);
  const ModelPartition part = load_partition(a.partition);
  const Dataset data = load_dataset(a.data, model);
  CommPlan plan = build_comm_plan(model, part);
  SimCluster cluster(model, part, std::move(plan), a.threads);

  std::ofstream out(a.out, std::ios::binary);
  if (!out) throw DataError("cannot write " + a.out);
  out << "input\targmax\tactivation\tloss\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vec xl = cluster.feedforward(data.inputs[i]);
    Eigen::Index best = 0;
    xl.maxCoeff(&best);
    out << i << '\t' << best << '\t' << format_double(xl[best]) << '\t'
        << format_double(mse_loss(xl, data.labels[i])) << '\n';
  }
  std::cout << "wrote " << a.out << ": " << data.size() << " inputs\n";
}

struct ReportArgs {
  std::string hypergraph;
  std::string random_;
  std::string out;
};

std::string ratio_field(double h, double r) {
  if (r == 0.0) return "-";
  return format_double(h / r);
}

void cmd_report(const ReportArgs& a) {
  const auto h_rows = read_metrics_tsv(a.hypergraph);
  const auto r_rows = read_metrics_tsv(a.random_);
  if (h_rows.empty() || r_rows.empty())
    throw DataError("metrics file has no data rows");
  const MetricsRow& h = h_rows.front();
  const MetricsRow& r = r_rows.front();
  if (h.parts != r.parts)
    throw DataError("metrics files were produced for different part counts");

  std::ofstream out(a.out, std::ios::binary);
  if (!out) throw DataError("cannot write " + a.out);
  out << "P\tmethod\tavg_vol\tmax_vol\tavg_msg\tmax_msg\timb\n";
  auto emit = [&out](const MetricsRow& row) {
    out << row.parts << '\t' << row.method << '\t'
        << format_double(row.avg_vol) << '\t' << format_double(row.max_vol)
        << '\t' << format_double(row.avg_msg) << '\t'
        << format_double(row.max_msg) << '\t' << format_double(row.imb)
        << '\n';
  };
  emit(h);
  emit(r);
  out << h.parts << "\tratio\t" << ratio_field(h.avg_vol, r.avg_vol) << '\t'
      << ratio_field(h.max_vol, r.max_vol) << '\t'
      << ratio_field(h.avg_msg, r.avg_msg) << '\t'
      << ratio_field(h.max_msg, r.max_msg) << "\t-\n";
  std::cout << "wrote " << a.out << ": volume ratio "
            << ratio_field(h.avg_vol, r.avg_vol) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"model-parallel sparse DNN training on a simulated cluster"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* cg = app.add_subcommand("generate", "generate a synthetic model");
  cg->add_option("--layers", gen.layers)->check(CLI::PositiveNumber);
  cg->add_option("--neurons", gen.neurons)->check(CLI::PositiveNumber);
  cg->add_option("--degree", gen.degree)->check(CLI::PositiveNumber);
  cg->add_option("--seed", gen.seed);
  cg->add_option("--out", gen.out)->required();

  PartitionArgs pa;
  auto* cp = app.add_subcommand("partition", "partition a model's rows");
  cp->add_option("--model", pa.model)->required();
  cp->add_option("--parts", pa.parts)->check(CLI::PositiveNumber);
  cp->add_option("--method", pa.method)
      ->check(CLI::IsMember({"hypergraph", "random"}));
  cp->add_option("--epsilon", pa.epsilon)->check(CLI::NonNegativeNumber);
  cp->add_option("--seed", pa.seed);
  cp->add_option("--restarts", pa.restarts)->check(CLI::PositiveNumber);
  cp->add_option("--out", pa.out)->required();
  cp->add_option("--hgr-dir", pa.hgr_dir,
                 "also dump each phase hypergraph into this directory");

  PlanArgs pl;
  auto* cl = app.add_subcommand("plan", "build the communication plan");
  cl->add_option("--model", pl.model)->required();
  cl->add_option("--partition", pl.partition)->required();
  cl->add_option("--label", pl.label);
  cl->add_option("--out", pl.out)->required();

  TrainArgs tr;
  auto* ct = app.add_subcommand("train", "run SGD on the simulated cluster");
  ct->add_option("--model", tr.model)->required();
  ct->add_option("--partition", tr.partition)->required();
  ct->add_option("--images", tr.data.images)->required();
  ct->add_option("--labels", tr.data.labels)->required();
  ct->add_option("--threshold", tr.data.threshold)
      ->check(CLI::Range(0, 255));
  ct->add_option("--count", tr.data.count)->check(CLI::NonNegativeNumber);
  ct->add_option("--steps", tr.steps)->check(CLI::NonNegativeNumber);
  ct->add_option("--eta", tr.eta);
  ct->add_option("--threads", tr.threads)->check(CLI::PositiveNumber);
  ct->add_option("--out", tr.out)->required();
  ct->add_option("--loss-log", tr.loss_log);

  InferArgs in;
  auto* ci = app.add_subcommand("infer", "feedforward-only inference");
  ci->add_option("--model", in.model)->required();
  ci->add_option("--partition", in.partition)->required();
  ci->add_option("--images", in.data.images)->required();
  ci->add_option("--labels", in.data.labels)->required();
  ci->add_option("--threshold", in.data.threshold)->check(CLI::Range(0, 255));
  ci->add_option("--count", in.data.count)->check(CLI::NonNegativeNumber);
  ci->add_option("--threads", in.threads)->check(CLI::PositiveNumber);
  ci->add_option("--out", in.out)->required();

  ReportArgs re;
  auto* cr = app.add_subcommand("report", "compare two plan metric files");
  cr->add_option("--hypergraph", re.hypergraph)->required();
  cr->add_option("--random", re.random_)->required();
  cr->add_option("--out", re.out)->required();

  try {
    app.parse(argc, argv);
    if (cg->parsed()) cmd_generate(gen);
    if (cp->parsed()) cmd_partition(pa);
    if (cl->parsed()) cmd_plan(pl);
    if (ct->parsed()) cmd_train(tr);
    if (ci->parsed()) cmd_infer(in);
    if (cr->parsed()) cmd_report(re);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const InfeasibleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
