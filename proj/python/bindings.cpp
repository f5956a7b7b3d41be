// Python module _kgformer: a thin layer over the C++ library.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "kgf/config.hpp"
#include "kgf/diagnostics.hpp"
#include "kgf/eval.hpp"
#include "kgf/training.hpp"
#include "kgf/wl.hpp"

namespace py = pybind11;
using namespace kgf;

namespace {

py::dict metrics_dict(const MetricsReport& m) {
  py::dict d;
  d["mrr"] = m.mrr;
  d["hits1"] = m.hits1;
  d["hits3"] = m.hits3;
  d["hits10"] = m.hits10;
  d["count"] = m.count;
  return d;
}

// Trains from config text; returns the metrics log as JSON lines.
std::vector<std::string> train_from_config(const std::string& config_text, const std::filesystem::path& dataset,
                                           const std::filesystem::path& checkpoint) {
  RunConfig cfg = parse_config_text(config_text);
  if (!dataset.empty()) cfg.dataset = dataset;
  const DatasetSplit ds = load_dataset(cfg.dataset, cfg.mode);
  const TrainingData data = prepare_training_data(ds);
  Rng init = make_stream(cfg.train.seed, "init");
  ModelParams params(cfg.model, data.graph.num_relations(), init);
  AdamState adam;
  TrainProgress progress = TrainProgress::start(cfg.train.seed);
  std::vector<std::string> log;
  TrainHooks hooks;
  hooks.on_record = [&](const MetricsRecord& r) { log.push_back(to_json_line(r)); };
  {
    py::gil_scoped_release release;
    train(data, params, cfg.train, adam, progress, hooks);
  }
  if (!checkpoint.empty()) {
    save_checkpoint(checkpoint, make_checkpoint(params, cfg.train, adam, progress, ds.entities, ds.relations));
  }
  return log;
}

py::dict evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                             const std::string& mode, const std::string& split, std::uint64_t noise_seed) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const DatasetSplit ds = load_dataset(dataset, mode == "inductive" ? SplitMode::kInductive : SplitMode::kTransductive);
  const ModelParams params = restore_params(ckpt);
  const auto s = prepare_eval_split(ds, split);
  EvalOptions opt;
  opt.noise_seed = noise_seed;
  py::gil_scoped_release release;
  const EvalResult res = evaluate(s->graph, s->queries, params, opt);
  py::gil_scoped_acquire acquire;
  return metrics_dict(res.report);
}

}  // namespace

PYBIND11_MODULE(_kgformer, m) {
  m.doc() = "Knowledge-graph transformer core";

  m.def("rank_answer",
        [](const std::vector<double>& scores, EntityId gold, const std::vector<std::uint8_t>& mask) {
          return rank_answer(scores, gold, mask);
        },
        py::arg("scores"), py::arg("gold"), py::arg("mask"));
  m.def("compute_metrics", [](const std::vector<double>& ranks) { return metrics_dict(compute_metrics(ranks)); },
        py::arg("ranks"));

  m.def("kernel_error_sweep",
        [](std::size_t samples, std::size_t dim, std::uint64_t seed) {
          const KernelSweepReport r = kernel_error_sweep(samples, dim, seed);
          py::dict d;
          d["samples"] = r.samples;
          d["max_gap"] = r.max_gap;
          d["max_gap_cos"] = r.max_gap_cos;
          d["bound"] = r.bound;
          d["supremum"] = r.supremum;
          return d;
        },
        py::arg("samples") = 100000, py::arg("dim") = 32, py::arg("seed") = 0);

  m.def("model_gradcheck",
        [](std::uint64_t seed, double tolerance) {
          GradCheckOptions opt;
          opt.tolerance = tolerance;
          const GradCheckReport r = model_gradcheck(seed, opt);
          py::dict d;
          d["passed"] = r.passed;
          d["worst_rel_error"] = r.worst_rel_error;
          d["groups"] = r.entries.size();
          return d;
        },
        py::arg("seed") = 0, py::arg("tolerance") = 1e-4);

  m.def("wl_colors",
        [](std::size_t num_nodes, const std::vector<std::pair<std::int32_t, std::int32_t>>& edges, std::size_t rounds) {
          return wl_refine(SimpleGraph::from_edges(num_nodes, edges), rounds).colors;
        },
        py::arg("num_nodes"), py::arg("edges"), py::arg("rounds") = 64);

  m.def("train", &train_from_config, py::arg("config_text"), py::arg("dataset") = std::filesystem::path{},
        py::arg("checkpoint") = std::filesystem::path{});
  m.def("evaluate", &evaluate_checkpoint, py::arg("checkpoint"), py::arg("dataset"),
        py::arg("mode") = "transductive", py::arg("split") = "test", py::arg("noise_seed") = 0);
}
