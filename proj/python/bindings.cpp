// Python bindings for the main operations: theory verification, the
// divergence toolkit, BLEU, dataset generation, and experiment runs.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "capmatch/config.hpp"
#include "capmatch/dist_oracle.hpp"
#include "capmatch/metrics.hpp"
#include "capmatch/theory_suite.hpp"
#include "capmatch/toyworld.hpp"
#include "capmatch/trainer.hpp"

namespace py = pybind11;
using namespace capmatch;

namespace {

ExperimentConfig config_from_dict(const py::dict& overrides) {
  ExperimentConfig cfg;
  for (const auto& item : overrides) {
    const std::string key = py::cast<std::string>(item.first);
    const std::string value = py::cast<std::string>(py::str(item.second));
    apply_override(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

py::dict row_to_dict(const EpochRow& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["loss_cap"] = r.loss_cap;
  d["loss_U"] = r.loss_u;
  d["loss_reg"] = r.loss_reg;
  d["loss_triplet"] = r.loss_triplet;
  d["loss_concept"] = r.loss_concept;
  d["bleu1"] = r.bleu1;
  d["bleu2"] = r.bleu2;
  d["bleu3"] = r.bleu3;
  d["bleu4"] = r.bleu4;
  d["recall_at_1"] = r.recall_at_1;
  d["recall_at_5"] = r.recall_at_5;
  d["pseudo_acc"] = r.pseudo_acc;
  d["disc_evals"] = r.disc_evals;
  return d;
}

}  // namespace

PYBIND11_MODULE(_capmatch, m) {
  m.doc() =
      "semi-supervised adversarial caption association at desk scale: "
      "exact minimax theory checks, the toy two-modality world, and the "
      "training pipeline";

  m.def(
      "kl_divergence",
      [](const std::vector<double>& p, const std::vector<double>& q) {
        const KlResult r = kl_divergence(p, q);
        return py::make_tuple(r.nats, r.infinite);
      },
      py::arg("p"), py::arg("q"),
      "KL(p||q) in nats; returns (value, infinite_flag)");

  m.def(
      "jsd",
      [](const std::vector<double>& p, const std::vector<double>& q) {
        return jsd(p, q);
      },
      py::arg("p"), py::arg("q"), "Jensen-Shannon divergence in nats");

  m.def(
      "verify_theory",
      [](int trials, int support, double tolerance, std::uint64_t seed) {
        TheoryOptions opt;
        opt.trials = trials;
        opt.support = static_cast<std::size_t>(support);
        opt.tolerance = tolerance;
        opt.seed = seed;
        const TheoryReport report = verify_theory(opt);
        return py::make_tuple(report.all_pass(), report.to_string());
      },
      py::arg("trials") = 100, py::arg("support") = 16,
      py::arg("tolerance") = 1e-9, py::arg("seed") = 12345,
      "exact finite-support verification of the minimax guarantees; "
      "returns (all_pass, report_text)");

  m.def(
      "bleu",
      [](const std::vector<int>& hypothesis,
         const std::vector<std::vector<int>>& references) {
        const BleuReport r = bleu(hypothesis, references);
        py::dict d;
        d["bleu1"] = r.bleu[0];
        d["bleu2"] = r.bleu[1];
        d["bleu3"] = r.bleu[2];
        d["bleu4"] = r.bleu[3];
        d["brevity_penalty"] = r.brevity_penalty;
        return d;
      },
      py::arg("hypothesis"), py::arg("references"),
      "modified n-gram precision BLEU with brevity penalty");

  m.def(
      "make_dataset",
      [](int total, double paired_fraction, std::uint64_t seed) {
        SplitOptions opts;
        Rng rng = Rng::stream(seed, "data");
        const DatasetSplits s =
            make_splits(static_cast<std::size_t>(total), paired_fraction,
                        opts, rng);
        std::ostringstream buf;
        dump_dataset(s, buf);
        return buf.str();
      },
      py::arg("total") = 1000, py::arg("paired_fraction") = 0.05,
      py::arg("seed") = 42,
      "toy dataset splits in the whitespace dump format");

  m.def(
      "default_config",
      []() {
        py::dict d;
        std::istringstream lines(config_to_string(ExperimentConfig{}));
        std::string line;
        while (std::getline(lines, line)) {
          const auto eq = line.find('=');
          if (eq != std::string::npos)
            d[py::str(line.substr(0, eq))] = line.substr(eq + 1);
        }
        return d;
      },
      "every configuration key with its default value");

  m.def(
      "run_experiment",
      [](const py::dict& overrides, const std::string& out_dir) {
        const ExperimentConfig cfg = config_from_dict(overrides);
        const MetricsLog log = run_experiment(cfg, out_dir);
        py::list rows;
        for (const EpochRow& r : log.rows) rows.append(row_to_dict(r));
        return rows;
      },
      py::arg("overrides") = py::dict(), py::arg("out_dir") = std::string(),
      "train one variant; returns the per-epoch metric rows");

  m.attr("__version__") = "1.0.0";
}
