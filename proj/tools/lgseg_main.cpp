#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lgseg/config.hpp"
#include "lgseg/errors.hpp"
#include "lgseg/pipeline.hpp"
#include "lgseg/synth.hpp"

namespace fs = std::filesystem;
using namespace lgseg;

namespace {

struct Common {
  std::string config;
  std::optional<uint64_t> seed;
  bool deterministic = false;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "override train.seed");
  cmd->add_flag("--deterministic", c.deterministic, "force determinism mode");
  cmd->add_option("--out", c.out, "override the output directory");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = RunConfig::load(c.config);
  if (c.seed) cfg.training.seed = *c.seed;
  if (c.deterministic) cfg.deterministic = true;
  if (!c.out.empty()) cfg.output = c.out;
  return cfg;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const IngestionError*>(&e)) return 3;
  if (dynamic_cast<const UndefinedMetricError*>(&e)) return 4;
  if (dynamic_cast<const NumericError*>(&e)) return 5;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-guided pixel embedding segmentation"};
  app.require_subcommand(1);

  Common proto_opts, train_opts, eval_opts;
  auto* proto = app.add_subcommand("build-prototypes", "build the known/unknown prototype bank");
  add_common(proto, proto_opts);

  auto* train = app.add_subcommand("train", "train the pixel encoder");
  add_common(train, train_opts);
  std::string resume;
  train->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "evaluate a trained model");
  add_common(eval, eval_opts);
  std::string mode = "langseg";
  eval->add_option("--mode", mode, "langseg | knn | linear | track")
      ->check(CLI::IsMember({"langseg", "knn", "linear", "track"}));

  auto* rep = app.add_subcommand("report", "merge evaluation results of several runs");
  std::vector<std::string> runs;
  std::string rep_mode = "langseg", rep_out;
  rep->add_option("runs", runs, "run output directories")->required()->check(CLI::ExistingDirectory);
  rep->add_option("--mode", rep_mode, "evaluation mode to merge")
      ->check(CLI::IsMember({"langseg", "knn", "linear", "track"}));
  rep->add_option("--out", rep_out, "output directory")->required();

  auto* gen = app.add_subcommand("gen-synth", "write the synthetic shape corpus and a sample config");
  synth::CorpusOptions corpus;
  std::string gen_out;
  gen->add_option("--out", gen_out, "corpus directory")->required();
  gen->add_option("--seed", corpus.seed, "corpus seed");
  gen->add_option("--train-images", corpus.train_images, "number of training images");
  gen->add_option("--eval-images", corpus.eval_images, "number of evaluation images");
  gen->add_option("--dim", corpus.dim, "stub feature dimension");
  gen->add_flag("--deterministic", "accepted for symmetry; generation is always deterministic");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*proto) {
      const RunConfig cfg = resolve(proto_opts);
      const PrototypeBank bank = pipeline::cmd_build_prototypes(cfg);
      std::printf("prototype bank: k=%d known, u=%d unknown, d=%d -> %s\n", bank.k(), bank.u(), bank.dim(),
                  (cfg.output / "prototypes.lgpb").string().c_str());
      for (int i = 0; i < bank.k(); ++i) std::printf("  known[%d] %s\n", i, bank.known_names[i].c_str());
      std::printf("config %s\n", cfg.hash_hex().c_str());
    } else if (*train) {
      const RunConfig cfg = resolve(train_opts);
      const auto res = pipeline::cmd_train(cfg, resume);
      if (!res.trace.empty()) {
        const auto& b = res.trace.back();
        std::printf("trained to iteration %d: L_t=%.4f L_e=%.4f L_s=%.4f L_u=%.4f total=%.4f\n", res.state.iteration,
                    b.contrastive, b.embedding, b.semantic, b.unknown, b.total);
      }
      std::printf("config %s\n", cfg.hash_hex().c_str());
    } else if (*eval) {
      const RunConfig cfg = resolve(eval_opts);
      const auto r = pipeline::cmd_eval(cfg, pipeline::parse_eval_mode(mode));
      const auto& m = r.metrics;
      if (mode == "track") {
        std::printf("J=%.4f F=%.4f\n", m.j_mean, m.f_mean);
      } else {
        std::printf("mIoU=%.4f pAcc=%.4f mIoU_k=%.4f mIoU_u=%.4f hIoU=%.4f avgsim=%.4f\n", m.miou, m.pacc,
                    m.miou_known, m.miou_unknown, m.hiou, m.avgsim);
        for (size_t i = 0; i < r.unknown_names.size(); ++i)
          std::printf("held-out %s: best unknown prototype cos=%.4f, unknown pseudo-label rate=%.4f\n",
                      r.unknown_names[i].c_str(), r.unknown_proto_cos[i], r.unknown_label_rate[i]);
      }
      std::printf("config %s\n", cfg.hash_hex().c_str());
    } else if (*rep) {
      std::vector<fs::path> dirs(runs.begin(), runs.end());
      const auto t = pipeline::cmd_report(dirs, rep_mode, rep_out);
      std::printf("merged %zu rows into %s\n", t.rows.size(), (fs::path(rep_out) / "report.csv").string().c_str());
    } else if (*gen) {
      synth::write_corpus(gen_out, corpus);
      std::printf("synthetic corpus written to %s (config: %s)\n", gen_out.c_str(),
                  (fs::path(gen_out) / "config.json").string().c_str());
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
