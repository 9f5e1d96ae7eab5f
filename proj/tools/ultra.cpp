// Command-line front end for the ULTRA pipeline.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ultra/commands.hpp"
#include "ultra/config.hpp"
#include "ultra/error.hpp"

namespace {

using namespace ultra;
using namespace ultra::cli;

template <typename T>
std::optional<T> opt_if(CLI::Option* o, const T& v) {
  return o->count() ? std::optional<T>(v) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ULTRA: label-distribution learning for tumor cellularity"};
  app.require_subcommand(1);
  int code = kOk;

  // generate
  auto* gen = app.add_subcommand("generate", "synthesize a labelled ULDS dataset");
  std::string gen_config, gen_out = "dataset.ulds";
  gen->add_option("--config", gen_config, "run configuration")->required();
  gen->add_option("--out", gen_out, "output dataset path");
  gen->callback([&] { code = cmd_generate(gen_config, gen_out, std::cout, std::cerr); });

  // train
  auto* train = app.add_subcommand("train", "two-stage training with checkpoints and CSV log");
  TrainCommand tc;
  std::size_t stop_after = 0;
  double t_sigma = 0.0;
  std::size_t t_branches = 0;
  std::uint64_t t_seed = 0;
  std::string t_loss;
  std::vector<std::string> t_sets;
  train->add_option("--config", tc.config_path, "run configuration")->required();
  train->add_option("--resume", tc.resume_path, "resume from a checkpoint");
  auto* o_stop = train->add_option("--stop-after", stop_after, "stop after this many epochs");
  auto* o_sigma = train->add_option("--sigma", t_sigma, "label-distribution width");
  auto* o_branches = train->add_option("--branches", t_branches, "number of branches");
  auto* o_seed = train->add_option("--seed", t_seed, "training seed");
  auto* o_loss = train->add_option("--loss", t_loss, "joint | kl | mse");
  train->add_option("--set", t_sets, "extra key=value config overrides");
  train->callback([&] {
    tc.stop_after = opt_if(o_stop, stop_after);
    if (o_sigma->count()) tc.overrides.emplace_back("model.sigma", format_double(t_sigma));
    if (o_branches->count()) tc.overrides.emplace_back("model.branches", std::to_string(t_branches));
    if (o_seed->count()) tc.overrides.emplace_back("train.seed", std::to_string(t_seed));
    if (o_loss->count()) tc.overrides.emplace_back("model.loss", t_loss);
    for (const auto& s : t_sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        std::cerr << "config error: --set expects key=value, got '" << s << "'\n";
        code = kConfigError;
        return;
      }
      tc.overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    code = cmd_train(tc, std::cout, std::cerr);
  });

  // eval
  auto* eval = app.add_subcommand("eval", "ICC, kappa and MSE with bootstrap intervals");
  EvalCommand ec;
  std::string icc_form, kappa_weighting;
  std::size_t kappa_bins = 0, bootstrap_b = 0;
  std::uint64_t e_seed = 0;
  eval->add_option("--checkpoint", ec.checkpoint_path, "trained checkpoint")->required();
  eval->add_option("--dataset", ec.dataset_path, "ULDS dataset to score");
  eval->add_option("--split", ec.split, "all | train | val | test");
  auto* o_icc = eval->add_option("--icc-form", icc_form, "icc2_1 | icc3_1");
  auto* o_bins = eval->add_option("--kappa-bins", kappa_bins, "kappa bin count");
  auto* o_w = eval->add_option("--kappa-weighting", kappa_weighting, "none | linear | quadratic");
  auto* o_b = eval->add_option("--bootstrap-b", bootstrap_b, "bootstrap resamples");
  auto* o_eseed = eval->add_option("--seed", e_seed, "bootstrap seed");
  eval->add_option("--out", ec.out_csv, "report CSV path");
  eval->callback([&] {
    try {
      if (o_icc->count()) ec.icc_form = parse_icc_form(icc_form);
      if (o_w->count()) ec.kappa_weighting = parse_kappa_weighting(kappa_weighting);
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << '\n';
      code = kConfigError;
      return;
    }
    ec.kappa_bins = opt_if(o_bins, kappa_bins);
    ec.bootstrap_b = opt_if(o_b, bootstrap_b);
    ec.seed = opt_if(o_eseed, e_seed);
    code = cmd_eval(ec, std::cout, std::cerr);
  });

  // sweep
  auto* sweep = app.add_subcommand("sweep", "train across sigma or branch-count values");
  SweepCommand sc;
  std::string axis = "sigma";
  sweep->add_option("--config", sc.config_path, "run configuration")->required();
  sweep->add_option("--axis", axis, "sigma | branches")->check(CLI::IsMember({"sigma", "branches"}));
  sweep->add_option("--values", sc.values, "values to try (default per axis)")->delimiter(',');
  sweep->add_option("--out", sc.out_csv, "sweep CSV path");
  sweep->callback([&] {
    sc.axis = axis == "sigma" ? SweepAxis::Sigma : SweepAxis::Branches;
    code = cmd_sweep(sc, std::cout, std::cerr);
  });

  // encode
  auto* encode = app.add_subcommand("encode", "print the label distribution of a score");
  double s = 0.5, sigma = 0.04;
  std::size_t n = 100;
  encode->add_option("--s", s, "score in [0, 1]")->required();
  encode->add_option("--n", n, "number of grid points");
  encode->add_option("--sigma", sigma, "distribution width");
  encode->callback([&] { code = cmd_encode(s, n, sigma, std::cout, std::cerr); });

  // ablate
  auto* ablate = app.add_subcommand("ablate", "loss-term and branch-count ablations");
  std::string ab_config, ab_out;
  ablate->add_option("--config", ab_config, "run configuration")->required();
  ablate->add_option("--out", ab_out, "ablation CSV path");
  ablate->callback([&] { code = cmd_ablate(ab_config, ab_out, std::cout, std::cerr); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }
  return code;
}
