#pragma once

// Implementation of the `ultra` subcommands plus the pipeline helpers they
// share. Each cmd_* returns a process exit code:
//   0 success, 1 partial failure (sweep), 2 config error, 3 I/O or parse
//   error, 4 non-finite loss, 5 checkpoint/dataset version or shape mismatch.

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ultra/config.hpp"
#include "ultra/data.hpp"
#include "ultra/metrics.hpp"
#include "ultra/trainer.hpp"

namespace ultra::cli {

enum ExitCode : int {
  kOk = 0,
  kPartialFailure = 1,
  kConfigError = 2,
  kIoError = 3,
  kNonFinite = 4,
  kVersionMismatch = 5,
};

/// Dataset named by the config (or generated from it), split per the config.
data::Splits load_splits(const RunConfig& config);

struct RunOutcome {
  TrainResult result;
  ValMetrics best_val;  // best-MSE checkpoint on the validation split
};

RunOutcome train_and_validate(const RunConfig& config, const data::Splits& splits);

std::string training_log_header();
std::string training_log_row(const EpochLog& row);
std::string training_log_csv(std::span<const EpochLog> rows);

std::string eval_report_csv(const metrics::EvalReport& report);
std::string eval_report_table(const metrics::EvalReport& report);

enum class SweepAxis { Sigma, Branches };

struct SweepRow {
  double value = 0.0;
  double icc = 0.0;
  double kappa = 0.0;
  double mse = 0.0;
  bool failed = false;
};

/// 10 evenly spaced sigmas over [0.01, 0.1], or branch counts 1..5.
std::vector<double> default_sweep_values(SweepAxis axis);
RunConfig with_sweep_value(const RunConfig& base, SweepAxis axis, double value);
std::vector<SweepRow> run_sweep(const RunConfig& base, SweepAxis axis,
                                std::span<const double> values, const data::Splits& splits,
                                std::ostream* progress = nullptr);
std::string sweep_csv(std::span<const SweepRow> rows);

struct AblationRow {
  std::string table;    // "loss" or "branches"
  std::string variant;
  LossMode loss = LossMode::Joint;
  std::size_t branches = 0;
  double icc = 0.0;
  double kappa = 0.0;
  double mse = 0.0;
  double dist_grad_norm = 0.0;  // mean stage-2 norm of the KL gradient at the logits
};

/// Loss variants (joint, KL only, MSE only) at the configured branch count,
/// then the joint loss at N = 1, 2, 3. Identical configurations are trained once.
std::vector<AblationRow> run_ablation(const RunConfig& base, const data::Splits& splits,
                                      std::ostream* progress = nullptr);
std::string ablation_csv(std::span<const AblationRow> rows);

int cmd_generate(const std::string& config_path, const std::string& out_path, std::ostream& out,
                 std::ostream& err);

struct TrainCommand {
  std::string config_path;
  std::string resume_path;                // continue from this checkpoint
  std::optional<std::size_t> stop_after;  // stop once this many epochs are complete
  std::vector<std::pair<std::string, std::string>> overrides;
};
int cmd_train(const TrainCommand& cmd, std::ostream& out, std::ostream& err);

struct EvalCommand {
  std::string checkpoint_path;
  std::string dataset_path;  // empty: rebuild the data described by the checkpoint config
  std::string split = "all";  // all | train | val | test
  std::optional<metrics::IccForm> icc_form;
  std::optional<std::size_t> kappa_bins;
  std::optional<metrics::KappaWeighting> kappa_weighting;
  std::optional<std::size_t> bootstrap_b;
  std::optional<std::uint64_t> seed;
  std::string out_csv;  // empty: CSV goes to `out` after the table
};
int cmd_eval(const EvalCommand& cmd, std::ostream& out, std::ostream& err);

struct SweepCommand {
  std::string config_path;
  SweepAxis axis = SweepAxis::Sigma;
  std::vector<double> values;  // empty: default_sweep_values(axis)
  std::string out_csv;
};
int cmd_sweep(const SweepCommand& cmd, std::ostream& out, std::ostream& err);

int cmd_encode(double s, std::size_t n, double sigma, std::ostream& out, std::ostream& err);

int cmd_ablate(const std::string& config_path, const std::string& out_csv, std::ostream& out,
               std::ostream& err);

}  // namespace ultra::cli
