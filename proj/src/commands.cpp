#include "ultra/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "ultra/checkpoint.hpp"
#include "ultra/error.hpp"
#include "ultra/label_dist.hpp"

namespace ultra::cli {
namespace {

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const VersionError& e) {
    err << "version mismatch: " << e.what() << '\n';
    return kVersionMismatch;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kIoError;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const NonFiniteError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNonFinite;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kPartialFailure;
  }
}

RunConfig load_validated(const std::string& path) {
  RunConfig cfg = load_run_config(path);
  cfg.validate();
  return cfg;
}

std::string labels_path_for(const std::string& dataset_path) {
  std::filesystem::path p(dataset_path);
  p.replace_extension(".labels.csv");
  return p.string();
}

void check_patch_shape(const data::Dataset& ds, const UltraConfig& model) {
  for (const auto& s : ds) {
    if (s.patch.height != model.input_height || s.patch.width != model.input_width) {
      throw VersionError("sample " + s.id + " is " + std::to_string(s.patch.height) + "x" +
                             std::to_string(s.patch.width) + ", model expects " +
                             std::to_string(model.input_height) + "x" +
                             std::to_string(model.input_width),
                         0);
    }
  }
}

ValMetrics metrics_or_nan(const UltraModel& model, const data::Dataset& val,
                          const TrainConfig& train) {
  return validation_metrics(model, val, train);
}

}  // namespace

data::Splits load_splits(const RunConfig& config) {
  data::Dataset all = config.dataset_path.empty()
                          ? data::generate(config.generator, config.dataset_count)
                          : data::load_dataset(config.dataset_path);
  if (all.empty()) throw std::invalid_argument("dataset is empty");
  return data::split(all, config.split, config.split_seed);
}

RunOutcome train_and_validate(const RunConfig& config, const data::Splits& splits) {
  config.validate();
  const UltraConfig model_cfg = resolved_model_config(config);
  check_patch_shape(splits.train, model_cfg);
  check_patch_shape(splits.val, model_cfg);
  TrainState state = initial_state(model_cfg, config.train, splits.train);
  RunOutcome outcome{two_stage_train(std::move(state), splits.train, splits.val, config.train), {}};
  outcome.best_val = metrics_or_nan(outcome.result.best_state.model, splits.val, config.train);
  return outcome;
}

std::string training_log_header() { return "epoch,stage,lr,train_loss,val_mse,val_icc,val_kappa\n"; }

std::string training_log_row(const EpochLog& r) {
  return std::to_string(r.epoch) + ',' + std::to_string(r.stage) + ',' + format_double(r.lr) + ',' +
         format_double(r.train_loss) + ',' + format_double(r.val_mse) + ',' +
         format_double(r.val_icc) + ',' + format_double(r.val_kappa) + '\n';
}

std::string training_log_csv(std::span<const EpochLog> rows) {
  std::string out = training_log_header();
  for (const auto& r : rows) out += training_log_row(r);
  return out;
}

std::string eval_report_csv(const metrics::EvalReport& report) {
  std::string out = "metric,point,lo,hi\n";
  for (const auto* m : {&report.icc, &report.kappa, &report.mse}) {
    out += m->name + ',' + format_double(m->point) + ',' + format_double(m->ci.lo) + ',' +
           format_double(m->ci.hi) + '\n';
  }
  return out;
}

std::string eval_report_table(const metrics::EvalReport& report) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "samples: " << report.count << '\n';
  os << "metric   point     95% CI\n";
  for (const auto* m : {&report.icc, &report.kappa, &report.mse}) {
    os << m->name << std::string(9 - m->name.size(), ' ') << m->point << "    [" << m->ci.lo
       << ", " << m->ci.hi << "]";
    if (!m->contains_point()) os << "  (interval excludes point estimate)";
    if (m->ci.skipped) os << "  (" << m->ci.skipped << " undefined resamples skipped)";
    os << '\n';
  }
  return os.str();
}

std::vector<double> default_sweep_values(SweepAxis axis) {
  std::vector<double> v;
  if (axis == SweepAxis::Sigma) {
    for (int i = 1; i <= 10; ++i) v.push_back(i / 100.0);
  } else {
    for (int n = 1; n <= 5; ++n) v.push_back(n);
  }
  return v;
}

RunConfig with_sweep_value(const RunConfig& base, SweepAxis axis, double value) {
  RunConfig cfg = base;
  if (axis == SweepAxis::Sigma) {
    cfg.model.sigma = value;
  } else {
    if (!(value >= 1.0) || value != std::floor(value)) {
      throw std::invalid_argument("branch count must be a positive integer");
    }
    cfg.model.n_branches = static_cast<std::size_t>(value);
    if (!cfg.model.branch_weights.empty() && cfg.model.branch_weights.size() != cfg.model.n_branches) {
      cfg.model.branch_weights.clear();
    }
  }
  return cfg;
}

std::vector<SweepRow> run_sweep(const RunConfig& base, SweepAxis axis,
                                std::span<const double> values, const data::Splits& splits,
                                std::ostream* progress) {
  std::vector<SweepRow> rows;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (double value : values) {
    SweepRow row{value, nan, nan, nan, false};
    try {
      const RunConfig cfg = with_sweep_value(base, axis, value);
      const RunOutcome o = train_and_validate(cfg, splits);
      row.icc = o.best_val.icc;
      row.kappa = o.best_val.kappa;
      row.mse = o.best_val.mse;
    } catch (const std::exception& e) {
      row.failed = true;
      if (progress) *progress << "sweep point " << format_double(value) << " failed: " << e.what() << '\n';
    }
    if (progress) {
      *progress << "sweep value=" << format_double(value) << " icc=" << format_double(row.icc)
                << " kappa=" << format_double(row.kappa) << " mse=" << format_double(row.mse)
                << '\n';
    }
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "value,icc,kappa,mse\n";
  for (const auto& r : rows) {
    out += format_double(r.value) + ',' + format_double(r.icc) + ',' + format_double(r.kappa) +
           ',' + format_double(r.mse) + '\n';
  }
  return out;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const data::Splits& splits,
                                      std::ostream* progress) {
  struct Variant {
    std::string table;
    std::string name;
    LossMode loss;
    std::size_t branches;
  };
  const std::size_t n = base.model.n_branches;
  const std::vector<Variant> variants{
      {"loss", "ultra", LossMode::Joint, n},
      {"loss", "without_mse", LossMode::KlOnly, n},
      {"loss", "without_kl", LossMode::MseOnly, n},
      {"branches", "n1", LossMode::Joint, 1},
      {"branches", "n2", LossMode::Joint, 2},
      {"branches", "n3", LossMode::Joint, 3},
  };
  std::map<std::pair<int, std::size_t>, AblationRow> cache;
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    const auto key = std::make_pair(static_cast<int>(v.loss), v.branches);
    auto it = cache.find(key);
    if (it == cache.end()) {
      RunConfig cfg = with_sweep_value(base, SweepAxis::Branches, static_cast<double>(v.branches));
      cfg.model.loss_mode = v.loss;
      const RunOutcome o = train_and_validate(cfg, splits);
      AblationRow row;
      row.loss = v.loss;
      row.branches = v.branches;
      row.icc = o.best_val.icc;
      row.kappa = o.best_val.kappa;
      row.mse = o.best_val.mse;
      double norm_sum = 0.0;
      std::size_t stage2 = 0;
      for (const auto& e : o.result.log) {
        if (e.stage == 2) {
          norm_sum += e.dist_grad_norm;
          ++stage2;
        }
      }
      row.dist_grad_norm = stage2 ? norm_sum / static_cast<double>(stage2) : 0.0;
      it = cache.emplace(key, row).first;
    }
    AblationRow row = it->second;
    row.table = v.table;
    row.variant = v.name;
    if (progress) {
      *progress << "ablation " << row.table << '/' << row.variant << " icc=" << format_double(row.icc)
                << " kappa=" << format_double(row.kappa) << " mse=" << format_double(row.mse)
                << '\n';
    }
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::string out = "table,variant,loss,branches,icc,kappa,mse,dist_grad_norm\n";
  for (const auto& r : rows) {
    out += r.table + ',' + r.variant + ',' + to_string(r.loss) + ',' + std::to_string(r.branches) +
           ',' + format_double(r.icc) + ',' + format_double(r.kappa) + ',' + format_double(r.mse) +
           ',' + format_double(r.dist_grad_norm) + '\n';
  }
  return out;
}

int cmd_generate(const std::string& config_path, const std::string& out_path, std::ostream& out,
                 std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = load_validated(config_path);
    const data::Dataset ds = data::generate(cfg.generator, cfg.dataset_count);
    data::save_dataset(ds, out_path);
    const std::string labels = labels_path_for(out_path);
    data::save_labels_csv(ds, labels);
    std::vector<std::size_t> hist(10, 0);
    for (const auto& s : ds) ++hist[metrics::score_bin(s.label, 10)];
    out << "wrote " << ds.size() << " samples to " << out_path << " (labels: " << labels << ")\n";
    out << "label histogram:\n";
    for (std::size_t b = 0; b < hist.size(); ++b) {
      out << "  [" << format_double(b / 10.0) << ", " << format_double((b + 1) / 10.0)
          << (b + 1 == hist.size() ? "] " : ") ") << hist[b] << '\n';
    }
    return static_cast<int>(kOk);
  });
}

int cmd_train(const TrainCommand& cmd, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = load_run_config(cmd.config_path);
    for (const auto& [k, v] : cmd.overrides) set_config_value(cfg, k, v);
    cfg.validate();
    const data::Splits splits = load_splits(cfg);
    const UltraConfig model_cfg = resolved_model_config(cfg);
    check_patch_shape(splits.train, model_cfg);
    check_patch_shape(splits.val, model_cfg);

    TrainState state = [&] {
      if (cmd.resume_path.empty()) return initial_state(model_cfg, cfg.train, splits.train);
      Checkpoint ck = load_checkpoint(cmd.resume_path);
      if (serialize_run_config(ck.config) != serialize_run_config(cfg)) {
        throw ConfigError("resume checkpoint was written with a different configuration", 0);
      }
      return std::move(ck.state);
    }();

    const bool resuming = !cmd.resume_path.empty();
    std::ofstream log(cfg.log_path, resuming ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open " + cfg.log_path);
    if (!resuming || std::filesystem::file_size(cfg.log_path) == 0) log << training_log_header();

    Trainer trainer(cfg.train, splits.train, splits.val, std::move(state));
    const std::size_t limit = cmd.stop_after.value_or(cfg.train.total_epochs());
    int code = kOk;
    while (!trainer.done() && trainer.state().epoch < limit) {
      EpochLog row;
      try {
        row = trainer.run_epoch();
      } catch (const NonFiniteError& e) {
        err << "numerical error: " << e.what() << "; last good checkpoint kept at "
            << cfg.last_checkpoint_path << '\n';
        code = kNonFinite;
        break;
      }
      log << training_log_row(row) << std::flush;
      save_checkpoint(cfg.last_checkpoint_path, cfg, trainer.state());
      if (trainer.best() && trainer.best()->best_epoch == row.epoch) {
        save_checkpoint(cfg.checkpoint_path, cfg, *trainer.best());
      }
      out << "epoch " << row.epoch << " stage " << row.stage << " lr " << format_double(row.lr)
          << " loss " << format_double(row.train_loss) << " val_mse " << format_double(row.val_mse)
          << " val_icc " << format_double(row.val_icc) << " val_kappa "
          << format_double(row.val_kappa) << '\n';
    }
    if (code == kOk) {
      out << "best epoch " << trainer.state().best_epoch << " val_mse "
          << format_double(trainer.state().best_val_mse) << "; checkpoint " << cfg.checkpoint_path
          << ", log " << cfg.log_path << '\n';
    }
    return code;
  });
}

int cmd_eval(const EvalCommand& cmd, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Checkpoint ck = load_checkpoint(cmd.checkpoint_path);
    data::Dataset samples;
    if (cmd.dataset_path.empty() || cmd.split != "all") {
      RunConfig cfg = ck.config;
      if (!cmd.dataset_path.empty()) cfg.dataset_path = cmd.dataset_path;
      if (cmd.split == "all" ) {
        samples = cfg.dataset_path.empty() ? data::generate(cfg.generator, cfg.dataset_count)
                                           : data::load_dataset(cfg.dataset_path);
      } else {
        data::Splits s = load_splits(cfg);
        if (cmd.split == "train") {
          samples = std::move(s.train);
        } else if (cmd.split == "val") {
          samples = std::move(s.val);
        } else if (cmd.split == "test") {
          samples = std::move(s.test);
        } else {
          throw std::invalid_argument("--split must be all, train, val or test");
        }
      }
    } else {
      samples = data::load_dataset(cmd.dataset_path);
    }
    if (samples.empty()) throw std::invalid_argument("no samples to evaluate");
    check_patch_shape(samples, ck.state.model.config());

    metrics::EvalOptions opts = ck.config.eval;
    if (cmd.icc_form) opts.icc_form = *cmd.icc_form;
    if (cmd.kappa_bins) opts.kappa.n_bins = *cmd.kappa_bins;
    if (cmd.kappa_weighting) opts.kappa.weighting = *cmd.kappa_weighting;
    if (cmd.bootstrap_b) opts.bootstrap_b = *cmd.bootstrap_b;
    if (cmd.seed) opts.bootstrap_seed = *cmd.seed;
    if (opts.kappa.n_bins < 2) throw std::invalid_argument("--kappa-bins must be >= 2");

    const metrics::EvalPairs pairs =
        predict_pairs(ck.state.model, samples, ck.config.train.eval_seed);
    const metrics::EvalReport report = metrics::evaluate(pairs, opts);
    out << eval_report_table(report);
    const std::string csv = eval_report_csv(report);
    if (cmd.out_csv.empty()) {
      out << '\n' << csv;
    } else {
      io::write_text(cmd.out_csv, csv);
      out << "report written to " << cmd.out_csv << '\n';
    }
    return static_cast<int>(kOk);
  });
}

int cmd_sweep(const SweepCommand& cmd, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = load_validated(cmd.config_path);
    const std::vector<double> values =
        cmd.values.empty() ? default_sweep_values(cmd.axis) : cmd.values;
    const data::Splits splits = load_splits(cfg);
    const std::vector<SweepRow> rows = run_sweep(cfg, cmd.axis, values, splits, &out);
    const std::string csv = sweep_csv(rows);
    if (cmd.out_csv.empty()) {
      out << csv;
    } else {
      io::write_text(cmd.out_csv, csv);
      out << "sweep written to " << cmd.out_csv << '\n';
    }
    for (const auto& r : rows) {
      if (r.failed) return static_cast<int>(kPartialFailure);
    }
    return static_cast<int>(kOk);
  });
}

int cmd_encode(double s, std::size_t n, double sigma, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ldl::ScoreGrid grid = ldl::make_grid(n);
    ldl::EncoderConfig enc;
    enc.sigma = sigma;
    const ldl::LabelDistribution y = ldl::encode(s, grid, enc);
    out << "t,prob\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
      out << format_double(grid[i]) << ',' << format_double(y[i]) << '\n';
    }
    return static_cast<int>(kOk);
  });
}

int cmd_ablate(const std::string& config_path, const std::string& out_csv, std::ostream& out,
               std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = load_validated(config_path);
    const data::Splits splits = load_splits(cfg);
    const std::vector<AblationRow> rows = run_ablation(cfg, splits, &out);
    const std::string csv = ablation_csv(rows);
    if (out_csv.empty()) {
      out << csv;
    } else {
      io::write_text(out_csv, csv);
      out << "ablation written to " << out_csv << '\n';
    }
    return static_cast<int>(kOk);
  });
}

}  // namespace ultra::cli
