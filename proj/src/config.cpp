#include "ultra/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "binary_io.hpp"
#include "ultra/error.hpp"

namespace ultra {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t parse_u64(std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

template <typename T>
std::vector<T> parse_list(std::string_view v, const std::function<T(std::string_view)>& one) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    out.push_back(one(trim(v.substr(start, comma - start))));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs, const std::function<std::string(const T&)>& one) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += one(xs[i]);
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Member>
Field real(Member member) {
  return {[member](RunConfig& c, std::string_view v) { member(c) = parse_double(v); },
          [member](const RunConfig& c) { return format_double(member(const_cast<RunConfig&>(c))); }};
}

template <typename Member>
Field count(Member member) {
  return {[member](RunConfig& c, std::string_view v) {
            member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(parse_u64(v));
          },
          [member](const RunConfig& c) {
            return std::to_string(member(const_cast<RunConfig&>(c)));
          }};
}

template <typename Member>
Field text(Member member) {
  return {[member](RunConfig& c, std::string_view v) { member(c) = std::string(v); },
          [member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)); }};
}

template <typename Member>
Field size_list(Member member) {
  return {[member](RunConfig& c, std::string_view v) {
            member(c) = parse_list<std::size_t>(
                v, [](std::string_view s) { return static_cast<std::size_t>(parse_u64(s)); });
          },
          [member](const RunConfig& c) {
            return join<std::size_t>(member(const_cast<RunConfig&>(c)),
                                     [](const std::size_t& x) { return std::to_string(x); });
          }};
}

template <typename Member>
Field flag(Member member) {
  return {[member](RunConfig& c, std::string_view v) {
            if (v == "true" || v == "1") {
              member(c) = true;
            } else if (v == "false" || v == "0") {
              member(c) = false;
            } else {
              throw std::invalid_argument("expected true or false, got '" + std::string(v) + "'");
            }
          },
          [member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)) ? "true" : "false"; }};
}

#define MEMBER(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<std::pair<std::string, Field>>& field_table() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    t.emplace_back("gen.height", count(MEMBER(generator.height)));
    t.emplace_back("gen.width", count(MEMBER(generator.width)));
    t.emplace_back("gen.min_cells", count(MEMBER(generator.min_cells)));
    t.emplace_back("gen.max_cells", count(MEMBER(generator.max_cells)));
    t.emplace_back("gen.malignant_lo", real(MEMBER(generator.malignant_band.lo)));
    t.emplace_back("gen.malignant_hi", real(MEMBER(generator.malignant_band.hi)));
    t.emplace_back("gen.benign_lo", real(MEMBER(generator.benign_band.lo)));
    t.emplace_back("gen.benign_hi", real(MEMBER(generator.benign_band.hi)));
    t.emplace_back("gen.radius_min", real(MEMBER(generator.radius.lo)));
    t.emplace_back("gen.radius_max", real(MEMBER(generator.radius.hi)));
    t.emplace_back("gen.snap_centers", flag(MEMBER(generator.snap_centers)));
    t.emplace_back("gen.background", real(MEMBER(generator.background)));
    t.emplace_back("gen.noise_std", real(MEMBER(generator.noise_std)));
    t.emplace_back("gen.p_all_benign", real(MEMBER(generator.p_all_benign)));
    t.emplace_back("gen.p_all_malignant", real(MEMBER(generator.p_all_malignant)));
    t.emplace_back("gen.malignant_prob_lo", real(MEMBER(generator.malignant_prob.lo)));
    t.emplace_back("gen.malignant_prob_hi", real(MEMBER(generator.malignant_prob.hi)));
    t.emplace_back("gen.seed", count(MEMBER(generator.seed)));
    t.emplace_back("data.count", count(MEMBER(dataset_count)));
    t.emplace_back("data.path", text(MEMBER(dataset_path)));
    t.emplace_back("split.train", real(MEMBER(split.train)));
    t.emplace_back("split.val", real(MEMBER(split.val)));
    t.emplace_back("split.test", real(MEMBER(split.test)));
    t.emplace_back("split.seed", count(MEMBER(split_seed)));
    t.emplace_back("model.branches", count(MEMBER(model.n_branches)));
    t.emplace_back("model.branch_weights",
                   Field{[](RunConfig& c, std::string_view v) {
                           c.model.branch_weights = parse_list<double>(v, parse_double);
                         },
                         [](const RunConfig& c) {
                           return join<double>(c.model.branch_weights, format_double);
                         }});
    t.emplace_back("model.sigma", real(MEMBER(model.sigma)));
    t.emplace_back("model.alpha", real(MEMBER(model.alpha)));
    t.emplace_back("model.labels", count(MEMBER(model.n_labels)));
    t.emplace_back("model.epsilon_floor", real(MEMBER(model.epsilon_floor)));
    t.emplace_back("model.kl_direction",
                   Field{[](RunConfig& c, std::string_view v) {
                           if (v == "pred_target") {
                             c.model.kl_direction = ldl::KlDirection::PredToTarget;
                           } else if (v == "target_pred") {
                             c.model.kl_direction = ldl::KlDirection::TargetToPred;
                           } else {
                             throw std::invalid_argument("expected pred_target or target_pred");
                           }
                         },
                         [](const RunConfig& c) {
                           return std::string(c.model.kl_direction == ldl::KlDirection::PredToTarget
                                                  ? "pred_target"
                                                  : "target_pred");
                         }});
    t.emplace_back("model.loss", Field{[](RunConfig& c, std::string_view v) {
                                         if (v == "joint") {
                                           c.model.loss_mode = LossMode::Joint;
                                         } else if (v == "kl") {
                                           c.model.loss_mode = LossMode::KlOnly;
                                         } else if (v == "mse") {
                                           c.model.loss_mode = LossMode::MseOnly;
                                         } else {
                                           throw std::invalid_argument("expected joint, kl or mse");
                                         }
                                       },
                                       [](const RunConfig& c) { return to_string(c.model.loss_mode); }});
    t.emplace_back("model.backbone", size_list(MEMBER(model.backbone_hidden)));
    t.emplace_back("model.head", size_list(MEMBER(model.head_hidden)));
    t.emplace_back("model.seed", count(MEMBER(model.seed)));
    t.emplace_back("aug.hflip", real(MEMBER(model.augmentation.hflip_prob)));
    t.emplace_back("aug.vflip", real(MEMBER(model.augmentation.vflip_prob)));
    t.emplace_back("aug.rot90", real(MEMBER(model.augmentation.rot90_prob)));
    t.emplace_back("aug.noise_prob", real(MEMBER(model.augmentation.noise_prob)));
    t.emplace_back("aug.noise_std", real(MEMBER(model.augmentation.noise_std)));
    t.emplace_back("train.lr", real(MEMBER(train.adam.lr)));
    t.emplace_back("train.beta1", real(MEMBER(train.adam.beta1)));
    t.emplace_back("train.beta2", real(MEMBER(train.adam.beta2)));
    t.emplace_back("train.eps", real(MEMBER(train.adam.eps)));
    t.emplace_back("train.lr_decay", real(MEMBER(train.lr_decay)));
    t.emplace_back("train.lr_decay_every", count(MEMBER(train.lr_decay_every)));
    t.emplace_back("train.batch_size", count(MEMBER(train.batch_size)));
    t.emplace_back("train.stage1_epochs", count(MEMBER(train.stage1_epochs)));
    t.emplace_back("train.stage2_epochs", count(MEMBER(train.stage2_epochs)));
    t.emplace_back("train.seed", count(MEMBER(train.seed)));
    t.emplace_back("train.eval_seed", count(MEMBER(train.eval_seed)));
    t.emplace_back("eval.icc_form",
                   Field{[](RunConfig& c, std::string_view v) {
                           c.eval.icc_form = parse_icc_form(v);
                           c.train.icc_form = c.eval.icc_form;
                         },
                         [](const RunConfig& c) { return to_string(c.eval.icc_form); }});
    t.emplace_back("eval.kappa_bins", Field{[](RunConfig& c, std::string_view v) {
                                              c.eval.kappa.n_bins = parse_u64(v);
                                              c.train.kappa.n_bins = c.eval.kappa.n_bins;
                                            },
                                            [](const RunConfig& c) {
                                              return std::to_string(c.eval.kappa.n_bins);
                                            }});
    t.emplace_back("eval.kappa_weighting",
                   Field{[](RunConfig& c, std::string_view v) {
                           c.eval.kappa.weighting = parse_kappa_weighting(v);
                           c.train.kappa.weighting = c.eval.kappa.weighting;
                         },
                         [](const RunConfig& c) { return to_string(c.eval.kappa.weighting); }});
    t.emplace_back("eval.bootstrap_b", count(MEMBER(eval.bootstrap_b)));
    t.emplace_back("eval.bootstrap_seed", count(MEMBER(eval.bootstrap_seed)));
    t.emplace_back("eval.level", real(MEMBER(eval.level)));
    t.emplace_back("out.checkpoint", text(MEMBER(checkpoint_path)));
    t.emplace_back("out.last_checkpoint", text(MEMBER(last_checkpoint_path)));
    t.emplace_back("out.log", text(MEMBER(log_path)));
    return t;
  }();
  return table;
}

#undef MEMBER

const Field* find_field(std::string_view key) {
  for (const auto& [name, field] : field_table()) {
    if (name == key) return &field;
  }
  return nullptr;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

std::string to_string(metrics::IccForm form) {
  return form == metrics::IccForm::TwoWayRandomSingle ? "icc2_1" : "icc3_1";
}

std::string to_string(metrics::KappaWeighting w) {
  switch (w) {
    case metrics::KappaWeighting::None: return "none";
    case metrics::KappaWeighting::Linear: return "linear";
    case metrics::KappaWeighting::Quadratic: return "quadratic";
  }
  return "?";
}

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::Joint: return "joint";
    case LossMode::KlOnly: return "kl";
    case LossMode::MseOnly: return "mse";
  }
  return "?";
}

metrics::IccForm parse_icc_form(std::string_view v) {
  if (v == "icc2_1" || v == "two_way_random_single") return metrics::IccForm::TwoWayRandomSingle;
  if (v == "icc3_1" || v == "two_way_mixed_single") return metrics::IccForm::TwoWayMixedSingle;
  throw std::invalid_argument("expected icc2_1 or icc3_1");
}

metrics::KappaWeighting parse_kappa_weighting(std::string_view v) {
  if (v == "none") return metrics::KappaWeighting::None;
  if (v == "linear") return metrics::KappaWeighting::Linear;
  if (v == "quadratic") return metrics::KappaWeighting::Quadratic;
  throw std::invalid_argument("expected none, linear or quadratic");
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  const Field* field = find_field(key);
  if (!field) throw ConfigError("unknown key '" + std::string(key) + "'", 0);
  try {
    field->set(config, value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(key) + ": " + e.what(), 0);
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [name, field] : field_table()) keys.push_back(name);
  return keys;
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig config;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key = value", line_no);
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", line_no);
    const Field* field = find_field(key);
    if (!field) throw ConfigError("unknown key '" + std::string(key) + "'", line_no);
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError("duplicate key '" + std::string(key) + "'", line_no);
    }
    try {
      field->set(config, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string(key) + ": " + e.what(), line_no);
    }
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path.string());
  return parse_run_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string serialize_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& [name, field] : field_table()) {
    out += name;
    out += " = ";
    out += field.get(config);
    out += '\n';
  }
  return out;
}

UltraConfig resolved_model_config(const RunConfig& config) {
  UltraConfig m = config.model;
  m.input_height = config.generator.height;
  m.input_width = config.generator.width;
  return m;
}

void RunConfig::validate() const {
  try {
    generator.validate();
    if (dataset_count == 0) throw std::invalid_argument("data.count must be >= 1");
    const double total = split.train + split.val + split.test;
    if (!(split.train >= 0.0 && split.val >= 0.0 && split.test >= 0.0) ||
        std::abs(total - 1.0) > 1e-9) {
      throw std::invalid_argument("split fractions must be non-negative and sum to 1");
    }
    resolved_model_config(*this).validate();
    train.validate();
    if (eval.bootstrap_b < 100) throw std::invalid_argument("eval.bootstrap_b must be >= 100");
    if (eval.kappa.n_bins < 2) throw std::invalid_argument("eval.kappa_bins must be >= 2");
    if (!(eval.level > 0.0 && eval.level < 1.0)) throw std::invalid_argument("eval.level not in (0,1)");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), 0);
  }
}

}  // namespace ultra
