#pragma once

// Experiment configuration: one `key = value` per line, `#` starts a
// comment, keys are dotted field names under train., data. and model.
// Absent keys keep their defaults.

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qnt/data.hpp"
#include "qnt/error.hpp"
#include "qnt/model.hpp"
#include "qnt/train.hpp"

namespace qnt {

class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

struct ExperimentConfig {
  TrainConfig train;
  DatasetSpec data;
  std::optional<MlpSpec> model;  // default: [dim, 64, 32, classes]

  void validate() const {
    train.validate();
    data.validate();
    if (model) model->validate();
  }

  /// The model spec for a concrete dataset; checks an explicit spec against it.
  MlpSpec model_for(const Dataset& d) const {
    if (!model) return MlpSpec{{d.dim, 64, 32, d.num_classes}};
    if (model->input_dim() != d.dim || model->num_classes() != d.num_classes) {
      throw ConfigError("model.layer_dims does not match the dataset (dim " + std::to_string(d.dim) +
                        ", classes " + std::to_string(d.num_classes) + ")");
    }
    return *model;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
  T v{};
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc{} || r.ptr != end) return std::nullopt;
  return v;
}

template <class T>
std::optional<std::vector<T>> parse_list(std::string_view s) {
  std::vector<T> out;
  if (trim(s).empty()) return out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = s.find(',', pos);
    const auto item = trim(s.substr(pos, comma == std::string_view::npos ? comma : comma - pos));
    const auto v = parse_number<T>(item);
    if (!v) return std::nullopt;
    out.push_back(*v);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

using Setter = std::function<bool(ExperimentConfig&, std::string_view)>;

struct KeySpec {
  const char* expected;  // for error messages
  Setter set;
};

template <class T>
KeySpec number_key(T TrainConfig::*field, const char* what = nullptr) {
  return {what ? what : (std::is_floating_point_v<T> ? "a real number" : "an integer"),
          [field](ExperimentConfig& c, std::string_view v) {
            auto n = parse_number<T>(v);
            if (!n) return false;
            c.train.*field = *n;
            return true;
          }};
}

template <class T>
KeySpec data_number_key(T DatasetSpec::*field) {
  return {std::is_floating_point_v<T> ? "a real number" : "a nonnegative integer",
          [field](ExperimentConfig& c, std::string_view v) {
            auto n = parse_number<T>(v);
            if (!n) return false;
            c.data.*field = *n;
            return true;
          }};
}

inline std::optional<bool> parse_bool(std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  return std::nullopt;
}

inline const std::map<std::string, KeySpec, std::less<>>& key_table() {
  static const std::map<std::string, KeySpec, std::less<>> table = {
      {"train.algorithm",
       {"one of none, bc, median_bc, br",
        [](ExperimentConfig& c, std::string_view v) {
          if (v == "none") c.train.algorithm = Algorithm::none;
          else if (v == "bc") c.train.algorithm = Algorithm::bc;
          else if (v == "median_bc") c.train.algorithm = Algorithm::median_bc;
          else if (v == "br") c.train.algorithm = Algorithm::br;
          else return false;
          return true;
        }}},
      {"train.blend_rho", number_key(&TrainConfig::blend_rho)},
      {"train.lr",
       {"a real number",
        [](ExperimentConfig& c, std::string_view v) {
          auto n = parse_number<double>(v);
          if (!n) return false;
          c.train.lr_schedule.initial = *n;
          return true;
        }}},
      {"train.lr_drop_factor",
       {"a real number",
        [](ExperimentConfig& c, std::string_view v) {
          auto n = parse_number<double>(v);
          if (!n) return false;
          c.train.lr_schedule.drop_factor = *n;
          return true;
        }}},
      {"train.lr_drop_at",
       {"'auto' or a comma-separated list of iterations",
        [](ExperimentConfig& c, std::string_view v) {
          if (v == "auto") {
            c.train.lr_drop_auto = true;
            c.train.lr_schedule.drop_at.clear();
            return true;
          }
          auto list = parse_list<std::int64_t>(v);
          if (!list) return false;
          c.train.lr_drop_auto = false;
          c.train.lr_schedule.drop_at = *list;
          return true;
        }}},
      {"train.br_gamma", number_key(&TrainConfig::br_gamma)},
      {"train.br_lambda0", number_key(&TrainConfig::br_lambda0)},
      {"train.br_phase2_start",
       {"'auto' or an iteration index",
        [](ExperimentConfig& c, std::string_view v) {
          if (v == "auto") {
            c.train.br_phase2_start = -1;
            return true;
          }
          auto n = parse_number<std::int64_t>(v);
          if (!n || *n < 0) return false;
          c.train.br_phase2_start = *n;
          return true;
        }}},
      {"train.br_lambda_every",
       {"'auto' or a positive iteration count",
        [](ExperimentConfig& c, std::string_view v) {
          if (v == "auto") {
            c.train.br_lambda_every = 0;
            return true;
          }
          auto n = parse_number<std::int64_t>(v);
          if (!n || *n < 1) return false;
          c.train.br_lambda_every = *n;
          return true;
        }}},
      {"train.br_hard_norm",
       {"l1 or l2",
        [](ExperimentConfig& c, std::string_view v) {
          if (v == "l1") c.train.br_hard_norm = Norm::l1;
          else if (v == "l2") c.train.br_hard_norm = Norm::l2;
          else return false;
          return true;
        }}},
      {"train.epochs", number_key(&TrainConfig::epochs)},
      {"train.batch_size", number_key(&TrainConfig::batch_size)},
      {"train.seed", number_key(&TrainConfig::seed)},
      {"train.start",
       {"cold or warm",
        [](ExperimentConfig& c, std::string_view v) {
          if (v == "cold") c.train.start = StartMode::cold;
          else if (v == "warm") c.train.start = StartMode::warm;
          else return false;
          return true;
        }}},
      {"train.warm_source",
       {"a path",
        [](ExperimentConfig& c, std::string_view v) {
          c.train.warm_source = std::string(v);
          return true;
        }}},
      {"train.momentum", number_key(&TrainConfig::momentum)},
      {"train.weight_decay", number_key(&TrainConfig::weight_decay)},
      {"data.kind",
       {"one of gaussian_blobs, two_spirals, file",
        [](ExperimentConfig& c, std::string_view v) {
          if (v == "gaussian_blobs") c.data.kind = DatasetKind::gaussian_blobs;
          else if (v == "two_spirals") c.data.kind = DatasetKind::two_spirals;
          else if (v == "file") c.data.kind = DatasetKind::file;
          else return false;
          return true;
        }}},
      {"data.num_classes", data_number_key(&DatasetSpec::num_classes)},
      {"data.dim", data_number_key(&DatasetSpec::dim)},
      {"data.samples_per_class", data_number_key(&DatasetSpec::samples_per_class)},
      {"data.class_separation", data_number_key(&DatasetSpec::class_separation)},
      {"data.noise_sigma", data_number_key(&DatasetSpec::noise_sigma)},
      {"data.seed", data_number_key(&DatasetSpec::seed)},
      {"data.train_fraction", data_number_key(&DatasetSpec::train_fraction)},
      {"data.path",
       {"a path",
        [](ExperimentConfig& c, std::string_view v) {
          c.data.path = std::string(v);
          return true;
        }}},
      {"data.has_header",
       {"true or false",
        [](ExperimentConfig& c, std::string_view v) {
          auto b = parse_bool(v);
          if (!b) return false;
          c.data.has_header = *b;
          return true;
        }}},
      {"model.layer_dims",
       {"a comma-separated list of positive integers",
        [](ExperimentConfig& c, std::string_view v) {
          auto list = parse_list<std::size_t>(v);
          if (!list || list->empty()) return false;
          c.model = MlpSpec{*list};
          return true;
        }}},
  };
  return table;
}

}  // namespace detail

/// Parses config text; `source` names the input in error messages.
inline ExperimentConfig parse_config_text(std::string_view text, const std::string& source = "<config>") {
  ExperimentConfig cfg;
  std::map<std::string, std::size_t, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    const auto where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));

    const auto it = detail::key_table().find(key);
    if (it == detail::key_table().end()) {
      throw ConfigError(where + ": unknown key '" + std::string(key) + "'");
    }
    if (auto [prev, fresh] = seen.emplace(std::string(key), line_no); !fresh) {
      throw ConfigError(where + ": key '" + std::string(key) + "' already set on line " +
                        std::to_string(prev->second));
    }
    if (!it->second.set(cfg, value)) {
      throw ConfigError(where + ": key '" + std::string(key) + "' expects " + it->second.expected +
                        ", got '" + std::string(value) + "'");
    }
  }

  if (cfg.train.start == StartMode::warm && cfg.train.warm_source.empty() &&
      cfg.train.algorithm != Algorithm::none) {
    throw ConfigError(source + ": missing required key 'train.warm_source' (train.start = warm)");
  }
  if (cfg.data.kind == DatasetKind::file && cfg.data.path.empty()) {
    throw ConfigError(source + ": missing required key 'data.path' (data.kind = file)");
  }
  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidInput& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

/// Every key with its current value, in parse_config_text's grammar.
inline std::string emit_config(const ExperimentConfig& c) {
  using detail::format_double;
  std::ostringstream o;
  const auto& t = c.train;
  o << "train.algorithm = " << to_string(t.algorithm) << "\n";
  o << "train.blend_rho = " << format_double(t.blend_rho) << "\n";
  o << "train.lr = " << format_double(t.lr_schedule.initial) << "\n";
  o << "train.lr_drop_factor = " << format_double(t.lr_schedule.drop_factor) << "\n";
  o << "train.lr_drop_at = " << (t.lr_drop_auto ? std::string("auto") : detail::join(t.lr_schedule.drop_at)) << "\n";
  o << "train.br_gamma = " << format_double(t.br_gamma) << "\n";
  o << "train.br_lambda0 = " << format_double(t.br_lambda0) << "\n";
  o << "train.br_phase2_start = "
    << (t.br_phase2_start < 0 ? std::string("auto") : std::to_string(t.br_phase2_start)) << "\n";
  o << "train.br_lambda_every = "
    << (t.br_lambda_every == 0 ? std::string("auto") : std::to_string(t.br_lambda_every)) << "\n";
  o << "train.br_hard_norm = " << to_string(t.br_hard_norm) << "\n";
  o << "train.epochs = " << t.epochs << "\n";
  o << "train.batch_size = " << t.batch_size << "\n";
  o << "train.seed = " << t.seed << "\n";
  o << "train.start = " << to_string(t.start) << "\n";
  if (!t.warm_source.empty()) o << "train.warm_source = " << t.warm_source << "\n";
  o << "train.momentum = " << format_double(t.momentum) << "\n";
  o << "train.weight_decay = " << format_double(t.weight_decay) << "\n";
  const auto& d = c.data;
  o << "data.kind = " << to_string(d.kind) << "\n";
  o << "data.num_classes = " << d.num_classes << "\n";
  o << "data.dim = " << d.dim << "\n";
  o << "data.samples_per_class = " << d.samples_per_class << "\n";
  o << "data.class_separation = " << format_double(d.class_separation) << "\n";
  o << "data.noise_sigma = " << format_double(d.noise_sigma) << "\n";
  o << "data.seed = " << d.seed << "\n";
  o << "data.train_fraction = " << format_double(d.train_fraction) << "\n";
  if (!d.path.empty()) o << "data.path = " << d.path << "\n";
  o << "data.has_header = " << (d.has_header ? "true" : "false") << "\n";
  if (c.model) o << "model.layer_dims = " << detail::join(c.model->layer_dims) << "\n";
  return o.str();
}

}  // namespace qnt
