#include "fewshot/baselines/hyperparams.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "fewshot/error.hpp"
#include "fewshot/scoring/report.hpp"

namespace fewshot::base {

const char* method_id(Method method) {
  switch (method) {
    case Method::train_from_scratch: return "train-from-scratch";
    case Method::fine_tuning: return "fine-tuning";
    case Method::matching_networks: return "matching-networks";
    case Method::prototypical_networks: return "prototypical-networks";
    case Method::fo_maml: return "fo-maml";
  }
  return "?";
}

Method parse_method(const std::string& text) {
  for (Method m : all_methods()) {
    if (text == method_id(m)) return m;
  }
  if (text == "tfs") return Method::train_from_scratch;
  if (text == "ft") return Method::fine_tuning;
  if (text == "mn") return Method::matching_networks;
  if (text == "pn") return Method::prototypical_networks;
  if (text == "fomaml") return Method::fo_maml;
  throw ConfigError("unknown method '" + text + "'");
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods{Method::train_from_scratch, Method::fine_tuning,
                                           Method::matching_networks, Method::prototypical_networks,
                                           Method::fo_maml};
  return methods;
}

void Hyperparams::validate() const {
  std::string lowered = opt_fn;
  std::transform(lowered.begin(), lowered.end(), lowered.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lowered != "adam") throw ConfigError("opt_fn must be Adam, got '" + opt_fn + "'");
  if (criterion != "cross-entropy") throw ConfigError("criterion must be cross-entropy, got '" + criterion + "'");
  if (!(lr > 0.0) || !(val_lr > 0.0) || !(base_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (T < 0) throw ConfigError("T must be non-negative");
  if (batch_size < 1 || val_batch_size < 1 || meta_batch_size < 1) throw ConfigError("batch sizes must be >= 1");
}

Hyperparams default_hyperparams(Method method) {
  Hyperparams hp;
  switch (method) {
    case Method::train_from_scratch:
      break;
    case Method::fine_tuning:
      hp.batch_size = 16;
      break;
    case Method::matching_networks:
    case Method::prototypical_networks:
      hp.meta_batch_size = 1;
      break;
    case Method::fo_maml:
      hp.base_lr = 0.01;
      hp.T = 5;
      hp.meta_batch_size = 2;
      break;
  }
  return hp;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

void set_field(Hyperparams& hp, const std::string& key, const std::string& value) {
  auto as_double = [&] {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used != value.size() || value.empty()) throw ConfigError("'" + key + "' needs a number, got '" + value + "'");
    return v;
  };
  auto as_int = [&] {
    const double v = as_double();
    if (v != static_cast<int>(v)) throw ConfigError("'" + key + "' needs an integer, got '" + value + "'");
    return static_cast<int>(v);
  };
  if (key == "opt_fn") hp.opt_fn = value;
  else if (key == "lr") hp.lr = as_double();
  else if (key == "val_lr") hp.val_lr = as_double();
  else if (key == "base_lr") hp.base_lr = as_double();
  else if (key == "criterion") hp.criterion = value;
  else if (key == "T") hp.T = as_int();
  else if (key == "batch_size") hp.batch_size = as_int();
  else if (key == "val_batch_size") hp.val_batch_size = as_int();
  else if (key == "meta_batch_size") hp.meta_batch_size = as_int();
  else throw ConfigError("unknown hyperparameter '" + key + "'");
}

}  // namespace

Hyperparams apply_overrides(Hyperparams hp, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("override line " + std::to_string(line_no) + " lacks '='");
    set_field(hp, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  hp.validate();
  return hp;
}

Hyperparams apply_override_file(Hyperparams hp, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open hyperparameter file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return apply_overrides(std::move(hp), ss.str());
}

std::vector<std::pair<std::string, std::string>> to_fields(const Hyperparams& hp) {
  return {{"opt_fn", hp.opt_fn},
          {"lr", score::format_double(hp.lr)},
          {"val_lr", score::format_double(hp.val_lr)},
          {"base_lr", score::format_double(hp.base_lr)},
          {"criterion", hp.criterion},
          {"T", std::to_string(hp.T)},
          {"batch_size", std::to_string(hp.batch_size)},
          {"val_batch_size", std::to_string(hp.val_batch_size)},
          {"meta_batch_size", std::to_string(hp.meta_batch_size)}};
}

Hyperparams from_fields(const std::vector<std::pair<std::string, std::string>>& fields) {
  Hyperparams hp;
  for (const auto& [k, v] : fields) set_field(hp, k, v);
  hp.validate();
  return hp;
}

}  // namespace fewshot::base
