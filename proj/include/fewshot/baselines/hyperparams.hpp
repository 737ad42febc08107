#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace fewshot::base {

enum class Method { train_from_scratch, fine_tuning, matching_networks, prototypical_networks, fo_maml };

// Canonical ids: train-from-scratch, fine-tuning, matching-networks,
// prototypical-networks, fo-maml. Short aliases tfs, ft, mn, pn, fomaml
// are accepted by parse_method.
const char* method_id(Method method);
Method parse_method(const std::string& text);
const std::vector<Method>& all_methods();

// Field names follow the code names of the reference starting kit.
struct Hyperparams {
  std::string opt_fn = "Adam";
  double lr = 0.001;       // meta-learner (or from-scratch) learning rate
  double val_lr = 0.001;   // fine-tuning head learning rate at meta-test
  double base_lr = 0.01;   // FO-MAML inner step size
  std::string criterion = "cross-entropy";
  int T = 100;             // learner iterations (inner steps for FO-MAML)
  int batch_size = 4;      // from-scratch minibatch; meta-train batch for fine-tuning
  int val_batch_size = 4;  // fine-tuning head minibatch
  int meta_batch_size = 1;

  void validate() const;
  bool operator==(const Hyperparams&) const = default;
};

Hyperparams default_hyperparams(Method method);

// key=value lines; '#' starts a comment; unknown keys are rejected.
Hyperparams apply_overrides(Hyperparams hp, const std::string& text);
Hyperparams apply_override_file(Hyperparams hp, const std::filesystem::path& path);

// Ordered (name, value) pairs; values print with full round-trip precision.
std::vector<std::pair<std::string, std::string>> to_fields(const Hyperparams& hp);
Hyperparams from_fields(const std::vector<std::pair<std::string, std::string>>& fields);

}  // namespace fewshot::base
