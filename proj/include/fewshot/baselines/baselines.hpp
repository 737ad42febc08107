#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>

#include "fewshot/api/learner.hpp"
#include "fewshot/baselines/hyperparams.hpp"
#include "fewshot/datastore/dataset.hpp"
#include "fewshot/ndcore/backbone.hpp"

namespace fewshot::base {

struct MethodConfig {
  Method method = Method::prototypical_networks;
  Hyperparams hp = default_hyperparams(Method::prototypical_networks);
  nd::BackboneSpec backbone;  // head_width is ignored; heads are per method
  std::uint64_t seed = 0;
  // Backbone weights to start from instead of a random initialisation.
  std::optional<nd::ParamSet> pretrained;
  // Fine-tuning only: size of the global label space of the batch pool.
  std::size_t global_classes = 0;
};

std::unique_ptr<api::MetaLearner> make_meta_learner(const MethodConfig& config);

struct BatchDiagnostics {
  double loss = 0.0;
  double accuracy = 0.0;  // argmax accuracy on the last batch, before the update
};
// Present for batch-mode meta-learners after at least one batch.
std::optional<BatchDiagnostics> last_batch_diagnostics(const api::MetaLearner& meta);

// Reads a learner directory written by any baseline's save().
std::unique_ptr<api::Learner> load_learner(const std::filesystem::path& dir);

// Backbone pre-trained with the fine-tuning batch objective (global-label
// cross-entropy) for `iterations` batches; returns backbone parameters only.
nd::ParamSet pretrain_backbone(const data::BatchPool& pool, const nd::BackboneSpec& spec, std::size_t iterations,
                               std::size_t batch_size, double lr, std::uint64_t seed);

// Forward pass without gradient tracking, in chunks of `chunk` images.
nd::Tensor embed_images(const nd::ParamSet& params, std::span<const data::ImagePtr> images,
                        const nd::BackboneSpec& spec, std::size_t chunk = 64);

// --- metric heads ---------------------------------------------------------

// Per-class summed cosine similarity between query and support rows.
nd::Var matching_scores(nd::Var support, std::span<const int> labels, int ways, nd::Var query);
nd::Tensor mn_predict(const nd::Tensor& support, std::span<const int> labels, int ways, const nd::Tensor& query);

// Per-class mean of support rows, [ways, dim].
nd::Var prototypes(nd::Var support, std::span<const int> labels, int ways);
nd::Tensor pn_prototypes(const nd::Tensor& support, std::span<const int> labels, int ways);
// Negative squared Euclidean distance to each prototype.
nd::Var prototype_logits(nd::Var prototypes, nd::Var query);
nd::Tensor pn_predict(const nd::Tensor& prototypes, const nd::Tensor& query);

// --- FO-MAML --------------------------------------------------------------

using LossFn = std::function<nd::Var(nd::Tape&, const nd::BoundParams&)>;

struct OuterGradient {
  nd::GradMap grad;     // query-loss gradient at the adapted parameters
  nd::ParamSet adapted;
  double query_loss = 0.0;
};

// T plain gradient steps of `support_loss` with step `base_lr`, then the
// gradient of `query_loss` at the result, used unchanged as the gradient
// with respect to `init` (second-order terms dropped).
OuterGradient fomaml_outer_gradient(const nd::ParamSet& init, const LossFn& support_loss, const LossFn& query_loss,
                                    int T, double base_lr);

}  // namespace fewshot::base
