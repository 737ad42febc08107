#include <cmath>

#include "fewshot/baselines/baselines.hpp"
#include "fewshot/error.hpp"
#include "fewshot/ndcore/optim.hpp"
#include "internal.hpp"

namespace fewshot::base {

namespace {

using detail::bind_constants;
using detail::gather_rows;
using detail::MiniBatcher;
using detail::softmax_of;

nd::BackboneSpec without_head(nd::BackboneSpec spec) {
  spec.head_width = 0;
  return spec;
}

std::vector<int> pick(const std::vector<int>& labels, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(labels[i]);
  return out;
}

// Affine head applied to fixed embeddings, then row softmax.
nd::Tensor head_probs(const nd::ParamSet& head, const nd::Tensor& embeddings) {
  nd::Tape tape;
  const auto bound = bind_constants(tape, head);
  return nd::softmax_rows(nd::head_logits(bound, tape.constant(embeddings))).value();
}

class HeadPredictor final : public api::Predictor {
 public:
  HeadPredictor(nd::ParamSet params, nd::BackboneSpec spec) : params_(std::move(params)), spec_(std::move(spec)) {}
  nd::Tensor predict(const sample::QuerySet& query) override {
    const nd::Tensor e = embed_images(params_, query.images, spec_);
    return head_probs(params_.with_prefix(nd::kHeadPrefix), e);
  }

 private:
  nd::ParamSet params_;
  nd::BackboneSpec spec_;
};

class MatchingPredictor final : public api::Predictor {
 public:
  MatchingPredictor(nd::ParamSet params, nd::BackboneSpec spec, nd::Tensor support, std::vector<int> labels, int ways)
      : params_(std::move(params)), spec_(std::move(spec)), support_(std::move(support)), labels_(std::move(labels)),
        ways_(ways) {}
  nd::Tensor predict(const sample::QuerySet& query) override {
    return mn_predict(support_, labels_, ways_, embed_images(params_, query.images, spec_));
  }

 private:
  nd::ParamSet params_;
  nd::BackboneSpec spec_;
  nd::Tensor support_;
  std::vector<int> labels_;
  int ways_;
};

class PrototypePredictor final : public api::Predictor {
 public:
  PrototypePredictor(nd::ParamSet params, nd::BackboneSpec spec, nd::Tensor protos)
      : params_(std::move(params)), spec_(std::move(spec)), protos_(std::move(protos)) {}
  nd::Tensor predict(const sample::QuerySet& query) override {
    return pn_predict(protos_, embed_images(params_, query.images, spec_));
  }

 private:
  nd::ParamSet params_;
  nd::BackboneSpec spec_;
  nd::Tensor protos_;
};

nd::Var support_loss_on(const nd::Tensor& images, const std::vector<int>& labels, const nd::BackboneSpec& spec,
                        nd::Tape& tape, const nd::BoundParams& bound) {
  return nd::softmax_cross_entropy(nd::head_logits(bound, nd::embed(bound, tape.constant(images), spec)), labels);
}

class BaselineLearner final : public api::Learner {
 public:
  BaselineLearner(Method method, Hyperparams hp, nd::BackboneSpec spec, std::uint64_t seed, nd::ParamSet params,
                  bool pretrained)
      : method_(method), hp_(std::move(hp)), spec_(without_head(std::move(spec))), seed_(seed),
        params_(std::move(params)), pretrained_(pretrained) {}

  explicit BaselineLearner(Method method) : method_(method), hp_(default_hyperparams(method)) {}

  std::string method_id() const override { return base::method_id(method_); }

  std::unique_ptr<api::Predictor> fit(const sample::SupportSet& support) const override {
    if (support.images.empty()) throw ConfigError("empty support set");
    switch (method_) {
      case Method::train_from_scratch: return fit_from_scratch(support);
      case Method::fine_tuning: return fit_head(support);
      case Method::matching_networks: {
        nd::Tensor e = embed_images(params_, support.images, spec_);
        return std::make_unique<MatchingPredictor>(params_, spec_, std::move(e), support.labels, support.ways);
      }
      case Method::prototypical_networks: {
        nd::Tensor protos = pn_prototypes(embed_images(params_, support.images, spec_), support.labels, support.ways);
        return std::make_unique<PrototypePredictor>(params_, spec_, std::move(protos));
      }
      case Method::fo_maml: return fit_maml(support);
    }
    throw Error("unhandled method");
  }

  void save(const std::filesystem::path& dir) const override {
    api::LearnerManifest m{method_id(), seed_, to_fields(hp_)};
    m.fields.emplace_back("backbone.arch", spec_.arch);
    m.fields.emplace_back("backbone.input_side", std::to_string(spec_.input_side));
    m.fields.emplace_back("backbone.channels", std::to_string(spec_.channels));
    m.fields.emplace_back("backbone.width", std::to_string(spec_.width));
    m.fields.emplace_back("backbone.blocks", std::to_string(spec_.blocks));
    m.fields.emplace_back("init", pretrained_ ? "pretrained" : "random");
    api::write_learner_dir(dir, m, params_);
  }

  void load(const std::filesystem::path& dir) override {
    auto [m, params] = api::read_learner_dir(dir);
    if (parse_method(m.method) != method_) {
      throw FormatError("learner directory holds " + m.method + ", not " + method_id());
    }
    std::vector<std::pair<std::string, std::string>> hp_fields;
    nd::BackboneSpec spec;
    auto as_size = [](const std::string& v) {
      try {
        return static_cast<std::size_t>(std::stoull(v));
      } catch (const std::logic_error&) {
        throw FormatError("bad backbone field '" + v + "'");
      }
    };
    for (const auto& [k, v] : m.fields) {
      if (k == "backbone.arch") spec.arch = v;
      else if (k == "backbone.input_side") spec.input_side = as_size(v);
      else if (k == "backbone.channels") spec.channels = as_size(v);
      else if (k == "backbone.width") spec.width = as_size(v);
      else if (k == "backbone.blocks") spec.blocks = as_size(v);
      else if (k == "init") pretrained_ = v == "pretrained";
      else hp_fields.emplace_back(k, v);
    }
    spec.validate();
    try {
      hp_ = from_fields(hp_fields);
    } catch (const ConfigError& e) {
      throw FormatError(std::string("learner manifest: ") + e.what());
    }
    spec_ = spec;
    seed_ = m.seed;
    params_ = std::move(params);
  }

  const nd::ParamSet& params() const { return params_; }

 private:
  std::unique_ptr<api::Predictor> fit_from_scratch(const sample::SupportSet& support) const {
    nd::ParamSet p = params_;
    p.merge(nd::zero_head(spec_.width, static_cast<std::size_t>(support.ways)));
    const nd::Tensor x = data::stack_nchw(support.images);
    nd::AdamState state(nd::AdamConfig{.lr = hp_.lr});
    MiniBatcher batches(support.images.size(), static_cast<std::size_t>(hp_.batch_size),
                        RngStream(support.seed, {"fit", "train-from-scratch", 0}));
    for (int t = 0; t < hp_.T; ++t) {
      const auto idx = batches.next();
      const std::vector<int> labels = pick(support.labels, idx);
      nd::Tape tape;
      const auto bound = tape.bind(p);
      nd::adam_step(p, tape.backward(support_loss_on(gather_rows(x, idx), labels, spec_, tape, bound)), state);
    }
    return std::make_unique<HeadPredictor>(std::move(p), spec_);
  }

  std::unique_ptr<api::Predictor> fit_head(const sample::SupportSet& support) const {
    const nd::Tensor e = embed_images(params_, support.images, spec_);
    nd::ParamSet head = nd::zero_head(spec_.width, static_cast<std::size_t>(support.ways));
    nd::AdamState state(nd::AdamConfig{.lr = hp_.val_lr});
    MiniBatcher batches(support.images.size(), static_cast<std::size_t>(hp_.val_batch_size),
                        RngStream(support.seed, {"fit", "fine-tuning", 0}));
    for (int t = 0; t < hp_.T; ++t) {
      const auto idx = batches.next();
      const std::vector<int> labels = pick(support.labels, idx);
      nd::Tape tape;
      const auto bound = tape.bind(head);
      const auto loss = nd::softmax_cross_entropy(nd::head_logits(bound, tape.constant(gather_rows(e, idx))), labels);
      nd::adam_step(head, tape.backward(loss), state);
    }
    nd::ParamSet p = params_;
    p.merge(head);
    return std::make_unique<HeadPredictor>(std::move(p), spec_);
  }

  std::unique_ptr<api::Predictor> fit_maml(const sample::SupportSet& support) const {
    nd::ParamSet p = params_;
    p.merge(nd::zero_head(spec_.width, static_cast<std::size_t>(support.ways)));
    const nd::Tensor x = data::stack_nchw(support.images);
    for (int t = 0; t < hp_.T; ++t) {
      nd::Tape tape;
      const auto bound = tape.bind(p);
      nd::sgd_step(p, tape.backward(support_loss_on(x, support.labels, spec_, tape, bound)), hp_.base_lr);
    }
    return std::make_unique<HeadPredictor>(std::move(p), spec_);
  }

  Method method_;
  Hyperparams hp_;
  nd::BackboneSpec spec_;
  std::uint64_t seed_ = 0;
  nd::ParamSet params_;
  bool pretrained_ = false;
};

nd::ParamSet initial_backbone(const MethodConfig& config) {
  if (config.pretrained) return config.pretrained->without_prefix(nd::kHeadPrefix);
  RngStream rng(config.seed, {"init", "backbone", 0});
  return nd::init_params(without_head(config.backbone), rng);
}

class BaselineMetaLearner : public api::MetaLearner {
 public:
  explicit BaselineMetaLearner(const MethodConfig& config)
      : config_(config), spec_(without_head(config.backbone)), params_(initial_backbone(config)),
        adam_(nd::AdamConfig{.lr = config.hp.lr}) {
    config_.hp.validate();
    spec_.validate();
  }

  std::string method_id() const override { return base::method_id(config_.method); }

  api::DataMode mode() const override {
    switch (config_.method) {
      case Method::train_from_scratch: return api::DataMode::none;
      case Method::fine_tuning: return api::DataMode::batches;
      default: return api::DataMode::episodes;
    }
  }

  std::unique_ptr<api::Learner> snapshot() const override {
    return std::make_unique<BaselineLearner>(config_.method, config_.hp, spec_, config_.seed,
                                             params_.without_prefix(nd::kHeadPrefix).rounded_to_float(),
                                             config_.pretrained.has_value());
  }

 protected:
  // Averages gradients over meta_batch_size units before one Adam step.
  void accumulate(const nd::GradMap& grads) {
    for (const auto& [path, value] : params_) {
      const auto it = grads.find(path);
      if (it == grads.end()) continue;
      auto [slot, fresh] = pending_.try_emplace(path, it->second);
      if (!fresh) {
        auto dst = slot->second.data();
        const auto src = it->second.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
    if (++pending_count_ < config_.hp.meta_batch_size) return;
    const double inv = 1.0 / pending_count_;
    nd::GradMap avg;
    for (const auto& [path, value] : params_) {
      auto it = pending_.find(path);
      nd::Tensor g = it == pending_.end() ? nd::Tensor(value.shape()) : std::move(it->second);
      for (double& v : g.data()) v *= inv;
      avg.emplace(path, std::move(g));
    }
    nd::adam_step(params_, avg, adam_);
    pending_.clear();
    pending_count_ = 0;
  }

  MethodConfig config_;
  nd::BackboneSpec spec_;
  nd::ParamSet params_;
  nd::AdamState adam_;
  nd::GradMap pending_;
  int pending_count_ = 0;
};

class FineTuningMeta final : public BaselineMetaLearner {
 public:
  explicit FineTuningMeta(const MethodConfig& config) : BaselineMetaLearner(config) {
    if (config.global_classes < 2) throw ConfigError("fine-tuning needs the global class count (>= 2)");
    RngStream rng(config.seed, {"init", "global-head", 0});
    params_.merge(nd::init_head(spec_.width, config.global_classes, rng));
  }

  void train_on(const sample::Batch& batch) override {
    nd::Tape tape;
    const auto bound = tape.bind(params_);
    const auto logits = nd::head_logits(bound, nd::embed(bound, tape.constant(data::stack_nchw(batch.images)), spec_));
    for (int l : batch.labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= config_.global_classes) {
        throw ConfigError("batch label " + std::to_string(l) + " outside the global label space");
      }
    }
    const auto loss = nd::softmax_cross_entropy(logits, batch.labels);
    last_loss_ = loss.value().item();
    std::size_t hits = 0;
    const std::size_t cols = config_.global_classes;
    for (std::size_t r = 0; r < batch.labels.size(); ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < cols; ++c) {
        if (logits.value()[r * cols + c] > logits.value()[r * cols + best]) best = c;
      }
      hits += static_cast<int>(best) == batch.labels[r];
    }
    last_accuracy_ = static_cast<double>(hits) / static_cast<double>(batch.labels.size());
    trained_ = true;
    nd::adam_step(params_, tape.backward(loss), adam_);
  }

  nd::ParamSet full_params() const { return params_; }
  std::optional<BatchDiagnostics> diagnostics() const {
    if (!trained_) return std::nullopt;
    return BatchDiagnostics{last_loss_, last_accuracy_};
  }

 private:
  double last_loss_ = 0.0;
  double last_accuracy_ = 0.0;
  bool trained_ = false;
};

class MetricMeta final : public BaselineMetaLearner {
 public:
  using BaselineMetaLearner::BaselineMetaLearner;

  void train_on(const sample::Task& task) override {
    nd::Tape tape;
    const auto bound = tape.bind(params_);
    const auto s = nd::embed(bound, tape.constant(data::stack_nchw(task.support.images)), spec_);
    const auto q = nd::embed(bound, tape.constant(data::stack_nchw(task.query.images)), spec_);
    const nd::Var logits = config_.method == Method::matching_networks
                               ? matching_scores(s, task.support.labels, task.ways, q)
                               : prototype_logits(prototypes(s, task.support.labels, task.ways), q);
    accumulate(tape.backward(nd::softmax_cross_entropy(logits, task.query_labels.reveal())));
  }
};

class FomamlMeta final : public BaselineMetaLearner {
 public:
  using BaselineMetaLearner::BaselineMetaLearner;

  void train_on(const sample::Task& task) override {
    nd::ParamSet init = params_;
    init.merge(nd::zero_head(spec_.width, static_cast<std::size_t>(task.ways)));
    const nd::Tensor xs = data::stack_nchw(task.support.images);
    const nd::Tensor xq = data::stack_nchw(task.query.images);
    const std::vector<int>& yq = task.query_labels.reveal();
    const LossFn support = [&](nd::Tape& t, const nd::BoundParams& b) {
      return support_loss_on(xs, task.support.labels, spec_, t, b);
    };
    const LossFn query = [&](nd::Tape& t, const nd::BoundParams& b) { return support_loss_on(xq, yq, spec_, t, b); };
    accumulate(fomaml_outer_gradient(init, support, query, config_.hp.T, config_.hp.base_lr).grad);
  }
};

}  // namespace

std::unique_ptr<api::MetaLearner> make_meta_learner(const MethodConfig& config) {
  switch (config.method) {
    case Method::train_from_scratch: return std::make_unique<BaselineMetaLearner>(config);
    case Method::fine_tuning: return std::make_unique<FineTuningMeta>(config);
    case Method::matching_networks:
    case Method::prototypical_networks: return std::make_unique<MetricMeta>(config);
    case Method::fo_maml: return std::make_unique<FomamlMeta>(config);
  }
  throw ConfigError("unknown method");
}

std::optional<BatchDiagnostics> last_batch_diagnostics(const api::MetaLearner& meta) {
  if (const auto* ft = dynamic_cast<const FineTuningMeta*>(&meta)) return ft->diagnostics();
  return std::nullopt;
}

std::unique_ptr<api::Learner> load_learner(const std::filesystem::path& dir) {
  const auto [manifest, params] = api::read_learner_dir(dir);
  Method method;
  try {
    method = parse_method(manifest.method);
  } catch (const ConfigError&) {
    throw FormatError("learner directory " + dir.string() + " names unknown method " + manifest.method);
  }
  auto learner = std::make_unique<BaselineLearner>(method);
  learner->load(dir);
  return learner;
}

nd::ParamSet pretrain_backbone(const data::BatchPool& pool, const nd::BackboneSpec& spec, std::size_t iterations,
                               std::size_t batch_size, double lr, std::uint64_t seed) {
  MethodConfig config;
  config.method = Method::fine_tuning;
  config.hp = default_hyperparams(Method::fine_tuning);
  config.hp.lr = lr;
  config.backbone = spec;
  config.seed = seed;
  config.global_classes = pool.class_count;
  FineTuningMeta meta(config);
  sample::BatchStream batches(pool, batch_size, RngStream(seed, {"pretrain", "batches", 0}));
  for (std::size_t i = 0; i < iterations; ++i) meta.train_on(batches.next());
  return meta.full_params().without_prefix(nd::kHeadPrefix);
}

}  // namespace fewshot::base
