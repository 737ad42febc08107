#include <numeric>

#include "fewshot/baselines/baselines.hpp"
#include "fewshot/error.hpp"
#include "fewshot/ndcore/optim.hpp"
#include "internal.hpp"

namespace fewshot::base {

namespace detail {

nd::BoundParams bind_constants(nd::Tape& tape, const nd::ParamSet& params) {
  nd::BoundParams bound;
  for (const auto& [path, value] : params) bound.emplace(path, tape.constant(value));
  return bound;
}

nd::Tensor gather_rows(const nd::Tensor& x, const std::vector<std::size_t>& idx) {
  nd::Shape shape = x.shape();
  const std::size_t row = x.size() / shape[0];
  shape[0] = idx.size();
  nd::Tensor out(shape);
  const auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(idx[i] * row), row,
                dst.begin() + static_cast<std::ptrdiff_t>(i * row));
  }
  return out;
}

MiniBatcher::MiniBatcher(std::size_t n, std::size_t batch, RngStream rng)
    : n_(n), batch_(std::min(batch, n)), rng_(std::move(rng)), order_(n) {
  if (n == 0 || batch == 0) throw ConfigError("minibatching needs n >= 1 and batch >= 1");
  cursor_ = n_;  // forces a shuffle on the first call
}

std::vector<std::size_t> MiniBatcher::next() {
  if (cursor_ + batch_ > n_) {
    std::iota(order_.begin(), order_.end(), 0);
    RngStream epoch = rng_.child("epoch", epoch_++);
    epoch.shuffle(std::span(order_));
    cursor_ = 0;
  }
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_));
  cursor_ += batch_;
  return out;
}

nd::Tensor softmax_of(const nd::Tensor& logits) {
  nd::Tape tape;
  return nd::softmax_rows(tape.constant(logits)).value();
}

}  // namespace detail

nd::Tensor embed_images(const nd::ParamSet& params, std::span<const data::ImagePtr> images,
                        const nd::BackboneSpec& spec, std::size_t chunk) {
  if (images.empty()) throw ShapeError("no images to embed");
  nd::Tensor out({images.size(), spec.width});
  for (std::size_t start = 0; start < images.size(); start += chunk) {
    const std::size_t count = std::min(chunk, images.size() - start);
    nd::Tape tape;
    const auto bound = detail::bind_constants(tape, params);
    const nd::Tensor e =
        nd::embed(bound, tape.constant(data::stack_nchw(images.subspan(start, count))), spec).value();
    std::copy(e.data().begin(), e.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(start * spec.width));
  }
  return out;
}

namespace {

void check_labels(std::span<const int> labels, int ways, std::size_t rows) {
  if (labels.size() != rows) {
    throw ShapeError("support has " + std::to_string(rows) + " rows but " + std::to_string(labels.size()) + " labels");
  }
  std::vector<int> count(static_cast<std::size_t>(ways));
  for (int l : labels) {
    if (l < 0 || l >= ways) throw ConfigError("support label " + std::to_string(l) + " outside 0..N-1");
    ++count[static_cast<std::size_t>(l)];
  }
  for (int c = 0; c < ways; ++c) {
    if (count[static_cast<std::size_t>(c)] == 0) throw ConfigError("class " + std::to_string(c) + " has no support example");
  }
}

}  // namespace

nd::Var matching_scores(nd::Var support, std::span<const int> labels, int ways, nd::Var query) {
  const std::size_t ns = support.shape()[0];
  check_labels(labels, ways, ns);
  nd::Tensor onehot({ns, static_cast<std::size_t>(ways)});
  for (std::size_t i = 0; i < ns; ++i) onehot[i * static_cast<std::size_t>(ways) + static_cast<std::size_t>(labels[i])] = 1.0;
  return nd::matmul(nd::pairwise_cosine(query, support), support.tape()->constant(std::move(onehot)));
}

nd::Tensor mn_predict(const nd::Tensor& support, std::span<const int> labels, int ways, const nd::Tensor& query) {
  nd::Tape tape;
  return nd::softmax_rows(matching_scores(tape.constant(support), labels, ways, tape.constant(query))).value();
}

nd::Var prototypes(nd::Var support, std::span<const int> labels, int ways) {
  const std::size_t ns = support.shape()[0];
  check_labels(labels, ways, ns);
  std::vector<double> count(static_cast<std::size_t>(ways));
  for (int l : labels) count[static_cast<std::size_t>(l)] += 1.0;
  nd::Tensor avg({static_cast<std::size_t>(ways), ns});
  for (std::size_t i = 0; i < ns; ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    avg[c * ns + i] = 1.0 / count[c];
  }
  return nd::matmul(support.tape()->constant(std::move(avg)), support);
}

nd::Tensor pn_prototypes(const nd::Tensor& support, std::span<const int> labels, int ways) {
  nd::Tape tape;
  return prototypes(tape.constant(support), labels, ways).value();
}

nd::Var prototype_logits(nd::Var protos, nd::Var query) { return nd::scale(nd::pairwise_sq_euclidean(query, protos), -1.0); }

nd::Tensor pn_predict(const nd::Tensor& protos, const nd::Tensor& query) {
  nd::Tape tape;
  return nd::softmax_rows(prototype_logits(tape.constant(protos), tape.constant(query))).value();
}

OuterGradient fomaml_outer_gradient(const nd::ParamSet& init, const LossFn& support_loss, const LossFn& query_loss,
                                    int T, double base_lr) {
  OuterGradient out;
  out.adapted = init;
  for (int t = 0; t < T; ++t) {
    nd::Tape tape;
    const auto bound = tape.bind(out.adapted);
    const nd::GradMap g = tape.backward(support_loss(tape, bound));
    nd::sgd_step(out.adapted, g, base_lr);
  }
  nd::Tape tape;
  const auto bound = tape.bind(out.adapted);
  const nd::Var loss = query_loss(tape, bound);
  out.query_loss = loss.value().item();
  out.grad = tape.backward(loss);
  return out;
}

}  // namespace fewshot::base
