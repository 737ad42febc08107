// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,6,7] [--bench PATH] [--work DIR]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "fewshot/baselines/baselines.hpp"
#include "fewshot/datastore/synth.hpp"
#include "fewshot/harness/harness.hpp"
#include "fewshot/scoring/metrics.hpp"
#include "support/gradcheck.hpp"
#include "support/task_checks.hpp"

using namespace fewshot;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---- 1: metric oracle ------------------------------------------------------

Verdict metric_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  RngStream rng(1, {"acceptance", "metric-oracle", 0});
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 20));
    const int per = static_cast<int>(rng.uniform_int(1, 20));
    std::vector<int> truth, pred;
    for (int c = 0; c < n; ++c) {
      for (int i = 0; i < per; ++i) truth.push_back(c);
    }
    // Unequal class sizes on some trials.
    const int extra = static_cast<int>(rng.uniform_int(0, 10));
    for (int i = 0; i < extra; ++i) truth.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(n))));
    for (std::size_t i = 0; i < truth.size(); ++i) {
      pred.push_back(rng.uniform() < 0.5 ? truth[i] : static_cast<int>(rng.index(static_cast<std::size_t>(n))));
    }
    // Tally by explicit per-class loops.
    double recall_sum = 0.0;
    for (int c = 0; c < n; ++c) {
      long total = 0, hit = 0;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == c) {
          ++total;
          if (pred[i] == c) ++hit;
        }
      }
      recall_sum += static_cast<double>(hit) / static_cast<double>(total);
    }
    const double bac = recall_sum / n;
    const double norm = (bac - 1.0 / n) / (1.0 - 1.0 / n);
    const double got_bac = score::balanced_accuracy(pred, truth, n);
    worst = std::max({worst, std::abs(got_bac - bac), std::abs(score::normalized_accuracy(got_bac, n) - norm)});
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-12 && t < 5.0, fmt("max |err| %.3g (tol 1e-12), %.2f s (limit 5 s)", worst, t)};
}

// ---- 2: random-guess anchor ------------------------------------------------

class RandomGuessPredictor : public api::Predictor {
 public:
  explicit RandomGuessPredictor(std::uint64_t seed) : rng_(seed, {"acceptance", "guess", 0}) {}
  nd::Tensor predict(const sample::QuerySet& q) override {
    const auto n = static_cast<std::size_t>(q.ways);
    nd::Tensor p({q.images.size(), n});
    for (std::size_t r = 0; r < q.images.size(); ++r) p[r * n + rng_.index(n)] = 1.0;
    return p;
  }

 private:
  RngStream rng_;
};

class RandomGuessLearner : public api::Learner {
 public:
  std::string method_id() const override { return "random-guess"; }
  std::unique_ptr<api::Predictor> fit(const sample::SupportSet& s) const override {
    return std::make_unique<RandomGuessPredictor>(s.seed);
  }
  void save(const fs::path&) const override {}
  void load(const fs::path&) override {}
};

Verdict random_anchor() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto meta = data::synth_meta_dataset({.domains = 4, .classes = 20, .images_per_class = 40, .image_side = 16,
                                              .seed = 7, .id_prefix = "anchor"},
                                             data::Role::meta_test);
  const auto make = harness::per_dataset_tasks(meta, {.any_way_any_shot = true}, 250,
                                               RngStream(7, {"meta-test", "tasks", 0}));
  const auto scores = harness::evaluate(RandomGuessLearner{}, 1000, make, 0);
  const double mean = score::aggregate(scores).overall.mean;
  const double t = seconds_since(t0);
  return {std::abs(mean) <= 0.02 && t < 60.0,
          fmt("mean normalized accuracy %+.4f over 1000 tasks (tol [-0.02, 0.02]), %.1f s (limit 60 s)", mean, t)};
}

// ---- 3: t quantiles --------------------------------------------------------

Verdict t_quantiles() {
  const double a = score::t_quantile(0.975, 9), b = score::t_quantile(0.975, 2), c = score::t_quantile(0.975, 999);
  const bool ok = std::abs(a - 2.2622) <= 1e-3 && std::abs(b - 4.3027) <= 1e-3 && std::abs(c - 1.9623) <= 1e-3;
  return {ok, fmt("t(.975,9)=%.5f t(.975,2)=%.5f t(.975,999)=%.5f (refs 2.2622 4.3027 1.9623, tol 1e-3)", a, b, c)};
}

// ---- 4: gradients ----------------------------------------------------------

double fomaml_oracle_error() {
  struct Point {
    double x1, x2, y;
  };
  const std::vector<Point> support{{1.0, 0.5, 2.0}, {-0.3, 1.2, 0.1}, {0.7, -0.4, 1.0}, {0.2, 0.2, -0.5}};
  const std::vector<Point> query{{0.2, 0.9, -1.0}, {1.5, 0.3, 0.4}, {-0.8, 0.6, 0.3}};
  auto loss_fn = [](const std::vector<Point>& pts) -> base::LossFn {
    return [pts](nd::Tape& t, const nd::BoundParams& b) {
      nd::Tensor x({pts.size(), 2}), y({pts.size(), 1});
      for (std::size_t i = 0; i < pts.size(); ++i) {
        x[i * 2] = pts[i].x1;
        x[i * 2 + 1] = pts[i].x2;
        y[i] = pts[i].y;
      }
      const auto d = nd::sub(nd::matmul(t.constant(x), b.at("w")), t.constant(y));
      return nd::mean(nd::mul(d, d));
    };
  };
  auto grad_at = [](const std::vector<Point>& pts, double w1, double w2) {
    double g1 = 0.0, g2 = 0.0;
    for (const auto& p : pts) {
      const double r = w1 * p.x1 + w2 * p.x2 - p.y;
      g1 += 2.0 * r * p.x1;
      g2 += 2.0 * r * p.x2;
    }
    return std::pair{g1 / static_cast<double>(pts.size()), g2 / static_cast<double>(pts.size())};
  };
  double worst = 0.0;
  RngStream rng(4, {"acceptance", "fomaml", 0});
  for (int trial = 0; trial < 10; ++trial) {
    const double w1 = rng.uniform(-1, 1), w2 = rng.uniform(-1, 1), alpha = rng.uniform(0.01, 0.2);
    const int steps = static_cast<int>(rng.uniform_int(0, 6));
    nd::ParamSet init;
    init.insert("w", nd::Tensor({2, 1}, {w1, w2}));
    const auto og = base::fomaml_outer_gradient(init, loss_fn(support), loss_fn(query), steps, alpha);
    // First-order: the query gradient at the adapted point.
    double a1 = w1, a2 = w2;
    for (int s = 0; s < steps; ++s) {
      const auto [g1, g2] = grad_at(support, a1, a2);
      a1 -= alpha * g1;
      a2 -= alpha * g2;
    }
    const auto [q1, q2] = grad_at(query, a1, a2);
    const double scale = std::max({std::abs(q1), std::abs(q2), 1e-8});
    worst = std::max(worst, std::max(std::abs(og.grad.at("w")[0] - q1), std::abs(og.grad.at("w")[1] - q2)) / scale);
  }
  return worst;
}

Verdict gradients() {
  double worst = 0.0;
  std::size_t cases = 0;
  std::string worst_name;
  for (const auto& c : testkit::primitive_cases()) {
    for (std::uint64_t i = 0; i < 20; ++i) {
      RngStream rng(11, {"acceptance", c.name, i});
      auto [inputs, f] = c.make(rng);
      const double e = testkit::gradient_error(f, inputs);
      if (e > worst) {
        worst = e;
        worst_name = c.name;
      }
    }
    ++cases;
  }
  const double maml = fomaml_oracle_error();
  return {worst < 1e-4 && maml < 1e-6,
          fmt("%zu primitives x 20 instances, worst rel err %.2e [%s] (tol 1e-4); FO-MAML oracle rel err %.2e (tol 1e-6)",
              cases, worst, worst_name.c_str(), maml)};
}

// ---- 5: sampler properties -------------------------------------------------

Verdict sampler_properties() {
  // Uneven class sizes exercise the clipping rules.
  auto meta = data::synth_meta_dataset({.domains = 3, .classes = 20, .images_per_class = 40, .image_side = 16,
                                        .seed = 5, .id_prefix = "prop"});
  const auto small = data::synth_meta_dataset({.domains = 2, .classes = 4, .images_per_class = 23, .image_side = 16,
                                               .seed = 6, .id_prefix = "small"});
  for (const auto& d : small.datasets) meta.datasets.push_back(d);
  const std::vector<sample::EpisodeConfig> configs{
      {.any_way_any_shot = true},
      {.ways = 5, .shots = 10, .queries = 20},
      {.ways = 2, .shots = 1, .queries = 20},
      {.ways = 20, .shots = 20, .queries = 20},
      {.any_way_any_shot = true, .way_range = {2, 5}, .shot_range = {1, 3}},
  };
  std::size_t tasks = 0, violations = 0;
  std::string first;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    const RngStream rng(9, {"acceptance", "sampler", c});
    for (std::size_t i = 0; i < 2000; ++i, ++tasks) {
      const sample::Task task = sample::sample(meta, configs[c], rng, i);
      for (const auto& v : testkit::task_violations(task, meta, configs[c])) {
        if (violations++ == 0) first = v;
      }
    }
  }
  return {violations == 0 && tasks >= 10000,
          fmt("%zu tasks over %zu configs, %zu violations%s%s", tasks, configs.size(), violations,
              first.empty() ? "" : "; first: ", first.c_str())};
}

// ---- 6-8: learnability, trends, pretraining --------------------------------

json learnability_config(const std::string& method, const std::string& init, const fs::path& out) {
  return {{"protocol", "cross-domain"},
          {"method", method},
          {"init", init},
          {"seed", 11},
          {"run_count", 1},
          {"scale", 100},
          {"synth_domains", 4},
          {"synth_classes", 10},
          {"synth_images_per_class", 40},
          {"synth_image_side", 32},
          {"synth_seed", 101},
          {"synth_test_seed", 202},
          {"test_mode", "fixed"},
          {"test_ways", 5},
          {"test_shots", 5},
          {"tasks_per_dataset", 25},
          {"budget_seconds", 3600},
          {"out", out.string()}};
}

struct Learnability {
  double pn = 0.0, tfs = 0.0, seconds = 0.0;
  api::LearnerHandle pn_learner;
};

Learnability run_learnability(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  Learnability r;
  const auto pn = harness::run_protocol(
      harness::parse_run_config(learnability_config("prototypical-networks", "random", work / "c6_pn")));
  r.pn = pn.runs[0].aggregate.overall.mean;
  r.pn_learner = pn.runs[0].fit.learner;
  const auto tfs = harness::run_protocol(
      harness::parse_run_config(learnability_config("train-from-scratch", "random", work / "c6_tfs")));
  r.tfs = tfs.runs[0].aggregate.overall.mean;
  r.seconds = seconds_since(t0);
  return r;
}

Verdict learnability(const Learnability& r) {
  const bool ok = r.pn >= 0.5 && r.pn - r.tfs >= 0.1 && r.seconds < 900.0;
  return {ok, fmt("PN %.4f (floor 0.5), TFS %.4f, PN-TFS %+.4f (floor 0.1), %.0f s (limit 900 s)", r.pn, r.tfs,
                  r.pn - r.tfs, r.seconds)};
}

Verdict trends(const Learnability& r) {
  const auto cfg = harness::parse_run_config(learnability_config("prototypical-networks", "random", "unused"));
  const auto set1 = data::synth_meta_dataset({.domains = 4, .classes = 10, .images_per_class = 40, .image_side = 32,
                                              .seed = 202, .id_prefix = "set1"},
                                             data::Role::meta_test);
  const std::size_t per = 250;
  const auto make = harness::per_dataset_tasks(set1, {.any_way_any_shot = true}, per,
                                               RngStream(cfg.seed, {"meta-test", "any-way", 0}));
  const auto agg = score::aggregate(harness::evaluate(*r.pn_learner, per * set1.size(), make, 0));
  const double rho = harness::bucket_trend(agg.per_ways).value_or(0.0);
  const double k1 = agg.per_shots.count(1) ? agg.per_shots.at(1).mean : NAN;
  const double k5 = agg.per_shots.count(5) ? agg.per_shots.at(5).mean : NAN;
  std::string buckets;
  for (const auto& [n, s] : agg.per_ways) buckets += fmt(" %d:%.3f", n, s.mean);
  const bool ok = rho <= -0.8 && k5 - k1 >= 0.05;
  return {ok, fmt("Spearman rho(mean, N) %.3f over N in {%d..%d} (ceiling -0.8); mean@k=5 %.4f - mean@k=1 %.4f = "
                  "%+.4f (floor 0.05); per-N means:%s",
                  rho, agg.per_ways.begin()->first, agg.per_ways.rbegin()->first, k5, k1, k5 - k1, buckets.c_str())};
}

Verdict pretraining(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto random =
      harness::run_protocol(harness::parse_run_config(learnability_config("fine-tuning", "random", work / "c8_rand")));
  const auto pre = harness::run_protocol(
      harness::parse_run_config(learnability_config("fine-tuning", "pretrained", work / "c8_pre")));
  const double a = random.runs[0].aggregate.overall.mean, b = pre.runs[0].aggregate.overall.mean;
  return {b - a >= 0.05, fmt("fine-tuning random init %.4f, pretrained %.4f, gain %+.4f (floor 0.05), %.0f s", a, b,
                             b - a, seconds_since(t0))};
}

// ---- 9: ranking fixtures ---------------------------------------------------

Verdict ranking() {
  using score::SubmissionResult;
  std::vector<std::string> failures;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) failures.push_back(what);
  };
  // Worst of three decides; a high mean with one bad run loses.
  const std::vector<SubmissionResult> subs{{"steady", 50, "meta-learning", {0.55, 0.56, 0.57}},
                                           {"spiky", 10, "meta-learning", {0.90, 0.95, 0.40}},
                                           {"tie-late", 40, "meta-learning", {0.50, 0.60, 0.70}},
                                           {"tie-early", 30, "meta-learning", {0.70, 0.50, 0.65}}};
  const auto ranked = score::final_rank(subs);
  const std::vector<std::string> order{"steady", "tie-early", "tie-late", "spiky"};
  for (std::size_t i = 0; i < order.size(); ++i) {
    expect(ranked[i].id == order[i] && ranked[i].rank == i + 1, "rank " + std::to_string(i + 1) + " is " + ranked[i].id);
  }
  expect(ranked[0].score == 0.55 && ranked[3].score == 0.40, "scores are worst-run means");
  auto permuted = subs;
  for (auto& s : permuted) std::reverse(s.run_means.begin(), s.run_means.end());
  const auto ranked2 = score::final_rank(permuted);
  for (std::size_t i = 0; i < ranked.size(); ++i) expect(ranked2[i].id == ranked[i].id, "run order changed ranking");
  // Gates: strictly above passes.
  expect(!score::league_gate(0.587, "free-style"), "free-style 0.587 must fail");
  expect(score::league_gate(std::nextafter(0.587, 1.0), "free-style"), "free-style just above 0.587 must pass");
  expect(!score::league_gate(0.586, "free-style"), "free-style 0.586 must fail");
  expect(!score::league_gate(0.361, "meta-learning"), "meta-learning 0.361 must fail");
  expect(score::league_gate(std::nextafter(0.361, 1.0), "meta-learning"), "meta-learning just above 0.361 must pass");
  expect(score::league_gate(0.4, "meta-learning"), "meta-learning 0.4 must pass");
  std::string detail = fmt("4 submissions ranked %s > %s > %s > %s; 6 gate verdicts at 0.587/0.361", ranked[0].id.c_str(),
                           ranked[1].id.c_str(), ranked[2].id.c_str(), ranked[3].id.c_str());
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

// ---- 10: reproducibility ---------------------------------------------------

Verdict reproducibility(const fs::path& bench, const fs::path& work) {
  if (bench.empty() || !fs::exists(bench)) return {false, "bench binary not found; pass --bench"};
  const fs::path cfg = work / "c10_config.json";
  std::ofstream(cfg) << json{{"protocol", "cross-domain"},
                             {"method", "fo-maml"},
                             {"seed", 3},
                             {"run_count", 3},
                             {"scale", 1000},
                             {"backbone_input_side", 16},
                             {"backbone_width", 16},
                             {"synth_domains", 4},
                             {"synth_classes", 6},
                             {"synth_images_per_class", 30},
                             {"tasks_per_dataset", 4}}
                            .dump(2);
  std::vector<int> codes;
  for (const char* tag : {"a", "b"}) {
    const std::string cmd = "\"" + bench.string() + "\" run --config \"" + cfg.string() + "\" --out \"" +
                            (work / ("c10_" + std::string(tag))).string() + "\" > /dev/null 2>&1";
    codes.push_back(std::system(cmd.c_str()));
  }
  std::size_t compared = 0, differing = 0;
  std::vector<fs::path> files{"summary.json"};
  for (int r = 0; r < 3; ++r) {
    files.push_back(fs::path("run_" + std::to_string(r)) / "tasks.csv");
    files.push_back(fs::path("run_" + std::to_string(r)) / "summary.json");
  }
  for (const auto& f : files) {
    const std::string a = slurp(work / "c10_a" / f), b = slurp(work / "c10_b" / f);
    ++compared;
    if (a.empty() || a != b) ++differing;
  }
  return {codes[0] == 0 && codes[1] == 0 && differing == 0,
          fmt("exit codes %d/%d; %zu files compared (summary.json + 3x tasks.csv/summary.json), %zu differ", codes[0],
              codes[1], compared, differing)};
}

// ---- 11: round trip --------------------------------------------------------

Verdict round_trip(const fs::path& work) {
  const auto meta = data::synth_meta_dataset({.domains = 2, .classes = 10, .images_per_class = 40, .image_side = 32,
                                              .seed = 8, .id_prefix = "rt"});
  const auto pool = data::concat_for_batches(meta);
  std::size_t checked = 0, mismatched = 0;
  std::string bad;
  for (base::Method m : base::all_methods()) {
    base::MethodConfig mc{.method = m, .hp = base::default_hyperparams(m), .seed = 8, .global_classes = pool.class_count};
    auto meta_learner = base::make_meta_learner(mc);
    const RngStream train_rng(8, {"meta-train", "tasks", 0});
    for (std::size_t i = 0; i < 2; ++i) {
      if (meta_learner->mode() == api::DataMode::episodes) {
        meta_learner->train_on(sample::sample_task(meta, {.ways = 5, .shots = 2, .queries = 3}, train_rng, i));
      }
    }
    if (meta_learner->mode() == api::DataMode::batches) {
      sample::BatchStream batches(pool, 16, RngStream(8, {"meta-train", "batches", 0}));
      for (int i = 0; i < 2; ++i) meta_learner->train_on(batches.next());
    }
    const auto learner = meta_learner->snapshot();
    const fs::path dir = work / ("c11_" + learner->method_id());
    learner->save(dir);
    const auto loaded = base::load_learner(dir);
    const RngStream test_rng(8, {"meta-test", "tasks", 0});
    for (std::size_t i = 0; i < 20; ++i, ++checked) {
      const auto task = sample::sample(meta, {.any_way_any_shot = true, .way_range = {2, 10}, .shot_range = {1, 10}},
                                       test_rng, i);
      const nd::Tensor a = learner->fit(task.support)->predict(task.query);
      const nd::Tensor b = loaded->fit(task.support)->predict(task.query);
      if (!(a == b)) {
        ++mismatched;
        bad = learner->method_id();
      }
    }
  }
  return {mismatched == 0, fmt("%zu (method, task) pairs, %zu not bit-identical%s%s", checked, mismatched,
                               bad.empty() ? "" : "; last: ", bad.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string only;
  fs::path bench, work = fs::temp_directory_path() / "fewshot_acceptance";
  app.add_option("--only", only, "Comma-separated criterion numbers");
  app.add_option("--bench", bench, "Path to the bench binary (criterion 10)");
  app.add_option("--work", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  std::stringstream ss(only);
  for (std::string item; std::getline(ss, item, ',');) selected.insert(std::stoi(item));
  auto want = [&](int c) { return selected.empty() || selected.contains(c); };
  fs::remove_all(work);
  fs::create_directories(work);

  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& fn) {
    if (!want(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("%s  %2d %-24s %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  };

  report(1, "metric-oracle", metric_oracle);
  report(2, "random-guess-anchor", random_anchor);
  report(3, "t-quantiles", t_quantiles);
  report(4, "gradient-suite", gradients);
  report(5, "sampler-properties", sampler_properties);
  if (want(6) || want(7)) {
    std::optional<Learnability> run;
    std::string error;
    try {
      run = run_learnability(work);
    } catch (const std::exception& e) {
      error = e.what();
    }
    auto needs_run = [&](auto fn) {
      return [&, fn]() -> Verdict {
        if (!run) return {false, "learnability run failed: " + error};
        return fn(*run);
      };
    };
    report(6, "learnability-floor", needs_run(learnability));
    report(7, "trend-checks", needs_run(trends));
  }
  report(8, "pretrain-helps", [&] { return pretraining(work); });
  report(9, "ranking-rules", ranking);
  report(10, "reproducibility", [&] { return reproducibility(bench, work); });
  report(11, "round-trip", [&] { return round_trip(work); });
  std::printf("%s\n", failed == 0 ? "ALL PASS" : fmt("%d criteria FAILED", failed).c_str());
  return failed == 0 ? 0 : 1;
}
