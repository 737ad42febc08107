#include <fstream>
#include <set>

#include "fewshot/error.hpp"
#include "fewshot/harness/harness.hpp"

namespace fewshot::harness {

namespace fs = std::filesystem;
using nlohmann::json;

std::optional<double> bucket_trend(const std::map<int, score::Stat>& buckets) {
  if (buckets.size() < 2) return std::nullopt;
  std::vector<double> keys, means;
  for (const auto& [k, s] : buckets) {
    keys.push_back(k);
    means.push_back(s.mean);
  }
  return score::spearman(keys, means);
}

namespace {

struct Cell {
  std::string method, init;
  ProtocolResult result;
  score::Aggregate pooled;
};

std::string half_width(const score::Stat& s) { return s.ci ? score::format_double(s.ci->half_width) : ""; }

json bucket_rows(const std::map<int, score::Stat>& buckets, const char* key) {
  json rows = json::array();
  for (const auto& [k, s] : buckets) {
    json row = score::to_json(s);
    row[key] = k;
    rows.push_back(row);
  }
  return rows;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::ofstream open_csv(const fs::path& path, const std::string& header) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << header << '\n';
  return out;
}

}  // namespace

json compare_conditions(const json& matrix) {
  if (!matrix.is_object() || !matrix.contains("cells") || !matrix["cells"].is_array()) {
    throw ConfigError("matrix must be an object with a 'cells' array");
  }
  for (const auto& [key, _] : matrix.items()) {
    if (key != "base" && key != "cells" && key != "out") throw ConfigError("unknown matrix key '" + key + "'");
  }
  const json base = matrix.value("base", json::object());
  if (!base.is_object()) throw ConfigError("matrix 'base' must be an object");
  const fs::path out = matrix.value("out", std::string("compare_out"));
  if (matrix["cells"].size() < 2) throw ConfigError("a comparison needs at least two cells");

  std::vector<Cell> cells;
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<RunConfig> configs;
  for (const auto& cell : matrix["cells"]) {
    if (!cell.is_object()) throw ConfigError("each matrix cell must be an object");
    json merged = base;
    merged.update(cell);
    RunConfig config = parse_run_config(merged);
    const std::string method = base::method_id(config.method);
    if (!seen.emplace(method, config.init).second) {
      throw ConfigError("duplicate matrix cell " + method + "/" + config.init);
    }
    config.out = out / (method + "_" + config.init);
    configs.push_back(std::move(config));
  }

  for (const auto& config : configs) {
    Cell cell{base::method_id(config.method), config.init, run_protocol(config), {}};
    std::vector<score::TaskScore> all;
    for (std::size_t r = 0; r < cell.result.runs.size(); ++r) {
      const auto& scores = cell.result.runs[r].scores;
      for (auto s : scores) {
        s.task_index += r * scores.size();
        all.push_back(std::move(s));
      }
    }
    cell.pooled = score::aggregate(std::move(all));
    cells.push_back(std::move(cell));
  }

  fs::create_directories(out);
  auto overall = open_csv(out / "overall.csv", "method,init,n,mean,ci_half_width,worst_run_mean");
  auto by_dataset = open_csv(out / "by_dataset.csv", "method,init,dataset,n,mean,ci_half_width");
  auto per_n = open_csv(out / "per_N.csv", "method,init,N,n,mean,ci_half_width");
  auto per_k = open_csv(out / "per_k.csv", "method,init,k,n,mean,ci_half_width");
  json doc{{"schema_version", score::kSchemaVersion}, {"cells", json::array()}};
  for (const auto& c : cells) {
    const auto& a = c.pooled;
    const auto& means = c.result.submission.run_means;
    const double worst = *std::min_element(means.begin(), means.end());
    const std::string tag = c.method + "," + c.init + ",";
    overall << tag << a.overall.n << ',' << score::format_double(a.overall.mean) << ',' << half_width(a.overall) << ','
            << score::format_double(worst) << '\n';
    for (const auto& [d, s] : a.per_dataset) {
      by_dataset << tag << d << ',' << s.n << ',' << score::format_double(s.mean) << ',' << half_width(s) << '\n';
    }
    for (const auto& [n, s] : a.per_ways) {
      per_n << tag << n << ',' << s.n << ',' << score::format_double(s.mean) << ',' << half_width(s) << '\n';
    }
    for (const auto& [k, s] : a.per_shots) {
      per_k << tag << k << ',' << s.n << ',' << score::format_double(s.mean) << ',' << half_width(s) << '\n';
    }

    json datasets = json::array();
    for (const auto& [d, s] : a.per_dataset) {
      json row = score::to_json(s);
      row["dataset"] = d;
      datasets.push_back(row);
    }
    auto by_mean = [](const auto& x, const auto& y) { return x.second.mean < y.second.mean; };
    const auto worst_d = std::min_element(a.per_dataset.begin(), a.per_dataset.end(), by_mean);
    const auto best_d = std::max_element(a.per_dataset.begin(), a.per_dataset.end(), by_mean);
    doc["cells"].push_back({{"method", c.method},
                            {"init", c.init},
                            {"overall", score::to_json(a.overall)},
                            {"run_means", means},
                            {"worst_run_mean", worst},
                            {"per_N", bucket_rows(a.per_ways, "N")},
                            {"per_k", bucket_rows(a.per_shots, "k")},
                            {"spearman_N", optional_number(bucket_trend(a.per_ways))},
                            {"spearman_k", optional_number(bucket_trend(a.per_shots))},
                            {"per_dataset", datasets},
                            {"worst_dataset", worst_d == a.per_dataset.end() ? json(nullptr) : json(worst_d->first)},
                            {"best_dataset", best_d == a.per_dataset.end() ? json(nullptr) : json(best_d->first)},
                            {"budget_exhausted", c.result.budget_exhausted}});
  }
  score::write_json(doc, out / "comparison.json");
  return doc;
}

}  // namespace fewshot::harness
