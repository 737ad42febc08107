#include "fewshot/harness/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>

#include "fewshot/error.hpp"

namespace fewshot::harness {

using nlohmann::json;

const char* protocol_name(Protocol p) { return p == Protocol::cross_domain ? "cross-domain" : "within-domain"; }

Protocol parse_protocol(const std::string& name) {
  if (name == "cross-domain") return Protocol::cross_domain;
  if (name == "within-domain") return Protocol::within_domain;
  throw ConfigError("unknown protocol '" + name + "' (expected cross-domain or within-domain)");
}

std::size_t scale_count(std::size_t n, double scale) {
  if (!(scale >= 1.0) || !std::isfinite(scale)) throw ConfigError("scale must be a finite number >= 1");
  const auto v = static_cast<std::size_t>(std::floor(static_cast<double>(n) / scale));
  return std::max<std::size_t>(v, 1);
}

Schedule scaled(const Schedule& s, double scale) {
  return {scale_count(s.meta_train_units, scale), scale_count(s.validate_every, scale),
          scale_count(s.validation_tasks, scale), s.validation_queries};
}

Schedule RunConfig::schedule() const {
  Schedule s = protocol == Protocol::cross_domain ? preset::cross_domain : preset::within_domain;
  if (meta_train_units) s.meta_train_units = *meta_train_units;
  if (validate_every) s.validate_every = *validate_every;
  if (validation_tasks) s.validation_tasks = *validation_tasks;
  s.validation_queries = validation_episode.queries;
  return scaled(s, scale);
}

base::Hyperparams RunConfig::hyperparams() const {
  base::Hyperparams hp = base::default_hyperparams(method);
  if (hyperparams_file) hp = base::apply_override_file(hp, *hyperparams_file);
  std::string text;
  for (const auto& [k, v] : hp_overrides) text += k + "=" + v + "\n";
  return base::apply_overrides(hp, text);
}

std::string RunConfig::id() const {
  if (!submission_id.empty()) return submission_id;
  return std::string(base::method_id(method)) + "/" + init + "/" + protocol_name(protocol);
}

void RunConfig::validate() const {
  if (init != "random" && init != "pretrained") throw ConfigError("init must be random or pretrained");
  if (run_count < 1) throw ConfigError("run_count must be >= 1");
  if (!(budget_seconds > 0.0)) throw ConfigError("budget_seconds must be > 0");
  if (tasks_per_dataset < 1) throw ConfigError("tasks_per_dataset must be >= 1");
  for (auto v : {meta_train_units, validate_every, validation_tasks}) {
    if (v && *v == 0) throw ConfigError("schedule counts must be positive");
  }
  (void)schedule();
  (void)hyperparams();
  backbone.validate();
  meta_train_episode.validate();
  validation_episode.validate();
  test_episode.validate();
  if (data.source != "synthetic" && data.source != "directory") {
    throw ConfigError("data_source must be synthetic or directory");
  }
  if (protocol == Protocol::within_domain) {
    if (test_episode.any_way_any_shot || test_episode.ways != 5 || test_episode.shots != 5 ||
        test_episode.queries != 20) {
      throw ConfigError("within-domain meta-test tasks are fixed at 5-way 5-shot with 20 queries per class");
    }
  }
  if (init == "pretrained" && (pretrain.iterations == 0 || pretrain.batch_size == 0 || !(pretrain.lr > 0.0))) {
    throw ConfigError("pretraining needs positive iterations, batch size and learning rate");
  }
  if (league.empty()) throw ConfigError("league must not be empty");
}

namespace {

using Setter = std::function<void(RunConfig&, const json&)>;

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

std::uint64_t as_uint(const json& v, const std::string& key) {
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::int64_t as_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

int as_small(const json& v, const std::string& key) {
  const std::uint64_t u = as_uint(v, key);
  if (u > 1'000'000) throw ConfigError("config key '" + key + "' is out of range");
  return static_cast<int>(u);
}

double as_real(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return v.get<double>();
}

std::string scalar_text(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return v.dump();
  throw ConfigError("config key '" + key + "' must be a string or number");
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto size_field = [&t](const std::string& key, auto member) {
      t[key] = [key, member](RunConfig& c, const json& v) { member(c) = static_cast<std::size_t>(as_uint(v, key)); };
    };
    auto episode_fields = [&t](const std::string& prefix, auto pick) {
      t[prefix + "_ways"] = [=](RunConfig& c, const json& v) { pick(c).ways = as_small(v, prefix + "_ways"); };
      t[prefix + "_shots"] = [=](RunConfig& c, const json& v) { pick(c).shots = as_small(v, prefix + "_shots"); };
      t[prefix + "_queries"] = [=](RunConfig& c, const json& v) {
        pick(c).queries = as_small(v, prefix + "_queries");
      };
    };

    t["protocol"] = [](RunConfig& c, const json& v) { c.protocol = parse_protocol(as_string(v, "protocol")); };
    t["method"] = [](RunConfig& c, const json& v) { c.method = base::parse_method(as_string(v, "method")); };
    t["init"] = [](RunConfig& c, const json& v) { c.init = as_string(v, "init"); };
    t["hyperparams_file"] = [](RunConfig& c, const json& v) {
      c.hyperparams_file = as_string(v, "hyperparams_file");
    };
    t["seed"] = [](RunConfig& c, const json& v) { c.seed = as_uint(v, "seed"); };
    size_field("run_count", [](RunConfig& c) -> std::size_t& { return c.run_count; });
    t["scale"] = [](RunConfig& c, const json& v) { c.scale = as_real(v, "scale"); };
    t["budget_seconds"] = [](RunConfig& c, const json& v) { c.budget_seconds = as_real(v, "budget_seconds"); };
    t["out"] = [](RunConfig& c, const json& v) { c.out = as_string(v, "out"); };
    size_field("workers", [](RunConfig& c) -> std::size_t& { return c.workers; });

    t["backbone_arch"] = [](RunConfig& c, const json& v) { c.backbone.arch = as_string(v, "backbone_arch"); };
    size_field("backbone_input_side", [](RunConfig& c) -> std::size_t& { return c.backbone.input_side; });
    size_field("backbone_width", [](RunConfig& c) -> std::size_t& { return c.backbone.width; });
    size_field("backbone_blocks", [](RunConfig& c) -> std::size_t& { return c.backbone.blocks; });

    t["meta_train_units"] = [](RunConfig& c, const json& v) { c.meta_train_units = as_uint(v, "meta_train_units"); };
    t["validate_every"] = [](RunConfig& c, const json& v) { c.validate_every = as_uint(v, "validate_every"); };
    t["validation_tasks"] = [](RunConfig& c, const json& v) { c.validation_tasks = as_uint(v, "validation_tasks"); };
    episode_fields("meta_train", [](RunConfig& c) -> sample::EpisodeConfig& { return c.meta_train_episode; });
    episode_fields("validation", [](RunConfig& c) -> sample::EpisodeConfig& { return c.validation_episode; });
    episode_fields("test", [](RunConfig& c) -> sample::EpisodeConfig& { return c.test_episode; });

    size_field("tasks_per_dataset", [](RunConfig& c) -> std::size_t& { return c.tasks_per_dataset; });
    t["test_mode"] = [](RunConfig& c, const json& v) {
      const std::string mode = as_string(v, "test_mode");
      if (mode == "any-way-any-shot") {
        c.test_episode.any_way_any_shot = true;
      } else if (mode == "fixed") {
        c.test_episode.any_way_any_shot = false;
      } else {
        throw ConfigError("test_mode must be any-way-any-shot or fixed");
      }
    };
    t["test_way_min"] = [](RunConfig& c, const json& v) { c.test_episode.way_range.lo = as_small(v, "test_way_min"); };
    t["test_way_max"] = [](RunConfig& c, const json& v) { c.test_episode.way_range.hi = as_small(v, "test_way_max"); };
    t["test_shot_min"] = [](RunConfig& c, const json& v) {
      c.test_episode.shot_range.lo = as_small(v, "test_shot_min");
    };
    t["test_shot_max"] = [](RunConfig& c, const json& v) {
      c.test_episode.shot_range.hi = as_small(v, "test_shot_max");
    };

    t["data_source"] = [](RunConfig& c, const json& v) { c.data.source = as_string(v, "data_source"); };
    t["data_train_dir"] = [](RunConfig& c, const json& v) { c.data.train_dir = as_string(v, "data_train_dir"); };
    t["data_test_dir"] = [](RunConfig& c, const json& v) { c.data.test_dir = as_string(v, "data_test_dir"); };
    t["data_dataset_dir"] = [](RunConfig& c, const json& v) {
      c.data.dataset_dir = as_string(v, "data_dataset_dir");
    };
    size_field("synth_domains", [](RunConfig& c) -> std::size_t& { return c.data.synth.domains; });
    size_field("synth_classes", [](RunConfig& c) -> std::size_t& { return c.data.synth.classes; });
    size_field("synth_images_per_class", [](RunConfig& c) -> std::size_t& { return c.data.synth.images_per_class; });
    size_field("synth_image_side", [](RunConfig& c) -> std::size_t& { return c.data.synth.image_side; });
    size_field("synth_family_offset", [](RunConfig& c) -> std::size_t& { return c.data.synth.family_offset; });
    t["synth_seed"] = [](RunConfig& c, const json& v) { c.data.synth.seed = as_uint(v, "synth_seed"); };
    t["synth_test_seed"] = [](RunConfig& c, const json& v) { c.data.synth_test_seed = as_uint(v, "synth_test_seed"); };

    size_field("pretrain_domains", [](RunConfig& c) -> std::size_t& { return c.pretrain.corpus.domains; });
    size_field("pretrain_classes", [](RunConfig& c) -> std::size_t& { return c.pretrain.corpus.classes; });
    size_field("pretrain_images_per_class",
                [](RunConfig& c) -> std::size_t& { return c.pretrain.corpus.images_per_class; });
    t["pretrain_seed"] = [](RunConfig& c, const json& v) { c.pretrain.corpus.seed = as_uint(v, "pretrain_seed"); };
    size_field("pretrain_iterations", [](RunConfig& c) -> std::size_t& { return c.pretrain.iterations; });
    size_field("pretrain_batch_size", [](RunConfig& c) -> std::size_t& { return c.pretrain.batch_size; });
    t["pretrain_lr"] = [](RunConfig& c, const json& v) { c.pretrain.lr = as_real(v, "pretrain_lr"); };

    t["submission_id"] = [](RunConfig& c, const json& v) { c.submission_id = as_string(v, "submission_id"); };
    t["timestamp"] = [](RunConfig& c, const json& v) { c.timestamp = as_int(v, "timestamp"); };
    t["league"] = [](RunConfig& c, const json& v) { c.league = as_string(v, "league"); };
    return t;
  }();
  return table;
}

}  // namespace

RunConfig parse_run_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig config;
  // The within-domain synthetic default is a single 40-class dataset.
  if (doc.contains("protocol") && doc["protocol"] == "within-domain") {
    config.data.synth.domains = 1;
    config.data.synth.classes = 40;
    config.test_episode.any_way_any_shot = false;
  }
  for (const auto& [key, value] : doc.items()) {
    if (key.rfind("hp_", 0) == 0) {
      config.hp_overrides.emplace_back(key.substr(3), scalar_text(value, key));
      continue;
    }
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(config, value);
  }
  config.data.synth.image_side = doc.contains("synth_image_side") ? config.data.synth.image_side
                                                                  : config.backbone.input_side;
  config.pretrain.corpus.image_side = config.backbone.input_side;
  config.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return parse_run_config(doc);
}

namespace {

json episode_json(const sample::EpisodeConfig& e) {
  json j{{"queries", e.queries}};
  if (e.any_way_any_shot) {
    j["mode"] = "any-way-any-shot";
    j["ways"] = {e.way_range.lo, e.way_range.hi};
    j["shots"] = {e.shot_range.lo, e.shot_range.hi};
  } else {
    j["mode"] = "fixed";
    j["ways"] = e.ways;
    j["shots"] = e.shots;
  }
  return j;
}

json synth_json(const data::SynthSpec& s) {
  return {{"domains", s.domains},       {"classes", s.classes}, {"images_per_class", s.images_per_class},
          {"image_side", s.image_side}, {"seed", s.seed},       {"family_offset", s.family_offset}};
}

}  // namespace

json to_json(const RunConfig& c) {
  const Schedule s = c.schedule();
  json hp = json::object();
  for (const auto& [k, v] : base::to_fields(c.hyperparams())) hp[k] = v;
  json data{{"source", c.data.source}};
  if (c.data.source == "synthetic") {
    data["synth"] = synth_json(c.data.synth);
    if (c.protocol == Protocol::cross_domain) data["synth_test_seed"] = c.data.synth_test_seed;
  } else if (c.protocol == Protocol::cross_domain) {
    data["train_dir"] = c.data.train_dir.string();
    data["test_dir"] = c.data.test_dir.string();
  } else {
    data["dataset_dir"] = c.data.dataset_dir.string();
  }
  json j{{"protocol", protocol_name(c.protocol)},
         {"method", base::method_id(c.method)},
         {"init", c.init},
         {"hyperparams", hp},
         {"backbone",
          {{"arch", c.backbone.arch},
           {"input_side", c.backbone.input_side},
           {"width", c.backbone.width},
           {"blocks", c.backbone.blocks}}},
         {"seed", c.seed},
         {"run_count", c.run_count},
         {"scale", c.scale},
         {"budget_seconds", c.budget_seconds},
         {"schedule",
          {{"meta_train_units", s.meta_train_units},
           {"validate_every", s.validate_every},
           {"validation_tasks", s.validation_tasks}}},
         {"meta_train_episode", episode_json(c.meta_train_episode)},
         {"validation_episode", episode_json(c.validation_episode)},
         {"test_episode", episode_json(c.test_episode)},
         {"tasks_per_dataset", c.tasks_per_dataset},
         {"data", data}};
  if (c.init == "pretrained") {
    j["pretrain"] = {{"corpus", synth_json(c.pretrain.corpus)},
                     {"iterations", c.pretrain.iterations},
                     {"batch_size", c.pretrain.batch_size},
                     {"lr", c.pretrain.lr}};
  }
  return j;
}

data::SynthSpec parse_synth_spec(const json& doc) {
  if (!doc.is_object()) throw ConfigError("synth spec must be a JSON object");
  data::SynthSpec s;
  for (const auto& [key, v] : doc.items()) {
    if (key == "domains") {
      s.domains = as_uint(v, key);
    } else if (key == "classes") {
      s.classes = as_uint(v, key);
    } else if (key == "images_per_class") {
      s.images_per_class = as_uint(v, key);
    } else if (key == "image_side") {
      s.image_side = as_uint(v, key);
    } else if (key == "seed") {
      s.seed = as_uint(v, key);
    } else if (key == "id_prefix") {
      s.id_prefix = as_string(v, key);
    } else if (key == "family_offset") {
      s.family_offset = as_uint(v, key);
    } else {
      throw ConfigError("unknown synth spec key '" + key + "'");
    }
  }
  return s;
}

}  // namespace fewshot::harness
