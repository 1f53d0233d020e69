#include "rmlab/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "rmlab/error.hpp"

namespace rmlab {

using nlohmann::json;

namespace {

// Reads one JSON object, tracking which keys were consumed so leftovers can be
// rejected as typos.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw InvalidInput("config: '" + path_ + "' must be an object");
  }

  bool has(const char* key) const { return node_.contains(key); }

  template <typename T>
  T required(const char* key) {
    if (!node_.contains(key)) throw InvalidInput("config: missing required field '" + field(key) + "'");
    return get<T>(key);
  }

  template <typename T>
  T optional(const char* key, T fallback) {
    if (!node_.contains(key)) return fallback;
    return get<T>(key);
  }

  Section child(const char* key) {
    seen_.insert(key);
    return Section(node_.at(key), field(key));
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return node_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) throw InvalidInput("config: unknown key '" + field(key.c_str()) + "'");
    }
  }

 private:
  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  T get(const char* key) {
    seen_.insert(key);
    const json& v = node_.at(key);
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) throw InvalidInput("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw InvalidInput("");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw InvalidInput("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw InvalidInput("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw InvalidInput("config: field '" + field(key) + "' has the wrong type");
    }
  }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

DatasetSpec parse_dataset(Section s) {
  DatasetSpec d;
  d.source = s.required<std::string>("source");
  d.test_fraction = s.optional("test_fraction", d.test_fraction);
  d.standardize = s.optional("standardize", d.standardize);
  if (d.source == "blobs") {
    d.num_classes = s.required<std::size_t>("num_classes");
    d.per_class = s.required<std::size_t>("per_class");
    d.dim = s.required<std::size_t>("dim");
    d.separation = s.required<double>("separation");
  } else if (d.source == "moons") {
    d.num_classes = 2;
    d.per_class = s.required<std::size_t>("per_class");
    d.dim = 2;
    d.noise_stdev = s.optional("noise_stdev", d.noise_stdev);
  } else if (d.source == "idx") {
    d.images = s.required<std::string>("images");
    d.labels = s.required<std::string>("labels");
  } else if (d.source == "container") {
    d.train = s.required<std::string>("train");
    d.test = s.required<std::string>("test");
  } else {
    throw InvalidInput("config: 'dataset.source' must be one of blobs, moons, idx, container");
  }
  s.finish();
  return d;
}

NoiseSpec parse_noise(Section s) {
  NoiseSpec n;
  n.kind = parse_noise_kind(s.required<std::string>("kind"));
  n.rate = s.required<double>("rate");
  n.stream = s.optional<std::uint64_t>("stream", n.stream);
  s.finish();
  n.validate();
  return n;
}

ModelSpec parse_model(Section s) {
  ModelSpec m;
  m.architecture = parse_architecture(s.optional<std::string>("architecture", "mlp"));
  m.hidden = s.optional("hidden", m.hidden);
  s.finish();
  return m;
}

OptimizerConfig parse_optimizer(Section s) {
  OptimizerConfig o;
  o.lr_init = s.optional("lr", o.lr_init);
  o.lr_min = s.optional("lr_min", o.lr_min);
  o.momentum = s.optional("momentum", o.momentum);
  o.weight_decay = s.optional("weight_decay", o.weight_decay);
  s.finish();
  return o;
}

RunConfig parse_run(Section s) {
  RunConfig r;
  r.mode = parse_train_mode(s.required<std::string>("mode"));
  r.total_epochs = s.required<std::size_t>("epochs");
  r.common_epochs = s.optional("common_epochs", r.total_epochs);
  r.batch_size = s.optional("batch_size", r.batch_size);
  r.warmup_epochs = s.optional("warmup_epochs", r.warmup_epochs);
  r.regroup.n = s.optional("n", r.regroup.n);
  r.regroup.k = s.optional("k", r.regroup.k);
  r.regroup.epsilon_bias = s.optional("epsilon_bias", r.regroup.epsilon_bias);
  r.lambda = s.optional("lambda", r.lambda);
  r.seed = s.optional<std::uint64_t>("seed", r.seed);
  r.variant = parse_estimator_variant(s.optional<std::string>("variant", "full"));
  s.finish();
  r.validate();
  return r;
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  Section root(doc, "");
  ExperimentConfig c;
  if (root.has("dataset")) {
    c.dataset = parse_dataset(root.child("dataset"));
    c.has_dataset = true;
  }
  if (root.has("noise")) c.noise = parse_noise(root.child("noise"));
  if (root.has("model")) c.model = parse_model(root.child("model"));
  if (root.has("optimizer")) c.optimizer = parse_optimizer(root.child("optimizer"));
  if (root.has("run")) {
    c.run = parse_run(root.child("run"));
    c.has_run = true;
  }
  if (root.has("ablate")) {
    Section a = root.child("ablate");
    c.ablate_seeds = a.required<std::vector<std::uint64_t>>("seeds");
    a.finish();
  }
  if (root.has("verify")) {
    c.verify = root.raw("verify");
    if (!c.verify.is_object()) throw InvalidInput("config: 'verify' must be an object");
  }
  c.out = root.optional<std::string>("out", ".");
  root.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw InvalidInput(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) +
                       ": malformed config: " + e.what());
  }
  try {
    return parse_config(doc);
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

json to_json(const ExperimentConfig& c) {
  json doc = json::object();
  if (c.has_dataset) {
    const auto& d = c.dataset;
    json ds = {{"source", d.source}, {"test_fraction", d.test_fraction}, {"standardize", d.standardize}};
    if (d.source == "blobs") {
      ds["num_classes"] = d.num_classes;
      ds["per_class"] = d.per_class;
      ds["dim"] = d.dim;
      ds["separation"] = d.separation;
    } else if (d.source == "moons") {
      ds["per_class"] = d.per_class;
      ds["noise_stdev"] = d.noise_stdev;
    } else if (d.source == "idx") {
      ds["images"] = d.images;
      ds["labels"] = d.labels;
    } else {
      ds["train"] = d.train;
      ds["test"] = d.test;
    }
    doc["dataset"] = ds;
  }
  if (c.noise) {
    doc["noise"] = {{"kind", std::string(to_string(c.noise->kind))}, {"rate", c.noise->rate},
                    {"stream", c.noise->stream}};
  }
  doc["model"] = {{"architecture", std::string(to_string(c.model.architecture))}, {"hidden", c.model.hidden}};
  doc["optimizer"] = {{"lr", c.optimizer.lr_init},
                      {"lr_min", c.optimizer.lr_min},
                      {"momentum", c.optimizer.momentum},
                      {"weight_decay", c.optimizer.weight_decay}};
  if (c.has_run) {
    const auto& r = c.run;
    doc["run"] = {{"mode", std::string(to_string(r.mode))},
                  {"epochs", r.total_epochs},
                  {"common_epochs", r.common_epochs},
                  {"batch_size", r.batch_size},
                  {"warmup_epochs", r.warmup_epochs},
                  {"n", r.regroup.n},
                  {"k", r.regroup.k},
                  {"epsilon_bias", r.regroup.epsilon_bias},
                  {"lambda", r.lambda},
                  {"seed", r.seed},
                  {"variant", std::string(to_string(r.variant))}};
  }
  if (!c.ablate_seeds.empty()) doc["ablate"] = {{"seeds", c.ablate_seeds}};
  if (!c.verify.empty()) doc["verify"] = c.verify;
  doc["out"] = c.out.string();
  return doc;
}

PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed) {
  if (!config.has_dataset) throw InvalidInput("config: missing required field 'dataset'");
  const DatasetSpec& d = config.dataset;
  if (d.source == "container") {
    return {read_dataset(d.train), read_dataset(d.test)};
  }
  Dataset full = [&] {
    if (d.source == "blobs") {
      return make_blobs(d.num_classes, d.per_class, d.dim, d.separation, RngStream(seed, streams::kData));
    }
    if (d.source == "moons") return make_two_moons(d.per_class, d.noise_stdev, RngStream(seed, streams::kData));
    return read_idx(d.images, d.labels);
  }();
  TrainTestSplit parts = split(full, d.test_fraction, RngStream(seed, streams::kSplit));
  Dataset train = std::move(parts.train);
  Dataset test = std::move(parts.test);
  if (d.standardize) {
    const Standardizer s = Standardizer::fit(train.features());
    train = train.with_features(s.apply(train.features()));
    test = test.with_features(s.apply(test.features()));
  }
  if (config.noise) train = inject(train, *config.noise, seed);
  return {std::move(train), std::move(test)};
}

ModelState make_model(const ExperimentConfig& config, const Dataset& train, std::uint64_t seed) {
  return ModelState::initialized(config.model.architecture, train.dim(), train.num_classes(), config.model.hidden,
                                 RngStream(seed, streams::kInit));
}

TrainResult run_training(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed) {
  RunConfig run = config.run;
  run.seed = seed;
  return train(data.train, data.test, make_model(config, data.train, seed), config.optimizer, run);
}

TrainResult run_training(const ExperimentConfig& config, std::uint64_t seed) {
  return run_training(config, prepare_data(config, seed), seed);
}

void write_mask_csv(const std::filesystem::path& path, const Dataset& dataset) {
  const auto mask = corruption_mask(dataset);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sample_id,true_label,observed_label,is_corrupted\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out << i << ',' << dataset.true_labels()[i] << ',' << dataset.observed_labels()[i] << ','
        << (mask[i] ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_cache_csv(const std::filesystem::path& path, const Dataset& dataset, const LossCache& cache) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sample_id,true_label,observed_label,loss_plain,loss_rml,is_corrupted\n";
  char buf[64];
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out << i << ',';
    if (dataset.has_true_labels()) out << dataset.true_labels()[i];
    out << ',' << dataset.observed_labels()[i] << ',';
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", cache.plain.at(i), cache.rml.at(i));
    out << buf << ',';
    if (dataset.has_true_labels()) out << (dataset.true_labels()[i] != dataset.observed_labels()[i] ? 1 : 0);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

json to_json(const verify::Report& r) {
  json j = {{"check", r.check}, {"trials", r.trials}, {"statistic", r.statistic},
            {"bound", r.bound}, {"pass", r.pass},     {"status", r.status}};
  json details = json::object();
  for (const auto& [k, v] : r.details) details[k] = v;
  j["details"] = details;
  return j;
}

namespace {

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

CommandResult cmd_inject(const ExperimentConfig& config) {
  if (!config.noise) throw InvalidInput("config: missing required field 'noise'");
  ensure_dir(config.out);
  const PreparedData data = prepare_data(config, config.run.seed);
  CommandResult res;
  const auto train_path = config.out / "train.rmld";
  const auto test_path = config.out / "test.rmld";
  const auto mask_path = config.out / "mask.csv";
  write_dataset(train_path, data.train);
  write_dataset(test_path, data.test);
  write_mask_csv(mask_path, data.train);
  res.files = {train_path, test_path, mask_path};
  res.report = {{"train", train_path.string()},
                {"test", test_path.string()},
                {"mask", mask_path.string()},
                {"samples", data.train.size()},
                {"corruption_rate", corruption_rate(data.train)}};
  return res;
}

CommandResult cmd_train(const ExperimentConfig& config) {
  if (!config.has_run) throw InvalidInput("config: missing required field 'run'");
  ensure_dir(config.out);
  const auto start = std::chrono::steady_clock::now();
  const PreparedData data = prepare_data(config, config.run.seed);
  const std::string mode(to_string(config.run.mode));

  CommandResult res;
  auto record = [&res](std::filesystem::path p) {
    res.files.push_back(p);
    return p;
  };
  if (config.dataset.source != "container") {
    write_dataset(record(config.out / "train.rmld"), data.train);
    write_dataset(record(config.out / "test.rmld"), data.test);
  }
  const TrainResult result = run_training(config, data, config.run.seed);
  write_metrics_csv(record(config.out / ("metrics_" + mode + ".csv")), result.metrics);
  write_checkpoint(record(config.out / ("checkpoint_" + mode + "_student.bin")), result.student);
  write_checkpoint(record(config.out / ("checkpoint_" + mode + "_teacher.bin")), result.teacher);
  if (!result.cache.empty()) write_cache_csv(record(config.out / ("cache_" + mode + ".csv")), data.train, result.cache);

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  res.report = {{"mode", mode},
                {"epochs", result.metrics.size()},
                {"final_test_accuracy", result.metrics.empty() ? accuracy(result.student, data.test.features(), data.test.observed_labels()) : result.metrics.back().test_accuracy},
                {"final_teacher_test_accuracy", accuracy(result.teacher, data.test.features(), data.test.observed_labels())},
                {"train_samples", data.train.size()},
                {"test_samples", data.test.size()},
                {"wall_time_seconds", seconds},
                {"config", to_json(config)}};
  if (data.train.has_true_labels()) res.report["train_corruption_rate"] = corruption_rate(data.train);
  write_json(record(config.out / ("summary_" + mode + ".json")), res.report);
  return res;
}

namespace {

ExperimentConfig default_cor1_experiment(const ExperimentConfig& base) {
  ExperimentConfig c = base;
  if (!c.has_dataset) {
    c.dataset.source = "blobs";
    c.dataset.num_classes = 4;
    c.dataset.per_class = 150;
    c.dataset.dim = 8;
    c.dataset.separation = 3.0;
    c.has_dataset = true;
  }
  if (!c.noise) c.noise = NoiseSpec{NoiseKind::symmetric, 0.4, streams::kNoise};
  if (!c.has_run) {
    c.run.mode = TrainMode::rml;
    c.run.total_epochs = 30;
    c.run.common_epochs = 30;
    c.run.warmup_epochs = 3;
    c.run.batch_size = 64;
    c.has_run = true;
  }
  if (c.run.mode == TrainMode::ce) c.run.mode = TrainMode::rml;
  return c;
}

template <typename T>
T param(const json& section, const char* key, T fallback) {
  if (!section.is_object() || !section.contains(key)) return fallback;
  try {
    return section.at(key).get<T>();
  } catch (const std::exception&) {
    throw InvalidInput(std::string("config: verify field '") + key + "' has the wrong type");
  }
}

void check_verify_keys(const json& verify) {
  static const std::set<std::string> suites = {"prop1", "prop2", "cor1", "mom"};
  static const std::map<std::string, std::set<std::string>> keys = {
      {"prop1", {"trials", "m", "max_loss", "epsilon_bias"}},
      {"prop2", {"n", "k", "epsilon_r", "trials", "base_mean", "base_stdev", "contamination_weight",
                 "contamination_mean", "contamination_stdev"}},
      {"mom", {"base_draws", "contamination_trials"}},
      {"cor1", {}}};
  for (const auto& [name, body] : verify.items()) {
    if (!suites.count(name)) throw InvalidInput("config: unknown key 'verify." + name + "'");
    if (!body.is_object()) throw InvalidInput("config: 'verify." + name + "' must be an object");
    for (const auto& [key, v] : body.items()) {
      if (!keys.at(name).count(key)) throw InvalidInput("config: unknown key 'verify." + name + "." + key + "'");
    }
  }
}

}  // namespace

CommandResult cmd_verify(const ExperimentConfig& config, const std::string& suite) {
  static const std::set<std::string> known = {"prop1", "prop2", "cor1", "mom", "all"};
  if (!known.count(suite)) throw InvalidInput("unknown verify suite '" + suite + "'");
  check_verify_keys(config.verify);
  const std::uint64_t seed = config.run.seed;
  const RngStream rng(seed, streams::kVerify);
  const json empty = json::object();
  auto section = [&](const char* name) -> const json& {
    return config.verify.contains(name) ? config.verify.at(name) : empty;
  };

  std::vector<verify::Report> reports;
  const bool all = suite == "all";
  if (all || suite == "prop1") {
    const json& p = section("prop1");
    reports.push_back(verify::check_prop1(param<std::size_t>(p, "trials", 10000), param<std::size_t>(p, "m", 100),
                                          rng.derive(1), param(p, "max_loss", 30.0), param(p, "epsilon_bias", 1.0)));
  }
  if (all || suite == "prop2") {
    const json& p = section("prop2");
    verify::MomExperiment e;
    e.n = param<std::size_t>(p, "n", 6);
    e.k = param<std::size_t>(p, "k", 10);
    e.epsilon_r = param(p, "epsilon_r", 1.0);
    e.trials = param<std::size_t>(p, "trials", 100000);
    e.population.base_mean = param(p, "base_mean", 1.0);
    e.population.base_stdev = param(p, "base_stdev", 1.0);
    e.population.contamination_weight = param(p, "contamination_weight", 0.0);
    e.population.contamination_mean = param(p, "contamination_mean", 0.0);
    e.population.contamination_stdev = param(p, "contamination_stdev", 0.0);
    reports.push_back(verify::check_prop2(e, rng.derive(2)));
  }
  if (all || suite == "mom") {
    const json& p = section("mom");
    const std::size_t ns[] = {2, 4, 6};
    const std::size_t ks[] = {1, 2, 3};
    reports.push_back(verify::check_mom_robustness(ns, ks, param<std::size_t>(p, "base_draws", 20), rng.derive(3)));
    reports.push_back(verify::check_contamination(6, 1, 1.0, 0.1, 2, 1e6, 0.5,
                                                  param<std::size_t>(p, "contamination_trials", 10000), 0.99,
                                                  rng.derive(4)));
  }
  if (all || suite == "cor1") {
    const ExperimentConfig exp = default_cor1_experiment(config);
    const PreparedData data = prepare_data(exp, seed);
    const TrainResult result = run_training(exp, data, seed);
    reports.push_back(verify::check_cor1(data.train, result.cache, exp.run.regroup.epsilon_bias));
  }

  CommandResult res;
  res.report = json::array();
  bool ok = true;
  for (const auto& r : reports) {
    res.report.push_back(to_json(r));
    ok = ok && r.pass;
  }
  res.exit_code = ok ? 0 : 1;
  ensure_dir(config.out);
  const auto path = config.out / ("verify_" + suite + ".json");
  write_json(path, res.report);
  res.files.push_back(path);
  return res;
}

CommandResult cmd_ablate(const ExperimentConfig& config) {
  if (!config.has_run) throw InvalidInput("config: missing required field 'run'");
  ensure_dir(config.out);
  std::vector<std::uint64_t> seeds = config.ablate_seeds;
  if (seeds.empty()) seeds.push_back(config.run.seed);
  const EstimatorVariant variants[] = {EstimatorVariant::full, EstimatorVariant::no_processing,
                                       EstimatorVariant::mean_of_selected};

  const auto path = config.out / "ablation.csv";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "seed,full,no_processing,no_median\n";
  std::vector<double> sums(3, 0.0);
  json rows = json::array();
  char buf[32];
  for (std::uint64_t seed : seeds) {
    const PreparedData data = prepare_data(config, seed);
    out << seed;
    json row = {{"seed", seed}};
    for (std::size_t v = 0; v < 3; ++v) {
      ExperimentConfig c = config;
      c.run.mode = TrainMode::rml;
      c.run.variant = variants[v];
      const TrainResult r = run_training(c, data, seed);
      const double acc = r.metrics.empty() ? 0.0 : r.metrics.back().test_accuracy;
      sums[v] += acc;
      std::snprintf(buf, sizeof buf, "%.17g", acc);
      out << ',' << buf;
      row[std::string(to_string(variants[v]))] = acc;
    }
    out << '\n';
    rows.push_back(row);
  }
  out << "mean";
  json means = json::object();
  for (std::size_t v = 0; v < 3; ++v) {
    const double m = sums[v] / static_cast<double>(seeds.size());
    std::snprintf(buf, sizeof buf, "%.17g", m);
    out << ',' << buf;
    means[std::string(to_string(variants[v]))] = m;
  }
  out << '\n';
  if (!out) throw IoError("failed writing " + path.string());

  CommandResult res;
  res.files.push_back(path);
  res.report = {{"ablation", path.string()}, {"rows", rows}, {"mean", means}};
  return res;
}

}  // namespace rmlab
