#include "vampire/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "vampire/semisup.hpp"

namespace vampire::pipeline {

// --- IntDist -----------------------------------------------------------------

IntDist IntDist::fixed(std::int64_t v) {
  IntDist d;
  d.kind = Kind::fixed;
  d.value = v;
  return d;
}

IntDist IntDist::uniform(std::int64_t lo, std::int64_t hi) {
  IntDist d;
  d.kind = Kind::uniform;
  d.lo = lo;
  d.hi = hi;
  return d;
}

IntDist IntDist::choice(std::vector<std::int64_t> options) {
  IntDist d;
  d.kind = Kind::choice;
  d.options = std::move(options);
  return d;
}

void IntDist::validate() const {
  if (kind == Kind::uniform && lo > hi) {
    throw std::invalid_argument("uniform-integer: lo > hi (" + std::to_string(lo) + " > " +
                                std::to_string(hi) + ")");
  }
  if (kind == Kind::choice && options.empty()) {
    throw std::invalid_argument("choice: empty option list");
  }
}

std::int64_t IntDist::sample(Rng& rng) const {
  validate();
  switch (kind) {
    case Kind::fixed: return value;
    case Kind::uniform: return rng.uniform_int(lo, hi);
    case Kind::choice:
      return options[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(options.size()) - 1))];
  }
  throw std::logic_error("invalid IntDist kind");
}

json IntDist::to_json() const {
  switch (kind) {
    case Kind::fixed: return json{{"kind", "fixed"}, {"value", value}};
    case Kind::uniform: return json{{"kind", "uniform-integer"}, {"bounds", {lo, hi}}};
    case Kind::choice: return json{{"kind", "choice"}, {"options", options}};
  }
  throw std::logic_error("invalid IntDist kind");
}

IntDist IntDist::from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "fixed") return fixed(j.at("value").get<std::int64_t>());
  if (kind == "uniform-integer") {
    return uniform(j.at("bounds").at(0).get<std::int64_t>(), j.at("bounds").at(1).get<std::int64_t>());
  }
  if (kind == "choice") return choice(j.at("options").get<std::vector<std::int64_t>>());
  throw std::invalid_argument("unknown integer distribution kind: " + kind);
}

// --- FloatDist ---------------------------------------------------------------

FloatDist FloatDist::fixed(double v) {
  FloatDist d;
  d.kind = Kind::fixed;
  d.value = v;
  return d;
}

FloatDist FloatDist::uniform(double lo, double hi) {
  FloatDist d;
  d.kind = Kind::uniform;
  d.lo = lo;
  d.hi = hi;
  return d;
}

FloatDist FloatDist::loguniform(double lo, double hi) {
  FloatDist d;
  d.kind = Kind::loguniform;
  d.lo = lo;
  d.hi = hi;
  return d;
}

void FloatDist::validate() const {
  if (kind != Kind::fixed && lo > hi) {
    throw std::invalid_argument("float distribution: lo > hi");
  }
  if (kind == Kind::loguniform && lo <= 0.0) {
    throw std::invalid_argument("loguniform-float: bounds must be positive");
  }
}

double FloatDist::sample(Rng& rng) const {
  validate();
  switch (kind) {
    case Kind::fixed: return value;
    case Kind::uniform: return rng.uniform(lo, hi);
    case Kind::loguniform: return std::exp(rng.uniform(std::log(lo), std::log(hi)));
  }
  throw std::logic_error("invalid FloatDist kind");
}

json FloatDist::to_json() const {
  switch (kind) {
    case Kind::fixed: return json{{"kind", "fixed"}, {"value", value}};
    case Kind::uniform: return json{{"kind", "uniform-float"}, {"bounds", {lo, hi}}};
    case Kind::loguniform: return json{{"kind", "loguniform-float"}, {"bounds", {lo, hi}}};
  }
  throw std::logic_error("invalid FloatDist kind");
}

FloatDist FloatDist::from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "fixed") return fixed(j.at("value").get<double>());
  if (kind == "uniform-float") {
    return uniform(j.at("bounds").at(0).get<double>(), j.at("bounds").at(1).get<double>());
  }
  if (kind == "loguniform-float") {
    return loguniform(j.at("bounds").at(0).get<double>(), j.at("bounds").at(1).get<double>());
  }
  throw std::invalid_argument("unknown float distribution kind: " + kind);
}

// --- ChoiceDist --------------------------------------------------------------

ChoiceDist ChoiceDist::of(std::vector<std::string> options) {
  ChoiceDist d;
  d.options = std::move(options);
  return d;
}

void ChoiceDist::validate() const {
  if (options.empty()) throw std::invalid_argument("choice: empty option list");
}

const std::string& ChoiceDist::sample(Rng& rng) const {
  validate();
  return options[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(options.size()) - 1))];
}

json ChoiceDist::to_json() const { return json{{"kind", "choice"}, {"options", options}}; }

ChoiceDist ChoiceDist::from_json(const json& j) {
  if (j.at("kind").get<std::string>() != "choice") {
    throw std::invalid_argument("expected a choice distribution");
  }
  return of(j.at("options").get<std::vector<std::string>>());
}

// --- SearchSpace -------------------------------------------------------------

void SearchSpace::validate() const {
  hidden_dim.validate();
  encoder_layers.validate();
  encoder_activation.validate();
  z_dropout.validate();
  kl_kind.validate();
  learning_rate.validate();
  update_background.validate();
  if (batch_size < 2 || max_epochs < 1 || patience < 1 || linear_scale < 1) {
    throw std::invalid_argument("search space: invalid fixed assignment");
  }
}

json SearchSpace::to_json() const {
  return json{{"hidden_dim", hidden_dim.to_json()},
              {"encoder_layers", encoder_layers.to_json()},
              {"encoder_activation", encoder_activation.to_json()},
              {"z_dropout", z_dropout.to_json()},
              {"kl_kind", kl_kind.to_json()},
              {"learning_rate", learning_rate.to_json()},
              {"update_background", update_background.to_json()},
              {"batch_size", batch_size},
              {"max_epochs", max_epochs},
              {"patience", patience},
              {"linear_scale", linear_scale},
              {"sigmoid_w1", sigmoid_w1},
              {"sigmoid_w2", sigmoid_w2}};
}

SearchSpace SearchSpace::from_json(const json& j) {
  SearchSpace s;
  if (j.contains("hidden_dim")) s.hidden_dim = IntDist::from_json(j.at("hidden_dim"));
  if (j.contains("encoder_layers")) s.encoder_layers = IntDist::from_json(j.at("encoder_layers"));
  if (j.contains("encoder_activation")) {
    s.encoder_activation = ChoiceDist::from_json(j.at("encoder_activation"));
  }
  if (j.contains("z_dropout")) s.z_dropout = FloatDist::from_json(j.at("z_dropout"));
  if (j.contains("kl_kind")) s.kl_kind = ChoiceDist::from_json(j.at("kl_kind"));
  if (j.contains("learning_rate")) s.learning_rate = FloatDist::from_json(j.at("learning_rate"));
  if (j.contains("update_background")) {
    s.update_background = ChoiceDist::from_json(j.at("update_background"));
  }
  if (j.contains("batch_size")) s.batch_size = j.at("batch_size").get<int>();
  if (j.contains("max_epochs")) s.max_epochs = j.at("max_epochs").get<int>();
  if (j.contains("patience")) s.patience = j.at("patience").get<int>();
  if (j.contains("linear_scale")) s.linear_scale = j.at("linear_scale").get<int>();
  if (j.contains("sigmoid_w1")) s.sigmoid_w1 = j.at("sigmoid_w1").get<double>();
  if (j.contains("sigmoid_w2")) s.sigmoid_w2 = j.at("sigmoid_w2").get<double>();
  return s;
}

VampireConfig sample_config(const SearchSpace& space, Rng& rng) {
  space.validate();
  VampireConfig c;
  c.hidden_dim = static_cast<int>(space.hidden_dim.sample(rng));
  c.encoder_layers = static_cast<int>(space.encoder_layers.sample(rng));
  c.encoder_activation = nn::activation_from_string(space.encoder_activation.sample(rng));
  c.z_dropout = space.z_dropout.sample(rng);
  c.kl.kind = [&] {
    const std::string kind = space.kl_kind.sample(rng);
    if (kind == "linear") return KlSchedule::Kind::linear;
    if (kind == "sigmoid") return KlSchedule::Kind::sigmoid;
    if (kind == "constant") return KlSchedule::Kind::constant;
    throw std::invalid_argument("search space: unknown KL kind " + kind);
  }();
  c.kl.linear_scale = space.linear_scale;
  c.kl.sigmoid_w1 = space.sigmoid_w1;
  c.kl.sigmoid_w2 = space.sigmoid_w2;
  c.learning_rate = space.learning_rate.sample(rng);
  c.update_background = space.update_background.sample(rng) == "true";
  c.batch_size = space.batch_size;
  c.max_epochs = space.max_epochs;
  c.patience = space.patience;
  return c;
}

// --- search ------------------------------------------------------------------

json TrialResult::to_json() const {
  return json{{"trial_id", trial_id},   {"config", config}, {"criterion", criterion},
              {"checkpoint_path", checkpoint_path}, {"seconds", seconds},
              {"failed", failed},       {"error", error}};
}

std::vector<TrialResult> schedule_trials(int n_trials, int parallelism,
                                         const std::function<TrialResult(int)>& run_one) {
  if (n_trials < 1) throw std::invalid_argument("schedule_trials: n_trials must be >= 1");
  parallelism = std::max(1, std::min(parallelism, n_trials));
  std::vector<TrialResult> results(static_cast<std::size_t>(n_trials));
  if (parallelism == 1) {
    for (int i = 0; i < n_trials; ++i) results[static_cast<std::size_t>(i)] = run_one(i);
    return results;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= n_trials) break;
      results[static_cast<std::size_t>(i)] = run_one(i);
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(parallelism));
  for (int w = 0; w < parallelism; ++w) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return results;
}

std::size_t select_best(const std::vector<TrialResult>& results, bool maximize) {
  std::size_t best = results.size();
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].failed) continue;
    if (best == results.size()) {
      best = i;
      continue;
    }
    const bool better = maximize ? results[i].criterion > results[best].criterion
                                 : results[i].criterion < results[best].criterion;
    if (better) best = i;
  }
  if (best == results.size()) throw std::runtime_error("select_best: every trial failed");
  return best;
}

SearchOutcome run_search(const SearchSpace& space, const PretrainData& data,
                         StoppingCriterion criterion, int n_trials, int parallelism,
                         std::uint64_t master_seed) {
  space.validate();
  const int vocab_size = static_cast<int>(data.background_log_freq.size());

  std::vector<VampireModel> models(static_cast<std::size_t>(n_trials));
  auto run_one = [&](int trial_id) {
    TrialResult r;
    r.trial_id = trial_id;
    const std::uint64_t seed = Rng::derive_seed(master_seed, static_cast<std::uint64_t>(trial_id));
    Rng rng(seed);
    VampireConfig config = sample_config(space, rng);
    config.vocab_size = vocab_size;
    config.stopping_criterion = criterion;
    config.seed = seed;
    r.config = config.to_json();
    const auto start = std::chrono::steady_clock::now();
    try {
      PretrainResult result = pretrain(data, config);
      r.criterion = result.best_criterion;
      models[static_cast<std::size_t>(trial_id)] = std::move(result.model);
    } catch (const std::exception& e) {
      r.failed = true;
      r.error = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  };

  SearchOutcome outcome;
  outcome.trials = schedule_trials(n_trials, parallelism, run_one);
  outcome.best_index = select_best(outcome.trials, criterion == StoppingCriterion::npmi);
  outcome.best_model = std::move(models[outcome.best_index]);
  return outcome;
}

// --- experiments -------------------------------------------------------------

void ExperimentProtocol::validate() const {
  if (label_budgets.empty() || seeds.empty() || methods.empty()) {
    throw std::invalid_argument("protocol: label_budgets, seeds, and methods must be non-empty");
  }
  for (const auto& m : methods) {
    if (m != "baseline" && m != "vampire" && m != "selftrain") {
      throw std::invalid_argument("protocol: unknown method '" + m + "'");
    }
  }
  for (int b : label_budgets) {
    if (b < 1) throw std::invalid_argument("protocol: label budgets must be positive");
  }
}

json ExperimentProtocol::to_json() const {
  return json{{"label_budgets", label_budgets}, {"seeds", seeds}, {"methods", methods}};
}

ExperimentProtocol ExperimentProtocol::from_json(const json& j) {
  ExperimentProtocol p;
  p.label_budgets = j.at("label_budgets").get<std::vector<int>>();
  p.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  p.methods = j.at("methods").get<std::vector<std::string>>();
  return p;
}

CellStats aggregate(const std::vector<double>& values) {
  CellStats s;
  s.values = values;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::string ExperimentResults::to_csv() const {
  std::ostringstream out;
  out << "method";
  for (int b : budgets) out << "," << b << "_mean," << b << "_stddev";
  out << "\n";
  for (std::size_t m = 0; m < methods.size(); ++m) {
    out << methods[m];
    for (std::size_t b = 0; b < budgets.size(); ++b) {
      out << "," << cells[m][b].mean << "," << cells[m][b].stddev;
    }
    out << "\n";
  }
  return out.str();
}

json ExperimentResults::summary() const {
  json grid = json::array();
  for (std::size_t m = 0; m < methods.size(); ++m) {
    json row = {{"method", methods[m]}, {"cells", json::array()}};
    for (std::size_t b = 0; b < budgets.size(); ++b) {
      row["cells"].push_back({{"budget", budgets[b]},
                              {"mean", cells[m][b].mean},
                              {"stddev", cells[m][b].stddev},
                              {"values", cells[m][b].values}});
    }
    grid.push_back(std::move(row));
  }
  return json{{"grid", grid}};
}

ExperimentResults run_experiment(const ExperimentProtocol& protocol, const ExperimentData& data,
                                 int parallelism) {
  protocol.validate();
  for (const auto& method : protocol.methods) {
    if (method == "vampire" && (data.vampire == nullptr || data.vae_vocab == nullptr)) {
      throw std::invalid_argument("run_experiment: the vampire method needs a pretrained model");
    }
  }

  struct RunSpec {
    std::size_t method_idx;
    std::size_t budget_idx;
    std::size_t seed_idx;
  };
  std::vector<RunSpec> specs;
  for (std::size_t m = 0; m < protocol.methods.size(); ++m) {
    for (std::size_t b = 0; b < protocol.label_budgets.size(); ++b) {
      for (std::size_t s = 0; s < protocol.seeds.size(); ++s) specs.push_back({m, b, s});
    }
  }

  auto run_one = [&](int spec_idx) {
    const RunSpec& spec = specs[static_cast<std::size_t>(spec_idx)];
    const std::string& method = protocol.methods[spec.method_idx];
    const int budget = protocol.label_budgets[spec.budget_idx];
    const std::uint64_t seed = protocol.seeds[spec.seed_idx];

    TrialResult r;
    r.trial_id = spec_idx;
    const auto start = std::chrono::steady_clock::now();
    try {
      std::vector<corpus::Document> labeled =
          corpus::sample_labeled_subset(data.train_pool, static_cast<std::size_t>(budget), seed);
      dan::DanConfig config = data.dan_config;
      config.seed = seed;

      double accuracy = 0.0;
      double val_accuracy = 0.0;
      if (method == "baseline") {
        auto [model, report] = dan::train_classifier(labeled, data.validation, config, data.labels);
        accuracy = dan::evaluate(model, data.test).accuracy;
        val_accuracy = report.best_val_accuracy;
      } else if (method == "vampire") {
        auto [model, report] = dan::train_classifier(labeled, data.validation, config, data.labels,
                                                     data.vampire, data.vae_vocab);
        accuracy = dan::evaluate(model, data.test, data.vampire, data.vae_vocab).accuracy;
        val_accuracy = report.best_val_accuracy;
      } else {  // selftrain
        // leftover training documents join the unlabeled pool, labels hidden
        std::set<std::string> taken;
        for (const auto& doc : labeled) taken.insert(doc.id);
        std::vector<corpus::Document> pool = data.unlabeled;
        for (const auto& doc : data.train_pool) {
          if (taken.count(doc.id) != 0) continue;
          corpus::Document hidden = doc;
          hidden.label.reset();
          pool.push_back(std::move(hidden));
        }
        semisup::SelfTrainResult st =
            semisup::self_train(labeled, pool, data.validation, config, data.labels);
        accuracy = dan::evaluate(st.model, data.test).accuracy;
        val_accuracy = st.best_val_accuracy;
      }
      r.criterion = accuracy;
      r.config = json{{"method", method},
                      {"budget", budget},
                      {"seed", seed},
                      {"accuracy", accuracy},
                      {"val_accuracy", val_accuracy}};
    } catch (const std::exception& e) {
      r.failed = true;
      r.error = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  };

  std::vector<TrialResult> results =
      schedule_trials(static_cast<int>(specs.size()), parallelism, run_one);

  ExperimentResults out;
  out.methods = protocol.methods;
  out.budgets = protocol.label_budgets;
  out.cells.resize(protocol.methods.size());
  for (std::size_t m = 0; m < protocol.methods.size(); ++m) {
    out.cells[m].resize(protocol.label_budgets.size());
  }
  for (std::size_t m = 0; m < protocol.methods.size(); ++m) {
    for (std::size_t b = 0; b < protocol.label_budgets.size(); ++b) {
      std::vector<double> values;
      for (std::size_t s = 0; s < protocol.seeds.size(); ++s) {
        const std::size_t idx =
            (m * protocol.label_budgets.size() + b) * protocol.seeds.size() + s;
        const TrialResult& r = results[idx];
        if (r.failed) {
          throw std::runtime_error("run_experiment: run failed (method=" + protocol.methods[m] +
                                   ", budget=" + std::to_string(protocol.label_budgets[b]) +
                                   "): " + r.error);
        }
        values.push_back(r.criterion);
        out.runs.push_back(r.config);
      }
      out.cells[m][b] = aggregate(values);
    }
  }
  return out;
}

int thread_cap() {
  if (const char* env = std::getenv("VAMPIRE_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace vampire::pipeline
