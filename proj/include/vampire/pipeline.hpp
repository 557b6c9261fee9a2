#ifndef VAMPIRE_PIPELINE_HPP_
#define VAMPIRE_PIPELINE_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vampire/classifier.hpp"
#include "vampire/model.hpp"

namespace vampire::pipeline {

using json = nlohmann::json;

// --- hyperparameter distributions -------------------------------------------

struct IntDist {
  enum class Kind { fixed, uniform, choice };
  Kind kind = Kind::fixed;
  std::int64_t value = 0;
  std::int64_t lo = 0, hi = 0;  // uniform-integer, inclusive
  std::vector<std::int64_t> options;

  static IntDist fixed(std::int64_t v);
  static IntDist uniform(std::int64_t lo, std::int64_t hi);
  static IntDist choice(std::vector<std::int64_t> options);
  void validate() const;
  std::int64_t sample(Rng& rng) const;
  json to_json() const;
  static IntDist from_json(const json& j);
};

struct FloatDist {
  enum class Kind { fixed, uniform, loguniform };
  Kind kind = Kind::fixed;
  double value = 0.0;
  double lo = 0.0, hi = 0.0;

  static FloatDist fixed(double v);
  static FloatDist uniform(double lo, double hi);
  static FloatDist loguniform(double lo, double hi);
  void validate() const;
  double sample(Rng& rng) const;
  json to_json() const;
  static FloatDist from_json(const json& j);
};

struct ChoiceDist {
  std::vector<std::string> options;

  static ChoiceDist of(std::vector<std::string> options);
  void validate() const;
  const std::string& sample(Rng& rng) const;
  json to_json() const;
  static ChoiceDist from_json(const json& j);
};

// The pretraining search space; the defaults mirror the published table.
struct SearchSpace {
  IntDist hidden_dim = IntDist::uniform(32, 128);
  IntDist encoder_layers = IntDist::choice({1, 2, 3});
  ChoiceDist encoder_activation = ChoiceDist::of({"relu", "tanh", "softplus"});
  FloatDist z_dropout = FloatDist::uniform(0.0, 0.5);
  ChoiceDist kl_kind = ChoiceDist::of({"sigmoid", "linear", "constant"});
  FloatDist learning_rate = FloatDist::loguniform(1e-4, 1e-2);
  ChoiceDist update_background = ChoiceDist::of({"true", "false"});
  int batch_size = 64;
  int max_epochs = 50;
  int patience = 5;
  int linear_scale = 1000;
  double sigmoid_w1 = 0.25;
  double sigmoid_w2 = 15.0;

  void validate() const;
  json to_json() const;
  static SearchSpace from_json(const json& j);
};

// One draw from the space in a fixed field order. vocab_size, seed and the
// stopping criterion are the caller's to set.
VampireConfig sample_config(const SearchSpace& space, Rng& rng);

// --- search driver -----------------------------------------------------------

struct TrialResult {
  int trial_id = 0;
  json config;
  double criterion = 0.0;
  std::string checkpoint_path;
  double seconds = 0.0;
  bool failed = false;
  std::string error;

  json to_json() const;
};

// Generic deterministic parallel map: results are keyed by index, so the
// outcome is independent of the worker count.
std::vector<TrialResult> schedule_trials(int n_trials, int parallelism,
                                         const std::function<TrialResult(int)>& run_one);

// Index of the best completed trial (max for NPMI, min for NLL); throws when
// every trial failed.
std::size_t select_best(const std::vector<TrialResult>& results, bool maximize);

struct SearchOutcome {
  std::vector<TrialResult> trials;
  std::size_t best_index = 0;
  VampireModel best_model;
};

// Random search over the space: per-trial seeds are hash(master_seed,
// trial_id); failed trials are recorded and excluded from selection.
SearchOutcome run_search(const SearchSpace& space, const PretrainData& data,
                         StoppingCriterion criterion, int n_trials, int parallelism,
                         std::uint64_t master_seed);

// --- experiment grid ---------------------------------------------------------

struct ExperimentProtocol {
  std::vector<int> label_budgets;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> methods;  // baseline | vampire | selftrain

  void validate() const;
  json to_json() const;
  static ExperimentProtocol from_json(const json& j);
};

struct ExperimentData {
  std::vector<corpus::Document> train_pool;
  std::vector<corpus::Document> unlabeled;
  std::vector<corpus::Document> validation;
  std::vector<corpus::Document> test;
  corpus::LabelMap labels;
  dan::DanConfig dan_config;
  const VampireModel* vampire = nullptr;          // required by the vampire method
  const corpus::Vocabulary* vae_vocab = nullptr;  // ditto
};

struct CellStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single value
  std::vector<double> values;
};

CellStats aggregate(const std::vector<double>& values);

struct ExperimentResults {
  std::vector<std::string> methods;
  std::vector<int> budgets;
  std::vector<std::vector<CellStats>> cells;  // [method][budget]
  std::vector<json> runs;                     // one record per (method, budget, seed)

  std::string to_csv() const;
  json summary() const;
};

ExperimentResults run_experiment(const ExperimentProtocol& protocol, const ExperimentData& data,
                                 int parallelism);

// VAMPIRE_THREADS env cap, defaulting to the hardware concurrency.
int thread_cap();

}  // namespace vampire::pipeline

#endif  // VAMPIRE_PIPELINE_HPP_
