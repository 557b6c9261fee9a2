#ifndef VAMPIRE_SEMISUP_HPP_
#define VAMPIRE_SEMISUP_HPP_

#include <vector>

#include <json.hpp>

#include "vampire/classifier.hpp"
#include "vampire/corpus.hpp"

namespace vampire::semisup {

using json = nlohmann::json;

// The p-th percentile of m sorted values taken as the ceil(p*m)-th value.
double nearest_rank_percentile(std::vector<double> values, double percentile);

// Per-class confidence thresholds: the nearest-rank 90th percentile of the
// model's predicted probability of the true class over validation instances
// with that label. Throws when a class has no validation instance.
std::vector<double> label_thresholds(const dan::DanModel& model,
                                     const std::vector<corpus::Document>& val,
                                     const VampireModel* vampire = nullptr,
                                     const corpus::Vocabulary* vae_vocab = nullptr,
                                     double percentile = 0.9);

struct IterationRecord {
  int iteration = 0;
  std::int64_t n_pseudo = 0;
  std::vector<double> thresholds;  // empty for the final iteration
  double val_accuracy = 0.0;

  json to_json() const;
};

struct SelfTrainResult {
  dan::DanModel model;  // argmax validation accuracy over all iterations
  std::vector<IterationRecord> log;
  int best_iteration = 0;
  double best_val_accuracy = 0.0;
};

// Up to five self-training rounds on top of the base model: train, threshold,
// re-predict the whole pool from scratch, pseudo-label the confident
// instances, retrain. Exits early when the pseudo-label set stops changing.
SelfTrainResult self_train(const std::vector<corpus::Document>& labeled,
                           const std::vector<corpus::Document>& unlabeled,
                           const std::vector<corpus::Document>& val,
                           const dan::DanConfig& config, const corpus::LabelMap& labels,
                           const VampireModel* vampire = nullptr,
                           const corpus::Vocabulary* vae_vocab = nullptr, int max_iterations = 5);

}  // namespace vampire::semisup

#endif  // VAMPIRE_SEMISUP_HPP_
