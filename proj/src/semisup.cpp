#include "vampire/semisup.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vampire::semisup {

namespace {

// Class probabilities for every document, via the shared eval path.
std::vector<Vec> predict_all(const dan::DanModel& model,
                             const std::vector<corpus::Document>& docs,
                             const VampireModel* vampire, const corpus::Vocabulary* vae_vocab) {
  std::vector<Vec> probs;
  probs.reserve(docs.size());
  for (const auto& doc : docs) {
    if (model.mix) {
      const corpus::CountVector cv = corpus::to_counts(doc, *vae_vocab);
      const Mat sources = dan::feature_sources(extract_features(cv, *vampire));
      probs.push_back(dan::predict_probs(model, doc, &sources));
    } else {
      probs.push_back(dan::predict_probs(model, doc, nullptr));
    }
  }
  return probs;
}

}  // namespace

double nearest_rank_percentile(std::vector<double> values, double percentile) {
  if (values.empty()) throw std::invalid_argument("nearest_rank_percentile: no values");
  std::sort(values.begin(), values.end());
  const auto m = static_cast<double>(values.size());
  const auto rank = static_cast<std::size_t>(std::ceil(percentile * m));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

std::vector<double> label_thresholds(const dan::DanModel& model,
                                     const std::vector<corpus::Document>& val,
                                     const VampireModel* vampire,
                                     const corpus::Vocabulary* vae_vocab, double percentile) {
  const auto n_classes = static_cast<std::size_t>(model.num_classes());
  std::vector<std::vector<double>> per_class(n_classes);
  const std::vector<Vec> probs = predict_all(model, val, vampire, vae_vocab);
  for (std::size_t i = 0; i < val.size(); ++i) {
    if (!val[i].label) throw std::invalid_argument("label_thresholds: unlabeled validation document");
    const auto y = static_cast<std::size_t>(*val[i].label);
    per_class[y].push_back(probs[i][*val[i].label]);
  }
  std::vector<double> thresholds(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (per_class[c].empty()) {
      throw std::runtime_error("label_thresholds: class " + std::to_string(c) +
                                " has no validation instance");
    }
    thresholds[c] = nearest_rank_percentile(per_class[c], percentile);
  }
  return thresholds;
}

json IterationRecord::to_json() const {
  return json{{"iteration", iteration},
              {"n_pseudo", n_pseudo},
              {"per_class_thresholds", thresholds},
              {"val_accuracy", val_accuracy}};
}

SelfTrainResult self_train(const std::vector<corpus::Document>& labeled,
                           const std::vector<corpus::Document>& unlabeled,
                           const std::vector<corpus::Document>& val,
                           const dan::DanConfig& config, const corpus::LabelMap& labels,
                           const VampireModel* vampire, const corpus::Vocabulary* vae_vocab,
                           int max_iterations) {
  if (max_iterations < 0 || max_iterations > 5) {
    throw std::invalid_argument("self_train: max_iterations must be in [0, 5]");
  }

  SelfTrainResult result;
  result.best_val_accuracy = -1.0;

  // (pool index, pseudo label) pairs; compared across iterations for the
  // early exit.
  std::vector<std::pair<std::size_t, std::int32_t>> pseudo;

  for (int iteration = 0; iteration <= max_iterations; ++iteration) {
    std::vector<corpus::Document> train = labeled;
    for (const auto& [idx, y] : pseudo) {
      corpus::Document doc = unlabeled[idx];
      doc.label = y;
      train.push_back(std::move(doc));
    }

    dan::DanConfig iter_config = config;
    iter_config.seed = Rng::derive_seed(config.seed, static_cast<std::uint64_t>(iteration));
    auto [model, report] = dan::train_classifier(train, val, iter_config, labels, vampire, vae_vocab);

    IterationRecord rec;
    rec.iteration = iteration;
    rec.n_pseudo = static_cast<std::int64_t>(pseudo.size());
    rec.val_accuracy = report.best_val_accuracy;

    const bool improved = report.best_val_accuracy > result.best_val_accuracy;
    if (improved) {
      result.best_val_accuracy = report.best_val_accuracy;
      result.best_iteration = iteration;
      result.model = model;
    }

    if (iteration == max_iterations || unlabeled.empty()) {
      result.log.push_back(rec);
      break;
    }

    const std::vector<double> thresholds = label_thresholds(model, val, vampire, vae_vocab);
    rec.thresholds = thresholds;
    result.log.push_back(rec);

    // Re-predict the whole pool from scratch; confidence is the top-class
    // probability against that predicted class's threshold.
    std::vector<std::pair<std::size_t, std::int32_t>> next;
    const std::vector<Vec> probs = predict_all(model, unlabeled, vampire, vae_vocab);
    for (std::size_t i = 0; i < unlabeled.size(); ++i) {
      Index arg = 0;
      double top = probs[i][0];
      for (Index c = 1; c < probs[i].size(); ++c) {
        if (probs[i][c] > top) {
          top = probs[i][c];
          arg = c;
        }
      }
      if (top >= thresholds[static_cast<std::size_t>(arg)]) {
        next.emplace_back(i, static_cast<std::int32_t>(arg));
      }
    }
    if (next == pseudo) break;  // deterministic repeat from here on
    pseudo = std::move(next);
  }

  return result;
}

}  // namespace vampire::semisup
