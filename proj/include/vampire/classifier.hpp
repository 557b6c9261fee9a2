#ifndef VAMPIRE_CLASSIFIER_HPP_
#define VAMPIRE_CLASSIFIER_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vampire/corpus.hpp"
#include "vampire/model.hpp"
#include "vampire/nn.hpp"
#include "vampire/types.hpp"

namespace vampire::dan {

using json = nlohmann::json;

struct DanConfig {
  int embedding_dim = 50;
  int hidden_dim = 128;
  double dropout = 0.5;
  double learning_rate = 1e-3;
  int batch_size = 32;
  int max_epochs = 50;
  int patience = 5;
  int max_tokens = 400;
  std::uint64_t seed = 0;

  void validate() const;
  json to_json() const;
  static DanConfig from_json(const json& j);
};

// Softmax-normalized trainable weights over the frozen encoder sources
// (theta first, then each hidden layer).
struct ScalarMix {
  nn::Parameter logits;  // [1 x n_sources]

  // theta and the first hidden layer start upweighted (+1), deeper layers
  // downweighted (-1).
  static ScalarMix init(int n_sources);
  RowVec weights() const;
};

// r = sum_k softmax(logits)_k * sources.row(k); sources rows share one width.
Vec scalar_mix(const Mat& sources, const ScalarMix& mix);

// Stack an EncoderStates into the mix's source matrix: theta; h^(1..n).
Mat feature_sources(const EncoderStates& states);

struct DanModel {
  DanConfig config;
  corpus::LabelMap labels;
  std::vector<std::string> vocab;  // id -> token; id 0 is the unknown token
  std::unordered_map<std::string, std::int32_t> vocab_index;
  nn::Parameter embeddings;  // [|vocab| x embedding_dim]
  std::optional<ScalarMix> mix;
  int feature_dim = 0;  // width of r when mix is present
  nn::Parameter W1, b1;
  nn::Parameter W2, b2;

  std::vector<nn::Parameter*> trainable();
  std::int32_t token_id(const std::string& token) const;
  std::int32_t num_classes() const { return labels.size(); }
};

// Class probabilities for a batch of token lists (already truncated) with
// optional per-document source matrices. Eval mode is deterministic.
Mat dan_forward(DanModel& model, const std::vector<std::vector<std::int32_t>>& token_ids,
                const std::vector<Mat>* sources, Mode mode, Rng* rng = nullptr);

// Convenience single-document forward in eval mode.
Vec predict_probs(const DanModel& model, const corpus::Document& doc, const Mat* sources);

// Mean cross-entropy of one batch; when with_grad is set the gradients of the
// loss accumulate into the model parameters (sources stay constant).
double cross_entropy_step(DanModel& model, const std::vector<std::vector<std::int32_t>>& token_ids,
                          const std::vector<Mat>* sources,
                          const std::vector<std::int32_t>& labels, Mode mode, Rng* rng,
                          bool with_grad);

struct TrainReport {
  double best_val_accuracy = 0.0;
  int best_epoch = 0;
  std::vector<double> val_accuracy_per_epoch;
};

// Minibatch Adam on cross-entropy with early stopping on validation accuracy.
// When a frozen vampire model is given, its features are computed once per
// document (the model itself is never touched).
std::pair<DanModel, TrainReport> train_classifier(const std::vector<corpus::Document>& labeled,
                                                  const std::vector<corpus::Document>& val,
                                                  const DanConfig& config,
                                                  const corpus::LabelMap& labels,
                                                  const VampireModel* vampire = nullptr,
                                                  const corpus::Vocabulary* vae_vocab = nullptr);

struct EvalReport {
  double accuracy = 0.0;
  std::int64_t n = 0;
  std::vector<double> per_class_accuracy;

  json to_json() const;
};

// Argmax predictions (ties resolved to the lowest class id).
EvalReport evaluate(const DanModel& model, const std::vector<corpus::Document>& docs,
                    const VampireModel* vampire = nullptr,
                    const corpus::Vocabulary* vae_vocab = nullptr);

// Checkpoint (.dan): the shared array container plus a "<path>.vocab" sidecar
// holding the classifier vocabulary, one token per line.
void save_dan(const DanModel& model, const std::string& path);
DanModel load_dan(const std::string& path);

}  // namespace vampire::dan

#endif  // VAMPIRE_CLASSIFIER_HPP_
