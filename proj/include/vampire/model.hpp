#ifndef VAMPIRE_MODEL_HPP_
#define VAMPIRE_MODEL_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vampire/coherence.hpp"
#include "vampire/corpus.hpp"
#include "vampire/nn.hpp"
#include "vampire/types.hpp"

namespace vampire {

using json = nlohmann::json;

// Scalar weight on the KL term, rising from zero to one.
struct KlSchedule {
  enum class Kind { linear, sigmoid, constant };
  Kind kind = Kind::linear;
  int linear_scale = 1000;
  double sigmoid_w1 = 0.25;
  double sigmoid_w2 = 15.0;

  json to_json() const;
  static KlSchedule from_json(const json& j);
};

// linear: min(1, t/scale); sigmoid: logistic(w1*(t-w2)); constant: 1.
// The pretraining loop feeds the global batch counter to linear schedules and
// the epoch index to sigmoid ones.
double kl_weight(const KlSchedule& schedule, double t);

enum class StoppingCriterion { npmi, nll };

struct VampireConfig {
  int hidden_dim = 64;  // K: latent/topic count and the width of every hidden layer
  int encoder_layers = 1;
  nn::Activation encoder_activation = nn::Activation::relu;
  double z_dropout = 0.2;
  KlSchedule kl;
  double learning_rate = 1e-3;
  int batch_size = 64;
  int max_epochs = 50;
  int patience = 5;
  bool update_background = false;
  int vocab_size = 0;
  StoppingCriterion stopping_criterion = StoppingCriterion::npmi;
  std::uint64_t seed = 0;
  bool use_batchnorm = true;

  void validate() const;
  json to_json() const;
  static VampireConfig from_json(const json& j);
};

// All learned arrays of the document model. The background bias is frozen
// unless update_background is set; batchnorm acts on the reconstruction
// logits (background + topic deviations) before the decoder softmax.
struct VampireModel {
  VampireConfig config;
  std::vector<nn::Parameter> enc_W;
  std::vector<nn::Parameter> enc_b;
  nn::Parameter W_mu, b_mu;
  nn::Parameter W_sigma, b_sigma;
  nn::Parameter topic_matrix;  // [K x V]
  nn::Parameter background;    // [1 x V], log relative word frequency
  nn::BatchNorm bn;            // over the V reconstruction logits
  std::string vocab_hash;

  static VampireModel init(const VampireConfig& config, const Vec& background_log_freq, Rng& rng);

  std::vector<nn::Parameter*> trainable();  // excludes the background when frozen
  // The feature sources the downstream scalar mix consumes: theta + each
  // encoder hidden layer.
  int num_feature_sources() const { return config.encoder_layers + 1; }
};

// Per-document internal activations consumed by the downstream scalar mix.
struct EncoderStates {
  std::vector<Vec> hidden;  // h^(1..n)
  Vec theta;
  Vec mu;
  Vec sigma;
  bool degenerate = false;
};

struct ElboTerms {
  double reconstruction = 0.0;  // batch mean of Eq-13 style log-likelihoods
  double kl = 0.0;              // batch mean, always >= 0
  double kl_weight = 0.0;
  double objective = 0.0;  // reconstruction - kl_weight * kl
};

// Dense [batch x V] count matrix from sparse count vectors.
Mat assemble_counts(const std::vector<corpus::CountVector>& counts,
                    const std::vector<std::size_t>& idx, int vocab_size);
Mat assemble_counts(const std::vector<corpus::CountVector>& counts, int vocab_size);

// log(relative corpus word frequency + 1e-10), the background initializer.
Vec background_log_frequency(const std::vector<corpus::CountVector>& counts, int vocab_size);

// --- forward pieces -------------------------------------------------------

struct EncodeResult {
  std::vector<Mat> pre;     // pre-activations per layer
  std::vector<Mat> hidden;  // h^(1..n)
  Mat mu;                   // [b x K]
  Mat log_sigma;            // pre-exp projection
  Mat sigma;                // exp(log_sigma)
};

// Errors on degenerate (all-zero) rows.
EncodeResult encode(const VampireModel& model, const Mat& counts);

// Batched spec-level encode over sparse count vectors.
std::vector<EncoderStates> encode(const std::vector<corpus::CountVector>& batch,
                                  const VampireModel& model);

// z = mu + sigma .* eps, eps ~ N(0, I); single-sample approximation.
Mat sample_latent(const Mat& mu, const Mat& sigma, Rng& rng);

struct DecodeResult {
  Mat theta;      // [b x K], rows on the simplex
  Mat eta;        // [b x V], decoder word distributions
  Vec log_probs;  // per-document sum_j c_j log eta_j
};

// Train mode applies z-dropout (rng required) and batch-statistics batchnorm;
// eval mode is deterministic and uses running statistics.
DecodeResult decode(VampireModel& model, const Mat& z, const Mat& counts, Mode mode,
                    Rng* rng = nullptr);

// Closed-form KL to the spherical standard normal; sigma is the standard
// deviation: 0.5 * sum(mu^2 + sigma^2 - 1 - 2 log sigma).
double kl_divergence(const Vec& mu, const Vec& sigma);
Vec kl_divergence_rows(const Mat& mu, const Mat& sigma);

// --- training objective ----------------------------------------------------

struct ElboCache;  // opaque; defined in model.cpp

ElboTerms elbo_with_weight(VampireModel& model, const Mat& counts, double weight, Rng& rng,
                           Mode mode);

// Spec-level entry: weight derived from the model's schedule at clock t.
ElboTerms elbo(VampireModel& model, const std::vector<corpus::CountVector>& batch, double t,
               Rng& rng, Mode mode);

// One training step: forward, backward (gradients of -objective), no update.
ElboTerms elbo_train_step(VampireModel& model, const Mat& counts, double weight, Rng& rng);

// --- pretraining loop ------------------------------------------------------

struct EpochRecord {
  int epoch = 0;
  double elbo = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
  double kl_weight = 0.0;
  double npmi = 0.0;
  double val_nll = 0.0;
  bool improved = false;

  json to_json() const;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::int64_t degenerate_skipped = 0;

  void write_jsonl(const std::string& path) const;
};

struct PretrainData {
  std::vector<corpus::CountVector> train;
  std::vector<corpus::CountVector> validation;
  coherence::CooccurrenceStats val_stats;  // built from the validation documents
  Vec background_log_freq;                 // [V]
  std::string vocab_hash;
};

struct PretrainResult {
  VampireModel model;  // best-criterion checkpoint
  TrainingLog log;
  double best_criterion = 0.0;
  int best_epoch = 0;
};

// Minibatch Adam ascent on the ELBO with KL annealing; evaluates the stopping
// criterion (NPMI or validation NLL) at every epoch end and returns the
// best-criterion checkpoint. Stops after `patience` epochs without
// improvement or at max_epochs.
PretrainResult pretrain(const PretrainData& data, const VampireConfig& config);

// --- frozen-model consumers -------------------------------------------------

// Deterministic eval-mode states (z = mu, dropout off); degenerate inputs
// yield all-zero hidden states and a uniform theta, flagged.
EncoderStates extract_features(const corpus::CountVector& counts, const VampireModel& model);

// Top-n word ids per topic row, highest weight first, ties by id.
std::vector<std::vector<std::int32_t>> topics(const VampireModel& model, int n = 10);
std::vector<std::vector<std::string>> topic_words(const VampireModel& model,
                                                  const corpus::Vocabulary& vocab, int n = 10);

double global_npmi(const VampireModel& model, const coherence::CooccurrenceStats& stats,
                   int top_n = 10);

// Trainable array sizes only (frozen background excluded).
std::int64_t count_parameters(const VampireModel& model);

// Checkpoint: JSON header {config, vocab_hash, criterion_value, epoch, array
// manifest} + the array payload; extension .vam.
void save_model(const VampireModel& model, const std::string& path, double criterion_value,
                int epoch);
VampireModel load_model(const std::string& path);

double checkpoint_criterion_value(const std::string& path);

}  // namespace vampire

#endif  // VAMPIRE_MODEL_HPP_
