#include "vampire/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "vampire/serialize.hpp"

namespace vampire {

namespace {

std::string kind_to_string(KlSchedule::Kind k) {
  switch (k) {
    case KlSchedule::Kind::linear: return "linear";
    case KlSchedule::Kind::sigmoid: return "sigmoid";
    case KlSchedule::Kind::constant: return "constant";
  }
  throw std::logic_error("invalid KlSchedule kind");
}

KlSchedule::Kind kind_from_string(const std::string& s) {
  if (s == "linear") return KlSchedule::Kind::linear;
  if (s == "sigmoid") return KlSchedule::Kind::sigmoid;
  if (s == "constant") return KlSchedule::Kind::constant;
  throw std::invalid_argument("unknown KL schedule kind: " + s);
}

std::string criterion_to_string(StoppingCriterion c) {
  return c == StoppingCriterion::npmi ? "npmi" : "nll";
}

StoppingCriterion criterion_from_string(const std::string& s) {
  if (s == "npmi") return StoppingCriterion::npmi;
  if (s == "nll") return StoppingCriterion::nll;
  throw std::invalid_argument("unknown stopping criterion: " + s);
}

// Glorot-uniform initialization, deterministic per rng.
Mat glorot(Index rows, Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return rand_uniform(rows, cols, -limit, limit, rng);
}

}  // namespace

json KlSchedule::to_json() const {
  return json{{"kind", kind_to_string(kind)},
              {"linear_scale", linear_scale},
              {"sigmoid_w1", sigmoid_w1},
              {"sigmoid_w2", sigmoid_w2}};
}

KlSchedule KlSchedule::from_json(const json& j) {
  KlSchedule s;
  if (j.contains("kind")) s.kind = kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("linear_scale")) s.linear_scale = j.at("linear_scale").get<int>();
  if (j.contains("sigmoid_w1")) s.sigmoid_w1 = j.at("sigmoid_w1").get<double>();
  if (j.contains("sigmoid_w2")) s.sigmoid_w2 = j.at("sigmoid_w2").get<double>();
  return s;
}

double kl_weight(const KlSchedule& schedule, double t) {
  if (t < 0.0) throw std::invalid_argument("kl_weight: t must be >= 0");
  switch (schedule.kind) {
    case KlSchedule::Kind::linear:
      return std::min(1.0, t / static_cast<double>(schedule.linear_scale));
    case KlSchedule::Kind::sigmoid:
      return 1.0 / (1.0 + std::exp(-schedule.sigmoid_w1 * (t - schedule.sigmoid_w2)));
    case KlSchedule::Kind::constant:
      return 1.0;
  }
  throw std::logic_error("invalid KlSchedule kind");
}

void VampireConfig::validate() const {
  if (hidden_dim <= 0) throw std::invalid_argument("config: hidden_dim must be positive");
  if (encoder_layers < 1 || encoder_layers > 3) {
    throw std::invalid_argument("config: encoder_layers must be 1, 2, or 3");
  }
  if (z_dropout < 0.0 || z_dropout > 0.5) {
    throw std::invalid_argument("config: z_dropout must be in [0, 0.5]");
  }
  if (learning_rate <= 0.0) throw std::invalid_argument("config: learning_rate must be positive");
  if (batch_size < 2) throw std::invalid_argument("config: batch_size must be at least 2");
  if (max_epochs < 1) throw std::invalid_argument("config: max_epochs must be at least 1");
  if (patience < 1) throw std::invalid_argument("config: patience must be at least 1");
  if (vocab_size < 1) throw std::invalid_argument("config: vocab_size must be at least 1");
  if (kl.linear_scale < 1) throw std::invalid_argument("config: linear_scale must be at least 1");
}

json VampireConfig::to_json() const {
  return json{{"hidden_dim", hidden_dim},
              {"encoder_layers", encoder_layers},
              {"encoder_activation", nn::to_string(encoder_activation)},
              {"z_dropout", z_dropout},
              {"kl", kl.to_json()},
              {"learning_rate", learning_rate},
              {"batch_size", batch_size},
              {"max_epochs", max_epochs},
              {"patience", patience},
              {"update_background", update_background},
              {"vocab_size", vocab_size},
              {"stopping_criterion", criterion_to_string(stopping_criterion)},
              {"seed", seed},
              {"use_batchnorm", use_batchnorm}};
}

VampireConfig VampireConfig::from_json(const json& j) {
  VampireConfig c;
  if (j.contains("hidden_dim")) c.hidden_dim = j.at("hidden_dim").get<int>();
  if (j.contains("encoder_layers")) c.encoder_layers = j.at("encoder_layers").get<int>();
  if (j.contains("encoder_activation")) {
    c.encoder_activation = nn::activation_from_string(j.at("encoder_activation").get<std::string>());
  }
  if (j.contains("z_dropout")) c.z_dropout = j.at("z_dropout").get<double>();
  if (j.contains("kl")) c.kl = KlSchedule::from_json(j.at("kl"));
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<int>();
  if (j.contains("patience")) c.patience = j.at("patience").get<int>();
  if (j.contains("update_background")) c.update_background = j.at("update_background").get<bool>();
  if (j.contains("vocab_size")) c.vocab_size = j.at("vocab_size").get<int>();
  if (j.contains("stopping_criterion")) {
    c.stopping_criterion = criterion_from_string(j.at("stopping_criterion").get<std::string>());
  }
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("use_batchnorm")) c.use_batchnorm = j.at("use_batchnorm").get<bool>();
  return c;
}

VampireModel VampireModel::init(const VampireConfig& config, const Vec& background_log_freq,
                                Rng& rng) {
  config.validate();
  const Index v = config.vocab_size;
  const Index k = config.hidden_dim;
  if (background_log_freq.size() != v) {
    throw std::invalid_argument("VampireModel::init: background size " +
                                std::to_string(background_log_freq.size()) +
                                " does not match vocab_size " + std::to_string(v));
  }
  VampireModel m;
  m.config = config;
  for (int l = 0; l < config.encoder_layers; ++l) {
    const Index in = l == 0 ? v : k;
    m.enc_W.emplace_back("enc_W_" + std::to_string(l), glorot(in, k, rng));
    m.enc_b.emplace_back("enc_b_" + std::to_string(l), Mat::Zero(1, k));
  }
  m.W_mu = nn::Parameter("W_mu", glorot(k, k, rng));
  m.b_mu = nn::Parameter("b_mu", Mat::Zero(1, k));
  m.W_sigma = nn::Parameter("W_sigma", glorot(k, k, rng));
  m.b_sigma = nn::Parameter("b_sigma", Mat::Zero(1, k));
  m.topic_matrix = nn::Parameter("B", glorot(k, v, rng));
  m.background = nn::Parameter("b_bg", background_log_freq.transpose());
  m.bn = nn::BatchNorm(v, "bn");
  return m;
}

std::vector<nn::Parameter*> VampireModel::trainable() {
  std::vector<nn::Parameter*> params;
  for (auto& p : enc_W) params.push_back(&p);
  for (auto& p : enc_b) params.push_back(&p);
  params.push_back(&W_mu);
  params.push_back(&b_mu);
  params.push_back(&W_sigma);
  params.push_back(&b_sigma);
  params.push_back(&topic_matrix);
  if (config.update_background) params.push_back(&background);
  if (config.use_batchnorm) {
    params.push_back(&bn.gamma);
    params.push_back(&bn.beta);
  }
  return params;
}

Mat assemble_counts(const std::vector<corpus::CountVector>& counts,
                    const std::vector<std::size_t>& idx, int vocab_size) {
  Mat x = Mat::Zero(static_cast<Index>(idx.size()), vocab_size);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (const auto& [id, c] : counts[idx[r]].entries) {
      if (id < 0 || id >= vocab_size) {
        throw std::out_of_range("assemble_counts: token id " + std::to_string(id) +
                                " outside vocab of size " + std::to_string(vocab_size));
      }
      x(static_cast<Index>(r), id) = static_cast<double>(c);
    }
  }
  return x;
}

Mat assemble_counts(const std::vector<corpus::CountVector>& counts, int vocab_size) {
  std::vector<std::size_t> idx(counts.size());
  std::iota(idx.begin(), idx.end(), 0);
  return assemble_counts(counts, idx, vocab_size);
}

Vec background_log_frequency(const std::vector<corpus::CountVector>& counts, int vocab_size) {
  Vec totals = Vec::Zero(vocab_size);
  double grand = 0.0;
  for (const auto& cv : counts) {
    for (const auto& [id, c] : cv.entries) {
      totals[id] += static_cast<double>(c);
      grand += static_cast<double>(c);
    }
  }
  if (grand > 0.0) totals /= grand;
  return (totals.array() + 1e-10).log().matrix();
}

EncodeResult encode(const VampireModel& model, const Mat& counts) {
  for (Index i = 0; i < counts.rows(); ++i) {
    if (counts.row(i).sum() == 0.0) {
      throw std::invalid_argument("encode: degenerate (all-zero) count vector at batch row " +
                                  std::to_string(i));
    }
  }
  EncodeResult r;
  const Mat* input = &counts;
  for (std::size_t l = 0; l < model.enc_W.size(); ++l) {
    r.pre.push_back(nn::affine(*input, model.enc_W[l], model.enc_b[l]));
    r.hidden.push_back(nn::activate(r.pre.back(), model.config.encoder_activation));
    input = &r.hidden.back();
  }
  r.mu = nn::affine(r.hidden.back(), model.W_mu, model.b_mu);
  r.log_sigma = nn::affine(r.hidden.back(), model.W_sigma, model.b_sigma);
  r.sigma = r.log_sigma.array().exp().matrix();
  return r;
}

std::vector<EncoderStates> encode(const std::vector<corpus::CountVector>& batch,
                                  const VampireModel& model) {
  for (const auto& cv : batch) {
    if (cv.degenerate()) {
      throw std::invalid_argument("encode: batch contains a degenerate count vector");
    }
  }
  const Mat x = assemble_counts(batch, model.config.vocab_size);
  EncodeResult r = encode(model, x);
  std::vector<EncoderStates> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto row = static_cast<Index>(i);
    for (const auto& h : r.hidden) out[i].hidden.push_back(h.row(row).transpose());
    out[i].mu = r.mu.row(row).transpose();
    out[i].sigma = r.sigma.row(row).transpose();
    out[i].theta = nn::softmax(r.mu.row(row)).row(0).transpose();
  }
  return out;
}

Mat sample_latent(const Mat& mu, const Mat& sigma, Rng& rng) {
  if (mu.rows() != sigma.rows() || mu.cols() != sigma.cols()) {
    throw std::invalid_argument("sample_latent: mu and sigma shapes differ");
  }
  return mu + sigma.cwiseProduct(randn(mu.rows(), mu.cols(), rng));
}

DecodeResult decode(VampireModel& model, const Mat& z, const Mat& counts, Mode mode, Rng* rng) {
  Mat zd = z;
  if (mode == Mode::train && model.config.z_dropout > 0.0) {
    if (rng == nullptr) throw std::invalid_argument("decode: train mode needs an rng for z-dropout");
    zd = nn::dropout(z, model.config.z_dropout, *rng, mode);
  }
  DecodeResult r;
  r.theta = nn::softmax(zd);
  Mat logits = (r.theta * model.topic_matrix.value).rowwise() + model.background.value.row(0);
  if (model.config.use_batchnorm) {
    logits = mode == Mode::train ? nn::batchnorm(logits, model.bn, Mode::train)
                                 : nn::batchnorm_eval(logits, model.bn);
  }
  Mat log_eta = nn::log_softmax(logits);
  r.eta = log_eta.array().exp().matrix();
  r.log_probs = counts.cwiseProduct(log_eta).rowwise().sum();
  return r;
}

double kl_divergence(const Vec& mu, const Vec& sigma) {
  if (mu.size() != sigma.size()) {
    throw std::invalid_argument("kl_divergence: mu and sigma sizes differ");
  }
  if ((sigma.array() <= 0.0).any()) {
    throw std::invalid_argument("kl_divergence: sigma must be strictly positive");
  }
  return 0.5 * (mu.array().square() + sigma.array().square() - 1.0 -
                2.0 * sigma.array().log())
                   .sum();
}

Vec kl_divergence_rows(const Mat& mu, const Mat& sigma) {
  return 0.5 * (mu.array().square() + sigma.array().square() - 1.0 - 2.0 * sigma.array().log())
                   .rowwise()
                   .sum()
                   .matrix();
}

// Everything the backward pass needs from one forward evaluation.
struct ElboCache {
  Mat x;
  EncodeResult enc;
  Mat eps;
  Mat z;
  Mat theta;
  Mat log_eta;
  nn::DropoutMask z_mask;
  nn::BatchNormCache bn_cache;
  bool used_batchnorm = false;
};

namespace {

ElboTerms elbo_forward(VampireModel& model, const Mat& counts, double weight, Rng& rng, Mode mode,
                       ElboCache* cache) {
  if (mode == Mode::train && counts.rows() < 2) {
    throw std::invalid_argument("elbo: train mode requires a batch of at least 2 documents");
  }
  EncodeResult enc = encode(model, counts);
  Mat eps;
  Mat z;
  if (mode == Mode::train) {
    eps = randn(enc.mu.rows(), enc.mu.cols(), rng);
    z = enc.mu + enc.sigma.cwiseProduct(eps);
  } else {
    eps = Mat::Zero(enc.mu.rows(), enc.mu.cols());
    z = enc.mu;
  }

  nn::DropoutMask z_mask;
  Mat zd = mode == Mode::train
               ? nn::dropout(z, model.config.z_dropout, rng, mode, &z_mask)
               : z;
  if (mode != Mode::train) z_mask.keep_scale = Mat::Ones(z.rows(), z.cols());

  Mat theta = nn::softmax(zd);
  Mat logits = (theta * model.topic_matrix.value).rowwise() + model.background.value.row(0);
  nn::BatchNormCache bn_cache;
  bool used_bn = false;
  if (model.config.use_batchnorm) {
    logits = mode == Mode::train ? nn::batchnorm(logits, model.bn, Mode::train, &bn_cache)
                                 : nn::batchnorm_eval(logits, model.bn);
    used_bn = mode == Mode::train;
  }
  Mat log_eta = nn::log_softmax(logits);

  const double batch = static_cast<double>(counts.rows());
  ElboTerms terms;
  terms.reconstruction = counts.cwiseProduct(log_eta).sum() / batch;
  terms.kl = kl_divergence_rows(enc.mu, enc.sigma).mean();
  terms.kl_weight = weight;
  terms.objective = terms.reconstruction - weight * terms.kl;
  if (!std::isfinite(terms.objective)) {
    throw std::runtime_error("elbo: non-finite loss (reconstruction=" +
                             std::to_string(terms.reconstruction) +
                             ", kl=" + std::to_string(terms.kl) +
                             ", batch=" + std::to_string(counts.rows()) + ")");
  }
  if (cache != nullptr) {
    cache->x = counts;
    cache->enc = std::move(enc);
    cache->eps = std::move(eps);
    cache->z = std::move(z);
    cache->theta = std::move(theta);
    cache->log_eta = std::move(log_eta);
    cache->z_mask = std::move(z_mask);
    cache->bn_cache = std::move(bn_cache);
    cache->used_batchnorm = used_bn;
  }
  return terms;
}

// Gradients of loss = -(reconstruction - weight * kl), accumulated into the
// model parameters.
void elbo_backward(VampireModel& model, const ElboCache& cache, double weight) {
  const double batch = static_cast<double>(cache.x.rows());

  Mat d_log_eta = cache.x * (-1.0 / batch);
  Mat d_logits = nn::log_softmax_backward(cache.log_eta, d_log_eta);
  if (cache.used_batchnorm) {
    d_logits = nn::batchnorm_backward(cache.bn_cache, model.bn, d_logits);
  }
  model.topic_matrix.grad.noalias() += cache.theta.transpose() * d_logits;
  if (model.config.update_background) {
    model.background.grad.row(0) += d_logits.colwise().sum();
  }
  Mat d_theta = d_logits * model.topic_matrix.value.transpose();
  Mat d_zd = nn::softmax_backward(cache.theta, d_theta);
  Mat d_z = nn::dropout_backward(cache.z_mask, d_zd);

  // Reparameterization: z = mu + exp(log_sigma) .* eps.
  Mat d_mu = d_z;
  Mat d_log_sigma = d_z.cwiseProduct(cache.eps).cwiseProduct(cache.enc.sigma);
  if (weight != 0.0) {
    const double w = weight / batch;
    d_mu += w * cache.enc.mu;
    d_log_sigma += (w * (cache.enc.sigma.array().square() - 1.0)).matrix();
  }

  const Mat& h_last = cache.enc.hidden.back();
  Mat d_h = nn::affine_backward(h_last, model.W_mu, model.b_mu, d_mu);
  d_h += nn::affine_backward(h_last, model.W_sigma, model.b_sigma, d_log_sigma);

  for (int l = static_cast<int>(model.enc_W.size()) - 1; l >= 0; --l) {
    Mat d_pre = nn::activate_backward(cache.enc.pre[static_cast<std::size_t>(l)],
                                      model.config.encoder_activation, d_h);
    const Mat& input = l == 0 ? cache.x : cache.enc.hidden[static_cast<std::size_t>(l) - 1];
    if (l == 0) {
      nn::affine_backward_params(input, model.enc_W[0], model.enc_b[0], d_pre);
    } else {
      d_h = nn::affine_backward(input, model.enc_W[static_cast<std::size_t>(l)],
                                model.enc_b[static_cast<std::size_t>(l)], d_pre);
    }
  }
}

}  // namespace

ElboTerms elbo_with_weight(VampireModel& model, const Mat& counts, double weight, Rng& rng,
                           Mode mode) {
  return elbo_forward(model, counts, weight, rng, mode, nullptr);
}

ElboTerms elbo(VampireModel& model, const std::vector<corpus::CountVector>& batch, double t,
               Rng& rng, Mode mode) {
  const Mat x = assemble_counts(batch, model.config.vocab_size);
  return elbo_forward(model, x, kl_weight(model.config.kl, t), rng, mode, nullptr);
}

ElboTerms elbo_train_step(VampireModel& model, const Mat& counts, double weight, Rng& rng) {
  ElboCache cache;
  ElboTerms terms = elbo_forward(model, counts, weight, rng, Mode::train, &cache);
  elbo_backward(model, cache, weight);
  return terms;
}

json EpochRecord::to_json() const {
  return json{{"epoch", epoch},         {"elbo", elbo},
              {"reconstruction", reconstruction}, {"kl", kl},
              {"kl_weight", kl_weight}, {"npmi", npmi},
              {"val_nll", val_nll},     {"improved", improved}};
}

void TrainingLog::write_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("TrainingLog: cannot open " + path);
  for (const auto& rec : epochs) out << rec.to_json().dump() << '\n';
}

namespace {

double validation_nll(VampireModel& model, const std::vector<corpus::CountVector>& val) {
  if (val.empty()) return std::numeric_limits<double>::quiet_NaN();
  const int v = model.config.vocab_size;
  double total = 0.0;
  std::int64_t n = 0;
  const std::size_t chunk = 256;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < val.size(); start += chunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(val.size(), start + chunk); ++i) {
      if (!val[i].degenerate()) idx.push_back(i);
    }
    if (idx.empty()) continue;
    const Mat x = assemble_counts(val, idx, v);
    EncodeResult enc = encode(model, x);
    DecodeResult dec = decode(model, enc.mu, x, Mode::eval);
    total += dec.log_probs.sum();
    n += static_cast<std::int64_t>(idx.size());
  }
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return -total / static_cast<double>(n);
}

}  // namespace

PretrainResult pretrain(const PretrainData& data, const VampireConfig& config) {
  config.validate();
  TrainingLog log;

  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    if (data.train[i].degenerate()) {
      log.degenerate_skipped += 1;
    } else {
      usable.push_back(i);
    }
  }
  if (usable.empty()) throw std::invalid_argument("pretrain: no usable training documents");
  if (data.val_stats.total_docs == 0) {
    throw std::invalid_argument("pretrain: empty coherence reference");
  }

  Rng init_rng(config.seed);
  VampireModel model = VampireModel::init(config, data.background_log_freq, init_rng);
  model.vocab_hash = data.vocab_hash;
  Rng train_rng(Rng::derive_seed(config.seed, 1));

  const bool maximize = config.stopping_criterion == StoppingCriterion::npmi;
  double best = maximize ? -std::numeric_limits<double>::infinity()
                         : std::numeric_limits<double>::infinity();
  VampireModel best_model = model;
  int best_epoch = 0;
  int since_improve = 0;
  std::int64_t batch_clock = 0;

  const auto params = [&model]() { return model.trainable(); };

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    train_rng.shuffle(usable);

    // batch boundaries; a tail of fewer than 2 documents joins the previous batch
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    const std::size_t bs = static_cast<std::size_t>(config.batch_size);
    for (std::size_t start = 0; start < usable.size(); start += bs) {
      spans.emplace_back(start, std::min(usable.size(), start + bs));
    }
    if (spans.size() >= 2 && spans.back().second - spans.back().first < 2) {
      spans[spans.size() - 2].second = spans.back().second;
      spans.pop_back();
    }

    double epoch_obj = 0.0, epoch_recon = 0.0, epoch_kl = 0.0, last_weight = 0.0;
    std::int64_t steps = 0;
    for (const auto& [lo, hi] : spans) {
      if (hi - lo < 2) continue;  // single-document corpus cannot be batch-normalized
      std::vector<std::size_t> batch_idx(usable.begin() + static_cast<std::ptrdiff_t>(lo),
                                         usable.begin() + static_cast<std::ptrdiff_t>(hi));
      const Mat x = assemble_counts(data.train, batch_idx, config.vocab_size);
      const double clock = config.kl.kind == KlSchedule::Kind::sigmoid
                               ? static_cast<double>(epoch)
                               : static_cast<double>(batch_clock);
      const double weight = kl_weight(config.kl, clock);
      ElboTerms terms;
      try {
        terms = elbo_train_step(model, x, weight, train_rng);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("pretrain: diverged at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(steps) + ": " + e.what());
      }
      nn::adam_step(params(), config.learning_rate);
      batch_clock += 1;
      steps += 1;
      epoch_obj += terms.objective;
      epoch_recon += terms.reconstruction;
      epoch_kl += terms.kl;
      last_weight = weight;
    }
    if (steps == 0) throw std::invalid_argument("pretrain: fewer than 2 usable documents");

    EpochRecord rec;
    rec.epoch = epoch;
    rec.elbo = epoch_obj / static_cast<double>(steps);
    rec.reconstruction = epoch_recon / static_cast<double>(steps);
    rec.kl = epoch_kl / static_cast<double>(steps);
    rec.kl_weight = last_weight;
    try {
      rec.npmi = global_npmi(model, data.val_stats);
    } catch (const std::exception&) {
      // every topic undefined against this reference; never an improvement
      rec.npmi = std::numeric_limits<double>::quiet_NaN();
    }
    rec.val_nll = validation_nll(model, data.validation);

    const double criterion = maximize ? rec.npmi : rec.val_nll;
    const bool improved = maximize ? criterion > best : criterion < best;
    rec.improved = improved;
    log.epochs.push_back(rec);

    if (improved) {
      best = criterion;
      best_model = model;
      best_epoch = epoch;
      since_improve = 0;
    } else {
      since_improve += 1;
      if (since_improve >= config.patience) break;
    }
  }

  PretrainResult result;
  result.model = std::move(best_model);
  result.log = std::move(log);
  result.best_criterion = best;
  result.best_epoch = best_epoch;
  return result;
}

EncoderStates extract_features(const corpus::CountVector& counts, const VampireModel& model) {
  const int k = model.config.hidden_dim;
  EncoderStates states;
  if (counts.degenerate()) {
    states.degenerate = true;
    for (int l = 0; l < model.config.encoder_layers; ++l) states.hidden.push_back(Vec::Zero(k));
    states.theta = Vec::Constant(k, 1.0 / static_cast<double>(k));
    states.mu = Vec::Zero(k);
    states.sigma = Vec::Ones(k);
    return states;
  }
  Mat x = Mat::Zero(1, model.config.vocab_size);
  for (const auto& [id, c] : counts.entries) {
    if (id < 0 || id >= model.config.vocab_size) {
      throw std::out_of_range("extract_features: token id " + std::to_string(id) +
                              " outside vocab of size " + std::to_string(model.config.vocab_size));
    }
    x(0, id) = static_cast<double>(c);
  }
  EncodeResult enc = encode(model, x);
  for (const auto& h : enc.hidden) states.hidden.push_back(h.row(0).transpose());
  states.mu = enc.mu.row(0).transpose();
  states.sigma = enc.sigma.row(0).transpose();
  states.theta = nn::softmax(enc.mu).row(0).transpose();
  return states;
}

std::vector<std::vector<std::int32_t>> topics(const VampireModel& model, int n) {
  const Index v = model.topic_matrix.value.cols();
  if (n < 1 || n > v) {
    throw std::invalid_argument("topics: n must be in [1, vocab_size]");
  }
  std::vector<std::vector<std::int32_t>> out;
  std::vector<std::int32_t> ids(static_cast<std::size_t>(v));
  for (Index k = 0; k < model.topic_matrix.value.rows(); ++k) {
    std::iota(ids.begin(), ids.end(), 0);
    const auto& row = model.topic_matrix.value;
    std::partial_sort(ids.begin(), ids.begin() + n, ids.end(),
                      [&row, k](std::int32_t a, std::int32_t b) {
                        const double wa = row(k, a), wb = row(k, b);
                        if (wa != wb) return wa > wb;
                        return a < b;
                      });
    out.emplace_back(ids.begin(), ids.begin() + n);
  }
  return out;
}

std::vector<std::vector<std::string>> topic_words(const VampireModel& model,
                                                  const corpus::Vocabulary& vocab, int n) {
  if (vocab.size() != model.config.vocab_size) {
    throw std::invalid_argument("topic_words: vocabulary size " + std::to_string(vocab.size()) +
                                " does not match model vocab_size " +
                                std::to_string(model.config.vocab_size));
  }
  std::vector<std::vector<std::string>> out;
  for (const auto& topic : topics(model, n)) {
    std::vector<std::string> words;
    for (auto id : topic) words.push_back(vocab.tokens[static_cast<std::size_t>(id)]);
    out.push_back(std::move(words));
  }
  return out;
}

double global_npmi(const VampireModel& model, const coherence::CooccurrenceStats& stats,
                   int top_n) {
  return coherence::npmi_global(topics(model, top_n), stats);
}

std::int64_t count_parameters(const VampireModel& model) {
  std::int64_t total = 0;
  auto& m = const_cast<VampireModel&>(model);
  for (const nn::Parameter* p : m.trainable()) total += p->size();
  return total;
}

void save_model(const VampireModel& model, const std::string& path, double criterion_value,
                int epoch) {
  json meta = {{"kind", "vampire"},
               {"config", model.config.to_json()},
               {"vocab_hash", model.vocab_hash},
               {"criterion_value", criterion_value},
               {"epoch", epoch}};
  std::vector<std::pair<std::string, const Mat*>> arrays;
  for (std::size_t l = 0; l < model.enc_W.size(); ++l) {
    arrays.emplace_back(model.enc_W[l].name, &model.enc_W[l].value);
    arrays.emplace_back(model.enc_b[l].name, &model.enc_b[l].value);
  }
  arrays.emplace_back("W_mu", &model.W_mu.value);
  arrays.emplace_back("b_mu", &model.b_mu.value);
  arrays.emplace_back("W_sigma", &model.W_sigma.value);
  arrays.emplace_back("b_sigma", &model.b_sigma.value);
  arrays.emplace_back("B", &model.topic_matrix.value);
  arrays.emplace_back("b_bg", &model.background.value);
  Mat rm, rv;
  arrays.emplace_back("bn_gamma", &model.bn.gamma.value);
  arrays.emplace_back("bn_beta", &model.bn.beta.value);
  rm = model.bn.running_mean.transpose();
  rv = model.bn.running_var.transpose();
  arrays.emplace_back("bn_running_mean", &rm);
  arrays.emplace_back("bn_running_var", &rv);
  io::write_container(path, meta, arrays);
}

VampireModel load_model(const std::string& path) {
  io::Container c = io::read_container(path);
  if (!c.meta.contains("kind") || c.meta.at("kind") != "vampire") {
    throw std::runtime_error("load_model: " + path + " is not a vampire checkpoint");
  }
  VampireModel m;
  m.config = VampireConfig::from_json(c.meta.at("config"));
  m.vocab_hash = c.meta.value("vocab_hash", "");
  for (int l = 0; l < m.config.encoder_layers; ++l) {
    m.enc_W.emplace_back("enc_W_" + std::to_string(l), c.at("enc_W_" + std::to_string(l)));
    m.enc_b.emplace_back("enc_b_" + std::to_string(l), c.at("enc_b_" + std::to_string(l)));
  }
  m.W_mu = nn::Parameter("W_mu", c.at("W_mu"));
  m.b_mu = nn::Parameter("b_mu", c.at("b_mu"));
  m.W_sigma = nn::Parameter("W_sigma", c.at("W_sigma"));
  m.b_sigma = nn::Parameter("b_sigma", c.at("b_sigma"));
  m.topic_matrix = nn::Parameter("B", c.at("B"));
  m.background = nn::Parameter("b_bg", c.at("b_bg"));
  m.bn = nn::BatchNorm(m.config.vocab_size, "bn");
  m.bn.gamma.value = c.at("bn_gamma");
  m.bn.beta.value = c.at("bn_beta");
  m.bn.running_mean = c.at("bn_running_mean").row(0).transpose();
  m.bn.running_var = c.at("bn_running_var").row(0).transpose();
  return m;
}

double checkpoint_criterion_value(const std::string& path) {
  return io::read_container(path).meta.value("criterion_value", 0.0);
}

}  // namespace vampire
