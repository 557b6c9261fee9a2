#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "vampire/model.hpp"
#include "vampire/serialize.hpp"

using namespace vampire;

namespace {

VampireConfig toy_config(int vocab, int k, int layers = 1) {
  VampireConfig c;
  c.vocab_size = vocab;
  c.hidden_dim = k;
  c.encoder_layers = layers;
  c.encoder_activation = nn::Activation::tanh;
  c.z_dropout = 0.0;
  c.batch_size = 4;
  c.seed = 7;
  return c;
}

void zero_model(VampireModel& m) {
  for (auto& p : m.enc_W) p.value.setZero();
  for (auto& p : m.enc_b) p.value.setZero();
  m.W_mu.value.setZero();
  m.b_mu.value.setZero();
  m.W_sigma.value.setZero();
  m.b_sigma.value.setZero();
  m.topic_matrix.value.setZero();
  m.background.value.setZero();
}

}  // namespace

TEST_CASE("kl_divergence anchors and nonnegativity") {
  CHECK(kl_divergence(Vec::Zero(3), Vec::Ones(3)) == 0.0);  // prior equals posterior

  Vec mu(2), sigma(2);
  mu << 1, 0;
  sigma << 1, 1;
  CHECK(kl_divergence(mu, sigma) == doctest::Approx(0.5).epsilon(1e-13));

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    Vec m = rand_uniform(3, 1, -4.0, 4.0, rng).col(0);
    Vec s = rand_uniform(3, 1, 0.05, 5.0, rng).col(0);
    CHECK(kl_divergence(m, s) >= 0.0);
  }
  CHECK_THROWS_AS(kl_divergence(mu, Vec::Zero(2)), std::invalid_argument);
}

TEST_CASE("kl_weight: linear, constant, sigmoid anchors") {
  KlSchedule linear;
  linear.kind = KlSchedule::Kind::linear;
  linear.linear_scale = 1000;
  CHECK(kl_weight(linear, 0) == 0.0);
  CHECK(kl_weight(linear, 1000) == 1.0);
  CHECK(kl_weight(linear, 2500) == 1.0);

  KlSchedule constant;
  constant.kind = KlSchedule::Kind::constant;
  CHECK(kl_weight(constant, 0) == 1.0);
  CHECK(kl_weight(constant, 12345) == 1.0);

  KlSchedule sig;
  sig.kind = KlSchedule::Kind::sigmoid;
  CHECK(kl_weight(sig, 15) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("kl_weight is non-decreasing and bounded for every schedule kind") {
  for (auto kind : {KlSchedule::Kind::linear, KlSchedule::Kind::sigmoid, KlSchedule::Kind::constant}) {
    KlSchedule s;
    s.kind = kind;
    double prev = -1.0;
    for (int t = 0; t <= 3000; t += 10) {
      const double w = kl_weight(s, t);
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      CHECK(w >= prev);
      prev = w;
    }
  }
}

TEST_CASE("encode: zero weights give mu 0 and sigma 1; sigma always positive") {
  auto config = toy_config(4, 2);
  Rng rng(1);
  VampireModel m = VampireModel::init(config, Vec::Zero(4), rng);
  zero_model(m);
  Mat counts(2, 4);
  counts << 1, 2, 0, 0, 0, 0, 3, 1;
  EncodeResult enc = encode(m, counts);
  CHECK(enc.mu.isZero(0));
  CHECK((enc.sigma.array() == 1.0).all());

  Rng rng2(2);
  VampireModel m2 = VampireModel::init(config, Vec::Zero(4), rng2);
  EncodeResult enc2 = encode(m2, counts);
  CHECK((enc2.sigma.array() > 0.0).all());
}

TEST_CASE("encode: hand-computed single-layer states") {
  auto config = toy_config(2, 2);
  Rng rng(1);
  VampireModel m = VampireModel::init(config, Vec::Zero(2), rng);
  zero_model(m);
  m.enc_W[0].value << 0.5, -0.25, 0.125, 1.0;
  m.enc_b[0].value << 0.1, -0.1;
  m.W_mu.value << 1, 0, 0, 2;
  m.b_mu.value << 0.5, 0.5;
  m.W_sigma.value << 0.3, 0, 0, 0.3;

  Mat counts(1, 2);
  counts << 1, 1;
  EncodeResult enc = encode(m, counts);
  // pre = [1*0.5+1*0.125+0.1, 1*-0.25+1*1-0.1] = [0.725, 0.65]; h = tanh(pre)
  const double h0 = std::tanh(0.725), h1 = std::tanh(0.65);
  CHECK(enc.hidden[0](0, 0) == doctest::Approx(h0).epsilon(1e-15));
  CHECK(enc.hidden[0](0, 1) == doctest::Approx(h1).epsilon(1e-15));
  CHECK(enc.mu(0, 0) == doctest::Approx(h0 + 0.5).epsilon(1e-15));
  CHECK(enc.mu(0, 1) == doctest::Approx(2 * h1 + 0.5).epsilon(1e-15));
  CHECK(enc.sigma(0, 0) == doctest::Approx(std::exp(0.3 * h0)).epsilon(1e-15));
}

TEST_CASE("encode rejects degenerate count vectors") {
  auto config = toy_config(3, 2);
  Rng rng(1);
  VampireModel m = VampireModel::init(config, Vec::Zero(3), rng);
  Mat counts = Mat::Zero(1, 3);
  CHECK_THROWS_AS(encode(m, counts), std::invalid_argument);

  corpus::CountVector degenerate;
  CHECK_THROWS_AS(encode(std::vector<corpus::CountVector>{degenerate}, m),
                  std::invalid_argument);
}

TEST_CASE("sample_latent: zero eps and zero sigma reduce to mu; Monte-Carlo mean") {
  Mat mu = Mat::Constant(1, 3, 2.5);
  Mat zero_sigma = Mat::Zero(1, 3);
  Rng rng(5);
  CHECK(sample_latent(mu, zero_sigma, rng) == mu);

  // empirical mean over many draws approaches mu within 3 sigma / sqrt(n)
  const int n = 100000;
  Mat sigma = Mat::Constant(1, 3, 1.5);
  Vec sum = Vec::Zero(3);
  for (int i = 0; i < n; ++i) sum += sample_latent(mu, sigma, rng).row(0).transpose();
  const double bound = 3.0 * 1.5 / std::sqrt(static_cast<double>(n));
  for (int j = 0; j < 3; ++j) CHECK(std::abs(sum[j] / n - 2.5) < bound);
}

TEST_CASE("decode matches the log-likelihood hand example") {
  // eta = [0.5, 0.25, 0.25] via background logits, topics zeroed, batchnorm off
  auto config = toy_config(3, 2);
  config.use_batchnorm = false;
  Rng rng(1);
  VampireModel m = VampireModel::init(config, Vec::Zero(3), rng);
  zero_model(m);
  m.background.value << std::log(0.5), std::log(0.25), std::log(0.25);

  Mat counts(1, 3);
  counts << 2, 0, 1;
  Mat z = Mat::Zero(1, 2);
  DecodeResult dec = decode(m, z, counts, Mode::eval);
  CHECK(dec.eta(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(dec.log_probs[0] == doctest::Approx(-2.7726).epsilon(1e-4));
  CHECK(dec.log_probs[0] == doctest::Approx(2 * std::log(0.5) + std::log(0.25)).epsilon(1e-12));
}

TEST_CASE("decode: zero decoder gives the uniform distribution") {
  auto config = toy_config(5, 2);
  config.use_batchnorm = false;
  Rng rng(1);
  VampireModel m = VampireModel::init(config, Vec::Zero(5), rng);
  zero_model(m);
  Mat counts(1, 5);
  counts << 1, 2, 3, 0, 1;
  DecodeResult dec = decode(m, Mat::Zero(1, 2), counts, Mode::eval);
  for (int j = 0; j < 5; ++j) CHECK(dec.eta(0, j) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(dec.log_probs[0] == doctest::Approx(7.0 * std::log(0.2)).epsilon(1e-12));
}

TEST_CASE("decode thetas lie on the simplex for random latents") {
  auto config = toy_config(6, 3);
  Rng rng(9);
  VampireModel m = VampireModel::init(config, Vec::Zero(6), rng);
  Mat counts = Mat::Ones(4, 6);
  Mat z = randn(4, 3, rng);
  DecodeResult dec = decode(m, z, counts, Mode::eval);
  for (Index i = 0; i < 4; ++i) {
    CHECK(std::abs(dec.theta.row(i).sum() - 1.0) <= 1e-9);
    CHECK((dec.theta.row(i).array() >= 0.0).all());
  }
}

namespace {

// Scalar re-implementation of the eval-mode objective (z = mu, no dropout,
// batchnorm off): plain loops, no shared code with the library math.
double scalar_elbo_oracle(const VampireModel& m, const Mat& counts, double weight) {
  const int b = static_cast<int>(counts.rows());
  const int v = m.config.vocab_size;
  const int k = m.config.hidden_dim;
  double recon_total = 0.0, kl_total = 0.0;
  for (int i = 0; i < b; ++i) {
    // encoder
    std::vector<double> h(static_cast<std::size_t>(k));
    std::vector<double> input(counts.row(i).data(), counts.row(i).data() + v);
    for (std::size_t layer = 0; layer < m.enc_W.size(); ++layer) {
      std::vector<double> next(static_cast<std::size_t>(k));
      for (int j = 0; j < k; ++j) {
        double s = m.enc_b[layer].value(0, j);
        for (std::size_t t = 0; t < input.size(); ++t) {
          s += input[t] * m.enc_W[layer].value(static_cast<Index>(t), j);
        }
        next[static_cast<std::size_t>(j)] = std::tanh(s);
      }
      input = next;
    }
    h = input;
    std::vector<double> mu(static_cast<std::size_t>(k)), sigma(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
      double su = m.b_mu.value(0, j), ss = m.b_sigma.value(0, j);
      for (int t = 0; t < k; ++t) {
        su += h[static_cast<std::size_t>(t)] * m.W_mu.value(t, j);
        ss += h[static_cast<std::size_t>(t)] * m.W_sigma.value(t, j);
      }
      mu[static_cast<std::size_t>(j)] = su;
      sigma[static_cast<std::size_t>(j)] = std::exp(ss);
    }
    // theta = softmax(mu)
    double zmax = mu[0];
    for (double x : mu) zmax = std::max(zmax, x);
    double zsum = 0.0;
    std::vector<double> theta(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
      theta[static_cast<std::size_t>(j)] = std::exp(mu[static_cast<std::size_t>(j)] - zmax);
      zsum += theta[static_cast<std::size_t>(j)];
    }
    for (double& t : theta) t /= zsum;
    // eta = softmax(b_bg + theta B)
    std::vector<double> logits(static_cast<std::size_t>(v));
    double lmax = -1e300;
    for (int j = 0; j < v; ++j) {
      double s = m.background.value(0, j);
      for (int t = 0; t < k; ++t) s += theta[static_cast<std::size_t>(t)] * m.topic_matrix.value(t, j);
      logits[static_cast<std::size_t>(j)] = s;
      lmax = std::max(lmax, s);
    }
    double lse = 0.0;
    for (double s : logits) lse += std::exp(s - lmax);
    lse = lmax + std::log(lse);
    for (int j = 0; j < v; ++j) recon_total += counts(i, j) * (logits[static_cast<std::size_t>(j)] - lse);
    // KL
    for (int j = 0; j < k; ++j) {
      const double mj = mu[static_cast<std::size_t>(j)], sj = sigma[static_cast<std::size_t>(j)];
      kl_total += 0.5 * (mj * mj + sj * sj - 1.0 - 2.0 * std::log(sj));
    }
  }
  return recon_total / b - weight * (kl_total / b);
}

}  // namespace

TEST_CASE("elbo matches an independent scalar re-implementation") {
  auto config = toy_config(7, 3, 2);
  config.use_batchnorm = false;
  Rng rng(13);
  VampireModel m = VampireModel::init(config, rand_uniform(7, 1, -3.0, 0.0, rng).col(0), rng);
  Mat counts = Mat::Zero(5, 7);
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 7; ++j) counts(i, j) = static_cast<double>(rng.uniform_int(0, 4));
    if (counts.row(i).sum() == 0) counts(i, 0) = 1;
  }
  for (double weight : {0.0, 0.37, 1.0}) {
    Rng noise(99);
    ElboTerms terms = elbo_with_weight(m, counts, weight, noise, Mode::eval);
    CHECK(terms.objective == doctest::Approx(scalar_elbo_oracle(m, counts, weight)).epsilon(1e-10));
    CHECK(terms.objective <= terms.reconstruction + 1e-12);
    CHECK(terms.kl >= 0.0);
  }
}

TEST_CASE("elbo: zero KL weight and unit-variance injection") {
  auto config = toy_config(6, 2);
  Rng rng(3);
  VampireModel m = VampireModel::init(config, Vec::Zero(6), rng);
  Mat counts = Mat::Ones(4, 6);

  Rng noise(1);
  ElboTerms terms = elbo_with_weight(m, counts, 0.0, noise, Mode::train);
  CHECK(terms.objective == terms.reconstruction);

  // zero projections force mu=0, sigma=1, so the KL term vanishes exactly
  zero_model(m);
  Rng rng2(4);
  m.topic_matrix.value = randn(2, 6, rng2);
  Rng noise2(2);
  ElboTerms t2 = elbo_with_weight(m, counts, 1.0, noise2, Mode::train);
  CHECK(t2.kl == 0.0);
  CHECK(t2.objective == t2.reconstruction);
}

TEST_CASE("elbo reports non-finite losses as errors with batch diagnostics") {
  auto config = toy_config(4, 2);
  Rng rng(3);
  VampireModel m = VampireModel::init(config, Vec::Zero(4), rng);
  m.topic_matrix.value.setConstant(1e308);
  Mat counts = Mat::Ones(2, 4);
  Rng noise(1);
  try {
    elbo_with_weight(m, counts, 1.0, noise, Mode::train);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("batch") != std::string::npos);
  }
}

namespace {

double full_elbo_grad_check(VampireConfig config) {
  Rng rng(77);
  Vec background = rand_uniform(config.vocab_size, 1, -4.0, -1.0, rng).col(0);
  VampireModel m = VampireModel::init(config, background, rng);

  Mat counts = Mat::Zero(4, config.vocab_size);
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < config.vocab_size; ++j) {
      counts(i, j) = static_cast<double>(rng.uniform_int(0, 3));
    }
    if (counts.row(i).sum() == 0) counts(i, 0) = 1;
  }

  const double weight = 0.73;
  auto f = [&](bool with_grad) {
    Rng frozen(4242);  // identical eps and dropout mask on every call
    if (with_grad) {
      ElboTerms terms = elbo_train_step(m, counts, weight, frozen);
      return -terms.objective;
    }
    VampireModel probe = m;  // keep batchnorm running stats untouched
    ElboTerms terms = elbo_with_weight(probe, counts, weight, frozen, Mode::train);
    return -terms.objective;
  };
  // h = 1e-4: the objective is O(100), so smaller steps drown in roundoff
  return nn::grad_check(f, m.trainable(), 1e-4);
}

}  // namespace

TEST_CASE("full-model gradient check with frozen noise") {
  // Published-style configuration: frozen background, batchnorm on.
  auto config = toy_config(20, 3);
  config.encoder_layers = 2;
  config.z_dropout = 0.47;
  CHECK(full_elbo_grad_check(config) < 1e-4);

  // Trainable background needs batchnorm off: a per-column shift through
  // train-mode batch statistics has an exactly-zero gradient.
  auto bg_config = toy_config(20, 3);
  bg_config.encoder_layers = 2;
  bg_config.z_dropout = 0.47;
  bg_config.update_background = true;
  bg_config.use_batchnorm = false;
  CHECK(full_elbo_grad_check(bg_config) < 1e-4);
}

TEST_CASE("pretrain: patience semantics and the epoch-1 checkpoint") {
  auto pc = testing::make_planted_corpus(120, 5, 3, 30);
  PretrainData data = testing::pretrain_data_from(pc, 0, 100, 100, 120);

  // A coherence reference of singleton documents pins every topic NPMI at
  // exactly -1: no strict improvement is possible after the first epoch.
  std::vector<corpus::Document> singletons;
  for (const auto& tok : pc.vocab.tokens) {
    corpus::Document d;
    d.id = "s" + tok;
    d.tokens = {tok};
    singletons.push_back(std::move(d));
  }
  data.val_stats = coherence::build_stats(singletons, pc.vocab);

  VampireConfig config = toy_config(30, 3);
  config.batch_size = 16;
  config.learning_rate = 5e-3;
  config.max_epochs = 50;
  config.patience = 1;
  config.stopping_criterion = StoppingCriterion::npmi;
  PretrainResult result = pretrain(data, config);
  CHECK(result.log.epochs.size() == 2);  // epoch 1 improved, epoch 2 stopped
  CHECK(result.best_epoch == 1);
  CHECK(result.log.epochs[0].improved);
  CHECK(!result.log.epochs[1].improved);
  CHECK(result.log.epochs[0].npmi == -1.0);
  CHECK(result.best_criterion == -1.0);

  // patience 3 with the same flat criterion: exactly 1 + 3 epochs run
  config.patience = 3;
  PretrainResult longer = pretrain(data, config);
  CHECK(longer.log.epochs.size() == 4);
  CHECK(longer.best_epoch == 1);
}

TEST_CASE("pretrain logs both criteria and respects max_epochs") {
  auto pc = testing::make_planted_corpus(150, 6, 3, 30);
  PretrainData data = testing::pretrain_data_from(pc, 0, 120, 120, 150);

  VampireConfig config = toy_config(30, 3);
  config.batch_size = 16;
  config.learning_rate = 5e-3;
  config.max_epochs = 4;
  config.patience = 10;
  PretrainResult result = pretrain(data, config);
  CHECK(result.log.epochs.size() == 4);
  for (const auto& rec : result.log.epochs) {
    CHECK(std::isfinite(rec.elbo));
    CHECK(std::isfinite(rec.npmi));
    CHECK(std::isfinite(rec.val_nll));
    CHECK(rec.kl >= 0.0);
    CHECK(rec.kl_weight >= 0.0);
    CHECK(rec.kl_weight <= 1.0);
  }
  CHECK(result.best_epoch >= 1);
}

TEST_CASE("the published IMDB assignment passes config validation") {
  VampireConfig c;
  c.hidden_dim = 80;
  c.encoder_layers = 2;
  c.encoder_activation = nn::Activation::tanh;
  c.z_dropout = 0.47;
  c.kl.kind = KlSchedule::Kind::linear;
  c.kl.linear_scale = 1000;
  c.learning_rate = 0.00081;
  c.batch_size = 64;
  c.max_epochs = 50;
  c.patience = 5;
  c.update_background = false;
  c.vocab_size = 30000;
  CHECK_NOTHROW(c.validate());

  // order-of-magnitude sanity against the published parameter count
  Rng rng(1);
  VampireModel m = VampireModel::init(c, Vec::Zero(30000), rng);
  const auto params = count_parameters(m);
  MESSAGE("IMDB-config parameter count: ", params);
  CHECK(params > 1000000);
  CHECK(params < 10000000);
}

TEST_CASE("count_parameters: closed forms and monotonicity") {
  // single affine 4 -> 2 with bias
  nn::Parameter W("W", Mat::Zero(4, 2)), b("b", Mat::Zero(1, 2));
  CHECK(W.size() + b.size() == 10);

  auto config = toy_config(4, 2);
  config.use_batchnorm = false;
  Rng rng(1);
  VampireModel m = VampireModel::init(config, Vec::Zero(4), rng);
  // enc(4*2+2) + mu(2*2+2) + sigma(2*2+2) + B(2*4); frozen background excluded
  CHECK(count_parameters(m) == 10 + 6 + 6 + 8);

  auto bn_config = toy_config(4, 2);
  Rng rng2(1);
  VampireModel mbn = VampireModel::init(bn_config, Vec::Zero(4), rng2);
  CHECK(count_parameters(mbn) == 30 + 8);  // + batchnorm gain and shift

  auto wide = toy_config(4, 4);
  Rng rng3(1);
  VampireModel mw = VampireModel::init(wide, Vec::Zero(4), rng3);
  CHECK(count_parameters(mw) > count_parameters(mbn));

  auto bg = toy_config(4, 2);
  bg.update_background = true;
  Rng rng4(1);
  VampireModel mbg = VampireModel::init(bg, Vec::Zero(4), rng4);
  CHECK(count_parameters(mbg) == count_parameters(mbn) + 4);
}

TEST_CASE("extract_features is deterministic, simplex-valued, and flags degenerates") {
  auto config = toy_config(10, 4, 2);
  Rng rng(21);
  VampireModel m = VampireModel::init(config, Vec::Zero(10), rng);

  corpus::CountVector cv;
  cv.entries = {{1, 2}, {4, 1}, {7, 3}};
  cv.total = 6;
  EncoderStates a = extract_features(cv, m);
  EncoderStates b = extract_features(cv, m);
  CHECK(a.theta == b.theta);
  CHECK(a.mu == b.mu);
  CHECK(a.hidden[0] == b.hidden[0]);
  CHECK(a.hidden[1] == b.hidden[1]);
  CHECK(std::abs(a.theta.sum() - 1.0) <= 1e-9);
  CHECK(!a.degenerate);

  corpus::CountVector empty;
  EncoderStates d = extract_features(empty, m);
  CHECK(d.degenerate);
  CHECK(d.hidden.size() == 2);
  CHECK(d.hidden[0].isZero(0));
  CHECK((d.theta.array() == 0.25).all());
}

TEST_CASE("extract_features matches hand computation on a toy model") {
  auto config = toy_config(2, 2);
  Rng rng(1);
  VampireModel m = VampireModel::init(config, Vec::Zero(2), rng);
  zero_model(m);
  m.enc_W[0].value << 1, 0, 0, 1;
  m.W_mu.value << 1, 0, 0, 1;

  corpus::CountVector cv;
  cv.entries = {{0, 1}, {1, 2}};
  cv.total = 3;
  EncoderStates s = extract_features(cv, m);
  const double h0 = std::tanh(1.0), h1 = std::tanh(2.0);
  CHECK(s.hidden[0][0] == doctest::Approx(h0).epsilon(1e-15));
  CHECK(s.mu[1] == doctest::Approx(h1).epsilon(1e-15));
  const double e0 = std::exp(h0), e1 = std::exp(h1);
  CHECK(s.theta[0] == doctest::Approx(e0 / (e0 + e1)).epsilon(1e-12));
}

TEST_CASE("topics: spike ranking, determinism, tie-by-id") {
  auto config = toy_config(10, 2);
  Rng rng(1);
  VampireModel m = VampireModel::init(config, Vec::Zero(10), rng);
  m.topic_matrix.value.setZero();
  m.topic_matrix.value(0, 7) = 5.0;
  m.topic_matrix.value.row(1) = m.topic_matrix.value.row(0);

  auto t = topics(m, 3);
  REQUIRE(t.size() == 2);
  CHECK(t[0][0] == 7);
  CHECK(t[0] == t[1]);             // identical rows, identical lists
  CHECK(t[0][1] == 0);             // zero weights tie-break by ascending id
  CHECK(t[0][2] == 1);
  CHECK_THROWS_AS(topics(m, 11), std::invalid_argument);
}

TEST_CASE("checkpoint round-trip preserves features to 0 ULP") {
  auto pc = testing::make_planted_corpus(80, 11, 3, 40);
  PretrainData data = testing::pretrain_data_from(pc, 0, 60, 60, 80);
  VampireConfig config = toy_config(40, 3);
  config.batch_size = 16;
  config.max_epochs = 3;
  config.learning_rate = 5e-3;
  config.z_dropout = 0.2;
  PretrainResult result = pretrain(data, config);

  testing::TempFile tf("roundtrip.vam");
  save_model(result.model, tf.path, result.best_criterion, result.best_epoch);
  VampireModel loaded = load_model(tf.path);
  CHECK(loaded.config.hidden_dim == config.hidden_dim);
  CHECK(loaded.vocab_hash == result.model.vocab_hash);

  for (std::size_t i = 0; i < 10; ++i) {
    EncoderStates a = extract_features(pc.counts[i], result.model);
    EncoderStates b = extract_features(pc.counts[i], loaded);
    CHECK(a.theta == b.theta);  // bitwise
    CHECK(a.mu == b.mu);
    CHECK(a.sigma == b.sigma);
    for (std::size_t l = 0; l < a.hidden.size(); ++l) CHECK(a.hidden[l] == b.hidden[l]);
  }
  CHECK(checkpoint_criterion_value(tf.path) == result.best_criterion);
}

TEST_CASE("identical seeds produce byte-identical checkpoints") {
  auto pc = testing::make_planted_corpus(100, 17, 3, 30);
  PretrainData data = testing::pretrain_data_from(pc, 0, 80, 80, 100);
  VampireConfig config = toy_config(30, 3);
  config.batch_size = 16;
  config.max_epochs = 3;
  config.learning_rate = 5e-3;
  config.seed = 909;

  testing::TempFile t1("det1.vam"), t2("det2.vam");
  PretrainResult r1 = pretrain(data, config);
  save_model(r1.model, t1.path, r1.best_criterion, r1.best_epoch);
  PretrainResult r2 = pretrain(data, config);
  save_model(r2.model, t2.path, r2.best_criterion, r2.best_epoch);
  const std::string b1 = testing::read_file_bytes(t1.path);
  CHECK(!b1.empty());
  CHECK(b1 == testing::read_file_bytes(t2.path));
}

TEST_CASE("maximum-likelihood fit recovers a known unigram distribution") {
  // kl weight 0 and batchnorm off: the model reduces to ML fitting of a
  // mixture-of-topics unigram model.
  const int v = 10;
  Rng gen(5);
  Vec p(v);
  for (int j = 0; j < v; ++j) p[j] = gen.uniform(0.5, 3.0);
  p /= p.sum();

  std::vector<corpus::CountVector> docs;
  Vec empirical = Vec::Zero(v);
  for (int d = 0; d < 200; ++d) {
    std::vector<int> counts(v, 0);
    for (int i = 0; i < 50; ++i) {
      double u = gen.uniform();
      int w = 0;
      while (w < v - 1 && u > p[w]) {
        u -= p[w];
        ++w;
      }
      counts[static_cast<std::size_t>(w)] += 1;
      empirical[w] += 1.0;
    }
    corpus::CountVector cv;
    for (int j = 0; j < v; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        cv.entries.emplace_back(j, counts[static_cast<std::size_t>(j)]);
        cv.total += counts[static_cast<std::size_t>(j)];
      }
    }
    docs.push_back(std::move(cv));
  }
  empirical /= empirical.sum();

  VampireConfig config = toy_config(v, 2);
  config.use_batchnorm = false;
  config.learning_rate = 0.05;
  Rng rng(31);
  VampireModel m = VampireModel::init(config, Vec::Zero(v), rng);  // flat background
  Rng noise(32);
  const Mat x = assemble_counts(docs, v);
  for (int step = 0; step < 400; ++step) {
    elbo_train_step(m, x, 0.0, noise);
    nn::adam_step(m.trainable(), config.learning_rate);
  }
  DecodeResult dec = decode(m, encode(m, x).mu, x, Mode::eval);
  for (Index i = 0; i < 5; ++i) {
    const double tv = 0.5 * (dec.eta.row(i).transpose() - empirical).array().abs().sum();
    CHECK(tv < 0.05);
  }
}
