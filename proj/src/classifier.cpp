#include "vampire/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "vampire/serialize.hpp"

namespace vampire::dan {

void DanConfig::validate() const {
  if (embedding_dim < 1) throw std::invalid_argument("dan config: embedding_dim must be positive");
  if (hidden_dim < 1) throw std::invalid_argument("dan config: hidden_dim must be positive");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("dan config: dropout must be in [0, 1)");
  }
  if (learning_rate <= 0.0) throw std::invalid_argument("dan config: learning_rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("dan config: batch_size must be positive");
  if (max_epochs < 1) throw std::invalid_argument("dan config: max_epochs must be positive");
  if (patience < 1) throw std::invalid_argument("dan config: patience must be positive");
  if (max_tokens < 1) throw std::invalid_argument("dan config: max_tokens must be positive");
}

json DanConfig::to_json() const {
  return json{{"embedding_dim", embedding_dim},
              {"hidden_dim", hidden_dim},
              {"dropout", dropout},
              {"learning_rate", learning_rate},
              {"batch_size", batch_size},
              {"max_epochs", max_epochs},
              {"patience", patience},
              {"max_tokens", max_tokens},
              {"seed", seed}};
}

DanConfig DanConfig::from_json(const json& j) {
  DanConfig c;
  if (j.contains("embedding_dim")) c.embedding_dim = j.at("embedding_dim").get<int>();
  if (j.contains("hidden_dim")) c.hidden_dim = j.at("hidden_dim").get<int>();
  if (j.contains("dropout")) c.dropout = j.at("dropout").get<double>();
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<int>();
  if (j.contains("patience")) c.patience = j.at("patience").get<int>();
  if (j.contains("max_tokens")) c.max_tokens = j.at("max_tokens").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

ScalarMix ScalarMix::init(int n_sources) {
  if (n_sources < 1) throw std::invalid_argument("ScalarMix: need at least one source");
  Mat logits(1, n_sources);
  for (Index i = 0; i < n_sources; ++i) logits(0, i) = i <= 1 ? 1.0 : -1.0;
  ScalarMix mix;
  mix.logits = nn::Parameter("mix_logits", logits);
  return mix;
}

RowVec ScalarMix::weights() const { return nn::softmax(logits.value).row(0); }

Vec scalar_mix(const Mat& sources, const ScalarMix& mix) {
  if (sources.rows() != mix.logits.value.cols()) {
    throw std::invalid_argument("scalar_mix: " + std::to_string(sources.rows()) +
                                " sources vs " + std::to_string(mix.logits.value.cols()) +
                                " mixing weights");
  }
  return (mix.weights() * sources).transpose();
}

Mat feature_sources(const EncoderStates& states) {
  const Index k = states.theta.size();
  Mat sources(static_cast<Index>(states.hidden.size()) + 1, k);
  sources.row(0) = states.theta.transpose();
  for (std::size_t l = 0; l < states.hidden.size(); ++l) {
    if (states.hidden[l].size() != k) {
      throw std::invalid_argument("feature_sources: hidden layer " + std::to_string(l) +
                                  " width " + std::to_string(states.hidden[l].size()) +
                                  " does not match theta width " + std::to_string(k));
    }
    sources.row(static_cast<Index>(l) + 1) = states.hidden[l].transpose();
  }
  return sources;
}

std::vector<nn::Parameter*> DanModel::trainable() {
  std::vector<nn::Parameter*> params{&embeddings, &W1, &b1, &W2, &b2};
  if (mix) params.push_back(&mix->logits);
  return params;
}

std::int32_t DanModel::token_id(const std::string& token) const {
  auto it = vocab_index.find(token);
  return it == vocab_index.end() ? 0 : it->second;
}

namespace {

constexpr const char* kUnkToken = "<unk>";

struct ForwardCache {
  Mat input;        // [b x (feature_dim + embedding_dim)]
  Mat pre_hidden;   // before relu
  Mat dropped;      // after dropout
  nn::DropoutMask drop_mask;
  Mat probs;        // softmax output
  Mat log_probs;
};

Mat average_embeddings(const DanModel& model,
                       const std::vector<std::vector<std::int32_t>>& token_ids) {
  const Index d = model.config.embedding_dim;
  Mat avg = Mat::Zero(static_cast<Index>(token_ids.size()), d);
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    const auto& ids = token_ids[i];
    if (ids.empty()) continue;  // empty documents average to the zero vector
    for (auto id : ids) avg.row(static_cast<Index>(i)) += model.embeddings.value.row(id);
    avg.row(static_cast<Index>(i)) /= static_cast<double>(ids.size());
  }
  return avg;
}

Mat forward_impl(DanModel& model, const std::vector<std::vector<std::int32_t>>& token_ids,
                 const std::vector<Mat>* sources, Mode mode, Rng* rng, ForwardCache* cache) {
  const Index b = static_cast<Index>(token_ids.size());
  Mat avg = average_embeddings(model, token_ids);

  Mat input;
  if (model.mix) {
    if (sources == nullptr || sources->size() != token_ids.size()) {
      throw std::invalid_argument("dan_forward: model has a scalar mix but feature sources "
                                  "are missing or mis-sized");
    }
    Mat r(b, model.feature_dim);
    const RowVec w = model.mix->weights();
    for (Index i = 0; i < b; ++i) {
      const Mat& s = (*sources)[static_cast<std::size_t>(i)];
      if (s.cols() != model.feature_dim || s.rows() != w.size()) {
        throw std::invalid_argument("dan_forward: source matrix is " +
                                    std::to_string(s.rows()) + "x" + std::to_string(s.cols()) +
                                    ", expected " + std::to_string(w.size()) + "x" +
                                    std::to_string(model.feature_dim));
      }
      r.row(i) = w * s;
    }
    input.resize(b, model.feature_dim + model.config.embedding_dim);
    input << r, avg;
  } else {
    input = std::move(avg);
  }

  Mat pre_hidden = nn::affine(input, model.W1, model.b1);
  Mat hidden = nn::activate(pre_hidden, nn::Activation::relu);
  nn::DropoutMask mask;
  Mat dropped;
  if (mode == Mode::train) {
    if (rng == nullptr) throw std::invalid_argument("dan_forward: train mode needs an rng");
    dropped = nn::dropout(hidden, model.config.dropout, *rng, mode, &mask);
  } else {
    dropped = hidden;
    mask.keep_scale = Mat::Ones(hidden.rows(), hidden.cols());
  }
  Mat logits = nn::affine(dropped, model.W2, model.b2);
  Mat log_probs = nn::log_softmax(logits);
  Mat probs = log_probs.array().exp().matrix();
  if (cache != nullptr) {
    cache->input = std::move(input);
    cache->pre_hidden = std::move(pre_hidden);
    cache->dropped = std::move(dropped);
    cache->drop_mask = std::move(mask);
    cache->probs = probs;
    cache->log_probs = std::move(log_probs);
  }
  return probs;
}

// Cross-entropy backward through the head, the embedding average, and the
// scalar mix (sources are frozen constants).
void backward_impl(DanModel& model, const std::vector<std::vector<std::int32_t>>& token_ids,
                   const std::vector<Mat>* sources, const std::vector<std::int32_t>& labels,
                   const ForwardCache& cache) {
  const Index b = static_cast<Index>(token_ids.size());
  Mat d_logits = cache.probs;
  for (Index i = 0; i < b; ++i) d_logits(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  d_logits /= static_cast<double>(b);

  Mat d_dropped = nn::affine_backward(cache.dropped, model.W2, model.b2, d_logits);
  Mat d_hidden = nn::dropout_backward(cache.drop_mask, d_dropped);
  Mat d_pre = nn::activate_backward(cache.pre_hidden, nn::Activation::relu, d_hidden);
  Mat d_input = nn::affine_backward(cache.input, model.W1, model.b1, d_pre);

  Mat d_avg;
  if (model.mix) {
    const Mat d_r = d_input.leftCols(model.feature_dim);
    d_avg = d_input.rightCols(model.config.embedding_dim);
    const RowVec w = model.mix->weights();
    RowVec d_w = RowVec::Zero(w.size());
    for (Index i = 0; i < b; ++i) {
      const Mat& s = (*sources)[static_cast<std::size_t>(i)];
      d_w += (s * d_r.row(i).transpose()).transpose();
    }
    Mat d_logits_mix = nn::softmax_backward(Mat(w), Mat(d_w));
    model.mix->logits.grad += d_logits_mix;
  } else {
    d_avg = std::move(d_input);
  }

  for (Index i = 0; i < b; ++i) {
    const auto& ids = token_ids[static_cast<std::size_t>(i)];
    if (ids.empty()) continue;
    const double scale = 1.0 / static_cast<double>(ids.size());
    for (auto id : ids) model.embeddings.grad.row(id) += scale * d_avg.row(i);
  }
}

std::vector<std::int32_t> doc_token_ids(const DanModel& model, const corpus::Document& doc) {
  std::vector<std::int32_t> ids;
  const auto limit = static_cast<std::size_t>(model.config.max_tokens);
  ids.reserve(std::min(doc.tokens.size(), limit));
  for (std::size_t i = 0; i < doc.tokens.size() && i < limit; ++i) {
    ids.push_back(model.token_id(doc.tokens[i]));
  }
  return ids;
}

std::vector<Mat> compute_sources(const std::vector<corpus::Document>& docs,
                                 const VampireModel& vampire,
                                 const corpus::Vocabulary& vae_vocab) {
  std::vector<Mat> sources;
  sources.reserve(docs.size());
  for (const auto& doc : docs) {
    const corpus::CountVector cv = corpus::to_counts(doc, vae_vocab);
    sources.push_back(feature_sources(extract_features(cv, vampire)));
  }
  return sources;
}

std::int32_t argmax_row(const Mat& probs, Index row) {
  std::int32_t best = 0;
  double best_p = probs(row, 0);
  for (Index c = 1; c < probs.cols(); ++c) {
    if (probs(row, c) > best_p) {  // ties keep the lowest class id
      best_p = probs(row, c);
      best = static_cast<std::int32_t>(c);
    }
  }
  return best;
}

double batch_accuracy(DanModel& model, const std::vector<std::vector<std::int32_t>>& token_ids,
                      const std::vector<Mat>* sources, const std::vector<std::int32_t>& labels) {
  if (token_ids.empty()) return 0.0;
  std::int64_t correct = 0;
  const std::size_t chunk = 512;
  for (std::size_t start = 0; start < token_ids.size(); start += chunk) {
    const std::size_t end = std::min(token_ids.size(), start + chunk);
    std::vector<std::vector<std::int32_t>> slice(token_ids.begin() + static_cast<std::ptrdiff_t>(start),
                                                 token_ids.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<Mat> src_slice;
    const std::vector<Mat>* src_ptr = nullptr;
    if (sources != nullptr) {
      src_slice.assign(sources->begin() + static_cast<std::ptrdiff_t>(start),
                       sources->begin() + static_cast<std::ptrdiff_t>(end));
      src_ptr = &src_slice;
    }
    Mat probs = forward_impl(model, slice, src_ptr, Mode::eval, nullptr, nullptr);
    for (Index i = 0; i < probs.rows(); ++i) {
      if (argmax_row(probs, i) == labels[start + static_cast<std::size_t>(i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(token_ids.size());
}

}  // namespace

Mat dan_forward(DanModel& model, const std::vector<std::vector<std::int32_t>>& token_ids,
                const std::vector<Mat>* sources, Mode mode, Rng* rng) {
  return forward_impl(model, token_ids, sources, mode, rng, nullptr);
}

double cross_entropy_step(DanModel& model, const std::vector<std::vector<std::int32_t>>& token_ids,
                          const std::vector<Mat>* sources,
                          const std::vector<std::int32_t>& labels, Mode mode, Rng* rng,
                          bool with_grad) {
  if (labels.size() != token_ids.size()) {
    throw std::invalid_argument("cross_entropy_step: labels and documents differ in count");
  }
  ForwardCache cache;
  forward_impl(model, token_ids, sources, mode, rng, &cache);
  double loss = 0.0;
  for (Index i = 0; i < cache.log_probs.rows(); ++i) {
    loss -= cache.log_probs(i, labels[static_cast<std::size_t>(i)]);
  }
  loss /= static_cast<double>(token_ids.size());
  if (with_grad) backward_impl(model, token_ids, sources, labels, cache);
  return loss;
}

Vec predict_probs(const DanModel& model, const corpus::Document& doc, const Mat* sources) {
  auto& m = const_cast<DanModel&>(model);
  std::vector<std::vector<std::int32_t>> ids{doc_token_ids(model, doc)};
  std::vector<Mat> src;
  const std::vector<Mat>* src_ptr = nullptr;
  if (sources != nullptr) {
    src.push_back(*sources);
    src_ptr = &src;
  }
  Mat probs = forward_impl(m, ids, src_ptr, Mode::eval, nullptr, nullptr);
  return probs.row(0).transpose();
}

std::pair<DanModel, TrainReport> train_classifier(const std::vector<corpus::Document>& labeled,
                                                  const std::vector<corpus::Document>& val,
                                                  const DanConfig& config,
                                                  const corpus::LabelMap& labels,
                                                  const VampireModel* vampire,
                                                  const corpus::Vocabulary* vae_vocab) {
  config.validate();
  if (labeled.empty()) throw std::invalid_argument("train_classifier: no labeled documents");
  std::set<std::int32_t> classes;
  for (const auto& doc : labeled) {
    if (!doc.label) throw std::invalid_argument("train_classifier: unlabeled document in the training set");
    classes.insert(*doc.label);
  }
  if (classes.size() < 2) {
    throw std::invalid_argument("train_classifier: training labels cover fewer than 2 classes");
  }
  if (vampire != nullptr && vae_vocab == nullptr) {
    throw std::invalid_argument("train_classifier: vampire features need the pretraining vocabulary");
  }

  DanModel model;
  model.config = config;
  model.labels = labels;

  // Classifier vocabulary: every token seen in training data, id 0 = unknown.
  {
    std::set<std::string> seen;
    for (const auto& doc : labeled) seen.insert(doc.tokens.begin(), doc.tokens.end());
    model.vocab.push_back(kUnkToken);
    for (const auto& tok : seen) model.vocab.push_back(tok);
    for (std::size_t i = 0; i < model.vocab.size(); ++i) {
      model.vocab_index.emplace(model.vocab[i], static_cast<std::int32_t>(i));
    }
  }

  Rng rng(config.seed);
  const Index vc = static_cast<Index>(model.vocab.size());
  model.embeddings =
      nn::Parameter("embeddings", rand_uniform(vc, config.embedding_dim, -0.05, 0.05, rng));
  if (vampire != nullptr) {
    model.feature_dim = vampire->config.hidden_dim;
    model.mix = ScalarMix::init(vampire->num_feature_sources());
  }
  const Index in_dim = model.feature_dim + config.embedding_dim;
  const double lim1 = std::sqrt(6.0 / static_cast<double>(in_dim + config.hidden_dim));
  model.W1 = nn::Parameter("W1", rand_uniform(in_dim, config.hidden_dim, -lim1, lim1, rng));
  model.b1 = nn::Parameter("b1", Mat::Zero(1, config.hidden_dim));
  const Index n_classes = labels.size();
  const double lim2 = std::sqrt(6.0 / static_cast<double>(config.hidden_dim + n_classes));
  model.W2 = nn::Parameter("W2", rand_uniform(config.hidden_dim, n_classes, -lim2, lim2, rng));
  model.b2 = nn::Parameter("b2", Mat::Zero(1, n_classes));

  // Frozen features, computed once.
  std::vector<Mat> train_sources, val_sources;
  const std::vector<Mat>* train_src_ptr = nullptr;
  const std::vector<Mat>* val_src_ptr = nullptr;
  if (vampire != nullptr) {
    train_sources = compute_sources(labeled, *vampire, *vae_vocab);
    val_sources = compute_sources(val, *vampire, *vae_vocab);
    train_src_ptr = &train_sources;
    val_src_ptr = &val_sources;
  }

  std::vector<std::vector<std::int32_t>> train_ids, val_ids;
  std::vector<std::int32_t> train_labels, val_labels;
  for (const auto& doc : labeled) {
    train_ids.push_back(doc_token_ids(model, doc));
    train_labels.push_back(*doc.label);
  }
  for (const auto& doc : val) {
    if (!doc.label) throw std::invalid_argument("train_classifier: unlabeled validation document");
    val_ids.push_back(doc_token_ids(model, doc));
    val_labels.push_back(*doc.label);
  }

  TrainReport report;
  DanModel best_model = model;
  double best_acc = -1.0;
  int since_improve = 0;
  std::vector<std::size_t> order(labeled.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    const auto bs = static_cast<std::size_t>(config.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      std::vector<std::vector<std::int32_t>> batch_ids;
      std::vector<Mat> batch_sources;
      std::vector<std::int32_t> batch_labels;
      for (std::size_t i = start; i < end; ++i) {
        batch_ids.push_back(train_ids[order[i]]);
        batch_labels.push_back(train_labels[order[i]]);
        if (train_src_ptr != nullptr) batch_sources.push_back(train_sources[order[i]]);
      }
      const std::vector<Mat>* src = train_src_ptr != nullptr ? &batch_sources : nullptr;
      cross_entropy_step(model, batch_ids, src, batch_labels, Mode::train, &rng, true);
      nn::adam_step(model.trainable(), config.learning_rate);
    }

    const double val_acc = val_ids.empty()
                               ? batch_accuracy(model, train_ids, train_src_ptr, train_labels)
                               : batch_accuracy(model, val_ids, val_src_ptr, val_labels);
    report.val_accuracy_per_epoch.push_back(val_acc);
    if (val_acc > best_acc) {
      best_acc = val_acc;
      best_model = model;
      report.best_epoch = epoch;
      since_improve = 0;
    } else {
      since_improve += 1;
      if (since_improve >= config.patience) break;
    }
  }

  report.best_val_accuracy = best_acc;
  return {std::move(best_model), std::move(report)};
}

json EvalReport::to_json() const {
  return json{{"accuracy", accuracy}, {"n", n}, {"per_class_accuracy", per_class_accuracy}};
}

EvalReport evaluate(const DanModel& model, const std::vector<corpus::Document>& docs,
                    const VampireModel* vampire, const corpus::Vocabulary* vae_vocab) {
  if (docs.empty()) throw std::invalid_argument("evaluate: no documents");
  if (model.mix && (vampire == nullptr || vae_vocab == nullptr)) {
    throw std::invalid_argument("evaluate: model expects vampire features");
  }
  auto& m = const_cast<DanModel&>(model);
  std::vector<std::vector<std::int32_t>> ids;
  std::vector<std::int32_t> labels;
  for (const auto& doc : docs) {
    if (!doc.label) throw std::invalid_argument("evaluate: unlabeled document " + doc.id);
    ids.push_back(doc_token_ids(model, doc));
    labels.push_back(*doc.label);
  }
  std::vector<Mat> sources;
  const std::vector<Mat>* src_ptr = nullptr;
  if (model.mix) {
    sources = compute_sources(docs, *vampire, *vae_vocab);
    src_ptr = &sources;
  }

  const Index n_classes = model.labels.size();
  std::vector<std::int64_t> per_class_correct(static_cast<std::size_t>(n_classes), 0);
  std::vector<std::int64_t> per_class_total(static_cast<std::size_t>(n_classes), 0);
  std::int64_t correct = 0;
  const std::size_t chunk = 512;
  for (std::size_t start = 0; start < ids.size(); start += chunk) {
    const std::size_t end = std::min(ids.size(), start + chunk);
    std::vector<std::vector<std::int32_t>> slice(ids.begin() + static_cast<std::ptrdiff_t>(start),
                                                 ids.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<Mat> src_slice;
    const std::vector<Mat>* sp = nullptr;
    if (src_ptr != nullptr) {
      src_slice.assign(sources.begin() + static_cast<std::ptrdiff_t>(start),
                       sources.begin() + static_cast<std::ptrdiff_t>(end));
      sp = &src_slice;
    }
    Mat probs = forward_impl(m, slice, sp, Mode::eval, nullptr, nullptr);
    for (Index i = 0; i < probs.rows(); ++i) {
      const auto truth = labels[start + static_cast<std::size_t>(i)];
      per_class_total[static_cast<std::size_t>(truth)] += 1;
      if (argmax_row(probs, i) == truth) {
        ++correct;
        per_class_correct[static_cast<std::size_t>(truth)] += 1;
      }
    }
  }

  EvalReport report;
  report.n = static_cast<std::int64_t>(docs.size());
  report.accuracy = static_cast<double>(correct) / static_cast<double>(docs.size());
  for (Index c = 0; c < n_classes; ++c) {
    const auto total = per_class_total[static_cast<std::size_t>(c)];
    report.per_class_accuracy.push_back(
        total == 0 ? 0.0
                   : static_cast<double>(per_class_correct[static_cast<std::size_t>(c)]) /
                         static_cast<double>(total));
  }
  return report;
}

void save_dan(const DanModel& model, const std::string& path) {
  json meta = {{"kind", "dan"},
               {"config", model.config.to_json()},
               {"labels", model.labels.names},
               {"feature_dim", model.feature_dim},
               {"has_mix", static_cast<bool>(model.mix)}};
  std::vector<std::pair<std::string, const Mat*>> arrays;
  arrays.emplace_back("embeddings", &model.embeddings.value);
  arrays.emplace_back("W1", &model.W1.value);
  arrays.emplace_back("b1", &model.b1.value);
  arrays.emplace_back("W2", &model.W2.value);
  arrays.emplace_back("b2", &model.b2.value);
  if (model.mix) arrays.emplace_back("mix_logits", &model.mix->logits.value);
  io::write_container(path, meta, arrays);

  std::ofstream vocab_out(path + ".vocab", std::ios::binary | std::ios::trunc);
  if (!vocab_out) throw std::runtime_error("save_dan: cannot open " + path + ".vocab");
  for (const auto& tok : model.vocab) vocab_out << tok << '\n';
}

DanModel load_dan(const std::string& path) {
  io::Container c = io::read_container(path);
  if (!c.meta.contains("kind") || c.meta.at("kind") != "dan") {
    throw std::runtime_error("load_dan: " + path + " is not a classifier checkpoint");
  }
  DanModel m;
  m.config = DanConfig::from_json(c.meta.at("config"));
  m.labels = corpus::LabelMap::from_names(c.meta.at("labels").get<std::vector<std::string>>());
  m.feature_dim = c.meta.value("feature_dim", 0);
  m.embeddings = nn::Parameter("embeddings", c.at("embeddings"));
  m.W1 = nn::Parameter("W1", c.at("W1"));
  m.b1 = nn::Parameter("b1", c.at("b1"));
  m.W2 = nn::Parameter("W2", c.at("W2"));
  m.b2 = nn::Parameter("b2", c.at("b2"));
  if (c.meta.value("has_mix", false)) {
    ScalarMix mix;
    mix.logits = nn::Parameter("mix_logits", c.at("mix_logits"));
    m.mix = std::move(mix);
  }
  std::ifstream vocab_in(path + ".vocab", std::ios::binary);
  if (!vocab_in) throw std::runtime_error("load_dan: missing vocabulary sidecar " + path + ".vocab");
  std::string line;
  while (std::getline(vocab_in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    m.vocab_index.emplace(line, static_cast<std::int32_t>(m.vocab.size()));
    m.vocab.push_back(line);
  }
  return m;
}

}  // namespace vampire::dan
