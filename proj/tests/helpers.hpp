// Test-only fixtures: planted-topic synthetic corpora and small utilities.
#ifndef VAMPIRE_TESTS_HELPERS_HPP_
#define VAMPIRE_TESTS_HELPERS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "vampire/coherence.hpp"
#include "vampire/corpus.hpp"
#include "vampire/model.hpp"
#include "vampire/types.hpp"

namespace vampire::testing {

inline double gamma_sample(Rng& rng, double shape) {
  if (shape < 1.0) {
    double u = rng.uniform();
    while (u == 0.0) u = rng.uniform();
    return gamma_sample(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    const double x = rng.normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

inline Vec dirichlet_sample(Rng& rng, int k, double alpha) {
  Vec theta(k);
  for (int i = 0; i < k; ++i) theta[i] = gamma_sample(rng, alpha);
  const double total = theta.sum();
  return total > 0.0 ? Vec(theta / total) : Vec(Vec::Constant(k, 1.0 / k));
}

// Letter-only word codes so the vocabulary filters keep every word.
inline std::string planted_word(int i) {
  std::string w = "aaa";
  w[0] = static_cast<char>('a' + (i / 676) % 26);
  w[1] = static_cast<char>('a' + (i / 26) % 26);
  w[2] = static_cast<char>('a' + i % 26);
  return w;
}

// Mixture-of-unigrams generator: each topic concentrates most of its mass on
// ten signature words (sloped so the true top-10 is unambiguous) and spreads
// the rest uniformly. Documents draw a Dirichlet(alpha) topic mixture; the
// label is the dominant topic.
struct PlantedCorpus {
  int n_topics = 0;
  int vocab_size = 0;
  Mat true_topics;                              // [K x V] word distributions
  std::vector<std::vector<std::int32_t>> true_top10;
  std::vector<corpus::Document> docs;           // tokens + label
  std::vector<corpus::CountVector> counts;      // aligned with docs
  corpus::Vocabulary vocab;
  corpus::LabelMap labels;
};

inline PlantedCorpus make_planted_corpus(int n_docs, std::uint64_t seed, int n_topics = 5,
                                         int vocab_size = 200, double alpha = 0.1,
                                         int min_len = 15, int max_len = 60,
                                         double signature_mass = 0.8) {
  PlantedCorpus pc;
  pc.n_topics = n_topics;
  pc.vocab_size = vocab_size;

  for (int t = 0; t < vocab_size; ++t) {
    pc.vocab.tokens.push_back(planted_word(t));
    pc.vocab.index.emplace(planted_word(t), t);
  }
  {
    std::vector<std::string> names;
    for (int k = 0; k < n_topics; ++k) names.push_back("topic" + std::to_string(k));
    pc.labels = corpus::LabelMap::from_names(names);
  }

  pc.true_topics = Mat::Constant(n_topics, vocab_size,
                                 (1.0 - signature_mass) / static_cast<double>(vocab_size - 10));
  for (int k = 0; k < n_topics; ++k) {
    double slope_total = 0.0;
    for (int j = 0; j < 10; ++j) slope_total += std::pow(0.85, j);
    std::vector<std::int32_t> top;
    for (int j = 0; j < 10; ++j) {
      const int word = k * 10 + j;
      pc.true_topics(k, word) = signature_mass * std::pow(0.85, j) / slope_total;
      top.push_back(word);
    }
    pc.true_top10.push_back(std::move(top));
  }

  Rng rng(seed);
  for (int d = 0; d < n_docs; ++d) {
    const Vec theta = dirichlet_sample(rng, n_topics, alpha);
    Index dominant = 0;
    theta.maxCoeff(&dominant);
    Vec word_dist = Vec::Zero(vocab_size);
    for (int k = 0; k < n_topics; ++k) word_dist += theta[k] * pc.true_topics.row(k).transpose();

    // cumulative inverse sampling
    Vec cdf(vocab_size);
    double acc = 0.0;
    for (int v = 0; v < vocab_size; ++v) {
      acc += word_dist[v];
      cdf[v] = acc;
    }
    corpus::Document doc;
    doc.id = "synth" + std::to_string(d);
    doc.label = static_cast<std::int32_t>(dominant);
    const auto len = rng.uniform_int(min_len, max_len);
    for (int i = 0; i < len; ++i) {
      const double u = rng.uniform() * acc;
      const int v = static_cast<int>(
          std::lower_bound(cdf.data(), cdf.data() + vocab_size, u) - cdf.data());
      doc.tokens.push_back(planted_word(std::min(v, vocab_size - 1)));
    }
    pc.counts.push_back(corpus::to_counts(doc, pc.vocab));
    pc.docs.push_back(std::move(doc));
  }
  return pc;
}

inline PretrainData pretrain_data_from(const PlantedCorpus& pc, std::size_t train_begin,
                                       std::size_t train_end, std::size_t val_begin,
                                       std::size_t val_end) {
  PretrainData data;
  for (std::size_t i = train_begin; i < train_end; ++i) data.train.push_back(pc.counts[i]);
  std::vector<corpus::Document> val_docs(pc.docs.begin() + static_cast<std::ptrdiff_t>(val_begin),
                                         pc.docs.begin() + static_cast<std::ptrdiff_t>(val_end));
  for (std::size_t i = val_begin; i < val_end; ++i) data.validation.push_back(pc.counts[i]);
  data.val_stats = coherence::build_stats(val_docs, pc.vocab);
  data.background_log_freq = background_log_frequency(data.train, pc.vocab.size());
  data.vocab_hash = pc.vocab.hash();
  return data;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/vampire_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

inline std::string read_file_bytes(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (f == nullptr) return {};
  std::string bytes;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) bytes.append(buf, n);
  std::fclose(f);
  return bytes;
}

}  // namespace vampire::testing

#endif  // VAMPIRE_TESTS_HELPERS_HPP_
