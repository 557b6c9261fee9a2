#include "vampire/coherence.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace vampire::coherence {

std::int64_t CooccurrenceStats::doc_freq(std::int32_t token) const {
  if (token < 0 || static_cast<std::size_t>(token) >= postings.size()) return 0;
  return static_cast<std::int64_t>(postings[static_cast<std::size_t>(token)].size());
}

std::int64_t CooccurrenceStats::pair_freq(std::int32_t a, std::int32_t b) const {
  if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= postings.size() ||
      static_cast<std::size_t>(b) >= postings.size()) {
    return 0;
  }
  const auto& pa = postings[static_cast<std::size_t>(a)];
  const auto& pb = postings[static_cast<std::size_t>(b)];
  std::int64_t count = 0;
  std::size_t i = 0, j = 0;
  while (i < pa.size() && j < pb.size()) {
    if (pa[i] < pb[j]) {
      ++i;
    } else if (pb[j] < pa[i]) {
      ++j;
    } else {
      ++count;
      ++i;
      ++j;
    }
  }
  return count;
}

CooccurrenceStats build_stats(const std::vector<corpus::Document>& ref_docs,
                              const corpus::Vocabulary& vocab) {
  if (ref_docs.empty()) throw std::invalid_argument("build_stats: reference corpus is empty");
  CooccurrenceStats stats;
  stats.total_docs = static_cast<std::int64_t>(ref_docs.size());
  stats.postings.resize(static_cast<std::size_t>(vocab.size()));
  for (std::size_t d = 0; d < ref_docs.size(); ++d) {
    std::set<std::int32_t> seen;
    for (const auto& tok : ref_docs[d].tokens) {
      if (auto id = vocab.id_of(tok)) seen.insert(*id);
    }
    for (std::int32_t id : seen) {
      stats.postings[static_cast<std::size_t>(id)].push_back(static_cast<std::int32_t>(d));
    }
  }
  return stats;
}

std::optional<double> npmi_pair(std::int32_t a, std::int32_t b, const CooccurrenceStats& stats) {
  if (a == b) throw std::invalid_argument("npmi_pair: identical tokens");
  const auto d = static_cast<double>(stats.total_docs);
  const std::int64_t fa = stats.doc_freq(a);
  const std::int64_t fb = stats.doc_freq(b);
  if (fa == 0 || fb == 0) return std::nullopt;
  const std::int64_t fab = stats.pair_freq(a, b);
  if (fab == 0) return -1.0;
  if (fab == stats.total_docs) return 1.0;  // P(a,b)=1 forces P(a)=P(b)=1; limit is +1
  const double p_ab = static_cast<double>(fab) / d;
  const double p_a = static_cast<double>(fa) / d;
  const double p_b = static_cast<double>(fb) / d;
  return std::log(p_ab / (p_a * p_b)) / -std::log(p_ab);
}

std::optional<double> npmi_topic(const std::vector<std::int32_t>& top_words,
                                 const CooccurrenceStats& stats) {
  if (top_words.size() < 2) throw std::invalid_argument("npmi_topic: need at least two words");
  double sum = 0.0;
  std::int64_t defined = 0;
  for (std::size_t i = 0; i < top_words.size(); ++i) {
    for (std::size_t j = i + 1; j < top_words.size(); ++j) {
      if (auto v = npmi_pair(top_words[i], top_words[j], stats)) {
        sum += *v;
        ++defined;
      }
    }
  }
  if (defined == 0) return std::nullopt;
  return sum / static_cast<double>(defined);
}

double npmi_global(const std::vector<std::vector<std::int32_t>>& topics,
                   const CooccurrenceStats& stats) {
  if (topics.empty()) throw std::invalid_argument("npmi_global: no topics");
  double sum = 0.0;
  std::int64_t defined = 0;
  for (const auto& topic : topics) {
    if (auto v = npmi_topic(topic, stats)) {
      sum += *v;
      ++defined;
    }
  }
  if (defined == 0) throw std::runtime_error("npmi_global: every topic is undefined");
  return sum / static_cast<double>(defined);
}

}  // namespace vampire::coherence
