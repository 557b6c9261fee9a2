#ifndef VAMPIRE_COHERENCE_HPP_
#define VAMPIRE_COHERENCE_HPP_

#include <cstdint>
#include <optional>
#include <vector>

#include "vampire/corpus.hpp"

namespace vampire::coherence {

// Document-level binary co-occurrence over a reference corpus: a token counts
// once per document. Pair frequencies are computed by intersecting the sorted
// per-token posting lists, so only the pairs that are actually scored cost
// anything.
struct CooccurrenceStats {
  std::int64_t total_docs = 0;
  std::vector<std::vector<std::int32_t>> postings;  // token id -> sorted doc ids

  std::int64_t doc_freq(std::int32_t token) const;
  std::int64_t pair_freq(std::int32_t a, std::int32_t b) const;
};

CooccurrenceStats build_stats(const std::vector<corpus::Document>& ref_docs,
                              const corpus::Vocabulary& vocab);

// NPMI of one pair in [-1, 1]. Zero joint probability maps to the -1 limit;
// a pair present in every document maps to +1. Returns nullopt (undefined)
// when either marginal is zero.
std::optional<double> npmi_pair(std::int32_t a, std::int32_t b, const CooccurrenceStats& stats);

// Mean NPMI over all unordered defined pairs of the topic's words; undefined
// pairs are excluded from both numerator and denominator. Returns nullopt
// when every pair is undefined.
std::optional<double> npmi_topic(const std::vector<std::int32_t>& top_words,
                                 const CooccurrenceStats& stats);

// Mean over defined topic NPMIs. Throws when every topic is undefined.
double npmi_global(const std::vector<std::vector<std::int32_t>>& topics,
                   const CooccurrenceStats& stats);

}  // namespace vampire::coherence

#endif  // VAMPIRE_COHERENCE_HPP_
