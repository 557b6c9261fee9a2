#ifndef VAMPIRE_CORPUS_HPP_
#define VAMPIRE_CORPUS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "vampire/types.hpp"

namespace vampire::corpus {

struct Document {
  std::string id;
  std::vector<std::string> tokens;
  std::optional<std::int32_t> label;
  bool degenerate = false;  // empty after preprocessing; kept, never dropped silently
};

// Token ids ordered by descending corpus frequency, ties lexicographic.
struct Vocabulary {
  std::vector<std::string> tokens;
  std::vector<std::int64_t> frequencies;  // empty when loaded from a file
  std::unordered_map<std::string, std::int32_t> index;

  std::int32_t size() const { return static_cast<std::int32_t>(tokens.size()); }
  std::optional<std::int32_t> id_of(const std::string& token) const {
    auto it = index.find(token);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }
  std::string hash() const;  // FNV-1a over the token list

  void save(const std::string& path) const;  // one token per line, line = id
  static Vocabulary load(const std::string& path);
};

// Sparse word counts over the restricted vocabulary, entries sorted by id.
struct CountVector {
  std::vector<std::pair<std::int32_t, std::int32_t>> entries;
  std::int64_t total = 0;

  bool degenerate() const { return total == 0; }
};

struct DatasetSplit {
  std::vector<Document> train_labeled;
  std::vector<Document> unlabeled;
  std::vector<Document> validation;
  std::vector<Document> test;
};

// Counters for events that must never pass silently.
struct PreprocessStats {
  std::int64_t degenerate_documents = 0;  // empty token list after tokenize
  std::int64_t oov_tokens = 0;            // tokens dropped from count vectors
  std::int64_t all_oov_documents = 0;     // count vectors that came out empty
};

// Lowercase, split on whitespace, strip leading/trailing punctuation, split
// internal hyphens/apostrophes, drop empties. Deterministic, rule-based.
std::vector<std::string> tokenize(const std::string& text);

// Character classes used by the tokenizer and the vocabulary filters
// (ASCII exact; common non-ASCII blocks, see corpus.cpp).
bool is_word_excluded(const std::string& token);  // len<3, digit, punct/symbol

Vocabulary build_vocabulary(const std::vector<Document>& docs, std::int32_t size_limit,
                            const std::unordered_set<std::string>& stopwords);

CountVector to_counts(const Document& doc, const Vocabulary& vocab,
                      PreprocessStats* stats = nullptr);

Document truncate_tokens(const Document& doc, std::size_t max_len = 400);

// Uniform sample without replacement, deterministic per seed.
std::vector<Document> sample_labeled_subset(const std::vector<Document>& train, std::size_t n,
                                            std::uint64_t seed);

// The Snowball English stopword list, compiled in; load_stopwords reads a
// newline-delimited file instead.
const std::unordered_set<std::string>& snowball_stopwords();
std::unordered_set<std::string> load_stopwords(const std::string& path);

// Maps label strings to contiguous ids, sorted lexicographically.
struct LabelMap {
  std::vector<std::string> names;
  std::unordered_map<std::string, std::int32_t> ids;

  std::int32_t size() const { return static_cast<std::int32_t>(names.size()); }
  static LabelMap from_names(std::vector<std::string> names);
};

// Newline-delimited JSON with fields "text" (required) and "label" (optional).
// Document ids are the 0-based line numbers unless the caller remaps them.
// When label_map is null, labels are left unset; otherwise unknown labels are
// an error unless grow is true (labels are collected, then sorted ids assigned
// by finalize_labels).
struct RawRecord {
  std::string id;
  std::string text;
  std::optional<std::string> label;
};

std::vector<RawRecord> read_jsonl(const std::string& path);

// Tokenize records into Documents; label resolution via the given map.
std::vector<Document> make_documents(const std::vector<RawRecord>& records,
                                     const LabelMap* labels, PreprocessStats* stats = nullptr);

// Collect the distinct labels of records, sorted lexicographically.
LabelMap build_label_map(const std::vector<RawRecord>& records);

// Count cache: per document, u32 id length + id bytes + u32 entry count +
// (u32 id, u32 count) little-endian pairs sorted by id.
void write_count_cache(const std::string& path,
                       const std::vector<std::pair<std::string, CountVector>>& docs);
std::vector<std::pair<std::string, CountVector>> read_count_cache(const std::string& path);

}  // namespace vampire::corpus

#endif  // VAMPIRE_CORPUS_HPP_
