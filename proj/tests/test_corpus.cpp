#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "vampire/corpus.hpp"

using namespace vampire;
using corpus::Document;

namespace {

Document doc(std::initializer_list<const char*> tokens) {
  Document d;
  for (const char* t : tokens) d.tokens.emplace_back(t);
  return d;
}

std::vector<Document> docs_of(std::initializer_list<std::initializer_list<const char*>> lists) {
  std::vector<Document> out;
  int i = 0;
  for (auto& l : lists) {
    Document d = doc(l);
    d.id = std::to_string(i++);
    out.push_back(std::move(d));
  }
  return out;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/vampire_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("tokenize: empty, punctuation splitting, case folding") {
  CHECK(corpus::tokenize("").empty());
  CHECK(corpus::tokenize("The cat-sat.") == std::vector<std::string>{"the", "cat", "sat"});
  CHECK(corpus::tokenize("A A a") == std::vector<std::string>{"a", "a", "a"});
}

TEST_CASE("tokenize: strips outer punctuation and splits apostrophes") {
  CHECK(corpus::tokenize("\"Hello,\" she said... (loudly)") ==
        std::vector<std::string>{"hello", "she", "said", "loudly"});
  CHECK(corpus::tokenize("don't STOP-me!") == std::vector<std::string>{"don", "t", "stop", "me"});
  CHECK(corpus::tokenize("a--b") == std::vector<std::string>{"a", "b"});
  CHECK(corpus::tokenize("...!!!").empty());
}

TEST_CASE("tokenize handles UTF-8 input") {
  // curly apostrophe splits, non-breaking space separates, Latin-1 folds case
  CHECK(corpus::tokenize("isn’t") == std::vector<std::string>{"isn", "t"});
  CHECK(corpus::tokenize("cafÉ bar") == std::vector<std::string>{"café", "bar"});
}

TEST_CASE("vocabulary excludes short tokens, digits, punctuation, stopwords") {
  auto docs = docs_of({{"ab", "c3po", "the", "walrus", "walrus", "co.uk"}});
  std::unordered_set<std::string> stop{"the"};
  auto vocab = corpus::build_vocabulary(docs, 10, stop);
  REQUIRE(vocab.size() == 1);
  CHECK(vocab.tokens[0] == "walrus");
  CHECK(vocab.frequencies[0] == 2);
}

TEST_CASE("vocabulary ties break lexicographically and limit is honored") {
  std::vector<Document> docs;
  for (int i = 0; i < 5; ++i) docs.push_back(doc({"dog", "cat"}));
  docs.push_back(doc({"emu"}));
  auto vocab = corpus::build_vocabulary(docs, 2, {});
  REQUIRE(vocab.size() == 2);
  CHECK(vocab.tokens[0] == "cat");
  CHECK(vocab.tokens[1] == "dog");

  // fewer eligible tokens than the limit: return them all
  auto small = corpus::build_vocabulary(docs, 50, {});
  CHECK(small.size() == 3);
}

TEST_CASE("vocabulary construction is insensitive to document permutation") {
  Rng rng(5);
  std::vector<Document> docs =
      docs_of({{"walrus", "otter"}, {"otter"}, {"badger", "walrus", "walrus"}, {"badger"}});
  auto base = corpus::build_vocabulary(docs, 10, {});
  for (int trial = 0; trial < 5; ++trial) {
    rng.shuffle(docs);
    auto again = corpus::build_vocabulary(docs, 10, {});
    CHECK(again.tokens == base.tokens);
    CHECK(again.frequencies == base.frequencies);
  }
  // idempotent
  CHECK(corpus::build_vocabulary(docs, 10, {}).tokens == base.tokens);
}

TEST_CASE("every vocabulary token passes the exclusion filters") {
  std::vector<Document> docs = docs_of({{"alpha", "be", "c-3", "gamma9", "the", "delta", "x"},
                                        {"alpha", "delta", "epsilon", "zeta", "..."}});
  auto vocab = corpus::build_vocabulary(docs, 100, corpus::snowball_stopwords());
  for (const auto& tok : vocab.tokens) {
    CHECK(!corpus::is_word_excluded(tok));
    CHECK(corpus::snowball_stopwords().count(tok) == 0);
  }
}

TEST_CASE("to_counts: direct counting, OOV handling, empty documents") {
  auto docs = docs_of({{"cat", "dog"}});
  auto vocab = corpus::build_vocabulary(docs, 10, {});
  const auto cat = *vocab.id_of("cat");
  const auto dog = *vocab.id_of("dog");

  corpus::PreprocessStats stats;
  auto cv = corpus::to_counts(doc({"dog", "dog", "cat"}), vocab, &stats);
  REQUIRE(cv.entries.size() == 2);
  CHECK(cv.total == 3);
  CHECK(cv.entries[0] == std::pair<std::int32_t, std::int32_t>{cat, 1});
  CHECK(cv.entries[1] == std::pair<std::int32_t, std::int32_t>{dog, 2});
  CHECK(stats.oov_tokens == 0);

  auto oov = corpus::to_counts(doc({"zzz"}), vocab, &stats);
  CHECK(oov.total == 0);
  CHECK(oov.degenerate());
  CHECK(stats.oov_tokens == 1);
  CHECK(stats.all_oov_documents == 1);

  auto empty = corpus::to_counts(doc({}), vocab, &stats);
  CHECK(empty.total == 0);
  CHECK(empty.degenerate());
}

TEST_CASE("to_counts total never exceeds the token count") {
  Rng rng(9);
  auto docs = docs_of({{"aaa", "bbb", "ccc", "ddd"}});
  auto vocab = corpus::build_vocabulary(docs, 3, {});
  const char* pool[] = {"aaa", "bbb", "ccc", "ddd", "eee"};
  for (int trial = 0; trial < 30; ++trial) {
    Document d;
    const auto len = rng.uniform_int(0, 12);
    for (int i = 0; i < len; ++i) d.tokens.push_back(pool[rng.uniform_int(0, 4)]);
    CHECK(corpus::to_counts(d, vocab).total <= static_cast<std::int64_t>(d.tokens.size()));
  }
}

TEST_CASE("truncate_tokens keeps the first max_len tokens only") {
  Document d;
  for (int i = 0; i < 500; ++i) d.tokens.push_back("tok" + std::to_string(i));
  auto t = corpus::truncate_tokens(d);
  REQUIRE(t.tokens.size() == 400);
  CHECK(t.tokens.front() == "tok0");
  CHECK(t.tokens.back() == "tok399");

  Document small;
  for (int i = 0; i < 10; ++i) small.tokens.push_back("x");
  CHECK(corpus::truncate_tokens(small).tokens.size() == 10);

  Document boundary;
  for (int i = 0; i < 400; ++i) boundary.tokens.push_back("x");
  CHECK(corpus::truncate_tokens(boundary).tokens.size() == 400);
}

TEST_CASE("sample_labeled_subset: determinism, seed sensitivity, bounds") {
  std::vector<Document> train;
  for (int i = 0; i < 500; ++i) {
    Document d;
    d.id = std::to_string(i);
    d.tokens = {"tok"};
    train.push_back(std::move(d));
  }

  auto full = corpus::sample_labeled_subset(train, train.size(), 1);
  CHECK(full.size() == train.size());

  auto a1 = corpus::sample_labeled_subset(train, 50, 7);
  auto a2 = corpus::sample_labeled_subset(train, 50, 7);
  REQUIRE(a1.size() == a2.size());
  for (std::size_t i = 0; i < a1.size(); ++i) CHECK(a1[i].id == a2[i].id);

  auto b = corpus::sample_labeled_subset(train, 50, 8);
  bool differs = false;
  for (std::size_t i = 0; i < a1.size(); ++i) differs |= a1[i].id != b[i].id;
  CHECK(differs);

  CHECK_THROWS_AS(corpus::sample_labeled_subset(train, 501, 1), std::invalid_argument);
}

TEST_CASE("jsonl reading and label mapping") {
  TempFile tf("docs.jsonl");
  {
    std::ofstream out(tf.path);
    out << R"({"text": "The walrus sat.", "label": "pos"})" << "\n";
    out << R"({"text": "No label here"})" << "\n";
    out << R"({"text": "Another one", "label": "neg"})" << "\n";
  }
  auto records = corpus::read_jsonl(tf.path);
  REQUIRE(records.size() == 3);
  CHECK(records[0].id == "0");
  CHECK(records[1].label == std::nullopt);

  auto labels = corpus::build_label_map(records);
  REQUIRE(labels.size() == 2);
  CHECK(labels.names[0] == "neg");  // sorted lexicographically
  CHECK(labels.names[1] == "pos");

  corpus::PreprocessStats stats;
  auto docs = corpus::make_documents(records, &labels, &stats);
  CHECK(docs[0].label == 1);
  CHECK(docs[1].label == std::nullopt);
  CHECK(docs[2].label == 0);
  CHECK(docs[0].tokens == std::vector<std::string>{"the", "walrus", "sat"});
}

TEST_CASE("jsonl errors: missing text, invalid JSON, missing file") {
  TempFile tf("bad.jsonl");
  {
    std::ofstream out(tf.path);
    out << R"({"label": "x"})" << "\n";
  }
  CHECK_THROWS_AS(corpus::read_jsonl(tf.path), std::runtime_error);
  {
    std::ofstream out(tf.path);
    out << "not json\n";
  }
  CHECK_THROWS_AS(corpus::read_jsonl(tf.path), std::runtime_error);
  CHECK_THROWS_AS(corpus::read_jsonl("/nonexistent/file.jsonl"), std::runtime_error);
}

TEST_CASE("degenerate documents are flagged and counted, never dropped") {
  TempFile tf("degenerate.jsonl");
  {
    std::ofstream out(tf.path);
    out << R"({"text": "..."})" << "\n";
    out << R"({"text": "real content"})" << "\n";
  }
  auto records = corpus::read_jsonl(tf.path);
  corpus::PreprocessStats stats;
  auto docs = corpus::make_documents(records, nullptr, &stats);
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].degenerate);
  CHECK(!docs[1].degenerate);
  CHECK(stats.degenerate_documents == 1);
}

TEST_CASE("vocabulary file round-trips through save/load") {
  TempFile tf("vocab.txt");
  auto docs = docs_of({{"walrus", "walrus", "otter", "badger"}});
  auto vocab = corpus::build_vocabulary(docs, 10, {});
  vocab.save(tf.path);
  auto loaded = corpus::Vocabulary::load(tf.path);
  CHECK(loaded.tokens == vocab.tokens);
  CHECK(loaded.hash() == vocab.hash());
  CHECK(*loaded.id_of("walrus") == *vocab.id_of("walrus"));
}

TEST_CASE("count cache round-trips") {
  TempFile tf("counts.bin");
  std::vector<std::pair<std::string, corpus::CountVector>> cache;
  corpus::CountVector a;
  a.entries = {{0, 2}, {3, 1}};
  a.total = 3;
  corpus::CountVector b;  // empty is representable
  cache.emplace_back("doc-a", a);
  cache.emplace_back("doc-b", b);
  corpus::write_count_cache(tf.path, cache);
  auto loaded = corpus::read_count_cache(tf.path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].first == "doc-a");
  CHECK(loaded[0].second.entries == a.entries);
  CHECK(loaded[0].second.total == 3);
  CHECK(loaded[1].second.degenerate());
}

TEST_CASE("snowball stopword list has the expected shape") {
  const auto& words = corpus::snowball_stopwords();
  CHECK(words.size() == 174);
  CHECK(words.count("the") == 1);
  CHECK(words.count("very") == 1);
  CHECK(words.count("walrus") == 0);
}
