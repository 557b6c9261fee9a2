#include "vampire/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "vampire/serialize.hpp"

namespace vampire::corpus {

namespace {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// UTF-8 and character classes.
//
// ASCII is classified exactly. Beyond ASCII we cover the common punctuation,
// symbol, digit, and whitespace blocks rather than the full Unicode tables;
// the tokenizer is rule-based and targets English-language corpora.
// ---------------------------------------------------------------------------

struct CpRange {
  char32_t lo, hi;
};

bool in_ranges(char32_t c, const CpRange* ranges, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (c >= ranges[i].lo && c <= ranges[i].hi) return true;
  }
  return false;
}

bool is_space_cp(char32_t c) {
  if (c == U' ' || (c >= 0x09 && c <= 0x0D)) return true;
  static const CpRange kSpaces[] = {
      {0x0085, 0x0085}, {0x00A0, 0x00A0}, {0x1680, 0x1680}, {0x2000, 0x200A},
      {0x2028, 0x2029}, {0x202F, 0x202F}, {0x205F, 0x205F}, {0x3000, 0x3000},
  };
  return in_ranges(c, kSpaces, std::size(kSpaces));
}

bool is_digit_cp(char32_t c) {
  if (c >= U'0' && c <= U'9') return true;
  static const CpRange kDigits[] = {
      {0x0660, 0x0669}, {0x06F0, 0x06F9}, {0x0966, 0x096F}, {0x09E6, 0x09EF},
      {0x0A66, 0x0A6F}, {0x0AE6, 0x0AEF}, {0x0B66, 0x0B6F}, {0x0BE6, 0x0BEF},
      {0x0C66, 0x0C6F}, {0x0CE6, 0x0CEF}, {0x0D66, 0x0D6F}, {0x0E50, 0x0E59},
      {0x0ED0, 0x0ED9}, {0x0F20, 0x0F29}, {0x1040, 0x1049}, {0x17E0, 0x17E9},
      {0x1810, 0x1819}, {0xFF10, 0xFF19},
  };
  return in_ranges(c, kDigits, std::size(kDigits));
}

bool is_punct_or_symbol_cp(char32_t c) {
  if (c < 0x80) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
           (c >= 0x7B && c <= 0x7E);
  }
  static const CpRange kPunct[] = {
      {0x00A1, 0x00A9}, {0x00AB, 0x00B1}, {0x00B4, 0x00B4}, {0x00B6, 0x00B8},
      {0x00BB, 0x00BB}, {0x00BF, 0x00BF}, {0x00D7, 0x00D7}, {0x00F7, 0x00F7},
      {0x02B9, 0x02DF}, {0x2010, 0x2027}, {0x2030, 0x205E}, {0x20A0, 0x20CF},
      {0x2100, 0x214F}, {0x2190, 0x2BFF}, {0x2E00, 0x2E7F}, {0x3001, 0x303F},
      {0xFE30, 0xFE4F}, {0xFF01, 0xFF0F}, {0xFF1A, 0xFF20}, {0xFF3B, 0xFF40},
      {0xFF5B, 0xFF65}, {0x1F000, 0x1FAFF},
  };
  return in_ranges(c, kPunct, std::size(kPunct));
}

bool is_token_splitter_cp(char32_t c) {
  // hyphens and apostrophes split tokens internally
  return c == U'-' || c == U'\'' || (c >= 0x2010 && c <= 0x2015) || c == 0x2018 || c == 0x2019 ||
         c == 0x02BC;
}

char32_t to_lower_cp(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 0x20;
  if ((c >= 0x00C0 && c <= 0x00D6) || (c >= 0x00D8 && c <= 0x00DE)) return c + 0x20;  // Latin-1
  if (c >= 0x0391 && c <= 0x03A9 && c != 0x03A2) return c + 0x20;                     // Greek
  if (c >= 0x0410 && c <= 0x042F) return c + 0x20;                                    // Cyrillic
  if (c >= 0x0400 && c <= 0x040F) return c + 0x50;
  return c;
}

std::vector<char32_t> decode_utf8(const std::string& s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  const auto n = s.size();
  while (i < n) {
    const unsigned char b0 = static_cast<unsigned char>(s[i]);
    char32_t cp = 0;
    std::size_t len = 1;
    if (b0 < 0x80) {
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      out.push_back(b0);  // stray continuation byte, pass through
      ++i;
      continue;
    }
    if (i + len > n) {
      out.push_back(b0);
      ++i;
      continue;
    }
    bool valid = true;
    for (std::size_t k = 1; k < len; ++k) {
      const unsigned char bk = static_cast<unsigned char>(s[i + k]);
      if ((bk & 0xC0) != 0x80) {
        valid = false;
        break;
      }
      cp = (cp << 6) | (bk & 0x3F);
    }
    if (!valid) {
      out.push_back(b0);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

void encode_utf8(char32_t c, std::string& out) {
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
}

std::string encode_range(const std::vector<char32_t>& cps, std::size_t lo, std::size_t hi) {
  std::string out;
  for (std::size_t i = lo; i < hi; ++i) encode_utf8(cps[i], out);
  return out;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::vector<char32_t> cps = decode_utf8(text);
  for (auto& c : cps) c = to_lower_cp(c);

  std::size_t i = 0;
  const std::size_t n = cps.size();
  while (i < n) {
    while (i < n && is_space_cp(cps[i])) ++i;
    std::size_t j = i;
    while (j < n && !is_space_cp(cps[j])) ++j;
    if (j > i) {
      // strip leading/trailing punctuation and symbols
      std::size_t lo = i, hi = j;
      while (lo < hi && is_punct_or_symbol_cp(cps[lo])) ++lo;
      while (hi > lo && is_punct_or_symbol_cp(cps[hi - 1])) --hi;
      // split the remainder on internal hyphens/apostrophes
      std::size_t start = lo;
      for (std::size_t k = lo; k <= hi; ++k) {
        if (k == hi || is_token_splitter_cp(cps[k])) {
          if (k > start) tokens.push_back(encode_range(cps, start, k));
          start = k + 1;
        }
      }
    }
    i = j;
  }
  return tokens;
}

bool is_word_excluded(const std::string& token) {
  const std::vector<char32_t> cps = decode_utf8(token);
  if (cps.size() < 3) return true;
  for (char32_t c : cps) {
    if (is_digit_cp(c) || is_punct_or_symbol_cp(c)) return true;
  }
  return false;
}

Vocabulary build_vocabulary(const std::vector<Document>& docs, std::int32_t size_limit,
                            const std::unordered_set<std::string>& stopwords) {
  if (size_limit <= 0) throw std::invalid_argument("build_vocabulary: size_limit must be > 0");
  std::unordered_map<std::string, std::int64_t> freq;
  for (const auto& doc : docs) {
    for (const auto& tok : doc.tokens) freq[tok] += 1;
  }
  std::vector<std::pair<std::string, std::int64_t>> eligible;
  eligible.reserve(freq.size());
  for (auto& [tok, count] : freq) {
    if (stopwords.count(tok) != 0 || is_word_excluded(tok)) continue;
    eligible.emplace_back(tok, count);
  }
  std::sort(eligible.begin(), eligible.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (eligible.size() > static_cast<std::size_t>(size_limit)) eligible.resize(size_limit);

  Vocabulary vocab;
  vocab.tokens.reserve(eligible.size());
  vocab.frequencies.reserve(eligible.size());
  for (std::size_t i = 0; i < eligible.size(); ++i) {
    vocab.tokens.push_back(eligible[i].first);
    vocab.frequencies.push_back(eligible[i].second);
    vocab.index.emplace(eligible[i].first, static_cast<std::int32_t>(i));
  }
  return vocab;
}

CountVector to_counts(const Document& doc, const Vocabulary& vocab, PreprocessStats* stats) {
  std::unordered_map<std::int32_t, std::int32_t> counts;
  for (const auto& tok : doc.tokens) {
    if (auto id = vocab.id_of(tok)) {
      counts[*id] += 1;
    } else if (stats != nullptr) {
      stats->oov_tokens += 1;
    }
  }
  CountVector cv;
  cv.entries.assign(counts.begin(), counts.end());
  std::sort(cv.entries.begin(), cv.entries.end());
  for (const auto& [id, c] : cv.entries) cv.total += c;
  if (cv.entries.empty() && stats != nullptr) stats->all_oov_documents += 1;
  return cv;
}

Document truncate_tokens(const Document& doc, std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("truncate_tokens: max_len must be > 0");
  if (doc.tokens.size() <= max_len) return doc;
  Document out = doc;
  out.tokens.resize(max_len);
  return out;
}

std::vector<Document> sample_labeled_subset(const std::vector<Document>& train, std::size_t n,
                                            std::uint64_t seed) {
  if (n > train.size()) {
    throw std::invalid_argument("sample_labeled_subset: requested " + std::to_string(n) +
                                " from a pool of " + std::to_string(train.size()));
  }
  std::vector<std::size_t> idx(train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(idx.size()) - 1));
    std::swap(idx[i], idx[j]);
  }
  std::vector<Document> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(train[idx[i]]);
  return out;
}

std::string Vocabulary::hash() const { return io::fnv1a_hex(tokens); }

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("Vocabulary::save: cannot open " + path);
  for (const auto& tok : tokens) out << tok << '\n';
  if (!out) throw std::runtime_error("Vocabulary::save: short write to " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("Vocabulary::load: cannot open " + path);
  Vocabulary vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    vocab.index.emplace(line, static_cast<std::int32_t>(vocab.tokens.size()));
    vocab.tokens.push_back(line);
  }
  return vocab;
}

namespace {

const char* const kSnowballStopwords[] = {
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours",
    "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself",
    "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "which",
    "who", "whom", "this", "that", "these", "those", "am", "is", "are", "was", "were", "be",
    "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing", "would",
    "should", "could", "ought", "i'm", "you're", "he's", "she's", "it's", "we're", "they're",
    "i've", "you've", "we've", "they've", "i'd", "you'd", "he'd", "she'd", "we'd", "they'd",
    "i'll", "you'll", "he'll", "she'll", "we'll", "they'll", "isn't", "aren't", "wasn't",
    "weren't", "hasn't", "haven't", "hadn't", "doesn't", "don't", "didn't", "won't",
    "wouldn't", "shan't", "shouldn't", "can't", "cannot", "couldn't", "mustn't", "let's",
    "that's", "who's", "what's", "here's", "there's", "when's", "where's", "why's", "how's",
    "a", "an", "the", "and", "but", "if", "or", "because", "as", "until", "while", "of", "at",
    "by", "for", "with", "about", "against", "between", "into", "through", "during", "before",
    "after", "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over",
    "under", "again", "further", "then", "once", "here", "there", "when", "where", "why",
    "how", "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no",
    "nor", "not", "only", "own", "same", "so", "than", "too", "very",
};

}  // namespace

const std::unordered_set<std::string>& snowball_stopwords() {
  static const std::unordered_set<std::string> words(std::begin(kSnowballStopwords),
                                                     std::end(kSnowballStopwords));
  return words;
}

std::unordered_set<std::string> load_stopwords(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_stopwords: cannot open " + path);
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.insert(line);
  }
  return words;
}

LabelMap LabelMap::from_names(std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  LabelMap map;
  map.names = std::move(names);
  for (std::size_t i = 0; i < map.names.size(); ++i) {
    map.ids.emplace(map.names[i], static_cast<std::int32_t>(i));
  }
  return map;
}

std::vector<RawRecord> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_jsonl: cannot open " + path);
  std::vector<RawRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      ++line_no;
      continue;
    }
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no + 1) +
                               ": invalid JSON: " + e.what());
    }
    if (!obj.contains("text") || !obj["text"].is_string()) {
      throw std::runtime_error(path + ":" + std::to_string(line_no + 1) +
                               ": missing required string field \"text\"");
    }
    RawRecord rec;
    rec.id = std::to_string(line_no);
    rec.text = obj["text"].get<std::string>();
    if (obj.contains("label") && !obj["label"].is_null()) {
      if (obj["label"].is_string()) {
        rec.label = obj["label"].get<std::string>();
      } else {
        rec.label = obj["label"].dump();
      }
    }
    records.push_back(std::move(rec));
    ++line_no;
  }
  return records;
}

LabelMap build_label_map(const std::vector<RawRecord>& records) {
  std::vector<std::string> names;
  for (const auto& rec : records) {
    if (rec.label) names.push_back(*rec.label);
  }
  return LabelMap::from_names(std::move(names));
}

std::vector<Document> make_documents(const std::vector<RawRecord>& records,
                                     const LabelMap* labels, PreprocessStats* stats) {
  std::vector<Document> docs;
  docs.reserve(records.size());
  for (const auto& rec : records) {
    Document doc;
    doc.id = rec.id;
    doc.tokens = tokenize(rec.text);
    if (doc.tokens.empty()) {
      doc.degenerate = true;
      if (stats != nullptr) stats->degenerate_documents += 1;
    }
    if (rec.label && labels != nullptr) {
      auto it = labels->ids.find(*rec.label);
      if (it == labels->ids.end()) {
        throw std::runtime_error("make_documents: label '" + *rec.label +
                                 "' is not in the label map (document " + rec.id + ")");
      }
      doc.label = it->second;
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

namespace {

void write_u32_le(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32_le(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

void write_count_cache(const std::string& path,
                       const std::vector<std::pair<std::string, CountVector>>& docs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_count_cache: cannot open " + path);
  for (const auto& [id, cv] : docs) {
    write_u32_le(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    write_u32_le(out, static_cast<std::uint32_t>(cv.entries.size()));
    for (const auto& [token_id, count] : cv.entries) {
      write_u32_le(out, static_cast<std::uint32_t>(token_id));
      write_u32_le(out, static_cast<std::uint32_t>(count));
    }
  }
  if (!out) throw std::runtime_error("write_count_cache: short write to " + path);
}

std::vector<std::pair<std::string, CountVector>> read_count_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_count_cache: cannot open " + path);
  std::vector<std::pair<std::string, CountVector>> docs;
  while (true) {
    const std::uint32_t id_len = read_u32_le(in);
    if (in.eof()) break;
    if (!in) throw std::runtime_error("read_count_cache: truncated record in " + path);
    std::string id(id_len, '\0');
    in.read(id.data(), id_len);
    const std::uint32_t n_entries = read_u32_le(in);
    if (!in) throw std::runtime_error("read_count_cache: truncated record in " + path);
    CountVector cv;
    cv.entries.reserve(n_entries);
    for (std::uint32_t k = 0; k < n_entries; ++k) {
      const std::uint32_t token_id = read_u32_le(in);
      const std::uint32_t count = read_u32_le(in);
      cv.entries.emplace_back(static_cast<std::int32_t>(token_id),
                              static_cast<std::int32_t>(count));
      cv.total += count;
    }
    if (!in) throw std::runtime_error("read_count_cache: truncated record in " + path);
    docs.emplace_back(std::move(id), std::move(cv));
  }
  return docs;
}

}  // namespace vampire::corpus
