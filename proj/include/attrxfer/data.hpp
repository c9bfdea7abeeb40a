#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "attrxfer/common.hpp"

namespace attrxfer {

// Reserved vocabulary ids. Corpus tokens never map onto these.
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kReserved = 4;

class Vocab {
 public:
  Vocab();

  // Token gets an id if absent and not a reserved surface form.
  int add(const std::string& token);
  int lookup(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  std::size_t size() const { return id_to_token_.size(); }
  bool contains(const std::string& token) const {
    return token_to_id_.count(token) > 0;
  }

  std::vector<int> encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  // File format: one token per line, line k holds the token with id k + 4.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  std::uint64_t hash() const;

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

struct Sentence {
  std::vector<std::string> words;
  std::vector<int> ids;  // filled by apply_vocab
  int label = 0;         // attribute value, 0 or 1
  std::string raw;

  std::size_t length() const { return words.size(); }
};

struct Corpus {
  std::vector<Sentence> sentences;
  std::size_t count0 = 0;  // sentences with label 0
  std::size_t count1 = 0;

  std::size_t size() const { return sentences.size(); }
  void push(Sentence s);
  void append(const Corpus& other);
};

struct LoadReport {
  std::size_t loaded = 0;
  std::size_t skipped_empty = 0;
  std::size_t truncated = 0;
};

// One lowercase whitespace-tokenized sentence per line. Empty lines are
// skipped; lines longer than max_len are truncated and counted in the report.
Corpus load_corpus(const std::filesystem::path& path, int label,
                   std::size_t max_len = 20, LoadReport* report = nullptr);

// Tokens with frequency >= min_count across all given corpora get ids.
Vocab build_vocab(const std::vector<const Corpus*>& corpora,
                  std::size_t min_count);

// Fills Sentence::ids (UNK for out-of-vocab tokens).
void apply_vocab(Corpus& corpus, const Vocab& vocab);

// Padded mini-batch. mask[k*cols + t] is 1 iff t < lengths[k].
struct Batch {
  std::size_t rows = 0, cols = 0;
  std::vector<int> ids;       // rows*cols, PAD in padded positions
  std::vector<double> mask;   // rows*cols, 0/1
  std::vector<int> labels;    // per row
  std::vector<int> lengths;   // per row

  int id(std::size_t k, std::size_t t) const { return ids[k * cols + t]; }
  std::vector<int> row_tokens(std::size_t k) const;
};

Batch make_batch(const std::vector<const Sentence*>& sentences);
Batch batch_of_one(const std::vector<int>& ids, int label);

// Seeded shuffle, then fixed-size batches; the final partial batch is kept.
std::vector<Batch> make_batches(const Corpus& corpus, std::size_t batch_size,
                                std::uint64_t seed);

class NounLexicon {
 public:
  NounLexicon() = default;
  explicit NounLexicon(std::vector<std::string> tokens);
  static NounLexicon load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool contains(const std::string& token) const {
    return tokens_.count(token) > 0;
  }
  std::size_t size() const { return tokens_.size(); }

 private:
  std::unordered_set<std::string> tokens_;
};

// Positions r where the surface token is in the lexicon.
std::vector<std::size_t> nouns_of(const Sentence& sentence,
                                  const NounLexicon& lex);

}  // namespace attrxfer
