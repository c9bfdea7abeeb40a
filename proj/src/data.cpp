#include "attrxfer/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace attrxfer {

namespace {
const char* kReservedTokens[kReserved] = {"<pad>", "<bos>", "<eos>", "<unk>"};

bool is_reserved_surface(const std::string& t) {
  for (const char* r : kReservedTokens)
    if (t == r) return true;
  return false;
}
}  // namespace

Vocab::Vocab() {
  for (int i = 0; i < kReserved; ++i) {
    id_to_token_.emplace_back(kReservedTokens[i]);
    token_to_id_[kReservedTokens[i]] = i;
  }
}

int Vocab::add(const std::string& token) {
  if (is_reserved_surface(token)) return kUnk;
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  const int id = static_cast<int>(id_to_token_.size());
  id_to_token_.push_back(token);
  token_to_id_[token] = id;
  return id;
}

int Vocab::lookup(const std::string& token) const {
  auto it = token_to_id_.find(token);
  if (it == token_to_id_.end() || is_reserved_surface(token)) return kUnk;
  return it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
    throw DataError("vocab: id " + std::to_string(id) + " out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(lookup(w));
  return out;
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(token(id));
  return out;
}

void Vocab::save(const std::filesystem::path& path) const {
  atomic_write(path, [this](std::ostream& out) {
    for (std::size_t i = kReserved; i < id_to_token_.size(); ++i)
      out << id_to_token_[i] << '\n';
  });
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocab file " + path.string());
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    v.add(line);
  }
  return v;
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = kReserved; i < id_to_token_.size(); ++i) {
    h = fnv1a64(id_to_token_[i], h);
    h = fnv1a64("\n", 1, h);
  }
  return h;
}

void Corpus::push(Sentence s) {
  if (s.label == 0)
    ++count0;
  else
    ++count1;
  sentences.push_back(std::move(s));
}

void Corpus::append(const Corpus& other) {
  for (const auto& s : other.sentences) push(s);
}

Corpus load_corpus(const std::filesystem::path& path, int label,
                   std::size_t max_len, LoadReport* report) {
  if (label != 0 && label != 1)
    throw DataError("load_corpus: label must be 0 or 1");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file " + path.string());
  Corpus corpus;
  LoadReport rep;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    Sentence s;
    s.raw = line;
    s.label = label;
    std::string tok;
    while (ls >> tok) s.words.push_back(tok);
    if (s.words.empty()) {
      ++rep.skipped_empty;
      continue;
    }
    if (s.words.size() > max_len) {
      s.words.resize(max_len);
      ++rep.truncated;
    }
    ++rep.loaded;
    corpus.push(std::move(s));
  }
  if (corpus.size() == 0)
    throw DataError("empty corpus: " + path.string());
  if (report) *report = rep;
  return corpus;
}

Vocab build_vocab(const std::vector<const Corpus*>& corpora,
                  std::size_t min_count) {
  if (corpora.empty()) throw DataError("build_vocab: no corpora");
  // first-appearance order keeps ids reproducible
  std::unordered_map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  for (const Corpus* c : corpora)
    for (const auto& s : c->sentences)
      for (const auto& w : s.words) {
        auto [it, inserted] = counts.try_emplace(w, 0);
        if (inserted) order.push_back(w);
        ++it->second;
      }
  Vocab v;
  for (const auto& w : order)
    if (counts[w] >= min_count) v.add(w);
  return v;
}

void apply_vocab(Corpus& corpus, const Vocab& vocab) {
  for (auto& s : corpus.sentences) s.ids = vocab.encode(s.words);
}

std::vector<int> Batch::row_tokens(std::size_t k) const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(lengths[k]));
  for (int t = 0; t < lengths[k]; ++t) out.push_back(id(k, static_cast<std::size_t>(t)));
  return out;
}

Batch make_batch(const std::vector<const Sentence*>& sentences) {
  if (sentences.empty()) throw DataError("make_batch: empty batch");
  Batch b;
  b.rows = sentences.size();
  b.cols = 0;
  for (const auto* s : sentences) b.cols = std::max(b.cols, s->ids.size());
  b.ids.assign(b.rows * b.cols, kPad);
  b.mask.assign(b.rows * b.cols, 0.0);
  for (std::size_t k = 0; k < b.rows; ++k) {
    const auto& ids = sentences[k]->ids;
    if (ids.empty())
      throw DataError("make_batch: sentence without ids (vocab not applied?)");
    b.labels.push_back(sentences[k]->label);
    b.lengths.push_back(static_cast<int>(ids.size()));
    for (std::size_t t = 0; t < ids.size(); ++t) {
      b.ids[k * b.cols + t] = ids[t];
      b.mask[k * b.cols + t] = 1.0;
    }
  }
  return b;
}

Batch batch_of_one(const std::vector<int>& ids, int label) {
  Sentence s;
  s.ids = ids;
  s.label = label;
  const Sentence* p = &s;
  return make_batch({p});
}

std::vector<Batch> make_batches(const Corpus& corpus, std::size_t batch_size,
                                std::uint64_t seed) {
  if (batch_size == 0) throw DataError("make_batches: batch_size must be >= 1");
  if (corpus.size() == 0) throw DataError("make_batches: empty corpus");
  std::vector<std::size_t> idx(corpus.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, idx.size());
    std::vector<const Sentence*> group;
    group.reserve(end - start);
    for (std::size_t i = start; i < end; ++i)
      group.push_back(&corpus.sentences[idx[i]]);
    out.push_back(make_batch(group));
  }
  return out;
}

NounLexicon::NounLexicon(std::vector<std::string> tokens) {
  for (auto& t : tokens) tokens_.insert(std::move(t));
}

NounLexicon NounLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    if (ls >> tok) tokens.push_back(tok);
  }
  return NounLexicon(std::move(tokens));
}

void NounLexicon::save(const std::filesystem::path& path) const {
  std::vector<std::string> sorted(tokens_.begin(), tokens_.end());
  std::sort(sorted.begin(), sorted.end());
  atomic_write(path, [&sorted](std::ostream& out) {
    for (const auto& t : sorted) out << t << '\n';
  });
}

std::vector<std::size_t> nouns_of(const Sentence& sentence,
                                  const NounLexicon& lex) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < sentence.words.size(); ++r)
    if (lex.contains(sentence.words[r])) out.push_back(r);
  return out;
}

}  // namespace attrxfer
