#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "attrxfer/eval.hpp"
#include "doctest.h"

using namespace attrxfer;
namespace fs = std::filesystem;

namespace {

void zero_params(const ParamList& params) {
  for (const NamedParam& p : params) {
    Tensor t = p.tensor;
    std::fill(t.raw_value().begin(), t.raw_value().end(), 0.0);
  }
}

void set_param(const ParamList& params, const std::string& name,
               std::vector<double> vals) {
  for (const NamedParam& p : params)
    if (p.name == name) {
      Tensor t = p.tensor;
      REQUIRE(t.raw_value().size() == vals.size());
      t.raw_value() = std::move(vals);
      return;
    }
  FAIL("no param named ", name);
}

Sentence sent(std::vector<std::string> words, int label = 0) {
  Sentence s;
  s.words = std::move(words);
  s.label = label;
  return s;
}

// label 1 sentences say "good", label 0 sentences say "bad"
Corpus separable_corpus(Vocab& vocab) {
  const std::vector<std::string> subjects = {"food",  "place", "service",
                                             "staff", "pizza", "coffee"};
  const std::vector<std::string> tails = {"here", "today", "overall", "indeed"};
  Corpus c;
  for (int i = 0; i < 40; ++i) {
    Sentence s;
    s.words = {"the", subjects[i % subjects.size()],
               i % 2 ? "good" : "bad", tails[i % tails.size()]};
    s.label = i % 2;
    c.push(std::move(s));
  }
  for (const auto& s : c.sentences)
    for (const auto& w : s.words) vocab.add(w);
  apply_vocab(c, vocab);
  return c;
}

fs::path tmp_dir() {
  fs::path d = fs::temp_directory_path() / "attrxfer_eval_tests";
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("perplexity of rigged language models") {
  const std::size_t V = 4;
  Rng rng(1);
  RnnLm lm(V, 3, 3, rng);
  zero_params(lm.params());
  // all-zero logits: uniform next-token distribution, perplexity is exactly V
  CHECK(perplexity({{3}, {3, 3}}, lm) == doctest::Approx(4.0).epsilon(1e-9));

  // constant output bias (0, 0, ln2, ln2): every target in {2,3} has mass 1/3
  set_param(lm.params(), "out.b", {0.0, 0.0, std::log(2.0), std::log(2.0)});
  CHECK(perplexity({{3}}, lm) == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(perplexity({{3, 3, 3}}, lm) == doctest::Approx(3.0).epsilon(1e-9));

  // token-weighted mean is order independent
  const std::vector<std::vector<int>> ab = {{3, 3}, {2}};
  const std::vector<std::vector<int>> ba = {{2}, {3, 3}};
  CHECK(perplexity(ab, lm) == doctest::Approx(perplexity(ba, lm)).epsilon(1e-12));

  CHECK_THROWS_AS(perplexity({}, lm), DataError);
}

TEST_CASE("label prediction ties and empty input") {
  NetConfig ncfg;
  ncfg.vocab_size = 6;
  ncfg.cls_embed_dim = 4;
  ncfg.cls_feature_maps = 2;
  ncfg.cls_widths = {2, 3};
  Rng rng(2);
  TextCnn cls(ncfg, rng);
  CHECK(predict_label(cls, {}) == predict_label(cls, {kPad}));

  zero_params(cls.params());
  CHECK(predict_label(cls, {4, 5}) == 0);  // exact tie breaks toward 0

  set_param(cls.params(), "fc.b", {0.0, 5.0});
  CHECK(predict_label(cls, {4, 5}) == 1);
  const std::vector<std::pair<std::vector<int>, int>> pairs = {
      {{4}, 1}, {{5}, 1}, {{4, 5}, 1}, {{5, 4}, 0}};
  CHECK(sentiment_accuracy(pairs, cls) == doctest::Approx(75.0).epsilon(1e-12));
  CHECK_THROWS_AS(sentiment_accuracy({}, cls), DataError);
}

TEST_CASE("content preservation counts noun overlap") {
  NounLexicon lex({"food", "burger", "restaurant", "facilities", "stores"});
  std::vector<std::pair<Sentence, Sentence>> pairs = {
      {sent({"their", "food", "was", "definitely", "delicious"}),
       sent({"their", "food", "was", "never", "disgusting"})},
      {sent({"love", "the", "southwestern", "burger"}),
       sent({"avoid", "the", "grease", "burger"})},
      {sent({"restaurant", "is", "romantic", "and", "quiet"}),
       sent({"restaurant", "is", "shame", "and", "unprofessional"})},
      {sent({"the", "facilities", "are", "amazing"}),
       sent({"the", "facilities", "are", "ridiculous"})},
      {sent({"sorry", "they", "closed", "so", "many", "stores"}),
       sent({"amazing", "they", "had", "so", "many", "stores"})},
      {sent({"these", "people", "will", "try", "to", "screw", "you", "over"}),
       sent({"these", "people", "will", "try", "to", "thank", "you", "special"})}};
  CHECK(content_preservation(pairs, lex) == doctest::Approx(100.0).epsilon(1e-12));

  // dropping the noun loses the pair
  pairs.push_back({sent({"their", "food", "was", "definitely", "delicious"}),
                   sent({"there", "was", "so", "not", "spectacular"})});
  CHECK(content_preservation(pairs, lex) ==
        doctest::Approx(100.0 * 6.0 / 7.0).epsilon(1e-12));

  const std::vector<std::pair<Sentence, Sentence>> half = {
      {sent({"food"}), sent({"food"})}, {sent({"food"}), sent({"fine"})}};
  CHECK(content_preservation(half, lex) == doctest::Approx(50.0).epsilon(1e-12));
  CHECK_THROWS_AS(content_preservation({}, lex), DataError);
}

TEST_CASE("oracle training separates a keyword corpus") {
  Vocab vocab;
  Corpus corpus = separable_corpus(vocab);
  OracleTrainConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-2;
  cfg.max_steps = 150;
  cfg.embed_dim = 8;
  cfg.feature_maps = 4;
  OracleResult res = train_oracle(corpus, cfg);
  CHECK(res.heldout_accuracy >= 99.0);
  CHECK(classifier_accuracy(res.cls, corpus) >= 99.0);

  // deterministic: a second run lands on bitwise-identical parameters
  OracleResult res2 = train_oracle(corpus, cfg);
  const ParamList a = res.cls.params();
  const ParamList b = res2.cls.params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a[i].tensor.value() == b[i].tensor.value());

  Corpus one_label;
  one_label.push(corpus.sentences[0]);
  CHECK_THROWS_AS(train_oracle(one_label, cfg), DataError);
  OracleTrainConfig unset;
  CHECK_THROWS_AS(train_oracle(corpus, unset), ConfigError);
  CHECK_THROWS_AS(classifier_accuracy(res.cls, Corpus{}), DataError);
}

TEST_CASE("language model memorizes a repeated sentence") {
  Vocab vocab;
  for (const char* w : {"the", "food", "was", "good"}) vocab.add(w);
  Corpus corpus;
  for (int i = 0; i < 30; ++i) {
    Sentence s;
    s.words = {"the", "food", "was", "good"};
    s.label = 1;
    corpus.push(std::move(s));
  }
  apply_vocab(corpus, vocab);
  LmTrainConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-2;
  cfg.max_steps = 300;
  cfg.embed_dim = 8;
  cfg.hidden_dim = 12;
  LmResult res = train_lm(corpus, cfg);
  CHECK(res.heldout_perplexity < 1.3);
  CHECK_THROWS_AS(train_lm(Corpus{}, cfg), DataError);
}

TEST_CASE("identity transfer evaluates against the oracle") {
  Vocab vocab;
  Corpus corpus = separable_corpus(vocab);
  OracleTrainConfig ocfg;
  ocfg.vocab_size = vocab.size();
  ocfg.batch_size = 8;
  ocfg.learning_rate = 1e-2;
  ocfg.max_steps = 150;
  ocfg.embed_dim = 8;
  ocfg.feature_maps = 4;
  OracleResult oracle = train_oracle(corpus, ocfg);

  Rng rng(3);
  RnnLm lm(vocab.size(), 3, 3, rng);
  zero_params(lm.params());  // uniform model: perplexity is exactly |V|
  NounLexicon lex({"food", "place", "service", "staff", "pizza", "coffee"});

  std::vector<EvalPair> out;
  EvalReport r = evaluate(identity_transfer_fn(), corpus, oracle.cls, lm, lex,
                          vocab, &out);
  CHECK(r.pairs == corpus.size());
  CHECK(r.content_preservation == doctest::Approx(100.0).epsilon(1e-12));
  const double acc = classifier_accuracy(oracle.cls, corpus);
  CHECK(r.sentiment_accuracy == doctest::Approx(100.0 - acc).epsilon(1e-9));
  CHECK(r.perplexity ==
        doctest::Approx(static_cast<double>(vocab.size())).epsilon(1e-9));
  REQUIRE(out.size() == corpus.size());
  CHECK(out[0].transferred_words == corpus.sentences[0].words);
  CHECK(out[0].target_label == 1 - corpus.sentences[0].label);

  CHECK_THROWS_AS(
      evaluate(identity_transfer_fn(), Corpus{}, oracle.cls, lm, lex, vocab),
      DataError);

  // report and pair files
  const fs::path rp = tmp_dir() / "report.txt";
  write_report(rp, r);
  const std::string text = read_text_file(rp);
  CHECK(text.find("sentiment_accuracy=" + fmt_g17(r.sentiment_accuracy)) !=
        std::string::npos);
  CHECK(text.find("pairs=40") != std::string::npos);
  const fs::path pp = tmp_dir() / "pairs.tsv";
  write_pairs(pp, out);
  std::ifstream in(pp);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    CHECK(std::count(line.begin(), line.end(), '\t') == 3);
    ++lines;
  }
  CHECK(lines == out.size());
  CHECK(format_report_table(r).find("sentiment") != std::string::npos);
}

TEST_CASE("checkpoint glue rebuilds identical networks") {
  Vocab vocab;
  for (const char* w : {"alpha", "beta", "gamma", "delta"}) vocab.add(w);

  NetConfig ncfg;
  ncfg.vocab_size = vocab.size();
  ncfg.embed_dim = 6;
  ncfg.attr_dim = 3;
  ncfg.hidden_dim = 5;
  ncfg.cls_embed_dim = 4;
  ncfg.cls_feature_maps = 2;
  ncfg.cls_widths = {2, 3};
  Rng rng(9);
  EncoderDecoder model(ncfg, rng);
  TextCnn cls(ncfg, rng);

  const fs::path p = tmp_dir() / "xfer.ckpt";
  checkpoint_of(model, cls, vocab.hash()).save(p.string());
  Checkpoint ck = Checkpoint::load(p.string());
  CHECK_NOTHROW(check_vocab_hash(ck, vocab, "test"));
  TransferModel tm = transfer_model_from(ck);

  Sentence s = sent({"alpha", "gamma", "beta"}, 0);
  s.ids = vocab.encode(s.words);
  TransferFn f1 = greedy_transfer_fn(model, 8);
  TransferFn f2 = greedy_transfer_fn(tm.model, 8);
  CHECK(f1(s, 1) == f2(s, 1));

  Rng lr(4);
  RnnLm lm(vocab.size(), 4, 4, lr);
  const fs::path lp = tmp_dir() / "lm.ckpt";
  checkpoint_of(lm, vocab.hash()).save(lp.string());
  RnnLm lm2 = lm_from(Checkpoint::load(lp.string()));
  const std::vector<std::vector<int>> probe = {{4, 5}, {6}};
  CHECK(perplexity(probe, lm) == perplexity(probe, lm2));

  const fs::path cp = tmp_dir() / "cls.ckpt";
  checkpoint_of(cls, vocab.hash()).save(cp.string());
  TextCnn cls2 = classifier_from(Checkpoint::load(cp.string()));
  CHECK(predict_label(cls, {4, 6}) == predict_label(cls2, {4, 6}));

  CHECK_THROWS_AS(classifier_from(ck), IoError);
  CHECK_THROWS_AS(lm_from(ck), IoError);
  CHECK_THROWS_AS(transfer_model_from(Checkpoint::load(cp.string())), IoError);
}
