// Acceptance gate: seven end-to-end checks, one PASS/FAIL line each.
// Run all with no arguments or a single one with --only N.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "attrxfer/eval.hpp"
#include "attrxfer/gradcheck.hpp"
#include "attrxfer/trainer.hpp"

using namespace attrxfer;
namespace fs = std::filesystem;

namespace {

fs::path work_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / "attrxfer_acceptance" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// ---------------------------------------------------------------------------
// 1: finite-difference gradient suite

bool criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<GradCheckResult> results = gradcheck_ops(1, 100);
  for (auto& r : gradcheck_losses(1, 3)) results.push_back(std::move(r));
  double worst_op = 0.0, worst_loss = 0.0;
  std::size_t ops = 0, losses = 0;
  bool ok = true;
  for (const auto& r : results) {
    ok = ok && r.ok();
    if (r.name.rfind("op.", 0) == 0) {
      ++ops;
      worst_op = std::max(worst_op, r.max_rel_err);
    } else {
      ++losses;
      worst_loss = std::max(worst_loss, r.max_rel_err);
    }
    if (!r.ok())
      std::printf("    %s max_rel_err %.3e tol %.0e\n", r.name.c_str(),
                  r.max_rel_err, r.tolerance);
  }
  std::printf("1 gradient-suite: %s — %zu ops (worst %.2e < 1e-4), "
              "%zu losses (worst %.2e < 1e-3), %.1fs\n",
              ok ? "PASS" : "FAIL", ops, worst_op, losses, worst_loss,
              seconds_since(t0));
  return ok;
}

// ---------------------------------------------------------------------------
// 2: one-hot soft paths match hard paths

bool criterion_one_hot() {
  NetConfig cfg;
  cfg.vocab_size = 17;
  cfg.embed_dim = 6;
  cfg.attr_dim = 3;
  cfg.hidden_dim = 5;
  cfg.cls_embed_dim = 5;
  cfg.cls_feature_maps = 2;
  Rng rng(41);
  EncoderDecoder model(cfg, rng);
  TextCnn cls(cfg, rng);
  Rng draws(99);
  double worst = 0.0;
  for (int c = 0; c < 50; ++c) {
    const std::size_t len = 1 + draws.index(5);
    std::vector<int> ids;
    for (std::size_t i = 0; i < len; ++i)
      ids.push_back(
          static_cast<int>(kReserved + draws.index(cfg.vocab_size - kReserved)));
    const int label = static_cast<int>(draws.index(2));
    Tape t;
    t.set_recording(false);
    Tensor hot = one_hot_rows(ids, cfg.vocab_size);
    SoftBatch soft = soft_batch_of_one(t, hot);
    EncodedBatch es = model.encode_soft(t, soft, {label});
    EncodedBatch eh = model.encode(t, batch_of_one(ids, label), {label});
    for (std::size_t j = 0; j < cfg.hidden_dim; ++j)
      worst = std::max(worst, std::abs(es.states.back().v(0, j) -
                                       eh.states.back().v(0, j)));
    Tensor ls = cls.logits_soft(t, hot);
    Tensor lt = cls.logits_tokens(t, ids);
    for (std::size_t j = 0; j < 2; ++j)
      worst = std::max(worst, std::abs(ls.v(j) - lt.v(j)));
  }
  const bool ok = worst < 1e-9;
  std::printf("2 one-hot-consistency: %s — 50 cases, max |soft - hard| %.2e\n",
              ok ? "PASS" : "FAIL", worst);
  return ok;
}

// ---------------------------------------------------------------------------
// 3: autoencoder reaches near-perfect teacher-forced reconstruction

double teacher_token_accuracy(const EncoderDecoder& model, const Corpus& corpus) {
  Tape t;
  t.set_recording(false);
  std::size_t hits = 0, total = 0;
  for (const Batch& b : make_batches(corpus, 16, 0)) {
    EncodedBatch enc = model.encode(t, b, b.labels);
    TeacherOut out = model.decode_teacher(t, enc, b.labels, b);
    for (std::size_t s = 0; s < out.step_logits.size(); ++s) {
      const Tensor& logits = out.step_logits[s];
      for (std::size_t r = 0; r < b.rows; ++r) {
        if (s >= out.targets[r].size()) continue;
        std::size_t best = 0;
        for (std::size_t v = 1; v < logits.cols(); ++v)
          if (logits.v(r, v) > logits.v(r, best)) best = v;
        hits += static_cast<int>(best) == out.targets[r][s];
        ++total;
      }
    }
    t.clear();
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

bool criterion_autoencoder() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = work_dir("autoencoder");
  // 50 sentences over a ~30-word vocabulary, 25 per attribute
  const std::vector<std::string> subjects = {"cat",  "dog",  "bird", "fish",
                                             "horse"};
  const std::vector<std::string> verbs = {"sees", "likes", "finds", "wants",
                                          "meets"};
  const std::vector<std::string> objects = {"apples",  "stones", "rivers",
                                            "shadows", "gardens"};
  {
    std::ofstream pos(dir / "pos.txt"), neg(dir / "neg.txt");
    int i = 0;
    for (const auto& s : subjects)
      for (const auto& v : verbs)
        for (const auto& o : objects) {
          if (i >= 50) break;
          ((i % 2) ? pos : neg) << "the " << s << ' ' << v << ' ' << o << '\n';
          ++i;
        }
  }
  Corpus pos = load_corpus(dir / "pos.txt", 1);
  Corpus neg = load_corpus(dir / "neg.txt", 0);
  Vocab vocab = build_vocab({&pos, &neg}, 1);
  vocab.save(dir / "vocab.txt");

  TrainConfig cfg;
  cfg.pos_train = (dir / "pos.txt").string();
  cfg.neg_train = (dir / "neg.txt").string();
  cfg.vocab_path = (dir / "vocab.txt").string();
  cfg.out_dir = (dir / "run").string();
  cfg.weights = LossWeights{1, 0, 0, 0, 0, 0};
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-2;
  cfg.max_steps = 1000;
  cfg.seed = 5;
  cfg.checkpoint_interval = 0;
  cfg.valid_interval = 0;
  cfg.embed_dim = 32;
  cfg.attr_dim = 8;
  cfg.hidden_dim = 48;
  cfg.cls_embed_dim = 16;
  cfg.cls_feature_maps = 4;
  TrainResult res = train(cfg);

  Corpus all = pos;
  all.append(neg);
  apply_vocab(all, vocab);
  TransferModel tm = transfer_model_from(Checkpoint::load(res.model_path));
  const double acc = teacher_token_accuracy(tm.model, all);
  const bool ok = acc >= 95.0 && vocab.size() <= 60;
  std::printf("3 autoencoder-sanity: %s — vocab %zu, %zu steps, "
              "teacher-forced token accuracy %.2f%% (need >= 95%%), %.0fs\n",
              ok ? "PASS" : "FAIL", vocab.size(), res.steps, acc,
              seconds_since(t0));
  return ok;
}

// ---------------------------------------------------------------------------
// 4: synthetic transfer: high attribute accuracy AND content preservation

const char* kNouns[30] = {
    "food",  "staff",   "room",    "price",   "music",  "service",
    "pizza", "coffee",  "burger",  "salad",   "bed",    "pool",
    "wine",  "cheese",  "bread",   "parking", "view",   "garden",
    "menu",  "dessert", "chicken", "soup",    "patio",  "bar",
    "steak", "juice",   "cake",    "lobby",   "shower", "sauce"};
const char* kPosWords[10] = {"good",  "great",    "fine",   "nice",  "super",
                             "tasty", "friendly", "lovely", "clean", "fresh"};
const char* kNegWords[10] = {"bad",   "awful", "poor",  "gross", "noisy",
                             "stale", "rude",  "dirty", "slow",  "cold"};
const char* kDets[3] = {"the", "my", "this"};
const char* kAdjs[10] = {"small", "big",  "old",   "new",  "red",
                         "blue",  "main", "front", "back", "second"};

void write_synthetic_corpus(const fs::path& dir) {
  Rng gen(42);
  auto write_split = [&](int label) {
    const char** pol = label == 1 ? kPosWords : kNegWords;
    const std::string base = label == 1 ? "pos" : "neg";
    std::ofstream tr(dir / (base + ".train.txt"));
    std::ofstream va(dir / (base + ".valid.txt"));
    std::ofstream te(dir / (base + ".test.txt"));
    for (int i = 0; i < 2000; ++i) {
      // noun phrase with an optional neutral adjective so the noun slot moves
      std::string np = kDets[gen.index(3)];
      if (gen.uniform() < 0.5) np += std::string(" ") + kAdjs[gen.index(10)];
      std::string line =
          np + " " + kNouns[gen.index(30)] + " is " + pol[gen.index(10)];
      (i < 1600 ? tr : i < 1800 ? va : te) << line << "\n";
    }
  };
  write_split(1);
  write_split(0);
  std::ofstream lx(dir / "lexicon.txt");
  for (const char* n : kNouns) lx << n << "\n";
}

bool criterion_synthetic_transfer() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = work_dir("synthetic");
  write_synthetic_corpus(dir);
  Corpus pos_train = load_corpus(dir / "pos.train.txt", 1);
  Corpus neg_train = load_corpus(dir / "neg.train.txt", 0);
  Vocab vocab = build_vocab({&pos_train, &neg_train}, 1);
  vocab.save(dir / "vocab.txt");

  TrainConfig cfg;
  cfg.pos_train = (dir / "pos.train.txt").string();
  cfg.neg_train = (dir / "neg.train.txt").string();
  cfg.pos_valid = (dir / "pos.valid.txt").string();
  cfg.neg_valid = (dir / "neg.valid.txt").string();
  cfg.vocab_path = (dir / "vocab.txt").string();
  cfg.lexicon_path = (dir / "lexicon.txt").string();
  cfg.out_dir = (dir / "run").string();
  cfg.weights = LossWeights{1, 1, 1, 1, 1, 1};
  cfg.batch_size = 32;
  cfg.learning_rate = 5e-3;
  cfg.max_steps = 2350;
  cfg.seed = 11;
  cfg.valid_interval = 250;
  cfg.checkpoint_interval = 1000;
  // validation total loss does not separate the transfer optimum from the
  // degenerate copy optimum, so stopping on it is disabled; the step budget
  // is the stopping rule
  cfg.patience = 1000;
  cfg.embed_dim = 32;
  cfg.attr_dim = 32;
  cfg.hidden_dim = 32;
  cfg.cls_embed_dim = 1;
  cfg.cls_feature_maps = 1;
  TrainResult res = train(cfg);

  Corpus train_all = pos_train;
  train_all.append(neg_train);
  apply_vocab(train_all, vocab);
  OracleTrainConfig ocfg;
  ocfg.vocab_size = vocab.size();
  ocfg.max_steps = 800;
  OracleResult oracle = train_oracle(train_all, ocfg);

  LmTrainConfig lcfg;
  lcfg.vocab_size = vocab.size();
  lcfg.max_steps = 1200;
  LmResult lmres = train_lm(train_all, lcfg);

  Corpus test = load_corpus(dir / "pos.test.txt", 1);
  Corpus neg_test = load_corpus(dir / "neg.test.txt", 0);
  test.append(neg_test);
  apply_vocab(test, vocab);

  TransferModel tm = transfer_model_from(Checkpoint::load(res.model_path));
  NounLexicon lex = NounLexicon::load(dir / "lexicon.txt");
  EvalReport rep = evaluate(greedy_transfer_fn(tm.model, 20), test, oracle.cls,
                            lmres.lm, lex, vocab);

  const double ppl_cap = 2.0 * lmres.heldout_perplexity;
  const bool ok = rep.sentiment_accuracy >= 90.0 &&
                  rep.content_preservation >= 90.0 && rep.perplexity <= ppl_cap;
  std::printf("4 synthetic-transfer: %s — accuracy %.2f%% (need >= 90), "
              "content %.2f%% (need >= 90), perplexity %.2f (cap %.2f), "
              "oracle %.1f%%, %zu steps, %.0fs\n",
              ok ? "PASS" : "FAIL", rep.sentiment_accuracy,
              rep.content_preservation, rep.perplexity, ppl_cap,
              oracle.heldout_accuracy, res.steps, seconds_since(t0));
  return ok;
}

// ---------------------------------------------------------------------------
// 5: metric arithmetic against hand judgments

Sentence sentence_of(std::initializer_list<const char*> words) {
  Sentence s;
  for (const char* w : words) s.words.emplace_back(w);
  return s;
}

bool criterion_metric_oracles() {
  bool ok = true;

  NounLexicon lex({"food", "burger", "restaurant", "facilities", "stores"});
  std::vector<std::pair<Sentence, Sentence>> pairs = {
      {sentence_of({"their", "food", "was", "definitely", "delicious"}),
       sentence_of({"their", "food", "was", "never", "disgusting"})},
      {sentence_of({"love", "the", "southwestern", "burger"}),
       sentence_of({"avoid", "the", "grease", "burger"})},
      {sentence_of({"restaurant", "is", "romantic", "and", "quiet"}),
       sentence_of({"restaurant", "is", "shame", "and", "unprofessional"})},
      {sentence_of({"the", "facilities", "are", "amazing"}),
       sentence_of({"the", "facilities", "are", "ridiculous"})},
      {sentence_of({"sorry", "they", "closed", "so", "many", "stores"}),
       sentence_of({"amazing", "they", "had", "so", "many", "stores"})},
      {sentence_of({"these", "people", "will", "try", "to", "screw", "you"}),
       sentence_of({"these", "people", "will", "try", "to", "thank", "you"})}};
  const double six = content_preservation(pairs, lex);
  ok = ok && six == 100.0;
  pairs.push_back(
      {sentence_of({"their", "food", "was", "definitely", "delicious"}),
       sentence_of({"there", "was", "so", "not", "spectacular"})});
  const double seven = content_preservation(pairs, lex);
  ok = ok && std::abs(seven - 100.0 * 6.0 / 7.0) < 1e-9;

  const std::size_t V = 23;
  Rng rng(3);
  RnnLm lm(V, 4, 4, rng);
  for (const NamedParam& p : lm.params()) {
    Tensor t = p.tensor;
    std::fill(t.raw_value().begin(), t.raw_value().end(), 0.0);
  }
  const double ppl = perplexity({{4, 9, 12}, {7}}, lm);
  ok = ok && std::abs(ppl - static_cast<double>(V)) < 1e-3;

  NetConfig ccfg;
  ccfg.vocab_size = 9;
  ccfg.cls_embed_dim = 4;
  ccfg.cls_feature_maps = 2;
  Rng crng(5);
  TextCnn cls(ccfg, crng);
  for (const NamedParam& p : cls.params()) {
    Tensor t = p.tensor;
    std::fill(t.raw_value().begin(), t.raw_value().end(), 0.0);
  }
  // zeroed classifier always predicts 0 (tie-break), so targets decide
  const double a75 = sentiment_accuracy(
      {{{4}, 0}, {{5}, 0}, {{6}, 0}, {{7}, 1}}, cls);
  const double a100 = sentiment_accuracy(
      {{{4}, 0}, {{5}, 0}, {{6}, 0}, {{7}, 0}}, cls);
  const double a0 = sentiment_accuracy(
      {{{4}, 1}, {{5}, 1}, {{6}, 1}, {{7}, 1}}, cls);
  ok = ok && a75 == 75.0 && a100 == 100.0 && a0 == 0.0;

  std::printf("5 metric-oracles: %s — six transfer pairs preserved (%.1f%%), "
              "dropped noun %.4f%%, uniform perplexity %.4f ~ %zu, "
              "hand counts %.0f/%.0f/%.0f\n",
              ok ? "PASS" : "FAIL", six, seven, ppl, V, a75, a100, a0);
  return ok;
}

// ---------------------------------------------------------------------------
// 6: determinism, checkpoint round trips, resume equality

void write_tiny_dataset(const fs::path& dir) {
  std::ofstream pos(dir / "pos.txt"), neg(dir / "neg.txt");
  pos << "good food here\ngreat food indeed\nlovely place here\n"
         "good place indeed\ngreat service here\nlovely food indeed\n";
  neg << "bad food here\nawful food indeed\nnasty place here\n"
         "bad place indeed\nawful service here\nnasty food indeed\n";
  Vocab v;
  for (const char* w : {"good", "great", "lovely", "place", "here", "food",
                        "indeed", "service", "bad", "awful", "nasty"})
    v.add(w);
  v.save(dir / "vocab.txt");
}

TrainConfig tiny_train_config(const fs::path& dir, const std::string& out) {
  TrainConfig cfg;
  cfg.pos_train = (dir / "pos.txt").string();
  cfg.neg_train = (dir / "neg.txt").string();
  cfg.vocab_path = (dir / "vocab.txt").string();
  cfg.out_dir = (dir / out).string();
  cfg.batch_size = 4;
  cfg.learning_rate = 3e-3;
  cfg.max_steps = 24;
  cfg.seed = 7;
  cfg.max_len = 8;
  cfg.checkpoint_interval = 0;
  cfg.valid_interval = 0;
  cfg.embed_dim = 8;
  cfg.attr_dim = 3;
  cfg.hidden_dim = 8;
  cfg.cls_embed_dim = 6;
  cfg.cls_feature_maps = 2;
  return cfg;
}

bool criterion_determinism() {
  const fs::path dir = work_dir("determinism");
  write_tiny_dataset(dir);

  TrainResult a = train(tiny_train_config(dir, "a"));
  TrainResult b = train(tiny_train_config(dir, "b"));
  const bool logs_equal = read_text_file(a.log_path) == read_text_file(b.log_path);
  const bool models_equal =
      read_text_file(a.model_path) == read_text_file(b.model_path);

  // checkpoint round trip: restored model forwards bitwise identically
  NetConfig ncfg;
  ncfg.vocab_size = 15;
  ncfg.embed_dim = 6;
  ncfg.attr_dim = 3;
  ncfg.hidden_dim = 5;
  ncfg.cls_embed_dim = 4;
  ncfg.cls_feature_maps = 2;
  Rng r1(3);
  EncoderDecoder m1(ncfg, r1);
  Checkpoint ck;
  ck.kind = CkptKind::Transfer;
  ck.net = ncfg;
  const ParamList m1_params = m1.params();
  capture_params(m1_params, ck);
  ck.save((dir / "m.ckpt").string());
  Rng r2(99);
  EncoderDecoder m2(ncfg, r2);
  const ParamList m2_params = m2.params();
  restore_params(Checkpoint::load((dir / "m.ckpt").string()), m2_params);
  Tape t;
  t.set_recording(false);
  Batch fixed = batch_of_one({4, 7, 9, 5}, 1);
  EncodedBatch e1 = m1.encode(t, fixed, {1});
  EncodedBatch e2 = m2.encode(t, fixed, {1});
  bool roundtrip = true;
  for (std::size_t j = 0; j < ncfg.hidden_dim; ++j)
    roundtrip = roundtrip &&
                e1.states.back().v(0, j) == e2.states.back().v(0, j);

  // resume after an interrupted run equals the uninterrupted run
  TrainConfig half = tiny_train_config(dir, "resumed");
  half.max_steps = 12;
  train(half);
  TrainConfig rest = tiny_train_config(dir, "resumed");
  rest.resume = (dir / "resumed" / "last.ckpt").string();
  TrainResult rr = train(rest);
  const bool resume_equal =
      read_text_file(rr.log_path) == read_text_file(a.log_path) &&
      read_text_file(rr.model_path) == read_text_file(a.model_path);

  const bool ok = logs_equal && models_equal && roundtrip && resume_equal;
  std::printf("6 determinism: %s — same-seed logs %s, models %s, "
              "checkpoint round trip %s, resume equality %s\n",
              ok ? "PASS" : "FAIL", logs_equal ? "equal" : "DIFFER",
              models_equal ? "equal" : "DIFFER",
              roundtrip ? "bitwise" : "DIFFER",
              resume_equal ? "exact" : "DIFFER");
  return ok;
}

// ---------------------------------------------------------------------------
// 7: gradient routing across the weighted objective

bool criterion_loss_ledger() {
  NetConfig cfg;
  cfg.vocab_size = 12;
  cfg.embed_dim = 5;
  cfg.attr_dim = 3;
  cfg.hidden_dim = 4;
  cfg.cls_embed_dim = 4;
  cfg.cls_feature_maps = 2;
  cfg.cls_widths = {2, 3};
  cfg.init_scale = 0.3;
  Rng rng(23);
  EncoderDecoder model(cfg, rng);
  TextCnn cls(cfg, rng);
  Sentence a, b;
  a.words = {"w4", "w5", "w6"};
  a.ids = {4, 5, 6};
  a.label = 1;
  b.words = {"w7", "w8"};
  b.ids = {7, 8};
  b.label = 0;
  Batch batch = make_batch({&a, &b});
  const std::vector<char> flags(cfg.vocab_size, 1);
  ParamList model_params = model.params();
  ParamList cls_params = cls.params();

  // full objective: every parameter of every network receives gradient
  std::size_t missed = 0;
  {
    Tape t;
    LossTerms terms = all_losses(t, model, cls, batch, flags, 5);
    t.backward(weighted_total(t, terms, LossWeights{1, 1, 1, 1, 1, 1}));
    for (const NamedParam& p : model_params) missed += !has_nonzero_grad(p.tensor);
    for (const NamedParam& p : cls_params) missed += !has_nonzero_grad(p.tensor);
    zero_grads(model_params);
    zero_grads(cls_params);
  }

  // classifier-only objective: encoder and decoder gradients exactly zero
  std::size_t leaked = 0, cls_touched = 0;
  {
    Tape t;
    LossTerms terms = all_losses(t, model, cls, batch, flags, 5);
    t.backward(weighted_total(t, terms, LossWeights{0, 0, 0, 1, 0, 0}));
    for (const NamedParam& p : model_params) leaked += has_nonzero_grad(p.tensor);
    for (const NamedParam& p : cls_params) cls_touched += has_nonzero_grad(p.tensor);
  }

  const bool ok = missed == 0 && leaked == 0 && cls_touched > 0;
  std::printf("7 loss-ledger: %s — full objective misses %zu of %zu tensors; "
              "classifier-only leaks into %zu encoder/decoder tensors "
              "(%zu classifier tensors active)\n",
              ok ? "PASS" : "FAIL", missed,
              model_params.size() + cls_params.size(), leaked, cls_touched);
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc)
      only = std::atoi(argv[++i]);
  }
  bool (*criteria[])() = {criterion_gradients,  criterion_one_hot,
                          criterion_autoencoder, criterion_synthetic_transfer,
                          criterion_metric_oracles, criterion_determinism,
                          criterion_loss_ledger};
  bool ok = true;
  for (int n = 1; n <= 7; ++n) {
    if (only != 0 && n != only) continue;
    ok = criteria[n - 1]() && ok;
  }
  return ok ? 0 : 1;
}
