#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <iostream>
#include <optional>
#include <sstream>

#include "attrxfer/checkpoint.hpp"
#include "attrxfer/eval.hpp"
#include "attrxfer/gradcheck.hpp"
#include "attrxfer/trainer.hpp"

namespace py = pybind11;
using namespace attrxfer;

namespace {

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream ls(line);
  std::vector<std::string> words;
  std::string tok;
  while (ls >> tok) words.push_back(tok);
  return words;
}

Checkpoint load_kind(const std::string& path, CkptKind kind, const char* what) {
  Checkpoint ck = Checkpoint::load(path);
  if (ck.kind != kind)
    throw ConfigError(std::string(what) + " has wrong checkpoint kind: " + path);
  return ck;
}

py::dict py_train(const std::string& config_path, bool progress) {
  TrainConfig cfg = parse_train_config(config_path);
  TrainResult res;
  {
    py::gil_scoped_release release;
    res = train(cfg, progress ? &std::cout : nullptr);
  }
  py::dict d;
  d["steps"] = res.steps;
  d["best_valid"] = res.best_valid;
  d["early_stopped"] = res.early_stopped;
  d["model_path"] = res.model_path;
  d["log_path"] = res.log_path;
  return d;
}

std::vector<std::string> py_transfer(const std::string& ckpt_path,
                                     const std::string& vocab_path,
                                     const std::vector<std::string>& lines,
                                     int to_label, int from_label,
                                     std::size_t max_len) {
  if (to_label != 0 && to_label != 1)
    throw ConfigError("to_label must be 0 or 1");
  const int from = from_label < 0 ? 1 - to_label : from_label;
  Vocab vocab = Vocab::load(vocab_path);
  Checkpoint ck = load_kind(ckpt_path, CkptKind::Transfer, "ckpt");
  check_vocab_hash(ck, vocab, "transfer checkpoint");
  TransferModel tm = transfer_model_from(ck);
  TransferFn fn = greedy_transfer_fn(tm.model, max_len);

  std::vector<std::string> out;
  for (const std::string& line : lines) {
    Sentence s;
    s.words = tokenize(line);
    if (s.words.empty()) {
      out.emplace_back();
      continue;
    }
    if (s.words.size() > max_len) s.words.resize(max_len);
    s.ids = vocab.encode(s.words);
    s.label = from;
    out.push_back(join(vocab.decode(fn(s, to_label))));
  }
  return out;
}

py::dict py_evaluate(const std::string& vocab_path,
                     const std::string& test_pos, const std::string& test_neg,
                     const std::string& oracle_path, const std::string& lm_path,
                     const std::string& lexicon_path, const std::string& ckpt,
                     bool identity, std::size_t max_len) {
  if (!identity && ckpt.empty())
    throw ConfigError("evaluate needs a checkpoint (or identity=True)");
  Vocab vocab = Vocab::load(vocab_path);
  NounLexicon lex = NounLexicon::load(lexicon_path);
  Checkpoint oc = load_kind(oracle_path, CkptKind::Classifier, "oracle");
  check_vocab_hash(oc, vocab, "oracle checkpoint");
  TextCnn oracle = classifier_from(oc);
  Checkpoint lc = load_kind(lm_path, CkptKind::Lm, "lm");
  check_vocab_hash(lc, vocab, "lm checkpoint");
  RnnLm lm = lm_from(lc);

  TransferFn fn;
  std::optional<TransferModel> tm;
  if (identity) {
    fn = identity_transfer_fn();
  } else {
    Checkpoint mc = load_kind(ckpt, CkptKind::Transfer, "ckpt");
    check_vocab_hash(mc, vocab, "transfer checkpoint");
    tm.emplace(transfer_model_from(mc));
    fn = greedy_transfer_fn(tm->model, max_len);
  }

  Corpus test = load_corpus(test_pos, 1, max_len);
  Corpus neg = load_corpus(test_neg, 0, max_len);
  test.append(neg);
  apply_vocab(test, vocab);

  std::vector<EvalPair> pairs;
  EvalReport rep;
  {
    py::gil_scoped_release release;
    rep = evaluate(fn, test, oracle, lm, lex, vocab, &pairs);
  }
  py::list plist;
  for (const auto& p : pairs) {
    py::dict e;
    e["original"] = join(p.original.words);
    e["transferred"] = join(p.transferred_words);
    e["source_label"] = p.original.label;
    e["target_label"] = p.target_label;
    plist.append(e);
  }
  py::dict d;
  d["sentiment_accuracy"] = rep.sentiment_accuracy;
  d["content_preservation"] = rep.content_preservation;
  d["perplexity"] = rep.perplexity;
  d["pairs"] = plist;
  return d;
}

py::dict py_train_oracle(const std::string& pos, const std::string& neg,
                         const std::string& vocab_path, const std::string& out,
                         std::size_t steps, std::size_t batch, double lr,
                         std::uint64_t seed, double valid_fraction,
                         std::size_t embed, std::size_t feature_maps,
                         std::size_t max_len) {
  Vocab vocab = Vocab::load(vocab_path);
  Corpus c = load_corpus(pos, 1, max_len);
  Corpus negc = load_corpus(neg, 0, max_len);
  c.append(negc);
  apply_vocab(c, vocab);
  OracleTrainConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.batch_size = batch;
  cfg.learning_rate = lr;
  cfg.max_steps = steps;
  cfg.seed = seed;
  cfg.valid_fraction = valid_fraction;
  cfg.embed_dim = embed;
  cfg.feature_maps = feature_maps;
  double acc = 0.0;
  {
    py::gil_scoped_release release;
    OracleResult res = train_oracle(c, cfg, nullptr);
    checkpoint_of(res.cls, vocab.hash()).save(out);
    acc = res.heldout_accuracy;
  }
  py::dict d;
  d["heldout_accuracy"] = acc;
  d["checkpoint"] = out;
  return d;
}

py::dict py_train_lm(const std::vector<std::string>& corpora,
                     const std::string& vocab_path, const std::string& out,
                     std::size_t steps, std::size_t batch, double lr,
                     std::uint64_t seed, double valid_fraction,
                     std::size_t embed, std::size_t hidden,
                     std::size_t max_len) {
  Vocab vocab = Vocab::load(vocab_path);
  Corpus all;
  for (const auto& p : corpora) {
    Corpus c = load_corpus(p, 0, max_len);
    all.append(c);
  }
  apply_vocab(all, vocab);
  LmTrainConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.batch_size = batch;
  cfg.learning_rate = lr;
  cfg.max_steps = steps;
  cfg.seed = seed;
  cfg.valid_fraction = valid_fraction;
  cfg.embed_dim = embed;
  cfg.hidden_dim = hidden;
  double ppl = 0.0;
  {
    py::gil_scoped_release release;
    LmResult res = train_lm(all, cfg, nullptr);
    checkpoint_of(res.lm, vocab.hash()).save(out);
    ppl = res.heldout_perplexity;
  }
  py::dict d;
  d["heldout_perplexity"] = ppl;
  d["checkpoint"] = out;
  return d;
}

py::list py_gradcheck(std::uint64_t seed, std::size_t cases_per_op,
                      std::size_t cases_per_loss) {
  std::vector<GradCheckResult> results;
  {
    py::gil_scoped_release release;
    results = gradcheck_ops(seed, cases_per_op);
    for (auto& r : gradcheck_losses(seed, cases_per_loss))
      results.push_back(std::move(r));
  }
  py::list out;
  for (const auto& r : results) {
    py::dict d;
    d["name"] = r.name;
    d["max_rel_err"] = r.max_rel_err;
    d["cases"] = r.cases;
    d["tolerance"] = r.tolerance;
    d["ok"] = r.ok();
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "text attribute transfer on non-parallel corpora";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<IoError>(m, "IoError");
  py::register_exception<HashMismatch>(m, "HashMismatch");
  py::register_exception<DataError>(m, "DataError");

  m.def("train", &py_train, py::arg("config_path"), py::arg("progress") = false,
        "Train a transfer model from a key-value config file.");
  m.def("transfer", &py_transfer, py::arg("ckpt"), py::arg("vocab"),
        py::arg("lines"), py::arg("to_label"), py::arg("from_label") = -1,
        py::arg("max_len") = 20,
        "Rewrite sentences toward the target attribute label.");
  m.def("evaluate", &py_evaluate, py::arg("vocab"), py::arg("test_pos"),
        py::arg("test_neg"), py::arg("oracle"), py::arg("lm"),
        py::arg("lexicon"), py::arg("ckpt") = std::string(),
        py::arg("identity") = false, py::arg("max_len") = 20,
        "Score transfers with sentiment, content and perplexity metrics.");
  m.def("train_oracle", &py_train_oracle, py::arg("pos"), py::arg("neg"),
        py::arg("vocab"), py::arg("out"), py::arg("steps") = 1500,
        py::arg("batch") = 32, py::arg("lr") = 1e-3, py::arg("seed") = 7,
        py::arg("valid_fraction") = 0.1, py::arg("embed") = 64,
        py::arg("feature_maps") = 32, py::arg("max_len") = 20,
        "Train the evaluation classifier and save its checkpoint.");
  m.def("train_lm", &py_train_lm, py::arg("corpora"), py::arg("vocab"),
        py::arg("out"), py::arg("steps") = 2000, py::arg("batch") = 32,
        py::arg("lr") = 1e-3, py::arg("seed") = 7,
        py::arg("valid_fraction") = 0.1, py::arg("embed") = 64,
        py::arg("hidden") = 64, py::arg("max_len") = 20,
        "Train the evaluation language model and save its checkpoint.");
  m.def("gradcheck", &py_gradcheck, py::arg("seed") = 1,
        py::arg("cases_per_op") = 100, py::arg("cases_per_loss") = 3,
        "Finite-difference checks of every op and loss; list of results.");
}
