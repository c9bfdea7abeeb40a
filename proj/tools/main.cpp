#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "attrxfer/checkpoint.hpp"
#include "attrxfer/data.hpp"
#include "attrxfer/eval.hpp"
#include "attrxfer/gradcheck.hpp"
#include "attrxfer/trainer.hpp"

namespace fs = std::filesystem;
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

void require_files(const std::vector<fs::path>& paths) {
  for (const auto& p : paths)
    if (!fs::exists(p)) throw IoError("missing input file " + p.string());
}

struct SplitSpec {
  double train = 0.8, valid = 0.1, test = 0.1;
};

SplitSpec parse_split(const std::string& text) {
  SplitSpec sp;
  char s1 = 0, s2 = 0;
  std::istringstream in(text);
  if (!(in >> sp.train >> s1 >> sp.valid >> s2 >> sp.test) || s1 != '/' ||
      s2 != '/' || !(in >> std::ws).eof())
    throw ConfigError("bad split spec '" + text + "', expected p/q/r");
  if (sp.train < 0 || sp.valid < 0 || sp.test < 0 ||
      std::abs(sp.train + sp.valid + sp.test - 1.0) > 1e-9)
    throw ConfigError("split fractions must be nonnegative and sum to 1");
  return sp;
}

Checkpoint load_kind(const fs::path& path, CkptKind kind, const char* what) {
  Checkpoint ck = Checkpoint::load(path.string());
  if (ck.kind != kind)
    throw ConfigError(std::string(what) + " has wrong checkpoint kind: " +
                      path.string());
  return ck;
}

struct PrepareArgs {
  std::string pos, neg, out;
  std::size_t min_count = 1;
  std::string split = "0.8/0.1/0.1";
  std::uint64_t seed = 1;
  std::size_t max_len = 20;
};

int cmd_prepare_data(const PrepareArgs& a) {
  require_files({a.pos, a.neg});
  const SplitSpec sp = parse_split(a.split);
  fs::create_directories(a.out);
  const fs::path out(a.out);

  struct SplitCounts {
    std::size_t train = 0, valid = 0, test = 0;
  };
  Corpus train_part;
  auto split_one = [&](const fs::path& src, int label, const std::string& base,
                       std::uint64_t seed) {
    Corpus c = load_corpus(src, label, a.max_len);
    std::vector<std::size_t> idx(c.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(idx);
    SplitCounts n;
    n.train = static_cast<std::size_t>(sp.train * static_cast<double>(c.size()));
    n.valid = static_cast<std::size_t>(sp.valid * static_cast<double>(c.size()));
    n.test = c.size() - n.train - n.valid;
    auto write_part = [&](const std::string& part, std::size_t lo, std::size_t hi) {
      atomic_write(out / (base + "." + part + ".txt"), [&](std::ostream& os) {
        for (std::size_t k = lo; k < hi; ++k)
          os << join(c.sentences[idx[k]].words) << '\n';
      });
    };
    write_part("train", 0, n.train);
    write_part("valid", n.train, n.train + n.valid);
    write_part("test", n.train + n.valid, c.size());
    for (std::size_t k = 0; k < n.train; ++k)
      train_part.push(c.sentences[idx[k]]);
    return n;
  };
  const SplitCounts np = split_one(a.pos, 1, "pos", a.seed);
  const SplitCounts nn = split_one(a.neg, 0, "neg", a.seed + 1);

  // the vocabulary only ever sees the training split
  Vocab vocab = build_vocab({&train_part}, a.min_count);
  vocab.save(out / "vocab.txt");

  atomic_write(out / "split.meta", [&](std::ostream& os) {
    os << "split " << a.split << "\nseed " << a.seed << "\nmin_count "
       << a.min_count << "\nmax_len " << a.max_len << "\npos "
       << np.train << "/" << np.valid << "/" << np.test << "\nneg "
       << nn.train << "/" << nn.valid << "/" << nn.test << "\nvocab "
       << vocab.size() << "\nvocab_hash " << vocab.hash() << "\n";
  });
  std::cout << "pos " << np.train << "/" << np.valid << "/" << np.test
            << "\nneg " << nn.train << "/" << nn.valid << "/" << nn.test
            << "\nvocab " << vocab.size() << " -> "
            << (out / "vocab.txt").string() << "\n";
  return 0;
}

struct TransferArgs {
  std::string ckpt, vocab, in, out;
  int to_label = 0;
  int from_label = -1;  // default: 1 - to_label
  std::size_t max_len = 20;
};

int cmd_transfer(const TransferArgs& a) {
  require_files({a.ckpt, a.vocab, a.in});
  const int from = a.from_label < 0 ? 1 - a.to_label : a.from_label;
  Vocab vocab = Vocab::load(a.vocab);
  Checkpoint ck = load_kind(a.ckpt, CkptKind::Transfer, "--ckpt");
  check_vocab_hash(ck, vocab, "transfer checkpoint");
  TransferModel tm = transfer_model_from(ck);
  TransferFn fn = greedy_transfer_fn(tm.model, a.max_len);

  std::ifstream in(a.in);
  if (!in) throw IoError("cannot open input file " + a.in);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    Sentence s;
    s.words = tokenize(line);
    if (s.words.empty()) {
      lines.emplace_back();
      continue;
    }
    if (s.words.size() > a.max_len) s.words.resize(a.max_len);
    s.ids = vocab.encode(s.words);
    s.label = from;
    lines.push_back(join(vocab.decode(fn(s, a.to_label))));
  }
  atomic_write(a.out, [&](std::ostream& os) {
    for (const auto& l : lines) os << l << '\n';
  });
  std::cout << lines.size() << " lines -> " << a.out << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string ckpt, vocab, test_pos, test_neg, oracle, lm, lexicon;
  std::string report, pairs;
  bool identity = false;
  std::size_t max_len = 20;
};

int cmd_evaluate(const EvaluateArgs& a) {
  if (!a.identity && a.ckpt.empty())
    throw ConfigError("evaluate needs --ckpt (or --identity)");
  require_files({a.vocab, a.test_pos, a.test_neg, a.oracle, a.lm, a.lexicon});
  if (!a.ckpt.empty()) require_files({a.ckpt});

  Vocab vocab = Vocab::load(a.vocab);
  NounLexicon lex = NounLexicon::load(a.lexicon);
  Checkpoint oc = load_kind(a.oracle, CkptKind::Classifier, "--oracle");
  check_vocab_hash(oc, vocab, "oracle checkpoint");
  TextCnn oracle = classifier_from(oc);
  Checkpoint lc = load_kind(a.lm, CkptKind::Lm, "--lm");
  check_vocab_hash(lc, vocab, "lm checkpoint");
  RnnLm lm = lm_from(lc);

  TransferFn fn;
  std::optional<TransferModel> tm;  // keeps the model alive behind fn
  if (a.identity) {
    fn = identity_transfer_fn();
  } else {
    Checkpoint mc = load_kind(a.ckpt, CkptKind::Transfer, "--ckpt");
    check_vocab_hash(mc, vocab, "transfer checkpoint");
    tm.emplace(transfer_model_from(mc));
    fn = greedy_transfer_fn(tm->model, a.max_len);
  }

  Corpus test = load_corpus(a.test_pos, 1, a.max_len);
  Corpus neg = load_corpus(a.test_neg, 0, a.max_len);
  test.append(neg);
  apply_vocab(test, vocab);

  std::vector<EvalPair> pairs;
  EvalReport rep = evaluate(fn, test, oracle, lm, lex, vocab, &pairs);
  std::cout << format_report_table(rep);
  if (!a.report.empty()) write_report(a.report, rep);
  if (!a.pairs.empty()) write_pairs(a.pairs, pairs);
  return 0;
}

struct OracleArgs {
  std::string pos, neg, vocab, out;
  std::size_t steps = 1500, batch = 32, embed = 64, maps = 32, max_len = 20;
  double lr = 1e-3, valid_fraction = 0.1;
  std::uint64_t seed = 7;
};

int cmd_train_oracle(const OracleArgs& a) {
  require_files({a.pos, a.neg, a.vocab});
  Vocab vocab = Vocab::load(a.vocab);
  Corpus c = load_corpus(a.pos, 1, a.max_len);
  Corpus neg = load_corpus(a.neg, 0, a.max_len);
  c.append(neg);
  apply_vocab(c, vocab);
  OracleTrainConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  cfg.max_steps = a.steps;
  cfg.seed = a.seed;
  cfg.valid_fraction = a.valid_fraction;
  cfg.embed_dim = a.embed;
  cfg.feature_maps = a.maps;
  OracleResult res = train_oracle(c, cfg, &std::cout);
  checkpoint_of(res.cls, vocab.hash()).save(a.out);
  std::cout << "heldout_accuracy " << res.heldout_accuracy << "\nsaved " << a.out
            << "\n";
  return 0;
}

struct LmArgs {
  std::vector<std::string> corpus;
  std::string vocab, out;
  std::size_t steps = 2000, batch = 32, embed = 64, hidden = 64, max_len = 20;
  double lr = 1e-3, valid_fraction = 0.1;
  std::uint64_t seed = 7;
};

int cmd_train_lm(const LmArgs& a) {
  require_files({a.vocab});
  for (const auto& p : a.corpus) require_files({p});
  Vocab vocab = Vocab::load(a.vocab);
  Corpus all;
  for (const auto& p : a.corpus) {
    Corpus c = load_corpus(p, 0, a.max_len);
    all.append(c);
  }
  apply_vocab(all, vocab);
  LmTrainConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  cfg.max_steps = a.steps;
  cfg.seed = a.seed;
  cfg.valid_fraction = a.valid_fraction;
  cfg.embed_dim = a.embed;
  cfg.hidden_dim = a.hidden;
  LmResult res = train_lm(all, cfg, &std::cout);
  checkpoint_of(res.lm, vocab.hash()).save(a.out);
  std::cout << "heldout_perplexity " << res.heldout_perplexity << "\nsaved "
            << a.out << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t cases_per_op,
                  std::size_t cases_per_loss) {
  std::vector<GradCheckResult> results = gradcheck_ops(seed, cases_per_op);
  for (auto& r : gradcheck_losses(seed, cases_per_loss))
    results.push_back(std::move(r));
  bool all_ok = true;
  for (const auto& r : results) {
    std::printf("%-18s cases %4zu  max_rel_err %.3e  tol %.0e  %s\n",
                r.name.c_str(), r.cases, r.max_rel_err, r.tolerance,
                r.ok() ? "ok" : "FAIL");
    all_ok = all_ok && r.ok();
  }
  if (!all_ok) std::printf("gradcheck FAILED\n");
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"text attribute transfer on non-parallel corpora"};
  app.require_subcommand(1);

  PrepareArgs pa;
  CLI::App* prep = app.add_subcommand("prepare-data",
                                      "split corpora and build the vocabulary");
  prep->add_option("--pos", pa.pos, "attribute-1 corpus, one sentence per line")
      ->required();
  prep->add_option("--neg", pa.neg, "attribute-0 corpus")->required();
  prep->add_option("--out", pa.out, "output directory")->required();
  prep->add_option("--min-count", pa.min_count, "vocabulary frequency cutoff");
  prep->add_option("--split", pa.split, "train/valid/test fractions, p/q/r");
  prep->add_option("--seed", pa.seed, "shuffle seed");
  prep->add_option("--max-len", pa.max_len, "sentence truncation length");

  std::string train_config;
  CLI::App* tr = app.add_subcommand("train", "train a transfer model");
  tr->add_option("--config", train_config, "key-value config file")->required();

  TransferArgs xa;
  CLI::App* xfer = app.add_subcommand("transfer", "rewrite sentences toward a label");
  xfer->add_option("--ckpt", xa.ckpt, "transfer model checkpoint")->required();
  xfer->add_option("--vocab", xa.vocab, "vocabulary file")->required();
  xfer->add_option("--in", xa.in, "input sentences, one per line")->required();
  xfer->add_option("--out", xa.out, "output file")->required();
  xfer->add_option("--to-label", xa.to_label, "target attribute value")
      ->required()
      ->check(CLI::Range(0, 1));
  xfer->add_option("--from-label", xa.from_label,
                   "source attribute value (default: 1 - to-label)")
      ->check(CLI::Range(0, 1));
  xfer->add_option("--max-len", xa.max_len, "input truncation / decode cap");

  EvaluateArgs ea;
  CLI::App* ev = app.add_subcommand("evaluate", "score transfers with the three metrics");
  ev->add_option("--ckpt", ea.ckpt, "transfer model checkpoint");
  ev->add_option("--vocab", ea.vocab, "vocabulary file")->required();
  ev->add_option("--test-pos", ea.test_pos, "attribute-1 test corpus")->required();
  ev->add_option("--test-neg", ea.test_neg, "attribute-0 test corpus")->required();
  ev->add_option("--oracle", ea.oracle, "oracle classifier checkpoint")->required();
  ev->add_option("--lm", ea.lm, "language model checkpoint")->required();
  ev->add_option("--lexicon", ea.lexicon, "noun lexicon file")->required();
  ev->add_option("--report", ea.report, "machine-readable report path");
  ev->add_option("--pairs", ea.pairs, "TSV pairs file path");
  ev->add_flag("--identity", ea.identity, "score the copy baseline instead");
  ev->add_option("--max-len", ea.max_len, "input truncation / decode cap");

  OracleArgs oa;
  CLI::App* oc = app.add_subcommand("train-oracle", "train the evaluation classifier");
  oc->add_option("--pos", oa.pos)->required();
  oc->add_option("--neg", oa.neg)->required();
  oc->add_option("--vocab", oa.vocab)->required();
  oc->add_option("--out", oa.out, "checkpoint path")->required();
  oc->add_option("--steps", oa.steps);
  oc->add_option("--batch", oa.batch);
  oc->add_option("--lr", oa.lr);
  oc->add_option("--seed", oa.seed);
  oc->add_option("--valid-fraction", oa.valid_fraction);
  oc->add_option("--embed", oa.embed);
  oc->add_option("--feature-maps", oa.maps);
  oc->add_option("--max-len", oa.max_len);

  LmArgs la;
  CLI::App* lm = app.add_subcommand("train-lm", "train the evaluation language model");
  lm->add_option("--corpus", la.corpus, "training corpus (repeatable)")->required();
  lm->add_option("--vocab", la.vocab)->required();
  lm->add_option("--out", la.out, "checkpoint path")->required();
  lm->add_option("--steps", la.steps);
  lm->add_option("--batch", la.batch);
  lm->add_option("--lr", la.lr);
  lm->add_option("--seed", la.seed);
  lm->add_option("--valid-fraction", la.valid_fraction);
  lm->add_option("--embed", la.embed);
  lm->add_option("--hidden", la.hidden);
  lm->add_option("--max-len", la.max_len);

  std::uint64_t gc_seed = 1;
  std::size_t gc_op_cases = 100, gc_loss_cases = 3;
  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gc->add_option("--seed", gc_seed);
  gc->add_option("--cases-per-op", gc_op_cases);
  gc->add_option("--cases-per-loss", gc_loss_cases);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*prep) return cmd_prepare_data(pa);
    if (*tr) {
      TrainConfig cfg = parse_train_config(train_config);
      TrainResult res = train(cfg, &std::cout);
      std::cout << "steps " << res.steps << "\nbest_valid "
                << fmt_g17(res.best_valid) << "\nmodel " << res.model_path
                << "\n";
      return 0;
    }
    if (*xfer) return cmd_transfer(xa);
    if (*ev) return cmd_evaluate(ea);
    if (*oc) return cmd_train_oracle(oa);
    if (*lm) return cmd_train_lm(la);
    if (*gc) return cmd_gradcheck(gc_seed, gc_op_cases, gc_loss_cases);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const HashMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
