#include "attrxfer/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <unordered_set>

namespace attrxfer {

namespace {

const double kLogFloor = std::log(1e-12);

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

Batch batch_of_ids(const std::vector<const std::vector<int>*>& seqs) {
  Batch b;
  b.rows = seqs.size();
  b.cols = 0;
  for (const auto* s : seqs) b.cols = std::max(b.cols, s->size());
  b.ids.assign(b.rows * b.cols, kPad);
  b.mask.assign(b.rows * b.cols, 0.0);
  b.labels.assign(b.rows, 0);
  b.lengths.resize(b.rows);
  for (std::size_t r = 0; r < b.rows; ++r) {
    const auto& s = *seqs[r];
    b.lengths[r] = static_cast<int>(s.size());
    for (std::size_t t = 0; t < s.size(); ++t) {
      b.ids[r * b.cols + t] = s[t];
      b.mask[r * b.cols + t] = 1.0;
    }
  }
  return b;
}

}  // namespace

// ---------------------------------------------------------------------------
// language model

RnnLm::RnnLm(std::size_t vocab_size, std::size_t embed_dim,
             std::size_t hidden_dim, Rng& rng)
    : cfg_vocab_(vocab_size) {
  if (vocab_size == 0) throw DataError("lm: vocab_size not set");
  const double s = 0.08;
  auto uniform = [&](Shape shape) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(-s, s);
    return Tensor::param(std::move(shape), std::move(v));
  };
  embed_ = uniform({vocab_size, embed_dim});
  cell_.init(rng, embed_dim, hidden_dim, s);
  out_w_ = uniform({hidden_dim, vocab_size});
  out_b_ = Tensor::param({vocab_size}, std::vector<double>(vocab_size, 0.0));
}

RnnLm::StepOut RnnLm::step_logits(Tape& t, const Batch& batch) const {
  StepOut out;
  out.targets.resize(batch.rows);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    out.targets[r] = batch.row_tokens(r);
    out.targets[r].push_back(kEos);
  }
  Tensor h = Tensor::zeros({batch.rows, cell_.hidden_dim});
  const std::size_t steps = batch.cols + 1;
  for (std::size_t s = 0; s < steps; ++s) {
    std::vector<int> ids(batch.rows);
    std::vector<double> m(batch.rows);
    for (std::size_t r = 0; r < batch.rows; ++r) {
      ids[r] = s == 0 ? kBos : batch.id(r, s - 1);
      m[r] = s < out.targets[r].size() ? 1.0 : 0.0;
    }
    Tensor hn = cell_.step(t, t.gather_rows(embed_, ids), h);
    h = t.add(h, t.mul_colvec(t.sub(hn, h), Tensor::constant({batch.rows}, m)));
    out.step_logits.push_back(t.add_rowvec(t.matmul(h, out_w_), out_b_));
  }
  return out;
}

Tensor RnnLm::loss(Tape& t, const Batch& batch) const {
  StepOut so = step_logits(t, batch);
  return masked_mean_nll(t, so.step_logits, so.targets);
}

ParamList RnnLm::params() const {
  ParamList out;
  out.push_back({"embed", embed_});
  cell_.collect("cell.", out);
  out.push_back({"out.w", out_w_});
  out.push_back({"out.b", out_b_});
  return out;
}

NllTotal lm_nll(const RnnLm& lm, const std::vector<std::vector<int>>& sentences) {
  NllTotal total;
  Tape tape;
  tape.set_recording(false);
  const std::size_t group = 64;
  for (std::size_t base = 0; base < sentences.size(); base += group) {
    std::vector<const std::vector<int>*> seqs;
    for (std::size_t i = base; i < std::min(base + group, sentences.size()); ++i)
      seqs.push_back(&sentences[i]);
    Batch b = batch_of_ids(seqs);
    RnnLm::StepOut so = lm.step_logits(tape, b);
    const std::size_t v = lm.vocab_size();
    for (std::size_t s = 0; s < so.step_logits.size(); ++s) {
      const Tensor& logits = so.step_logits[s];
      for (std::size_t r = 0; r < b.rows; ++r) {
        if (s >= so.targets[r].size()) continue;
        double mx = logits.v(r, 0);
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, logits.v(r, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < v; ++j)
          sum += std::exp(logits.v(r, j) - mx);
        const double lse = mx + std::log(sum);
        const auto tgt = static_cast<std::size_t>(so.targets[r][s]);
        total.nll -= std::max(logits.v(r, tgt) - lse, kLogFloor);
        ++total.tokens;
      }
    }
    tape.clear();
  }
  return total;
}

double perplexity(const std::vector<std::vector<int>>& sentences,
                  const RnnLm& lm) {
  if (sentences.empty()) throw DataError("perplexity: empty sentence list");
  const NllTotal t = lm_nll(lm, sentences);
  return std::exp(t.nll / static_cast<double>(t.tokens));
}

// ---------------------------------------------------------------------------
// metrics

int predict_label(const TextCnn& cls, const std::vector<int>& ids) {
  Tape t;
  t.set_recording(false);
  const std::vector<int> safe = ids.empty() ? std::vector<int>{kPad} : ids;
  Tensor p = cls.probs_tokens(t, safe);
  return p.v(0) >= p.v(1) ? 0 : 1;
}

double sentiment_accuracy(
    const std::vector<std::pair<std::vector<int>, int>>& pairs,
    const TextCnn& oracle) {
  if (pairs.empty()) throw DataError("sentiment_accuracy: empty pair list");
  std::size_t hits = 0;
  for (const auto& [ids, target] : pairs)
    if (predict_label(oracle, ids) == target) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(pairs.size());
}

double content_preservation(
    const std::vector<std::pair<Sentence, Sentence>>& pairs,
    const NounLexicon& lex) {
  if (pairs.empty()) throw DataError("content_preservation: empty pair list");
  std::size_t preserved = 0;
  for (const auto& [orig, xfer] : pairs) {
    const auto noun_positions = nouns_of(orig, lex);
    if (noun_positions.empty()) {
      ++preserved;  // noun-free original: vacuously preserved
      continue;
    }
    std::unordered_set<std::string> orig_nouns;
    for (std::size_t pos : noun_positions) orig_nouns.insert(orig.words[pos]);
    const bool hit = std::any_of(
        xfer.words.begin(), xfer.words.end(),
        [&](const std::string& w) { return orig_nouns.count(w) > 0; });
    if (hit) ++preserved;
  }
  return 100.0 * static_cast<double>(preserved) /
         static_cast<double>(pairs.size());
}

double classifier_accuracy(const TextCnn& cls, const Corpus& corpus) {
  if (corpus.size() == 0) throw DataError("classifier_accuracy: empty corpus");
  std::size_t hits = 0;
  for (const auto& s : corpus.sentences)
    if (predict_label(cls, s.ids) == s.label) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(corpus.size());
}

// ---------------------------------------------------------------------------
// oracle / LM training

namespace {

// deterministic shuffled split into (rest, heldout)
std::pair<Corpus, Corpus> split_heldout(const Corpus& corpus, double fraction,
                                        std::uint64_t seed) {
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  auto heldout_count = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(corpus.size())));
  heldout_count = std::min(heldout_count, corpus.size() - 1);
  Corpus rest, heldout;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Sentence& s = corpus.sentences[order[i]];
    if (i < heldout_count)
      heldout.push(s);
    else
      rest.push(s);
  }
  return {std::move(rest), std::move(heldout)};
}

}  // namespace

OracleResult train_oracle(const Corpus& corpus, const OracleTrainConfig& cfg,
                          std::ostream* progress) {
  if (cfg.vocab_size == 0) throw ConfigError("train_oracle: vocab_size not set");
  if (corpus.count0 == 0 || corpus.count1 == 0)
    throw DataError("train_oracle: corpus must contain both labels");
  auto [train_part, heldout] = split_heldout(corpus, cfg.valid_fraction, cfg.seed);
  if (heldout.size() == 0) heldout = train_part;

  NetConfig ncfg;
  ncfg.vocab_size = cfg.vocab_size;
  ncfg.cls_embed_dim = cfg.embed_dim;
  ncfg.cls_feature_maps = cfg.feature_maps;
  Rng rng(cfg.seed);
  TextCnn cls(ncfg, rng);
  ParamList params = cls.params();
  AdamState adam;
  adam.cfg.lr = cfg.learning_rate;
  adam.init(params);

  Tape tape;
  std::size_t step = 0;
  for (std::size_t epoch = 0; step < cfg.max_steps; ++epoch) {
    for (const Batch& b :
         make_batches(train_part, cfg.batch_size, cfg.seed + epoch)) {
      ++step;
      tape.clear();
      Tensor loss = loss_class_od(tape, cls, b);
      tape.backward(loss);
      clip_grad_norm(params, 5.0);
      adam_step(params, adam);
      if (progress && step % 100 == 0) {
        *progress << "oracle step " << step << "/" << cfg.max_steps << " loss "
                  << loss.item() << "\n";
        progress->flush();
      }
      if (step >= cfg.max_steps) break;
    }
  }
  tape.clear();
  const double acc = classifier_accuracy(cls, heldout);
  if (progress) *progress << "oracle heldout accuracy " << acc << "\n";
  return {std::move(cls), acc};
}

LmResult train_lm(const Corpus& corpus, const LmTrainConfig& cfg,
                  std::ostream* progress) {
  if (cfg.vocab_size == 0) throw ConfigError("train_lm: vocab_size not set");
  if (corpus.size() == 0) throw DataError("train_lm: empty corpus");
  auto [train_part, heldout] = split_heldout(corpus, cfg.valid_fraction, cfg.seed);
  if (heldout.size() == 0) heldout = train_part;

  Rng rng(cfg.seed);
  RnnLm lm(cfg.vocab_size, cfg.embed_dim, cfg.hidden_dim, rng);
  ParamList params = lm.params();
  AdamState adam;
  adam.cfg.lr = cfg.learning_rate;
  adam.init(params);

  Tape tape;
  std::size_t step = 0;
  for (std::size_t epoch = 0; step < cfg.max_steps; ++epoch) {
    for (const Batch& b :
         make_batches(train_part, cfg.batch_size, cfg.seed + epoch)) {
      ++step;
      tape.clear();
      Tensor loss = lm.loss(tape, b);
      tape.backward(loss);
      clip_grad_norm(params, 5.0);
      adam_step(params, adam);
      if (progress && step % 100 == 0) {
        *progress << "lm step " << step << "/" << cfg.max_steps << " loss "
                  << loss.item() << "\n";
        progress->flush();
      }
      if (step >= cfg.max_steps) break;
    }
  }
  tape.clear();
  std::vector<std::vector<int>> heldout_ids;
  for (const auto& s : heldout.sentences) heldout_ids.push_back(s.ids);
  const double ppl = perplexity(heldout_ids, lm);
  if (progress) *progress << "lm heldout perplexity " << ppl << "\n";
  return {std::move(lm), ppl};
}

// ---------------------------------------------------------------------------
// end-to-end evaluation

TransferFn greedy_transfer_fn(const EncoderDecoder& model, std::size_t max_len) {
  const EncoderDecoder* m = &model;  // caller keeps the model alive
  return [m, max_len](const Sentence& s, int target) {
    Tape t;
    t.set_recording(false);
    Batch b = batch_of_one(s.ids, s.label);
    EncodedBatch enc = m->encode(t, b, {s.label});
    GreedyOut g = m->decode_greedy(t, enc, {target}, max_len);
    return g.tokens[0];
  };
}

TransferFn identity_transfer_fn() {
  return [](const Sentence& s, int) { return s.ids; };
}

EvalReport evaluate(const TransferFn& transfer, const Corpus& test,
                    const TextCnn& oracle, const RnnLm& lm,
                    const NounLexicon& lex, const Vocab& vocab,
                    std::vector<EvalPair>* out_pairs) {
  if (test.size() == 0) throw DataError("evaluate: empty test corpus");
  std::vector<std::pair<std::vector<int>, int>> sent_pairs;
  std::vector<std::pair<Sentence, Sentence>> content_pairs;
  std::vector<std::vector<int>> transferred_ids;
  if (out_pairs) out_pairs->clear();

  for (const Sentence& s : test.sentences) {
    const int target = 1 - s.label;
    std::vector<int> ids = transfer(s, target);
    Sentence xfer;
    xfer.words = vocab.decode(ids);
    xfer.ids = ids;
    xfer.label = target;
    sent_pairs.emplace_back(ids, target);
    content_pairs.emplace_back(s, xfer);
    transferred_ids.push_back(ids);
    if (out_pairs)
      out_pairs->push_back({s, std::move(ids), std::move(xfer.words), target});
  }

  EvalReport r;
  r.sentiment_accuracy = sentiment_accuracy(sent_pairs, oracle);
  r.content_preservation = content_preservation(content_pairs, lex);
  r.perplexity = perplexity(transferred_ids, lm);
  r.pairs = test.size();
  return r;
}

std::string format_report_table(const EvalReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "%-12s %-12s %-12s %s\n%-12.2f %-12.2f %-12.2f %zu\n",
                "sentiment", "content", "perplexity", "pairs",
                r.sentiment_accuracy, r.content_preservation, r.perplexity,
                r.pairs);
  return buf;
}

void write_report(const std::filesystem::path& path, const EvalReport& r) {
  atomic_write(path, [&](std::ostream& os) {
    os << "sentiment_accuracy=" << fmt_g17(r.sentiment_accuracy) << "\n"
       << "content_preservation=" << fmt_g17(r.content_preservation) << "\n"
       << "perplexity=" << fmt_g17(r.perplexity) << "\n"
       << "pairs=" << r.pairs << "\n";
  });
}

void write_pairs(const std::filesystem::path& path,
                 const std::vector<EvalPair>& pairs) {
  atomic_write(path, [&](std::ostream& os) {
    for (const auto& p : pairs)
      os << join(p.original.words) << '\t' << join(p.transferred_words) << '\t'
         << p.original.label << '\t' << p.target_label << '\n';
  });
}

// ---------------------------------------------------------------------------
// checkpoint glue

Checkpoint checkpoint_of(const EncoderDecoder& model, const TextCnn& cls,
                         std::uint64_t vocab_hash) {
  Checkpoint c;
  c.kind = CkptKind::Transfer;
  c.net = model.config();
  c.vocab_hash = vocab_hash;
  ParamList params = model.params();
  for (const auto& p : cls.params()) params.push_back({"cls." + p.name, p.tensor});
  capture_params(params, c);
  return c;
}

Checkpoint checkpoint_of(const TextCnn& cls, std::uint64_t vocab_hash) {
  Checkpoint c;
  c.kind = CkptKind::Classifier;
  c.net = cls.config();
  c.vocab_hash = vocab_hash;
  capture_params(cls.params(), c);
  return c;
}

Checkpoint checkpoint_of(const RnnLm& lm, std::uint64_t vocab_hash) {
  Checkpoint c;
  c.kind = CkptKind::Lm;
  c.net.vocab_size = lm.vocab_size();
  c.net.embed_dim = lm.embed_dim();
  c.net.hidden_dim = lm.hidden_dim();
  c.vocab_hash = vocab_hash;
  capture_params(lm.params(), c);
  return c;
}

TransferModel transfer_model_from(const Checkpoint& ckpt) {
  if (ckpt.kind != CkptKind::Transfer)
    throw IoError("checkpoint is not a transfer model");
  Rng rng(0);
  TransferModel tm{EncoderDecoder(ckpt.net, rng), TextCnn(ckpt.net, rng)};
  ParamList params = tm.model.params();
  for (const auto& p : tm.cls.params())
    params.push_back({"cls." + p.name, p.tensor});
  restore_params(ckpt, params);
  return tm;
}

TextCnn classifier_from(const Checkpoint& ckpt) {
  if (ckpt.kind != CkptKind::Classifier)
    throw IoError("checkpoint is not a classifier");
  Rng rng(0);
  TextCnn cls(ckpt.net, rng);
  restore_params(ckpt, cls.params());
  return cls;
}

RnnLm lm_from(const Checkpoint& ckpt) {
  if (ckpt.kind != CkptKind::Lm)
    throw IoError("checkpoint is not a language model");
  Rng rng(0);
  RnnLm lm(ckpt.net.vocab_size, ckpt.net.embed_dim, ckpt.net.hidden_dim, rng);
  restore_params(ckpt, lm.params());
  return lm;
}

}  // namespace attrxfer
