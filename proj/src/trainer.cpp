#include "attrxfer/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

namespace attrxfer {

namespace fs = std::filesystem;

std::size_t train_horizon(std::size_t max_len, std::size_t batch_cols) {
  return std::min(max_len, batch_cols + 2);
}

void TrainConfig::validate() const {
  weights.validate();
  if (pos_train.empty() || neg_train.empty())
    throw ConfigError("pos_train and neg_train are required");
  if (vocab_path.empty()) throw ConfigError("vocab is required");
  if (out_dir.empty()) throw ConfigError("out_dir is required");
  if (pos_valid.empty() != neg_valid.empty())
    throw ConfigError("pos_valid and neg_valid must be set together");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (clip_norm <= 0.0) throw ConfigError("clip_norm must be > 0");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (embed_dim < 1 || attr_dim < 1 || hidden_dim < 1 || cls_embed_dim < 1 ||
      cls_feature_maps < 1)
    throw ConfigError("model dimensions must be >= 1");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for " + key + ": '" + v + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const std::uint64_t x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad integer value for " + key + ": '" + v + "'");
  }
}

}  // namespace

TrainConfig parse_train_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key or value");
    if (key == "pos_train") cfg.pos_train = val;
    else if (key == "neg_train") cfg.neg_train = val;
    else if (key == "pos_valid") cfg.pos_valid = val;
    else if (key == "neg_valid") cfg.neg_valid = val;
    else if (key == "vocab") cfg.vocab_path = val;
    else if (key == "lexicon") cfg.lexicon_path = val;
    else if (key == "out_dir") cfg.out_dir = val;
    else if (key == "resume") cfg.resume = val;
    else if (key == "lambda_rec") cfg.weights.rec = parse_real(key, val);
    else if (key == "lambda_cnt_rec") cfg.weights.cnt_rec = parse_real(key, val);
    else if (key == "lambda_back_rec") cfg.weights.back_rec = parse_real(key, val);
    else if (key == "lambda_class_od") cfg.weights.class_od = parse_real(key, val);
    else if (key == "lambda_class_td") cfg.weights.class_td = parse_real(key, val);
    else if (key == "lambda_class_btd") cfg.weights.class_btd = parse_real(key, val);
    else if (key == "batch_size") cfg.batch_size = parse_uint(key, val);
    else if (key == "learning_rate") cfg.learning_rate = parse_real(key, val);
    else if (key == "max_steps") cfg.max_steps = parse_uint(key, val);
    else if (key == "seed") cfg.seed = parse_uint(key, val);
    else if (key == "max_len") cfg.max_len = parse_uint(key, val);
    else if (key == "checkpoint_interval") cfg.checkpoint_interval = parse_uint(key, val);
    else if (key == "valid_interval") cfg.valid_interval = parse_uint(key, val);
    else if (key == "patience") cfg.patience = parse_uint(key, val);
    else if (key == "clip_norm") cfg.clip_norm = parse_real(key, val);
    else if (key == "embed_dim") cfg.embed_dim = parse_uint(key, val);
    else if (key == "attr_dim") cfg.attr_dim = parse_uint(key, val);
    else if (key == "hidden_dim") cfg.hidden_dim = parse_uint(key, val);
    else if (key == "cls_embed_dim") cfg.cls_embed_dim = parse_uint(key, val);
    else if (key == "cls_feature_maps") cfg.cls_feature_maps = parse_uint(key, val);
    else throw ConfigError("unknown config key: " + key);
  }
  cfg.validate();
  return cfg;
}

TrainConfig parse_train_config(const fs::path& path) {
  return parse_train_config_text(read_text_file(path));
}

namespace {

void check_finite(const LossBreakdown& b, std::size_t step) {
  const double v[7] = {b.rec,      b.cnt_rec,   b.class_td, b.class_od,
                       b.back_rec, b.class_btd, b.total};
  const char* names[7] = {"rec",      "cnt_rec",   "class_td", "class_od",
                          "back_rec", "class_btd", "total"};
  for (int i = 0; i < 7; ++i)
    if (!std::isfinite(v[i]))
      throw std::runtime_error("non-finite loss term " + std::string(names[i]) +
                               " = " + std::to_string(v[i]) + " at step " +
                               std::to_string(step));
}

}  // namespace

StepResult train_step(Tape& tape, const EncoderDecoder& model,
                      const TextCnn& cls, ParamList& params, AdamState& adam,
                      const Batch& batch, const std::vector<char>& noun_flags,
                      const LossWeights& weights, double clip_norm,
                      std::size_t horizon, std::size_t step) {
  tape.clear();
  LossTerms terms = all_losses(tape, model, cls, batch, noun_flags, horizon);
  Tensor total = weighted_total(tape, terms, weights);
  StepResult res;
  res.breakdown = breakdown_of(terms, weights);
  check_finite(res.breakdown, step);
  tape.backward(total);
  res.grad_norm = clip_grad_norm(params, clip_norm);
  adam_step(params, adam);
  tape.clear();
  return res;
}

double validation_loss(const EncoderDecoder& model, const TextCnn& cls,
                       const Corpus& corpus, const std::vector<char>& noun_flags,
                       const LossWeights& weights, std::size_t batch_size,
                       std::size_t max_len) {
  Tape tape;
  tape.set_recording(false);
  double total = 0.0;
  std::size_t n = 0;
  for (const Batch& b : make_batches(corpus, batch_size, /*seed=*/0)) {
    LossTerms terms = all_losses(tape, model, cls, b, noun_flags,
                                 train_horizon(max_len, b.cols));
    total += breakdown_of(terms, weights).total * static_cast<double>(b.rows);
    n += b.rows;
    tape.clear();
  }
  if (n == 0) throw DataError("validation corpus is empty");
  return total / static_cast<double>(n);
}

namespace {

Corpus load_labeled_pair(const std::string& pos, const std::string& neg,
                         const Vocab& vocab, std::size_t max_len) {
  Corpus c = load_corpus(pos, 1, max_len);
  c.append(load_corpus(neg, 0, max_len));
  apply_vocab(c, vocab);
  return c;
}

struct LogWriter {
  std::ofstream out;

  LogWriter(const fs::path& path, bool append) {
    const bool fresh = !append || !fs::exists(path);
    out.open(path, fresh ? std::ios::trunc : std::ios::app);
    if (!out) throw IoError("cannot open log file: " + path.string());
    if (fresh)
      out << "step,rec,cnt_rec,class_td,class_od,back_rec,class_btd,total\n";
    out.flush();
  }

  void write(std::size_t step, const LossBreakdown& b) {
    out << step << ',' << fmt_g17(b.rec) << ',' << fmt_g17(b.cnt_rec) << ','
        << fmt_g17(b.class_td) << ',' << fmt_g17(b.class_od) << ','
        << fmt_g17(b.back_rec) << ',' << fmt_g17(b.class_btd) << ','
        << fmt_g17(b.total) << '\n';
    out.flush();
  }
};

}  // namespace

TrainResult train(const TrainConfig& cfg, std::ostream* progress) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  Vocab vocab = Vocab::load(cfg.vocab_path);
  Corpus train_corpus =
      load_labeled_pair(cfg.pos_train, cfg.neg_train, vocab, cfg.max_len);
  const bool has_valid = !cfg.pos_valid.empty() && cfg.valid_interval > 0;
  Corpus valid_corpus;
  if (has_valid)
    valid_corpus =
        load_labeled_pair(cfg.pos_valid, cfg.neg_valid, vocab, cfg.max_len);

  NounLexicon lex;
  if (!cfg.lexicon_path.empty()) lex = NounLexicon::load(cfg.lexicon_path);
  const std::vector<char> noun_flags = noun_id_flags(vocab, lex);

  NetConfig ncfg;
  ncfg.vocab_size = vocab.size();
  ncfg.embed_dim = cfg.embed_dim;
  ncfg.attr_dim = cfg.attr_dim;
  ncfg.hidden_dim = cfg.hidden_dim;
  ncfg.cls_embed_dim = cfg.cls_embed_dim;
  ncfg.cls_feature_maps = cfg.cls_feature_maps;

  Rng rng(cfg.seed);
  EncoderDecoder model(ncfg, rng);
  TextCnn cls(ncfg, rng);
  ParamList params = model.params();
  for (const auto& p : cls.params()) params.push_back({"cls." + p.name, p.tensor});

  AdamState adam;
  adam.cfg.lr = cfg.learning_rate;
  adam.init(params);

  std::size_t step = 0;
  double best_valid = std::numeric_limits<double>::infinity();
  std::uint32_t bad_evals = 0;

  fs::create_directories(cfg.out_dir);
  const fs::path out_dir(cfg.out_dir);
  const fs::path last_path = out_dir / "last.ckpt";
  const fs::path best_path = out_dir / "best.ckpt";
  const fs::path model_path = out_dir / "model.ckpt";
  const fs::path log_path = out_dir / "train_log.csv";
  const fs::path valid_log_path = out_dir / "valid_log.csv";

  bool resuming = false;
  if (!cfg.resume.empty()) {
    Checkpoint ckpt = Checkpoint::load(cfg.resume);
    if (ckpt.kind != CkptKind::Transfer)
      throw ConfigError("resume checkpoint is not a transfer model");
    check_vocab_hash(ckpt, vocab, "resume");
    Checkpoint expect;
    expect.kind = CkptKind::Transfer;
    expect.net = ncfg;
    if (ckpt.config_hash() != expect.config_hash())
      throw ConfigError("resume checkpoint was trained with different dimensions");
    restore_params(ckpt, params);
    restore_adam(ckpt, params, adam);
    step = ckpt.step;
    best_valid = ckpt.best_valid;
    bad_evals = ckpt.bad_evals;
    resuming = true;
  }

  auto snapshot = [&](std::uint64_t at_step) {
    Checkpoint ckpt;
    ckpt.kind = CkptKind::Transfer;
    ckpt.net = ncfg;
    ckpt.vocab_hash = vocab.hash();
    ckpt.step = at_step;
    ckpt.best_valid = best_valid;
    ckpt.bad_evals = bad_evals;
    capture_params(params, ckpt);
    capture_adam(adam, params, ckpt);
    return ckpt;
  };

  LogWriter log(log_path, resuming);
  std::ofstream valid_log;
  if (has_valid) {
    const bool fresh = !resuming || !fs::exists(valid_log_path);
    valid_log.open(valid_log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!valid_log) throw IoError("cannot open log file: " + valid_log_path.string());
    if (fresh) valid_log << "step,valid_total\n";
  }

  TrainResult res;
  Tape tape;
  bool stop = false;
  const std::size_t n = train_corpus.size();
  const std::size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;

  for (std::size_t epoch = step / batches_per_epoch;
       !stop && step < cfg.max_steps; ++epoch) {
    auto batches = make_batches(train_corpus, cfg.batch_size, cfg.seed + epoch);
    // nonzero only when resuming mid-epoch: skip already-consumed batches
    std::size_t k = step - epoch * batches_per_epoch;
    for (; k < batches.size() && !stop; ++k) {
      ++step;
      StepResult sr =
          train_step(tape, model, cls, params, adam, batches[k], noun_flags,
                     cfg.weights, cfg.clip_norm,
                     train_horizon(cfg.max_len, batches[k].cols), step);
      log.write(step, sr.breakdown);

      if (progress && (step % 50 == 0 || step == cfg.max_steps)) {
        const auto dt = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
        *progress << "step " << step << "/" << cfg.max_steps << " total "
                  << sr.breakdown.total << " grad_norm " << sr.grad_norm
                  << " elapsed " << static_cast<int>(dt) << "s\n";
        progress->flush();
      }

      if (has_valid && step % cfg.valid_interval == 0) {
        const double v = validation_loss(model, cls, valid_corpus, noun_flags,
                                         cfg.weights, cfg.batch_size, cfg.max_len);
        valid_log << step << ',' << fmt_g17(v) << '\n';
        valid_log.flush();
        if (v < best_valid) {
          best_valid = v;
          bad_evals = 0;
          snapshot(step).save(best_path.string());
        } else if (++bad_evals >= cfg.patience) {
          res.early_stopped = true;
          stop = true;
        }
        if (progress) {
          *progress << "valid " << v << " best " << best_valid << " bad "
                    << bad_evals << "\n";
          progress->flush();
        }
      }

      if (cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0)
        snapshot(step).save(last_path.string());
      if (step >= cfg.max_steps) stop = true;
    }
  }

  snapshot(step).save(last_path.string());
  if (has_valid && fs::exists(best_path)) {
    Checkpoint best = Checkpoint::load(best_path.string());
    best.save(model_path.string());
  } else {
    snapshot(step).save(model_path.string());
  }

  res.steps = step;
  res.best_valid = best_valid;
  res.model_path = model_path.string();
  res.log_path = log_path.string();
  return res;
}

}  // namespace attrxfer
