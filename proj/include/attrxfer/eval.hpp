#pragma once

#include <functional>
#include <iosfwd>
#include <utility>

#include "attrxfer/checkpoint.hpp"
#include "attrxfer/losses.hpp"

namespace attrxfer {

// Next-token GRU language model: BOS-primed, scored through EOS.
class RnnLm {
 public:
  RnnLm(std::size_t vocab_size, std::size_t embed_dim, std::size_t hidden_dim,
        Rng& rng);

  // Per-step logits plus gold targets (row tokens + EOS), teacher-forced.
  struct StepOut {
    std::vector<Tensor> step_logits;
    std::vector<std::vector<int>> targets;
  };
  StepOut step_logits(Tape& t, const Batch& batch) const;

  // Training loss: per-row token-mean NLL, then batch mean.
  Tensor loss(Tape& t, const Batch& batch) const;

  ParamList params() const;
  std::size_t vocab_size() const { return cfg_vocab_; }
  std::size_t embed_dim() const { return embed_.cols(); }
  std::size_t hidden_dim() const { return cell_.hidden_dim; }

 private:
  std::size_t cfg_vocab_;
  Tensor embed_;
  GruCell cell_;
  Tensor out_w_, out_b_;
};

// Total NLL (nats) and token count, EOS included, over id sequences.
struct NllTotal {
  double nll = 0.0;
  std::size_t tokens = 0;
};
NllTotal lm_nll(const RnnLm& lm, const std::vector<std::vector<int>>& sentences);

double perplexity(const std::vector<std::vector<int>>& sentences,
                  const RnnLm& lm);

// Oracle prediction: argmax over the two labels, ties toward 0. Empty
// sequences are scored as a single PAD token.
int predict_label(const TextCnn& cls, const std::vector<int>& ids);

double sentiment_accuracy(
    const std::vector<std::pair<std::vector<int>, int>>& pairs,
    const TextCnn& oracle);

double content_preservation(
    const std::vector<std::pair<Sentence, Sentence>>& pairs,
    const NounLexicon& lex);

struct OracleTrainConfig {
  std::size_t vocab_size = 0;  // required
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t max_steps = 1500;
  std::uint64_t seed = 7;
  double valid_fraction = 0.1;
  std::size_t embed_dim = 64;
  std::size_t feature_maps = 32;
};

struct OracleResult {
  TextCnn cls;
  double heldout_accuracy;
};

OracleResult train_oracle(const Corpus& corpus, const OracleTrainConfig& cfg,
                          std::ostream* progress = nullptr);

double classifier_accuracy(const TextCnn& cls, const Corpus& corpus);

struct LmTrainConfig {
  std::size_t vocab_size = 0;  // required
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t max_steps = 2000;
  std::uint64_t seed = 7;
  double valid_fraction = 0.1;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 64;
};

struct LmResult {
  RnnLm lm;
  double heldout_perplexity;
};

LmResult train_lm(const Corpus& corpus, const LmTrainConfig& cfg,
                  std::ostream* progress = nullptr);

// Maps a source sentence and target label to transferred token ids.
using TransferFn =
    std::function<std::vector<int>(const Sentence&, int target_label)>;

TransferFn greedy_transfer_fn(const EncoderDecoder& model, std::size_t max_len);
TransferFn identity_transfer_fn();

struct EvalPair {
  Sentence original;
  std::vector<int> transferred_ids;
  std::vector<std::string> transferred_words;
  int target_label = 0;
};

struct EvalReport {
  double sentiment_accuracy = 0.0;
  double content_preservation = 0.0;
  double perplexity = 0.0;
  std::size_t pairs = 0;
};

EvalReport evaluate(const TransferFn& transfer, const Corpus& test,
                    const TextCnn& oracle, const RnnLm& lm,
                    const NounLexicon& lex, const Vocab& vocab,
                    std::vector<EvalPair>* out_pairs = nullptr);

std::string format_report_table(const EvalReport& r);
void write_report(const std::filesystem::path& path, const EvalReport& r);
void write_pairs(const std::filesystem::path& path,
                 const std::vector<EvalPair>& pairs);

// Checkpoint glue: rebuild networks with stored dimensions and parameters.
Checkpoint checkpoint_of(const EncoderDecoder& model, const TextCnn& cls,
                         std::uint64_t vocab_hash);
Checkpoint checkpoint_of(const TextCnn& cls, std::uint64_t vocab_hash);
Checkpoint checkpoint_of(const RnnLm& lm, std::uint64_t vocab_hash);

struct TransferModel {
  EncoderDecoder model;
  TextCnn cls;
};
TransferModel transfer_model_from(const Checkpoint& ckpt);
TextCnn classifier_from(const Checkpoint& ckpt);
RnnLm lm_from(const Checkpoint& ckpt);

}  // namespace attrxfer
