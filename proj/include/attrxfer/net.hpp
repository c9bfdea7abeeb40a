#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "attrxfer/data.hpp"
#include "attrxfer/optim.hpp"
#include "attrxfer/tensor.hpp"

namespace attrxfer {

struct NetConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t attr_dim = 8;
  std::size_t hidden_dim = 64;
  std::size_t cls_embed_dim = 64;
  std::size_t cls_feature_maps = 32;
  std::vector<std::size_t> cls_widths = {3, 4, 5};
  double init_scale = 0.08;
};

struct GruCell {
  Tensor wz, uz, bz, wr, ur, br, wh, uh, bh;
  std::size_t in_dim = 0, hidden_dim = 0;

  void init(Rng& rng, std::size_t in, std::size_t hidden, double scale);
  // x [B,in], h [B,hidden] -> [B,hidden]
  Tensor step(Tape& t, const Tensor& x, const Tensor& h) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Batched encoder output. states[t] holds the hidden state after consuming
// position t; rows past their true length carry the last real state, so
// states.back() is every row's final state.
struct EncodedBatch {
  std::vector<Tensor> states;  // T entries of [B,h]
  Tensor mask_matrix;          // [B,T] constant 0/1
  std::vector<int> lengths;    // true source length per row

  std::size_t batch_rows() const { return lengths.size(); }
  std::size_t steps() const { return states.size(); }
};

// Per-row attention weights, ragged over true source lengths.
using AttentionRows = std::vector<std::vector<std::vector<double>>>;

// Soft decoder output: one probability row per generated step.
struct SoftBatch {
  std::vector<Tensor> step_probs;  // T' entries of [B,V]
  std::vector<int> gen_lengths;    // generated steps per row (>= 1)
  AttentionRows attention;         // [row][step][src]

  std::size_t steps() const { return step_probs.size(); }
};

struct TeacherOut {
  std::vector<Tensor> step_logits;       // S entries of [B,V]
  std::vector<std::vector<int>> targets; // per row: token ids then EOS
  AttentionRows attention;
};

struct GreedyOut {
  std::vector<std::vector<int>> tokens;  // per row, EOS excluded
  AttentionRows attention;
};

// Single-sentence differentiable soft sequence: probs is [T',V].
struct SoftSequence {
  Tensor probs;
  std::vector<std::vector<double>> attention;  // [T'][T]
};

using AlignmentPairs = std::vector<std::pair<std::size_t, std::size_t>>;

// argmax per generated step; ties break toward the lowest source index.
// Pairs are (source r, target r').
AlignmentPairs align(const std::vector<std::vector<double>>& attention);

std::size_t argmax(const std::vector<double>& v);

// Attribute-conditioned GRU encoder plus attention GRU decoder. Encoder and
// decoder share one word embedding; the attribute embedding is concatenated
// to every input embedding on both sides.
class EncoderDecoder {
 public:
  EncoderDecoder(const NetConfig& cfg, Rng& rng);

  EncodedBatch encode(Tape& t, const Batch& batch,
                      const std::vector<int>& labels) const;
  // Same recurrence, but each input embedding is the probability-weighted
  // average of word embeddings. Rows must be normalized within 1e-4.
  EncodedBatch encode_soft(Tape& t, const SoftBatch& soft,
                           const std::vector<int>& labels) const;

  // Gold-fed decoding over target. Step t consumes target token t-1 (BOS at
  // t=0); one extra step predicts EOS. Returns logits per step.
  TeacherOut decode_teacher(Tape& t, const EncodedBatch& enc,
                            const std::vector<int>& labels,
                            const Batch& target) const;

  // Autoregressive soft decoding, feeding back the expected embedding of each
  // step's distribution. A row stops once its EOS probability exceeds 0.5
  // (that row is kept) or at max_len.
  SoftBatch decode_soft(Tape& t, const EncodedBatch& enc,
                        const std::vector<int>& labels,
                        std::size_t max_len) const;

  // As decode_soft but feeding back the argmax embedding; stops at EOS,
  // which is never emitted into the returned token sequence.
  GreedyOut decode_greedy(Tape& t, const EncodedBatch& enc,
                          const std::vector<int>& labels,
                          std::size_t max_len) const;

  ParamList params() const;
  const NetConfig& config() const { return cfg_; }
  const Tensor& embedding() const { return embed_; }

 private:
  struct StepIo {
    Tensor logits;   // [B,V]
    Tensor attn;     // [B,T]
    Tensor hidden;   // [B,h]
  };
  Tensor attr_rows(Tape& t, const std::vector<int>& labels) const;
  StepIo decode_step(Tape& t, const EncodedBatch& enc, const Tensor& in_emb,
                     const Tensor& attr_emb, const Tensor& h,
                     const Tensor& step_mask) const;

  NetConfig cfg_;
  Tensor embed_;       // [V, embed_dim], shared by encoder and decoder
  Tensor attr_embed_;  // [2, attr_dim]
  GruCell enc_cell_, dec_cell_;
  Tensor attn_w_, attn_b_;  // combine [context; hidden] -> hidden
  Tensor out_w_, out_b_;    // hidden -> vocab logits
};

// Text CNN over (expected) embeddings: parallel filter banks, tanh,
// max-over-time, linear to 2 logits. Owns its word embedding so that the
// classifier can be trained without touching encoder/decoder parameters.
class TextCnn {
 public:
  TextCnn(const NetConfig& cfg, Rng& rng);

  // probs [T,V] -> logits [2]; sequences shorter than the widest filter are
  // padded with the PAD embedding.
  Tensor logits_soft(Tape& t, const Tensor& probs) const;
  Tensor logits_tokens(Tape& t, const std::vector<int>& ids) const;
  // already-embedded sequence [T, cls_embed_dim] -> [2]
  Tensor logits_emb(Tape& t, const Tensor& emb) const;

  Tensor probs_soft(Tape& t, const Tensor& probs) const;
  Tensor probs_tokens(Tape& t, const std::vector<int>& ids) const;

  ParamList params() const;
  const NetConfig& config() const { return cfg_; }
  const Tensor& embedding() const { return embed_; }
  std::size_t max_width() const;

 private:
  struct ConvBank {
    std::size_t width;
    Tensor kernels;  // [F, width*embed_dim]
    Tensor bias;     // [F]
  };
  NetConfig cfg_;
  Tensor embed_;  // [V, cls_embed_dim]
  std::vector<ConvBank> convs_;
  Tensor fc_w_, fc_b_;  // [widths*F, 2], [2]
};

// Extracts row r of a soft batch as a single differentiable SoftSequence.
SoftSequence soft_of_row(Tape& t, const SoftBatch& soft, std::size_t r);

// Lifts one sentence into a single-step-prob SoftBatch (used by encode_soft
// round trips and one-hot consistency checks).
SoftBatch soft_batch_of_one(Tape& t, const Tensor& probs);

// One-hot lift of token ids into a [T,V] matrix.
Tensor one_hot_rows(const std::vector<int>& ids, std::size_t vocab_size);

// Per-row [T,h] view of an encoded batch (row's true length only).
Tensor hidden_matrix(Tape& t, const EncodedBatch& enc, std::size_t r);

void check_labels(const std::vector<int>& labels, std::size_t rows);

}  // namespace attrxfer
