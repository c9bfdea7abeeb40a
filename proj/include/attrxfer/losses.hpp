#pragma once

#include <vector>

#include "attrxfer/data.hpp"
#include "attrxfer/net.hpp"
#include "attrxfer/tensor.hpp"

namespace attrxfer {

struct LossWeights {
  double rec = 1.0;
  double cnt_rec = 1.0;
  double back_rec = 1.0;
  double class_od = 1.0;
  double class_td = 1.0;
  double class_btd = 1.0;

  void validate() const;
};

struct LossBreakdown {
  double rec = 0.0;
  double cnt_rec = 0.0;
  double class_td = 0.0;
  double class_od = 0.0;
  double back_rec = 0.0;
  double class_btd = 0.0;
  double total = 0.0;
};

double total_of(const LossBreakdown& b, const LossWeights& w);

// All intermediate products of one transfer cycle on a batch, built on a
// shared tape so each leg is computed once and reused by every loss that
// needs it.
struct TransferLegs {
  std::vector<int> labels;          // source labels per row
  std::vector<int> flipped;         // 1 - label
  EncodedBatch enc;                 // encode(x, s_i)
  TeacherOut recon;                 // decode toward s_i with gold x
  SoftBatch fwd;                    // soft transfer toward s_j
  EncodedBatch enc_back;            // encode_soft(transfer, s_j)
  TeacherOut back_recon;            // decode toward s_i with gold x
  SoftBatch back;                   // soft back-transfer toward s_i
};

std::vector<int> flip_labels(const std::vector<int>& labels);

TransferLegs run_legs(Tape& t, const EncoderDecoder& model, const Batch& batch,
                      std::size_t horizon);

// Per-row mean of (sum over steps of -log p[target]) / target length.
Tensor masked_mean_nll(Tape& t, const std::vector<Tensor>& step_logits,
                       const std::vector<std::vector<int>>& targets);

// 0/1 flag per vocabulary id: token surface is in the lexicon.
std::vector<char> noun_id_flags(const Vocab& vocab, const NounLexicon& lex);

// Tensor-valued loss terms, shared-leg forms.
Tensor loss_rec(Tape& t, const TransferLegs& legs);
Tensor loss_cnt_rec(Tape& t, const TransferLegs& legs, const Batch& batch,
                    const std::vector<char>& noun_flags);
Tensor loss_class_td(Tape& t, const SoftBatch& soft, const TextCnn& cls,
                     const std::vector<int>& target_labels);
Tensor loss_class_od(Tape& t, const TextCnn& cls, const Batch& batch);
Tensor loss_back_rec(Tape& t, const TransferLegs& legs);
Tensor loss_class_btd(Tape& t, const TransferLegs& legs, const TextCnn& cls);

// Standalone forms that build their own legs.
Tensor loss_rec(Tape& t, const EncoderDecoder& model, const Batch& batch);
Tensor loss_cnt_rec(Tape& t, const EncoderDecoder& model, const Batch& batch,
                    const std::vector<char>& noun_flags, std::size_t horizon);
Tensor loss_back_rec(Tape& t, const EncoderDecoder& model, const Batch& batch,
                     std::size_t horizon);
Tensor loss_class_btd(Tape& t, const EncoderDecoder& model, const TextCnn& cls,
                      const Batch& batch, std::size_t horizon);

struct LossTerms {
  Tensor rec, cnt_rec, class_td, class_od, back_rec, class_btd;
};

LossTerms all_losses(Tape& t, const EncoderDecoder& model, const TextCnn& cls,
                     const Batch& batch, const std::vector<char>& noun_flags,
                     std::size_t horizon);

Tensor weighted_total(Tape& t, const LossTerms& terms, const LossWeights& w);

LossBreakdown breakdown_of(const LossTerms& terms, const LossWeights& w);

}  // namespace attrxfer
