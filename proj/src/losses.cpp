#include "attrxfer/losses.hpp"

#include <string>

namespace attrxfer {

void LossWeights::validate() const {
  const double v[6] = {rec, cnt_rec, back_rec, class_od, class_td, class_btd};
  const char* names[6] = {"rec", "cnt_rec", "back_rec",
                          "class_od", "class_td", "class_btd"};
  for (int i = 0; i < 6; ++i)
    if (v[i] < 0.0)
      throw ConfigError(std::string("negative loss weight lambda_") + names[i]);
}

double total_of(const LossBreakdown& b, const LossWeights& w) {
  w.validate();
  return w.rec * b.rec + w.cnt_rec * b.cnt_rec + w.back_rec * b.back_rec +
         w.class_od * b.class_od + w.class_td * b.class_td +
         w.class_btd * b.class_btd;
}

std::vector<int> flip_labels(const std::vector<int>& labels) {
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = 1 - labels[i];
  return out;
}

TransferLegs run_legs(Tape& t, const EncoderDecoder& model, const Batch& batch,
                      std::size_t horizon) {
  TransferLegs legs;
  legs.labels = batch.labels;
  legs.flipped = flip_labels(batch.labels);
  legs.enc = model.encode(t, batch, legs.labels);
  legs.recon = model.decode_teacher(t, legs.enc, legs.labels, batch);
  legs.fwd = model.decode_soft(t, legs.enc, legs.flipped, horizon);
  legs.enc_back = model.encode_soft(t, legs.fwd, legs.flipped);
  legs.back_recon = model.decode_teacher(t, legs.enc_back, legs.labels, batch);
  legs.back = model.decode_soft(t, legs.enc_back, legs.labels, horizon);
  return legs;
}

Tensor masked_mean_nll(Tape& t, const std::vector<Tensor>& step_logits,
                       const std::vector<std::vector<int>>& targets) {
  if (step_logits.empty() || targets.empty())
    throw DataError("masked_mean_nll: empty input");
  const std::size_t rows = targets.size();
  Tensor acc;  // [B] accumulated log-probs of gold tokens
  for (std::size_t s = 0; s < step_logits.size(); ++s) {
    std::vector<int> ids(rows, 0);
    std::vector<double> m(rows, 0.0);
    bool any = false;
    for (std::size_t r = 0; r < rows; ++r)
      if (s < targets[r].size()) {
        ids[r] = targets[r][s];
        m[r] = 1.0;
        any = true;
      }
    if (!any) break;
    Tensor lp = t.log_clamped(t.softmax(step_logits[s]));
    Tensor sel = t.mul(t.pick(lp, ids), Tensor::constant({rows}, m));
    acc = acc.defined() ? t.add(acc, sel) : sel;
  }
  std::vector<double> inv_len(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r].empty()) throw DataError("masked_mean_nll: empty target row");
    inv_len[r] = 1.0 / static_cast<double>(targets[r].size());
  }
  Tensor per_row = t.mul(acc, Tensor::constant({rows}, inv_len));
  return t.scale(t.mean(per_row), -1.0);
}

std::vector<char> noun_id_flags(const Vocab& vocab, const NounLexicon& lex) {
  std::vector<char> flags(vocab.size(), 0);
  for (std::size_t id = kReserved; id < vocab.size(); ++id)
    if (lex.contains(vocab.token(static_cast<int>(id))))
      flags[id] = 1;
  return flags;
}

Tensor loss_rec(Tape& t, const TransferLegs& legs) {
  return masked_mean_nll(t, legs.recon.step_logits, legs.recon.targets);
}

Tensor loss_cnt_rec(Tape& t, const TransferLegs& legs, const Batch& batch,
                    const std::vector<char>& noun_flags) {
  Tensor acc;
  std::size_t count = 0;
  for (std::size_t row = 0; row < batch.rows; ++row) {
    for (const auto& [r, rp] : align(legs.fwd.attention[row])) {
      const int w = batch.id(row, r);
      if (w < 0 || static_cast<std::size_t>(w) >= noun_flags.size() ||
          !noun_flags[static_cast<std::size_t>(w)])
        continue;
      Tensor p = t.at(legs.fwd.step_probs[rp], row,
                      static_cast<std::size_t>(w));
      Tensor lp = t.log_clamped(p);
      acc = acc.defined() ? t.add(acc, lp) : lp;
      ++count;
    }
  }
  if (count == 0) return Tensor::scalar(0.0);
  return t.scale(acc, -1.0 / static_cast<double>(count));
}

Tensor loss_class_td(Tape& t, const SoftBatch& soft, const TextCnn& cls,
                     const std::vector<int>& target_labels) {
  const std::size_t rows = soft.gen_lengths.size();
  check_labels(target_labels, rows);
  Tensor acc;
  for (std::size_t r = 0; r < rows; ++r) {
    SoftSequence seq = soft_of_row(t, soft, r);
    Tensor lp = t.log_clamped(cls.probs_soft(t, seq.probs));
    const auto lab = static_cast<std::size_t>(target_labels[r]);
    Tensor sel = t.slice(lp, lab, lab + 1);
    acc = acc.defined() ? t.add(acc, sel) : sel;
  }
  return t.scale(acc, -1.0 / static_cast<double>(rows));
}

Tensor loss_class_od(Tape& t, const TextCnn& cls, const Batch& batch) {
  if (batch.rows == 0) throw DataError("loss_class_od: empty batch");
  Tensor acc;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    Tensor lp = t.log_clamped(cls.probs_tokens(t, batch.row_tokens(r)));
    const auto lab = static_cast<std::size_t>(batch.labels[r]);
    Tensor sel = t.slice(lp, lab, lab + 1);
    acc = acc.defined() ? t.add(acc, sel) : sel;
  }
  return t.scale(acc, -1.0 / static_cast<double>(batch.rows));
}

Tensor loss_back_rec(Tape& t, const TransferLegs& legs) {
  return masked_mean_nll(t, legs.back_recon.step_logits,
                         legs.back_recon.targets);
}

Tensor loss_class_btd(Tape& t, const TransferLegs& legs, const TextCnn& cls) {
  return loss_class_td(t, legs.back, cls, legs.labels);
}

namespace {
std::size_t default_horizon(const Batch& batch) {
  return batch.cols + 2;
}
}  // namespace

Tensor loss_rec(Tape& t, const EncoderDecoder& model, const Batch& batch) {
  EncodedBatch enc = model.encode(t, batch, batch.labels);
  TeacherOut recon = model.decode_teacher(t, enc, batch.labels, batch);
  return masked_mean_nll(t, recon.step_logits, recon.targets);
}

Tensor loss_cnt_rec(Tape& t, const EncoderDecoder& model, const Batch& batch,
                    const std::vector<char>& noun_flags, std::size_t horizon) {
  TransferLegs legs;
  legs.labels = batch.labels;
  legs.flipped = flip_labels(batch.labels);
  legs.enc = model.encode(t, batch, legs.labels);
  legs.fwd = model.decode_soft(t, legs.enc, legs.flipped,
                               horizon ? horizon : default_horizon(batch));
  return loss_cnt_rec(t, legs, batch, noun_flags);
}

Tensor loss_back_rec(Tape& t, const EncoderDecoder& model, const Batch& batch,
                     std::size_t horizon) {
  if (horizon == 0) horizon = default_horizon(batch);
  std::vector<int> flipped = flip_labels(batch.labels);
  EncodedBatch enc = model.encode(t, batch, batch.labels);
  SoftBatch fwd = model.decode_soft(t, enc, flipped, horizon);
  EncodedBatch enc_back = model.encode_soft(t, fwd, flipped);
  TeacherOut back = model.decode_teacher(t, enc_back, batch.labels, batch);
  return masked_mean_nll(t, back.step_logits, back.targets);
}

Tensor loss_class_btd(Tape& t, const EncoderDecoder& model, const TextCnn& cls,
                      const Batch& batch, std::size_t horizon) {
  if (horizon == 0) horizon = default_horizon(batch);
  std::vector<int> flipped = flip_labels(batch.labels);
  EncodedBatch enc = model.encode(t, batch, batch.labels);
  SoftBatch fwd = model.decode_soft(t, enc, flipped, horizon);
  EncodedBatch enc_back = model.encode_soft(t, fwd, flipped);
  SoftBatch back = model.decode_soft(t, enc_back, batch.labels, horizon);
  return loss_class_td(t, back, cls, batch.labels);
}

LossTerms all_losses(Tape& t, const EncoderDecoder& model, const TextCnn& cls,
                     const Batch& batch, const std::vector<char>& noun_flags,
                     std::size_t horizon) {
  if (horizon == 0) horizon = default_horizon(batch);
  TransferLegs legs = run_legs(t, model, batch, horizon);
  LossTerms terms;
  terms.rec = loss_rec(t, legs);
  terms.cnt_rec = loss_cnt_rec(t, legs, batch, noun_flags);
  terms.class_td = loss_class_td(t, legs.fwd, cls, legs.flipped);
  terms.class_od = loss_class_od(t, cls, batch);
  terms.back_rec = loss_back_rec(t, legs);
  terms.class_btd = loss_class_btd(t, legs, cls);
  return terms;
}

Tensor weighted_total(Tape& t, const LossTerms& terms, const LossWeights& w) {
  w.validate();
  const Tensor* ts[6] = {&terms.rec,      &terms.cnt_rec,  &terms.back_rec,
                         &terms.class_od, &terms.class_td, &terms.class_btd};
  const double ws[6] = {w.rec,      w.cnt_rec,  w.back_rec,
                        w.class_od, w.class_td, w.class_btd};
  Tensor total;
  for (int i = 0; i < 6; ++i) {
    if (ws[i] == 0.0) continue;
    Tensor term = t.scale(*ts[i], ws[i]);
    total = total.defined() ? t.add(total, term) : term;
  }
  return total.defined() ? total : Tensor::scalar(0.0);
}

LossBreakdown breakdown_of(const LossTerms& terms, const LossWeights& w) {
  LossBreakdown b;
  b.rec = terms.rec.item();
  b.cnt_rec = terms.cnt_rec.item();
  b.class_td = terms.class_td.item();
  b.class_od = terms.class_od.item();
  b.back_rec = terms.back_rec.item();
  b.class_btd = terms.class_btd.item();
  b.total = total_of(b, w);
  return b;
}

}  // namespace attrxfer
