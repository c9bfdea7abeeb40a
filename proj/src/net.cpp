#include "attrxfer/net.hpp"

#include <algorithm>
#include <cmath>

namespace attrxfer {

namespace {
std::vector<double> uniform_init(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

Tensor uniform_param(Rng& rng, Shape shape, double scale) {
  const std::size_t n = shape_numel(shape);
  return Tensor::param(std::move(shape), uniform_init(rng, n, scale));
}
}  // namespace

std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

AlignmentPairs align(const std::vector<std::vector<double>>& attention) {
  AlignmentPairs pairs;
  pairs.reserve(attention.size());
  for (std::size_t rp = 0; rp < attention.size(); ++rp)
    pairs.emplace_back(argmax(attention[rp]), rp);
  return pairs;
}

void check_labels(const std::vector<int>& labels, std::size_t rows) {
  if (labels.size() != rows)
    throw DataError("labels: expected " + std::to_string(rows) + " entries, got " +
                    std::to_string(labels.size()));
  for (int l : labels)
    if (l != 0 && l != 1)
      throw DataError("label outside {0,1}: " + std::to_string(l));
}

// ---------------------------------------------------------------------------
// GRU

void GruCell::init(Rng& rng, std::size_t in, std::size_t hidden, double scale) {
  in_dim = in;
  hidden_dim = hidden;
  wz = uniform_param(rng, {in, hidden}, scale);
  uz = uniform_param(rng, {hidden, hidden}, scale);
  bz = Tensor::param({hidden}, std::vector<double>(hidden, 0.0));
  wr = uniform_param(rng, {in, hidden}, scale);
  ur = uniform_param(rng, {hidden, hidden}, scale);
  br = Tensor::param({hidden}, std::vector<double>(hidden, 0.0));
  wh = uniform_param(rng, {in, hidden}, scale);
  uh = uniform_param(rng, {hidden, hidden}, scale);
  bh = Tensor::param({hidden}, std::vector<double>(hidden, 0.0));
}

Tensor GruCell::step(Tape& t, const Tensor& x, const Tensor& h) const {
  Tensor z = t.sigmoid(t.add_rowvec(t.add(t.matmul(x, wz), t.matmul(h, uz)), bz));
  Tensor r = t.sigmoid(t.add_rowvec(t.add(t.matmul(x, wr), t.matmul(h, ur)), br));
  Tensor c = t.tanh(
      t.add_rowvec(t.add(t.matmul(x, wh), t.matmul(t.mul(r, h), uh)), bh));
  // (1-z)*h + z*c
  return t.add(h, t.mul(z, t.sub(c, h)));
}

void GruCell::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + "wz", wz});
  out.push_back({prefix + "uz", uz});
  out.push_back({prefix + "bz", bz});
  out.push_back({prefix + "wr", wr});
  out.push_back({prefix + "ur", ur});
  out.push_back({prefix + "br", br});
  out.push_back({prefix + "wh", wh});
  out.push_back({prefix + "uh", uh});
  out.push_back({prefix + "bh", bh});
}

// ---------------------------------------------------------------------------
// EncoderDecoder

EncoderDecoder::EncoderDecoder(const NetConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.vocab_size == 0) throw DataError("net: vocab_size not set");
  const double s = cfg.init_scale;
  embed_ = uniform_param(rng, {cfg.vocab_size, cfg.embed_dim}, s);
  attr_embed_ = uniform_param(rng, {2, cfg.attr_dim}, s);
  enc_cell_.init(rng, cfg.embed_dim + cfg.attr_dim, cfg.hidden_dim, s);
  dec_cell_.init(rng, cfg.embed_dim + cfg.attr_dim, cfg.hidden_dim, s);
  attn_w_ = uniform_param(rng, {2 * cfg.hidden_dim, cfg.hidden_dim}, s);
  attn_b_ = Tensor::param({cfg.hidden_dim}, std::vector<double>(cfg.hidden_dim, 0.0));
  out_w_ = uniform_param(rng, {cfg.hidden_dim, cfg.vocab_size}, s);
  out_b_ = Tensor::param({cfg.vocab_size}, std::vector<double>(cfg.vocab_size, 0.0));
}

Tensor EncoderDecoder::attr_rows(Tape& t, const std::vector<int>& labels) const {
  return t.gather_rows(attr_embed_, labels);
}

EncodedBatch EncoderDecoder::encode(Tape& t, const Batch& batch,
                                    const std::vector<int>& labels) const {
  check_labels(labels, batch.rows);
  Tensor attr = attr_rows(t, labels);
  Tensor h = Tensor::zeros({batch.rows, cfg_.hidden_dim});
  EncodedBatch out;
  out.lengths = batch.lengths;
  out.mask_matrix = Tensor::constant({batch.rows, batch.cols}, batch.mask);
  for (std::size_t step = 0; step < batch.cols; ++step) {
    std::vector<int> ids(batch.rows);
    std::vector<double> m(batch.rows);
    for (std::size_t r = 0; r < batch.rows; ++r) {
      ids[r] = batch.id(r, step);
      m[r] = batch.mask[r * batch.cols + step];
    }
    Tensor x = t.concat(t.gather_rows(embed_, ids), attr, 1);
    Tensor hn = enc_cell_.step(t, x, h);
    Tensor mask = Tensor::constant({batch.rows}, m);
    h = t.add(h, t.mul_colvec(t.sub(hn, h), mask));
    out.states.push_back(h);
  }
  return out;
}

EncodedBatch EncoderDecoder::encode_soft(Tape& t, const SoftBatch& soft,
                                         const std::vector<int>& labels) const {
  const std::size_t rows = soft.gen_lengths.size();
  check_labels(labels, rows);
  if (soft.step_probs.empty()) throw DataError("encode_soft: empty sequence");
  Tensor attr = attr_rows(t, labels);
  Tensor h = Tensor::zeros({rows, cfg_.hidden_dim});
  EncodedBatch out;
  out.lengths = soft.gen_lengths;
  const std::size_t steps = soft.steps();
  std::vector<double> mask_values(rows * steps, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (int s = 0; s < soft.gen_lengths[r]; ++s)
      mask_values[r * steps + static_cast<std::size_t>(s)] = 1.0;
  out.mask_matrix = Tensor::constant({rows, steps}, mask_values);
  for (std::size_t step = 0; step < steps; ++step) {
    const Tensor& p = soft.step_probs[step];
    if (p.rank() != 2 || p.rows() != rows || p.cols() != cfg_.vocab_size)
      throw ShapeMismatch("encode_soft", p.shape(), {rows, cfg_.vocab_size});
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < p.cols(); ++j) sum += p.v(r, j);
      if (std::abs(sum - 1.0) > 1e-4)
        throw DataError("encode_soft: row " + std::to_string(r) + " at step " +
                        std::to_string(step) + " sums to " + std::to_string(sum));
    }
    Tensor xe = t.matmul(p, embed_);
    Tensor x = t.concat(xe, attr, 1);
    Tensor hn = enc_cell_.step(t, x, h);
    std::vector<double> m(rows);
    for (std::size_t r = 0; r < rows; ++r)
      m[r] = mask_values[r * steps + step];
    h = t.add(h, t.mul_colvec(t.sub(hn, h), Tensor::constant({rows}, m)));
    out.states.push_back(h);
  }
  return out;
}

EncoderDecoder::StepIo EncoderDecoder::decode_step(Tape& t,
                                                   const EncodedBatch& enc,
                                                   const Tensor& in_emb,
                                                   const Tensor& attr_emb,
                                                   const Tensor& h,
                                                   const Tensor& step_mask) const {
  Tensor x = t.concat(in_emb, attr_emb, 1);
  Tensor hn = dec_cell_.step(t, x, h);
  Tensor h2 = t.add(h, t.mul_colvec(t.sub(hn, h), step_mask));
  // global dot-product attention over source states
  std::vector<Tensor> scores;
  scores.reserve(enc.steps());
  for (const auto& s : enc.states) scores.push_back(t.row_sum(t.mul(s, h2)));
  Tensor a = t.masked_softmax(t.stack_cols(scores), enc.mask_matrix);
  Tensor ctx;
  for (std::size_t j = 0; j < enc.steps(); ++j) {
    Tensor term = t.mul_colvec(enc.states[j], t.col(a, j));
    ctx = j == 0 ? term : t.add(ctx, term);
  }
  Tensor comb = t.tanh(
      t.add_rowvec(t.matmul(t.concat(ctx, h2, 1), attn_w_), attn_b_));
  Tensor logits = t.add_rowvec(t.matmul(comb, out_w_), out_b_);
  return {logits, a, h2};
}

namespace {
// copy attention row r, truncated to the row's true source length
std::vector<double> attn_row(const Tensor& a, std::size_t r, int src_len) {
  std::vector<double> out(static_cast<std::size_t>(src_len));
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = a.v(r, j);
  return out;
}
}  // namespace

TeacherOut EncoderDecoder::decode_teacher(Tape& t, const EncodedBatch& enc,
                                          const std::vector<int>& labels,
                                          const Batch& target) const {
  const std::size_t rows = enc.batch_rows();
  check_labels(labels, rows);
  if (target.rows != rows)
    throw DataError("decode_teacher: target rows " + std::to_string(target.rows) +
                    " != encoded rows " + std::to_string(rows));
  Tensor attr = attr_rows(t, labels);
  Tensor h = enc.states.back();
  TeacherOut out;
  out.targets.resize(rows);
  out.attention.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    out.targets[r] = target.row_tokens(r);
    out.targets[r].push_back(kEos);
  }
  const std::size_t steps = target.cols + 1;
  for (std::size_t s = 0; s < steps; ++s) {
    std::vector<int> in_ids(rows);
    std::vector<double> m(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      in_ids[r] = s == 0 ? kBos : target.id(r, s - 1);
      m[r] = s < out.targets[r].size() ? 1.0 : 0.0;
    }
    auto io = decode_step(t, enc, t.gather_rows(embed_, in_ids), attr, h,
                          Tensor::constant({rows}, m));
    h = io.hidden;
    out.step_logits.push_back(io.logits);
    for (std::size_t r = 0; r < rows; ++r)
      if (m[r] != 0.0)
        out.attention[r].push_back(attn_row(io.attn, r, enc.lengths[r]));
  }
  return out;
}

SoftBatch EncoderDecoder::decode_soft(Tape& t, const EncodedBatch& enc,
                                      const std::vector<int>& labels,
                                      std::size_t max_len) const {
  const std::size_t rows = enc.batch_rows();
  check_labels(labels, rows);
  if (max_len == 0) throw DataError("decode_soft: max_len must be >= 1");
  Tensor attr = attr_rows(t, labels);
  Tensor h = enc.states.back();
  SoftBatch out;
  out.gen_lengths.assign(rows, 0);
  out.attention.resize(rows);
  std::vector<bool> active(rows, true);
  Tensor in_emb = t.gather_rows(embed_, std::vector<int>(rows, kBos));
  for (std::size_t s = 0; s < max_len; ++s) {
    std::vector<double> m(rows);
    for (std::size_t r = 0; r < rows; ++r) m[r] = active[r] ? 1.0 : 0.0;
    auto io = decode_step(t, enc, in_emb, attr, h, Tensor::constant({rows}, m));
    h = io.hidden;
    Tensor p = t.softmax(io.logits);
    out.step_probs.push_back(p);
    bool any_active = false;
    for (std::size_t r = 0; r < rows; ++r) {
      if (!active[r]) continue;
      out.gen_lengths[r] = static_cast<int>(s + 1);
      out.attention[r].push_back(attn_row(io.attn, r, enc.lengths[r]));
      if (p.v(r, kEos) > 0.5) active[r] = false;
      any_active = any_active || active[r];
    }
    if (!any_active) break;
    if (s + 1 < max_len) in_emb = t.matmul(p, embed_);
  }
  return out;
}

GreedyOut EncoderDecoder::decode_greedy(Tape& t, const EncodedBatch& enc,
                                        const std::vector<int>& labels,
                                        std::size_t max_len) const {
  const std::size_t rows = enc.batch_rows();
  check_labels(labels, rows);
  if (max_len == 0) throw DataError("decode_greedy: max_len must be >= 1");
  Tensor attr = attr_rows(t, labels);
  Tensor h = enc.states.back();
  GreedyOut out;
  out.tokens.resize(rows);
  out.attention.resize(rows);
  std::vector<bool> active(rows, true);
  std::vector<int> prev(rows, kBos);
  for (std::size_t s = 0; s < max_len; ++s) {
    std::vector<double> m(rows);
    for (std::size_t r = 0; r < rows; ++r) m[r] = active[r] ? 1.0 : 0.0;
    auto io = decode_step(t, enc, t.gather_rows(embed_, prev), attr, h,
                          Tensor::constant({rows}, m));
    h = io.hidden;
    bool any_active = false;
    for (std::size_t r = 0; r < rows; ++r) {
      if (!active[r]) continue;
      std::vector<double> row_logits(cfg_.vocab_size);
      for (std::size_t j = 0; j < cfg_.vocab_size; ++j)
        row_logits[j] = io.logits.v(r, j);
      const int tok = static_cast<int>(argmax(row_logits));
      if (tok == kEos) {
        active[r] = false;
        continue;
      }
      out.tokens[r].push_back(tok);
      out.attention[r].push_back(attn_row(io.attn, r, enc.lengths[r]));
      prev[r] = tok;
      any_active = true;
    }
    if (!any_active) break;
  }
  return out;
}

ParamList EncoderDecoder::params() const {
  ParamList out;
  out.push_back({"embed", embed_});
  out.push_back({"attr_embed", attr_embed_});
  enc_cell_.collect("enc.", out);
  dec_cell_.collect("dec.", out);
  out.push_back({"attn.w", attn_w_});
  out.push_back({"attn.b", attn_b_});
  out.push_back({"out.w", out_w_});
  out.push_back({"out.b", out_b_});
  return out;
}

// ---------------------------------------------------------------------------
// TextCnn

TextCnn::TextCnn(const NetConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.vocab_size == 0) throw DataError("net: vocab_size not set");
  const double s = cfg.init_scale;
  embed_ = uniform_param(rng, {cfg.vocab_size, cfg.cls_embed_dim}, s);
  for (std::size_t w : cfg.cls_widths) {
    ConvBank bank;
    bank.width = w;
    bank.kernels = uniform_param(rng, {cfg.cls_feature_maps, w * cfg.cls_embed_dim}, s);
    bank.bias = Tensor::param({cfg.cls_feature_maps},
                              std::vector<double>(cfg.cls_feature_maps, 0.0));
    convs_.push_back(std::move(bank));
  }
  const std::size_t feat = cfg.cls_widths.size() * cfg.cls_feature_maps;
  fc_w_ = uniform_param(rng, {feat, 2}, s);
  fc_b_ = Tensor::param({2}, std::vector<double>(2, 0.0));
}

std::size_t TextCnn::max_width() const {
  std::size_t w = 0;
  for (const auto& b : convs_) w = std::max(w, b.width);
  return w;
}

Tensor TextCnn::logits_emb(Tape& t, const Tensor& emb) const {
  if (emb.rank() != 2 || emb.cols() != cfg_.cls_embed_dim)
    throw ShapeMismatch("classify", emb.shape(), {0, cfg_.cls_embed_dim});
  if (emb.rows() == 0) throw DataError("classify: empty sequence");
  Tensor seq = emb;
  const std::size_t need = max_width();
  if (seq.rows() < need) {
    std::vector<int> pad_ids(need - seq.rows(), kPad);
    seq = t.concat(seq, t.gather_rows(embed_, pad_ids), 0);
  }
  Tensor feats;
  for (const auto& bank : convs_) {
    Tensor c = t.conv1d(seq, bank.kernels, bank.width);
    Tensor pooled = t.max_over_time(t.tanh(t.add_rowvec(c, bank.bias)));
    feats = feats.defined() ? t.concat(feats, pooled, 0) : pooled;
  }
  Tensor logits = t.add_rowvec(t.matmul(t.stack_rows({feats}), fc_w_), fc_b_);
  return t.row(logits, 0);
}

Tensor TextCnn::logits_soft(Tape& t, const Tensor& probs) const {
  if (probs.rank() != 2 || probs.cols() != cfg_.vocab_size)
    throw ShapeMismatch("classify_soft", probs.shape(), {0, cfg_.vocab_size});
  if (probs.rows() == 0) throw DataError("classify_soft: empty sequence");
  return logits_emb(t, t.matmul(probs, embed_));
}

Tensor TextCnn::logits_tokens(Tape& t, const std::vector<int>& ids) const {
  if (ids.empty()) throw DataError("classify: empty sequence");
  return logits_emb(t, t.gather_rows(embed_, ids));
}

Tensor TextCnn::probs_soft(Tape& t, const Tensor& probs) const {
  return t.softmax(logits_soft(t, probs));
}

Tensor TextCnn::probs_tokens(Tape& t, const std::vector<int>& ids) const {
  return t.softmax(logits_tokens(t, ids));
}

ParamList TextCnn::params() const {
  ParamList out;
  out.push_back({"embed", embed_});
  for (const auto& bank : convs_) {
    const std::string p = "conv" + std::to_string(bank.width) + ".";
    out.push_back({p + "kernels", bank.kernels});
    out.push_back({p + "bias", bank.bias});
  }
  out.push_back({"fc.w", fc_w_});
  out.push_back({"fc.b", fc_b_});
  return out;
}

// ---------------------------------------------------------------------------
// helpers

SoftSequence soft_of_row(Tape& t, const SoftBatch& soft, std::size_t r) {
  if (r >= soft.gen_lengths.size())
    throw DataError("soft_of_row: row out of range");
  const int len = soft.gen_lengths[r];
  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(len));
  for (int s = 0; s < len; ++s)
    rows.push_back(t.row(soft.step_probs[static_cast<std::size_t>(s)], r));
  SoftSequence out;
  out.probs = t.stack_rows(rows);
  out.attention = soft.attention[r];
  return out;
}

SoftBatch soft_batch_of_one(Tape& t, const Tensor& probs) {
  if (probs.rank() != 2 || probs.rows() == 0)
    throw DataError("soft_batch_of_one: need a nonempty [T,V] matrix");
  SoftBatch out;
  out.gen_lengths = {static_cast<int>(probs.rows())};
  out.attention.resize(1);
  for (std::size_t s = 0; s < probs.rows(); ++s)
    out.step_probs.push_back(t.slice_rows(probs, s, s + 1));
  return out;
}

Tensor one_hot_rows(const std::vector<int>& ids, std::size_t vocab_size) {
  std::vector<double> v(ids.size() * vocab_size, 0.0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab_size)
      throw DataError("one_hot_rows: id out of range");
    v[i * vocab_size + static_cast<std::size_t>(ids[i])] = 1.0;
  }
  return Tensor::constant({ids.size(), vocab_size}, std::move(v));
}

Tensor hidden_matrix(Tape& t, const EncodedBatch& enc, std::size_t r) {
  std::vector<Tensor> rows;
  const int len = enc.lengths.at(r);
  rows.reserve(static_cast<std::size_t>(len));
  for (int s = 0; s < len; ++s)
    rows.push_back(t.row(enc.states[static_cast<std::size_t>(s)], r));
  return t.stack_rows(rows);
}

}  // namespace attrxfer
