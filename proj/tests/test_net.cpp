#include <cmath>
#include <set>

#include "attrxfer/net.hpp"
#include "doctest.h"

using namespace attrxfer;

namespace {

NetConfig toy_config() {
  NetConfig cfg;
  cfg.vocab_size = 11;
  cfg.embed_dim = 5;
  cfg.attr_dim = 3;
  cfg.hidden_dim = 4;
  cfg.cls_embed_dim = 4;
  cfg.cls_feature_maps = 2;
  cfg.cls_widths = {2, 3};
  cfg.init_scale = 0.3;
  return cfg;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i)
    m = std::max(m, std::abs(a.value()[i] - b.value()[i]));
  return m;
}

}  // namespace

TEST_CASE("one-hot soft paths match hard paths") {
  const NetConfig cfg = toy_config();
  Rng rng(31);
  EncoderDecoder model(cfg, rng);
  TextCnn cls(cfg, rng);
  Rng draws(77);
  for (int c = 0; c < 5; ++c) {
    const std::size_t len = 1 + draws.index(4);
    std::vector<int> ids;
    for (std::size_t i = 0; i < len; ++i)
      ids.push_back(static_cast<int>(kReserved + draws.index(cfg.vocab_size - kReserved)));
    const int label = static_cast<int>(draws.index(2));

    Tape t;
    t.set_recording(false);
    Tensor hot = one_hot_rows(ids, cfg.vocab_size);
    SoftBatch soft = soft_batch_of_one(t, hot);
    EncodedBatch via_soft = model.encode_soft(t, soft, {label});
    EncodedBatch via_ids = model.encode(t, batch_of_one(ids, label), {label});
    CHECK(max_abs_diff(via_soft.states.back(), via_ids.states.back()) < 1e-9);

    Tensor ls = cls.logits_soft(t, hot);
    Tensor lt = cls.logits_tokens(t, ids);
    CHECK(max_abs_diff(ls, lt) < 1e-9);
  }
}

TEST_CASE("attribute embedding conditions the encoder") {
  const NetConfig cfg = toy_config();
  Rng rng(3);
  EncoderDecoder model(cfg, rng);
  Tape t;
  t.set_recording(false);
  Batch b = batch_of_one({4, 5, 6}, 0);
  EncodedBatch e0 = model.encode(t, b, {0});
  EncodedBatch e1 = model.encode(t, b, {1});
  CHECK(max_abs_diff(e0.states.back(), e1.states.back()) > 1e-9);
}

TEST_CASE("mask freezes padded rows") {
  const NetConfig cfg = toy_config();
  Rng rng(9);
  EncoderDecoder model(cfg, rng);
  Sentence a, b;
  a.ids = {4, 5, 6};
  a.label = 1;
  a.words = {"a", "b", "c"};
  b.ids = {7};
  b.label = 0;
  b.words = {"d"};
  Tape t;
  t.set_recording(false);
  EncodedBatch both = model.encode(t, make_batch({&a, &b}), {1, 0});
  EncodedBatch solo = model.encode(t, batch_of_one({7}, 0), {0});
  for (std::size_t j = 0; j < cfg.hidden_dim; ++j) {
    CHECK(both.states.back().v(1, j) ==
          doctest::Approx(solo.states.back().v(0, j)).epsilon(1e-12));
    // padded steps carry the step-1 state forward unchanged
    CHECK(both.states[2].v(1, j) == both.states[0].v(1, j));
  }
}

TEST_CASE("encoder rows are order independent") {
  const NetConfig cfg = toy_config();
  Rng rng(13);
  EncoderDecoder model(cfg, rng);
  Sentence a, b;
  a.ids = {4, 6};
  a.label = 1;
  a.words = {"a", "b"};
  b.ids = {8, 9, 10};
  b.label = 0;
  b.words = {"c", "d", "e"};
  Tape t;
  t.set_recording(false);
  EncodedBatch ab = model.encode(t, make_batch({&a, &b}), {1, 0});
  EncodedBatch ba = model.encode(t, make_batch({&b, &a}), {0, 1});
  for (std::size_t j = 0; j < cfg.hidden_dim; ++j) {
    CHECK(ab.states.back().v(0, j) ==
          doctest::Approx(ba.states.back().v(1, j)).epsilon(1e-12));
    CHECK(ab.states.back().v(1, j) ==
          doctest::Approx(ba.states.back().v(0, j)).epsilon(1e-12));
  }
}

TEST_CASE("teacher decoding shapes and attention normalization") {
  const NetConfig cfg = toy_config();
  Rng rng(21);
  EncoderDecoder model(cfg, rng);
  Sentence a, b;
  a.ids = {4, 5, 6, 7};
  a.label = 0;
  a.words = {"a", "b", "c", "d"};
  b.ids = {8, 9};
  b.label = 1;
  b.words = {"e", "f"};
  Batch batch = make_batch({&a, &b});
  Tape t;
  t.set_recording(false);
  EncodedBatch enc = model.encode(t, batch, batch.labels);
  TeacherOut out = model.decode_teacher(t, enc, batch.labels, batch);
  CHECK(out.step_logits.size() == batch.cols + 1);
  CHECK(out.targets[0] == std::vector<int>{4, 5, 6, 7, kEos});
  CHECK(out.targets[1] == std::vector<int>{8, 9, kEos});
  for (std::size_t r = 0; r < batch.rows; ++r) {
    CHECK(out.attention[r].size() == out.targets[r].size());
    for (const auto& row : out.attention[r]) {
      CHECK(row.size() == static_cast<std::size_t>(batch.lengths[r]));
      double s = 0.0;
      for (double w : row) {
        CHECK(w >= 0.0);
        s += w;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  // length-1 source forces a one-hot attention row
  EncodedBatch enc1 = model.encode(t, batch_of_one({5}, 1), {1});
  SoftBatch soft = model.decode_soft(t, enc1, {1}, 4);
  for (const auto& row : soft.attention[0]) {
    REQUIRE(row.size() == 1);
    CHECK(row[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("greedy decoding excludes EOS and respects the cap") {
  const NetConfig cfg = toy_config();
  Rng rng(5);
  EncoderDecoder model(cfg, rng);
  Tape t;
  t.set_recording(false);
  Batch b = batch_of_one({4, 5, 6}, 1);
  EncodedBatch enc = model.encode(t, b, {0});
  GreedyOut out = model.decode_greedy(t, enc, {0}, 6);
  REQUIRE(out.tokens.size() == 1);
  CHECK(out.tokens[0].size() <= 6);
  for (int id : out.tokens[0]) CHECK(id != kEos);
  CHECK(out.attention[0].size() >= out.tokens[0].size());
}

TEST_CASE("soft decoding emits normalized rows and row extraction trims") {
  const NetConfig cfg = toy_config();
  Rng rng(17);
  EncoderDecoder model(cfg, rng);
  Sentence a, b;
  a.ids = {4, 5};
  a.label = 0;
  a.words = {"a", "b"};
  b.ids = {6, 7, 8};
  b.label = 1;
  b.words = {"c", "d", "e"};
  Batch batch = make_batch({&a, &b});
  Tape t;
  t.set_recording(false);
  EncodedBatch enc = model.encode(t, batch, batch.labels);
  SoftBatch soft = model.decode_soft(t, enc, batch.labels, 5);
  CHECK(soft.steps() <= 5);
  for (const Tensor& p : soft.step_probs)
    for (std::size_t r = 0; r < batch.rows; ++r) {
      double s = 0.0;
      for (std::size_t v = 0; v < cfg.vocab_size; ++v) s += p.v(r, v);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
  for (std::size_t r = 0; r < batch.rows; ++r) {
    CHECK(soft.gen_lengths[r] >= 1);
    CHECK(static_cast<std::size_t>(soft.gen_lengths[r]) <= soft.steps());
    SoftSequence seq = soft_of_row(t, soft, r);
    CHECK(seq.probs.shape()[0] == static_cast<std::size_t>(soft.gen_lengths[r]));
    CHECK(seq.probs.shape()[1] == cfg.vocab_size);
    CHECK(seq.attention.size() == static_cast<std::size_t>(soft.gen_lengths[r]));
  }
}

TEST_CASE("alignment picks the argmax source per step") {
  const std::vector<std::vector<double>> attn = {
      {0.1, 0.8, 0.1}, {0.7, 0.2, 0.1}, {0.2, 0.2, 0.6}};
  AlignmentPairs pairs = align(attn);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0] == std::make_pair<std::size_t, std::size_t>(1, 0));
  CHECK(pairs[1] == std::make_pair<std::size_t, std::size_t>(0, 1));
  CHECK(pairs[2] == std::make_pair<std::size_t, std::size_t>(2, 2));
  CHECK(argmax({0.5, 0.5, 0.1}) == 0);  // tie breaks low
}

TEST_CASE("label validation") {
  CHECK_NOTHROW(check_labels({0, 1}, 2));
  CHECK_THROWS_AS(check_labels({0, 2}, 2), DataError);
  CHECK_THROWS_AS(check_labels({0}, 2), DataError);
}

TEST_CASE("parameter names are unique and complete") {
  const NetConfig cfg = toy_config();
  Rng rng(1);
  EncoderDecoder model(cfg, rng);
  TextCnn cls(cfg, rng);
  const ParamList model_params = model.params();
  const ParamList cls_params = cls.params();
  for (const ParamList* pl : {&model_params, &cls_params}) {
    std::set<std::string> names;
    for (const NamedParam& p : *pl) {
      CHECK(p.tensor.requires_grad());
      names.insert(p.name);
    }
    CHECK(names.size() == pl->size());
  }
}

TEST_CASE("classifier pads short sequences to the widest filter") {
  const NetConfig cfg = toy_config();
  Rng rng(23);
  TextCnn cls(cfg, rng);
  CHECK(cls.max_width() == 3);
  Tape t;
  t.set_recording(false);
  Tensor l1 = cls.logits_tokens(t, {4});
  CHECK(l1.shape() == Shape{2});
  Tensor p = cls.probs_tokens(t, {4, 5});
  CHECK(p.v(0) + p.v(1) == doctest::Approx(1.0).epsilon(1e-12));
}
