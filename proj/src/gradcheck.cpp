#include "attrxfer/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <memory>

#include "attrxfer/losses.hpp"

namespace attrxfer {

namespace {

constexpr double kH = 1e-4;

struct Case {
  std::vector<Tensor> leaves;
  std::function<Tensor(Tape&)> build;  // scalar loss from current leaf values
};

double eval_loss(const Case& c) {
  Tape t;
  t.set_recording(false);
  return c.build(t).item();
}

// max over all leaf components of |analytic - central difference| relative
// to max(1, |analytic|, |fd|)
double max_rel_err(const Case& c) {
  for (const Tensor& leaf : c.leaves) {
    Tensor l = leaf;
    std::fill(l.raw_grad().begin(), l.raw_grad().end(), 0.0);
  }
  Tape t;
  Tensor loss = c.build(t);
  t.backward(loss);
  double worst = 0.0;
  for (const Tensor& leaf : c.leaves) {
    Tensor l = leaf;
    for (std::size_t i = 0; i < l.numel(); ++i) {
      const double x0 = l.raw_value()[i];
      l.raw_value()[i] = x0 + kH;
      const double f1 = eval_loss(c);
      l.raw_value()[i] = x0 - kH;
      const double f2 = eval_loss(c);
      l.raw_value()[i] = x0;
      const double fd = (f1 - f2) / (2.0 * kH);
      const double g = l.grad()[i];
      const double rel =
          std::abs(g - fd) / std::max({1.0, std::abs(g), std::abs(fd)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

Tensor rand_param(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::param(std::move(shape), std::move(v));
}

Tensor rand_const(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::constant(std::move(shape), std::move(v));
}

std::size_t dim(Rng& rng) { return 2 + rng.index(3); }  // 2..4

// scalarize: sum of elementwise product with fixed random coefficients,
// exercising the whole Jacobian
Tensor dot_const(Tape& t, const Tensor& x, const Tensor& coef) {
  return t.sum(t.mul(x, coef));
}

using CaseGen = std::function<Case(Rng&)>;

struct OpCheck {
  std::string name;
  CaseGen gen;
};

std::vector<OpCheck> op_checks() {
  std::vector<OpCheck> ops;
  auto add = [&](std::string name, CaseGen gen) {
    ops.push_back({std::move(name), std::move(gen)});
  };

  add("add", [](Rng& rng) {
    Shape s{dim(rng), dim(rng)};
    Case c{{rand_param(rng, s), rand_param(rng, s)}, nullptr};
    Tensor coef = rand_const(rng, s);
    c.build = [=](Tape& t) {
      return dot_const(t, t.add(c.leaves[0], c.leaves[1]), coef);
    };
    return c;
  });
  add("sub", [](Rng& rng) {
    Shape s{dim(rng), dim(rng)};
    Case c{{rand_param(rng, s), rand_param(rng, s)}, nullptr};
    Tensor coef = rand_const(rng, s);
    c.build = [=](Tape& t) {
      return dot_const(t, t.sub(c.leaves[0], c.leaves[1]), coef);
    };
    return c;
  });
  add("mul", [](Rng& rng) {
    Shape s{dim(rng), dim(rng)};
    Case c{{rand_param(rng, s), rand_param(rng, s)}, nullptr};
    Tensor coef = rand_const(rng, s);
    c.build = [=](Tape& t) {
      return dot_const(t, t.mul(c.leaves[0], c.leaves[1]), coef);
    };
    return c;
  });
  add("add_rowvec", [](Rng& rng) {
    const std::size_t m = dim(rng), n = dim(rng);
    Case c{{rand_param(rng, {m, n}), rand_param(rng, {n})}, nullptr};
    Tensor coef = rand_const(rng, {m, n});
    c.build = [=](Tape& t) {
      return dot_const(t, t.add_rowvec(c.leaves[0], c.leaves[1]), coef);
    };
    return c;
  });
  add("mul_colvec", [](Rng& rng) {
    const std::size_t m = dim(rng), n = dim(rng);
    Case c{{rand_param(rng, {m, n}), rand_param(rng, {m})}, nullptr};
    Tensor coef = rand_const(rng, {m, n});
    c.build = [=](Tape& t) {
      return dot_const(t, t.mul_colvec(c.leaves[0], c.leaves[1]), coef);
    };
    return c;
  });
  add("scale", [](Rng& rng) {
    Shape s{dim(rng), dim(rng)};
    const double k = rng.uniform(-3.0, 3.0);
    Case c{{rand_param(rng, s)}, nullptr};
    Tensor coef = rand_const(rng, s);
    c.build = [=](Tape& t) { return dot_const(t, t.scale(c.leaves[0], k), coef); };
    return c;
  });
  add("tanh", [](Rng& rng) {
    Shape s{dim(rng), dim(rng)};
    Case c{{rand_param(rng, s)}, nullptr};
    Tensor coef = rand_const(rng, s);
    c.build = [=](Tape& t) { return dot_const(t, t.tanh(c.leaves[0]), coef); };
    return c;
  });
  add("sigmoid", [](Rng& rng) {
    Shape s{dim(rng), dim(rng)};
    Case c{{rand_param(rng, s)}, nullptr};
    Tensor coef = rand_const(rng, s);
    c.build = [=](Tape& t) { return dot_const(t, t.sigmoid(c.leaves[0]), coef); };
    return c;
  });
  add("log_clamped", [](Rng& rng) {
    Shape s{dim(rng), dim(rng)};
    // keep clear of the clamp kink at 1e-12
    Case c{{rand_param(rng, s, 0.05, 3.0)}, nullptr};
    Tensor coef = rand_const(rng, s);
    c.build = [=](Tape& t) {
      return dot_const(t, t.log_clamped(c.leaves[0]), coef);
    };
    return c;
  });
  add("matmul", [](Rng& rng) {
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    Case c{{rand_param(rng, {m, k}), rand_param(rng, {k, n})}, nullptr};
    Tensor coef = rand_const(rng, {m, n});
    c.build = [=](Tape& t) {
      return dot_const(t, t.matmul(c.leaves[0], c.leaves[1]), coef);
    };
    return c;
  });
  add("concat", [](Rng& rng) {
    const std::size_t axis = rng.index(2);
    const std::size_t m = dim(rng), n = dim(rng), p = dim(rng);
    Shape sa{m, n};
    Shape sb = axis == 0 ? Shape{p, n} : Shape{m, p};
    Shape so = axis == 0 ? Shape{m + p, n} : Shape{m, n + p};
    Case c{{rand_param(rng, sa), rand_param(rng, sb)}, nullptr};
    Tensor coef = rand_const(rng, so);
    c.build = [=](Tape& t) {
      return dot_const(t, t.concat(c.leaves[0], c.leaves[1], axis), coef);
    };
    return c;
  });
  add("stack_rows", [](Rng& rng) {
    const std::size_t k = dim(rng), n = dim(rng);
    Case c;
    for (std::size_t i = 0; i < k; ++i) c.leaves.push_back(rand_param(rng, {n}));
    Tensor coef = rand_const(rng, {k, n});
    c.build = [leaves = c.leaves, coef](Tape& t) {
      return dot_const(t, t.stack_rows(leaves), coef);
    };
    return c;
  });
  add("stack_cols", [](Rng& rng) {
    const std::size_t k = dim(rng), m = dim(rng);
    Case c;
    for (std::size_t i = 0; i < k; ++i) c.leaves.push_back(rand_param(rng, {m}));
    Tensor coef = rand_const(rng, {m, k});
    c.build = [leaves = c.leaves, coef](Tape& t) {
      return dot_const(t, t.stack_cols(leaves), coef);
    };
    return c;
  });
  add("slice_rows", [](Rng& rng) {
    const std::size_t m = 2 + rng.index(4), n = dim(rng);
    const std::size_t r0 = rng.index(m);
    const std::size_t r1 = r0 + 1 + rng.index(m - r0);
    Case c{{rand_param(rng, {m, n})}, nullptr};
    Tensor coef = rand_const(rng, {r1 - r0, n});
    c.build = [=](Tape& t) {
      return dot_const(t, t.slice_rows(c.leaves[0], r0, r1), coef);
    };
    return c;
  });
  add("slice", [](Rng& rng) {
    const std::size_t n = 2 + rng.index(5);
    const std::size_t i0 = rng.index(n);
    const std::size_t i1 = i0 + 1 + rng.index(n - i0);
    Case c{{rand_param(rng, {n})}, nullptr};
    Tensor coef = rand_const(rng, {i1 - i0});
    c.build = [=](Tape& t) {
      return dot_const(t, t.slice(c.leaves[0], i0, i1), coef);
    };
    return c;
  });
  add("row", [](Rng& rng) {
    const std::size_t m = dim(rng), n = dim(rng);
    const std::size_t i = rng.index(m);
    Case c{{rand_param(rng, {m, n})}, nullptr};
    Tensor coef = rand_const(rng, {n});
    c.build = [=](Tape& t) { return dot_const(t, t.row(c.leaves[0], i), coef); };
    return c;
  });
  add("col", [](Rng& rng) {
    const std::size_t m = dim(rng), n = dim(rng);
    const std::size_t j = rng.index(n);
    Case c{{rand_param(rng, {m, n})}, nullptr};
    Tensor coef = rand_const(rng, {m});
    c.build = [=](Tape& t) { return dot_const(t, t.col(c.leaves[0], j), coef); };
    return c;
  });
  add("gather_rows", [](Rng& rng) {
    const std::size_t v = 3 + rng.index(4), d = dim(rng);
    std::vector<int> ids(2 + rng.index(4));
    for (auto& id : ids) id = static_cast<int>(rng.index(v));  // repeats allowed
    Case c{{rand_param(rng, {v, d})}, nullptr};
    Tensor coef = rand_const(rng, {ids.size(), d});
    c.build = [=](Tape& t) {
      return dot_const(t, t.gather_rows(c.leaves[0], ids), coef);
    };
    return c;
  });
  add("pick", [](Rng& rng) {
    const std::size_t m = dim(rng), n = dim(rng);
    std::vector<int> ids(m);
    for (auto& id : ids) id = static_cast<int>(rng.index(n));
    Case c{{rand_param(rng, {m, n})}, nullptr};
    Tensor coef = rand_const(rng, {m});
    c.build = [=](Tape& t) {
      return dot_const(t, t.pick(c.leaves[0], ids), coef);
    };
    return c;
  });
  add("at", [](Rng& rng) {
    const std::size_t m = dim(rng), n = dim(rng);
    const std::size_t i = rng.index(m), j = rng.index(n);
    Case c{{rand_param(rng, {m, n})}, nullptr};
    Tensor coef = rand_const(rng, {1});
    c.build = [=](Tape& t) {
      return dot_const(t, t.at(c.leaves[0], i, j), coef);
    };
    return c;
  });
  add("softmax", [](Rng& rng) {
    Shape s{dim(rng), dim(rng)};
    Case c{{rand_param(rng, s)}, nullptr};
    Tensor coef = rand_const(rng, s);
    c.build = [=](Tape& t) { return dot_const(t, t.softmax(c.leaves[0]), coef); };
    return c;
  });
  add("masked_softmax", [](Rng& rng) {
    const std::size_t m = dim(rng), n = dim(rng);
    std::vector<double> mv(m * n);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) mv[i * n + j] = rng.index(2) ? 1.0 : 0.0;
      mv[i * n + rng.index(n)] = 1.0;  // at least one live entry per row
    }
    Tensor mask = Tensor::constant({m, n}, std::move(mv));
    Case c{{rand_param(rng, {m, n})}, nullptr};
    Tensor coef = rand_const(rng, {m, n});
    c.build = [=](Tape& t) {
      return dot_const(t, t.masked_softmax(c.leaves[0], mask), coef);
    };
    return c;
  });
  add("log_softmax", [](Rng& rng) {
    Shape s{dim(rng), dim(rng)};
    Case c{{rand_param(rng, s)}, nullptr};
    Tensor coef = rand_const(rng, s);
    c.build = [=](Tape& t) {
      return dot_const(t, t.log_softmax(c.leaves[0]), coef);
    };
    return c;
  });
  add("sum", [](Rng& rng) {
    Shape s{dim(rng), dim(rng)};
    Case c{{rand_param(rng, s)}, nullptr};
    c.build = [=](Tape& t) { return t.sum(c.leaves[0]); };
    return c;
  });
  add("mean", [](Rng& rng) {
    Shape s{dim(rng), dim(rng)};
    Case c{{rand_param(rng, s)}, nullptr};
    c.build = [=](Tape& t) { return t.mean(c.leaves[0]); };
    return c;
  });
  add("row_sum", [](Rng& rng) {
    const std::size_t m = dim(rng), n = dim(rng);
    Case c{{rand_param(rng, {m, n})}, nullptr};
    Tensor coef = rand_const(rng, {m});
    c.build = [=](Tape& t) { return dot_const(t, t.row_sum(c.leaves[0]), coef); };
    return c;
  });
  add("max_over_time", [](Rng& rng) {
    const std::size_t rows = 2 + rng.index(4), d = dim(rng);
    Tensor x = rand_param(rng, {rows, d});
    // force a clear per-column winner so the FD window stays on one branch
    for (std::size_t j = 0; j < d; ++j) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < rows; ++i)
        if (x.raw_value()[i * d + j] > x.raw_value()[best * d + j]) best = i;
      x.raw_value()[best * d + j] += 1.0;
    }
    Case c{{x}, nullptr};
    Tensor coef = rand_const(rng, {d});
    c.build = [=](Tape& t) {
      return dot_const(t, t.max_over_time(c.leaves[0]), coef);
    };
    return c;
  });
  add("conv1d", [](Rng& rng) {
    const std::size_t d = dim(rng), f = 1 + rng.index(3);
    const std::size_t w = 1 + rng.index(3);
    const std::size_t time = w + rng.index(4);
    Case c{{rand_param(rng, {time, d}), rand_param(rng, {f, w * d})}, nullptr};
    Tensor coef = rand_const(rng, {time - w + 1, f});
    c.build = [=](Tape& t) {
      return dot_const(t, t.conv1d(c.leaves[0], c.leaves[1], w), coef);
    };
    return c;
  });

  return ops;
}

// ---------------------------------------------------------------------------
// end-to-end loss checks on a toy model

struct ToyCase {
  NetConfig cfg;
  std::unique_ptr<EncoderDecoder> model;
  std::unique_ptr<TextCnn> cls;
  Batch batch;
  std::vector<char> flags;
  std::size_t horizon = 4;
  std::vector<Tensor> leaves;
};

ToyCase make_toy(Rng& rng) {
  ToyCase tc;
  tc.cfg.vocab_size = 9;
  tc.cfg.embed_dim = 3;
  tc.cfg.attr_dim = 2;
  tc.cfg.hidden_dim = 3;
  tc.cfg.cls_embed_dim = 3;
  tc.cfg.cls_feature_maps = 2;
  tc.cfg.cls_widths = {2, 3};
  tc.cfg.init_scale = 0.8;  // wide init keeps argmax/pooling margins safe
  tc.model = std::make_unique<EncoderDecoder>(tc.cfg, rng);
  tc.cls = std::make_unique<TextCnn>(tc.cfg, rng);

  std::vector<Sentence> sents(2);
  for (std::size_t r = 0; r < 2; ++r) {
    const std::size_t len = 2 + rng.index(2);
    for (std::size_t i = 0; i < len; ++i)
      sents[r].ids.push_back(
          static_cast<int>(kReserved + rng.index(tc.cfg.vocab_size - kReserved)));
    sents[r].words.resize(len);
    sents[r].label = static_cast<int>(r % 2);
  }
  std::vector<const Sentence*> ptrs{&sents[0], &sents[1]};
  tc.batch = make_batch(ptrs);

  tc.flags.assign(tc.cfg.vocab_size, 1);  // everything counts as a noun
  for (int i = 0; i < kReserved; ++i) tc.flags[static_cast<std::size_t>(i)] = 0;

  for (const auto& p : tc.model->params()) tc.leaves.push_back(p.tensor);
  for (const auto& p : tc.cls->params()) tc.leaves.push_back(p.tensor);
  return tc;
}

// Rejects draws whose soft decodes sit near the EOS stopping threshold or
// whose forward attention argmax is nearly tied; both would put a kink inside
// the finite-difference window. Only the forward attention is argmaxed (it
// selects alignment pairs); the backward legs consume attention smoothly.
bool safe_margins(const ToyCase& tc) {
  Tape t;
  t.set_recording(false);
  TransferLegs legs = run_legs(t, *tc.model, tc.batch, tc.horizon);
  for (const SoftBatch* soft : {&legs.fwd, &legs.back})
    for (std::size_t s = 0; s < soft->steps(); ++s)
      for (std::size_t r = 0; r < tc.batch.rows; ++r)
        if (std::abs(soft->step_probs[s].v(r, kEos) - 0.5) < 0.05) return false;
  for (const auto& rows : legs.fwd.attention)
    for (const auto& row : rows) {
      double top = -1.0, second = -1.0;
      for (double a : row) {
        if (a > top) {
          second = top;
          top = a;
        } else if (a > second) {
          second = a;
        }
      }
      if (row.size() > 1 && top - second < 5e-4) return false;
    }
  return true;
}

ToyCase make_safe_toy(Rng& rng) {
  for (int tries = 0; tries < 100; ++tries) {
    ToyCase tc = make_toy(rng);
    if (safe_margins(tc)) return tc;
  }
  throw std::runtime_error("gradcheck: no margin-safe toy case found");
}

std::vector<GradCheckResult> loss_checks(std::uint64_t seed,
                                         std::size_t cases_per_loss) {
  struct LossCheck {
    std::string name;
    std::function<Tensor(Tape&, const ToyCase&)> build;
  };
  const std::vector<LossCheck> checks = {
      {"loss.rec",
       [](Tape& t, const ToyCase& tc) {
         return loss_rec(t, *tc.model, tc.batch);
       }},
      {"loss.cnt_rec",
       [](Tape& t, const ToyCase& tc) {
         return loss_cnt_rec(t, *tc.model, tc.batch, tc.flags, tc.horizon);
       }},
      {"loss.class_td",
       [](Tape& t, const ToyCase& tc) {
         TransferLegs legs = run_legs(t, *tc.model, tc.batch, tc.horizon);
         return loss_class_td(t, legs.fwd, *tc.cls, legs.flipped);
       }},
      {"loss.class_od",
       [](Tape& t, const ToyCase& tc) {
         return loss_class_od(t, *tc.cls, tc.batch);
       }},
      {"loss.back_rec",
       [](Tape& t, const ToyCase& tc) {
         return loss_back_rec(t, *tc.model, tc.batch, tc.horizon);
       }},
      {"loss.class_btd",
       [](Tape& t, const ToyCase& tc) {
         return loss_class_btd(t, *tc.model, *tc.cls, tc.batch, tc.horizon);
       }},
  };

  std::vector<GradCheckResult> results;
  Rng rng(seed * 0x9e3779b9u + 17);
  std::vector<ToyCase> toys;
  for (std::size_t i = 0; i < cases_per_loss; ++i)
    toys.push_back(make_safe_toy(rng));

  for (const auto& check : checks) {
    GradCheckResult res;
    res.name = check.name;
    res.tolerance = 1e-3;
    for (auto& toy : toys) {
      const ToyCase* tp = &toy;
      Case c;
      c.leaves = toy.leaves;
      c.build = [&check, tp](Tape& t) { return check.build(t, *tp); };
      res.max_rel_err = std::max(res.max_rel_err, max_rel_err(c));
      ++res.cases;
    }
    results.push_back(std::move(res));
  }
  return results;
}

}  // namespace

std::vector<GradCheckResult> gradcheck_ops(std::uint64_t seed,
                                           std::size_t cases_per_op) {
  std::vector<GradCheckResult> results;
  for (const auto& op : op_checks()) {
    Rng rng(seed ^ fnv1a64(op.name));
    GradCheckResult res;
    res.name = "op." + op.name;
    res.tolerance = 1e-4;
    for (std::size_t i = 0; i < cases_per_op; ++i) {
      Case c = op.gen(rng);
      res.max_rel_err = std::max(res.max_rel_err, max_rel_err(c));
      ++res.cases;
    }
    results.push_back(std::move(res));
  }
  return results;
}

std::vector<GradCheckResult> gradcheck_losses(std::uint64_t seed,
                                              std::size_t cases_per_loss) {
  return loss_checks(seed, cases_per_loss);
}

std::vector<GradCheckResult> gradcheck_all(std::uint64_t seed) {
  std::vector<GradCheckResult> results = gradcheck_ops(seed);
  for (auto& r : gradcheck_losses(seed)) results.push_back(std::move(r));
  return results;
}

}  // namespace attrxfer
