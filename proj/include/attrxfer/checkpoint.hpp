#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attrxfer/data.hpp"
#include "attrxfer/net.hpp"
#include "attrxfer/optim.hpp"

namespace attrxfer {

enum class CkptKind : std::uint32_t { Transfer = 0, Classifier = 1, Lm = 2 };

// Raw byte-exact snapshot of named parameters plus training progress.
struct Checkpoint {
  CkptKind kind = CkptKind::Transfer;
  NetConfig net;
  std::uint64_t vocab_hash = 0;
  std::uint64_t step = 0;
  double best_valid = 0.0;
  std::uint32_t bad_evals = 0;

  struct Entry {
    std::string name;
    Shape shape;
    std::vector<double> value;
  };
  std::vector<Entry> params;

  bool has_adam = false;
  AdamConfig adam_cfg;
  std::uint64_t adam_step = 0;
  std::vector<std::vector<double>> adam_m, adam_v;  // parallel to params

  std::uint64_t config_hash() const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

// Copy live values into / out of a checkpoint. Restore requires identical
// names and shapes in identical order.
void capture_params(const ParamList& params, Checkpoint& ckpt);
void restore_params(const Checkpoint& ckpt, const ParamList& params);
void capture_adam(const AdamState& st, const ParamList& params, Checkpoint& ckpt);
void restore_adam(const Checkpoint& ckpt, const ParamList& params, AdamState& st);

void check_vocab_hash(const Checkpoint& ckpt, const Vocab& vocab,
                      const std::string& what);

}  // namespace attrxfer
