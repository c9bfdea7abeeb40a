#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "attrxfer/checkpoint.hpp"
#include "attrxfer/losses.hpp"
#include "attrxfer/optim.hpp"

namespace attrxfer {

struct TrainConfig {
  // data
  std::string pos_train, neg_train;
  std::string pos_valid, neg_valid;  // optional; enables early stopping
  std::string vocab_path;
  std::string lexicon_path;  // optional; empty lexicon zeroes cnt_rec
  std::string out_dir;
  std::string resume;  // optional checkpoint to continue from

  LossWeights weights;

  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t max_steps = 5000;
  std::uint64_t seed = 1;
  std::size_t max_len = 20;
  std::size_t checkpoint_interval = 500;
  std::size_t valid_interval = 200;  // 0 disables validation
  std::size_t patience = 5;
  double clip_norm = 5.0;

  std::size_t embed_dim = 64;
  std::size_t attr_dim = 8;
  std::size_t hidden_dim = 64;
  std::size_t cls_embed_dim = 64;
  std::size_t cls_feature_maps = 32;

  void validate() const;
};

TrainConfig parse_train_config_text(const std::string& text);
TrainConfig parse_train_config(const std::filesystem::path& path);

struct StepResult {
  LossBreakdown breakdown;
  double grad_norm = 0.0;  // pre-clip global norm
};

// One joint update of all parameters from a single batch.
StepResult train_step(Tape& tape, const EncoderDecoder& model,
                      const TextCnn& cls, ParamList& params, AdamState& adam,
                      const Batch& batch, const std::vector<char>& noun_flags,
                      const LossWeights& weights, double clip_norm,
                      std::size_t horizon, std::size_t step);

// Weighted total loss over a corpus, no recording, batch-size weighted mean.
double validation_loss(const EncoderDecoder& model, const TextCnn& cls,
                       const Corpus& corpus, const std::vector<char>& noun_flags,
                       const LossWeights& weights, std::size_t batch_size,
                       std::size_t max_len);

struct TrainResult {
  std::size_t steps = 0;
  double best_valid = 0.0;
  bool early_stopped = false;
  std::string model_path;
  std::string log_path;
};

TrainResult train(const TrainConfig& cfg, std::ostream* progress = nullptr);

std::size_t train_horizon(std::size_t max_len, std::size_t batch_cols);

}  // namespace attrxfer
