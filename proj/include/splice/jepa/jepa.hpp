#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "splice/data/dataset.hpp"
#include "splice/numcore/layers.hpp"
#include "splice/numcore/optim.hpp"

namespace splice::jepa {

inline constexpr std::size_t kReprDim = 64;

struct JepaConfig {
  std::size_t n_features = data::kNumFeatures;
  std::vector<std::size_t> encoder_hidden{256, 128};
  std::size_t repr_dim = kReprDim;
  nc::TransformerConfig predictor{128, 4, 4, 4};
  std::size_t seq_len = 28;
  std::size_t mask_min = 1;
  std::size_t mask_max = 7;
  std::vector<std::size_t> decoder_hidden{128, 256};
  double ema_decay = 0.996;
  double lambda_v = 0.05;
  double lambda_c = 0.001;
  double var_eps = 1e-4;

  std::size_t input_dim() const { return data::kHours * n_features; }
};

struct JepaModel {
  JepaConfig cfg;
  nc::Mlp encoder;
  nc::Mlp target;  // EMA copy of encoder, never trained directly
  nc::Linear pred_in;
  nc::Embedding pos;
  nc::Embedding mask_token;
  nc::Transformer predictor;
  nc::Linear pred_out;
  nc::Mlp daily_decoder;

  JepaModel() = default;
  JepaModel(const JepaConfig& cfg, nc::Rng& rng);

  // Encoder + predictor: the parameters optimised in pre-training.
  template <class F>
  void visit_online(const std::string& prefix, F&& f) {
    encoder.visit(prefix + "encoder.", f);
    pred_in.visit(prefix + "pred_in.", f);
    pos.visit(prefix + "pos.", f);
    mask_token.visit(prefix + "mask_token.", f);
    predictor.visit(prefix + "predictor.", f);
    pred_out.visit(prefix + "pred_out.", f);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) {
    visit_online(prefix, f);
    target.visit(prefix + "target.", f);
    daily_decoder.visit(prefix + "daily_decoder.", f);
  }
};

// frames: [n, 24*d] normalised. Throws EncodingError naming the first
// non-finite feature.
nc::Tensor encode(const JepaModel& m, const nc::Tensor& frames);
nc::Tensor encode_target(const JepaModel& m, const nc::Tensor& frames);
// Gradient-free encoding of `n` consecutive frames; returns [n, repr_dim].
std::vector<double> encode_days(const JepaModel& m, std::span<const double> frames, std::size_t n);

// ctx: [B*L, repr] online embeddings; mask: B*L flags (1 = hidden day).
// Hidden positions are replaced by the mask token and every query attends
// only to visible keys. Returns predictions for hidden rows in row order.
nc::Tensor predict_masked(const JepaModel& m, const nc::Tensor& ctx, const std::vector<std::uint8_t>& mask,
                          std::size_t seq_len);

struct JepaLossParts {
  nc::Tensor total;
  double cosine = 0;
  double variance = 0;
  double covariance = 0;
};

struct JepaLossWeights {
  double lambda_v = 0.05;
  double lambda_c = 0.001;
  double var_eps = 1e-4;
};

// pred/target: [n_masked, p]; batch: [N, p] online embeddings (N >= 2).
JepaLossParts jepa_loss(const nc::Tensor& pred, const nc::Tensor& target, const nc::Tensor& batch,
                        const JepaLossWeights& w = {});

// target <- decay * target + (1 - decay) * online, elementwise.
void ema_update(nc::Params& target, const nc::Params& online, double decay);

// z: [n, repr] -> [n, 24*d]
nc::Tensor daily_decode(const JepaModel& m, const nc::Tensor& z);

// ---------------------------------------------------------------------------
// training

struct JepaTrainConfig {
  double lr = 3e-4;
  double lr_min = 3e-5;
  double weight_decay = 1e-4;
  std::size_t patience = 50;
  std::size_t max_epochs = 200;
  std::size_t steps_per_epoch = 16;
  std::size_t batch_size = 16;
  std::size_t val_sequences = 32;
  std::uint64_t seed = 42;
};

struct JepaEpochLog {
  std::size_t epoch = 0;
  double total = 0;
  double cosine = 0;
  double variance = 0;
  double covariance = 0;
  double val_loss = 0;
};

struct JepaTrainReport {
  std::vector<JepaEpochLog> log;
  double initial_val_loss = 0;
  double final_val_loss = 0;
  std::size_t best_epoch = 0;
  std::vector<double> embedding_std;  // per-dimension std on the training days
  double mean_embedding_std = 0;
  bool collapse_warning = false;      // mean std < 0.1
};

// series: z-scored; days [0, n_train) train, the rest validate.
JepaTrainReport train_jepa(JepaModel& m, const data::Series& series, std::size_t n_train,
                           const JepaTrainConfig& cfg);

// Held-out objective on fixed masked sequences drawn from days [begin, end).
double jepa_validation_loss(const JepaModel& m, const data::Series& series, std::size_t begin, std::size_t end,
                            std::size_t n_sequences, std::uint64_t seed);

struct DecoderTrainConfig {
  double lr = 1e-3;
  double lr_min = 1e-4;
  double weight_decay = 1e-4;
  std::size_t patience = 20;
  std::size_t max_epochs = 100;
  std::size_t batch_size = 64;
  std::uint64_t seed = 42;
};

struct DailyDecoderReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  double train_mse = 0;
  double mean_frame_mse = 0;  // baseline: predict the training mean frame
};

// Trains the direct day decoder on frozen online embeddings.
DailyDecoderReport train_daily_decoder(JepaModel& m, const data::Series& series, std::size_t n_train,
                                       const DecoderTrainConfig& cfg);

// JEPA-only gap filling: slides the predictor forward over the gap, feeding
// back its own predictions, `seq_len - mask_max` days of context at a time.
// context: [n_ctx, repr]; returns [gap_len, repr].
std::vector<double> rollout_gap(const JepaModel& m, std::span<const double> context, std::size_t n_ctx,
                                std::size_t gap_len);

void write_jepa_log_csv(const std::string& path, const JepaTrainReport& report);

}  // namespace splice::jepa
