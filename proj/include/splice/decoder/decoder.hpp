#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "splice/data/dataset.hpp"
#include "splice/jepa/jepa.hpp"
#include "splice/numcore/layers.hpp"

namespace splice::decoder {

struct DecoderConfig {
  std::string name = "enhanced";
  std::size_t repr_dim = jepa::kReprDim;
  std::vector<std::size_t> cond_columns = data::conditioning_columns();
  std::size_t n_features = data::kNumFeatures;
  std::size_t load_index = data::kLoad;
  std::size_t proj_dim = 256;
  std::vector<std::size_t> hidden{256, 128};
  double w_load = 5.0;
  double noise_sigma = 0.15;
  double noise_p = 0.5;

  std::size_t cond_dim() const { return cond_columns.size(); }
  // 64 -> 256, [256 + c -> 256 -> 128 -> d], weighted loss, noise augmentation.
  static DecoderConfig enhanced();
  // 64 -> 128, [128 + c -> 128 -> 64 -> d], plain MSE, no augmentation.
  static DecoderConfig base();
};

struct HourlyDecoder {
  DecoderConfig cfg;
  nc::Linear proj;
  nc::Mlp mlp;

  HourlyDecoder() = default;
  HourlyDecoder(const DecoderConfig& cfg, nc::Rng& rng);

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    proj.visit(prefix + "proj.", f);
    mlp.visit(prefix + "mlp.", f);
  }
};

// z: [n, repr]; cond: [n*24, c] -> [n*24, d]. Row (i, h) depends only on z_i and cond row (i, h).
nc::Tensor decode_hourly(const HourlyDecoder& dec, const nc::Tensor& z, const nc::Tensor& cond);

// sum_f w_f (pred - target)^2 / sum_f w_f over all rows, w_load on column load_index, 1 elsewhere.
nc::Tensor load_weighted_mse(const nc::Tensor& pred, const nc::Tensor& target, double w_load,
                             std::size_t load_index);

// With probability p (one draw per batch) adds independent N(0, sigma^2)
// noise to every entry. Returns whether the batch was perturbed.
bool noise_augment(std::span<double> z, double sigma, double p, nc::Rng& rng);

// Conditioning rows [n*24, c] for days [begin, end) of a normalised series.
std::vector<double> conditioning_rows(const data::Series& s, std::size_t begin, std::size_t end,
                                      const std::vector<std::size_t>& cols);

struct DecoderTrainConfig {
  double lr = 1e-3;
  double lr_min = 1e-4;
  double weight_decay = 1e-4;
  std::size_t patience = 20;
  std::size_t max_epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
};

struct DecoderTrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;
  std::size_t augmented_batches = 0;
  std::size_t batches = 0;
};

// Frozen JEPA encoder embeddings of days [0, n_train) train; the rest validate.
DecoderTrainReport train_decoder(HourlyDecoder& dec, const jepa::JepaModel& jepa, const data::Series& series,
                                 std::size_t n_train, const DecoderTrainConfig& cfg);

// Decoder checkpoint with a conditioning-schema record ("meta.cond_columns").
void save_decoder(const std::filesystem::path& path, HourlyDecoder& dec);
void load_decoder(const std::filesystem::path& path, HourlyDecoder& dec);

}  // namespace splice::decoder
