#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "splice/numcore/layers.hpp"

namespace splice::nc {

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(const Params& params, AdamConfig cfg);
};

// One AdamW update (bias-corrected moments, decoupled weight decay) using
// the gradients currently stored on `params`. Parameters without a gradient
// are treated as having a zero gradient. Throws TrainingError naming the
// first parameter with a non-finite gradient; nothing is updated then.
void adam_step(Params& params, AdamState& state);

// lr_min + (lr_max - lr_min)(1 + cos(pi * step / total)) / 2, clamped to lr_min past `total`.
double cosine_lr(std::size_t step, std::size_t total, double lr_max, double lr_min);

// Patience-based early stopping with best-parameter snapshots.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Records a validation loss; snapshots params on improvement. Returns true
  // once `patience` consecutive epochs failed to improve.
  bool update(double val_loss, const Params& params);
  void restore(Params& params) const;
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }
  std::size_t epochs() const { return epoch_; }

 private:
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t epoch_ = 0;
  std::size_t bad_ = 0;
  std::vector<std::vector<double>> snapshot_;
};

}  // namespace splice::nc
