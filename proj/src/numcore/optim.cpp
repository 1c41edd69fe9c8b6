#include "splice/numcore/optim.hpp"

#include <cmath>
#include <numbers>

#include "splice/errors.hpp"

namespace splice::nc {

AdamState::AdamState(const Params& params, AdamConfig cfg) : config(cfg) {
  for (const auto& [name, t] : params) {
    m.emplace_back(t.numel(), 0.0);
    v.emplace_back(t.numel(), 0.0);
  }
}

void adam_step(Params& params, AdamState& state) {
  if (state.m.size() != params.size()) throw DimensionError("adam_step: optimiser state does not match parameters");
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto& [name, t] = params[p];
    if (state.m[p].size() != t.numel()) throw DimensionError("adam_step: moment shape mismatch for " + name);
    for (double g : t.grad())
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter '" + name + "'");
  }
  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& t = params[p].second;
    auto g = t.grad();
    auto w = t.data();
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= c.lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * w[i]);
    }
  }
}

double cosine_lr(std::size_t step, std::size_t total, double lr_max, double lr_min) {
  if (total == 0) throw ConfigError("cosine_lr: total must be positive");
  if (step >= total) return lr_min;
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

bool EarlyStopping::update(double val_loss, const Params& params) {
  ++epoch_;
  if (val_loss < best_) {
    best_ = val_loss;
    best_epoch_ = epoch_;
    bad_ = 0;
    snapshot_.clear();
    for (const auto& [name, t] : params) snapshot_.emplace_back(t.values().begin(), t.values().end());
    return false;
  }
  return ++bad_ >= patience_;
}

void EarlyStopping::restore(Params& params) const {
  if (snapshot_.empty()) return;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p].second.data();
    std::copy(snapshot_[p].begin(), snapshot_[p].end(), w.begin());
  }
}

}  // namespace splice::nc
