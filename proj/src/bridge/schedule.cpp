#include <algorithm>
#include <cmath>
#include <numbers>

#include "splice/bridge/bridge.hpp"
#include "splice/errors.hpp"

namespace splice::bridge {

DiffusionSchedule DiffusionSchedule::cosine(std::size_t T, double s) {
  if (T == 0) throw ConfigError("diffusion schedule: T must be positive");
  DiffusionSchedule sc;
  sc.T = T;
  sc.s = s;
  auto f = [&](double t) {
    const double c = std::cos((t / static_cast<double>(T) + s) / (1.0 + s) * std::numbers::pi / 2.0);
    return c * c;
  };
  const double f0 = f(0.0);
  sc.alpha_bar.resize(T + 1);
  sc.beta.assign(T + 1, 0.0);
  for (std::size_t t = 0; t <= T; ++t) sc.alpha_bar[t] = f(static_cast<double>(t)) / f0;
  for (std::size_t t = 1; t <= T; ++t) sc.beta[t] = std::min(1.0 - sc.alpha_bar[t] / sc.alpha_bar[t - 1], 0.999);
  return sc;
}

double DiffusionSchedule::at(std::size_t t) const {
  if (t > T) throw std::out_of_range("diffusion step " + std::to_string(t) + " outside [0, " + std::to_string(T) + "]");
  return alpha_bar[t];
}

double DiffusionSchedule::snr(std::size_t t) const {
  const double ab = at(t);
  const double snr = ab / (1.0 - ab);
  return std::clamp(std::isfinite(snr) ? snr : 1e8, 1e-8, 1e8);
}

std::vector<double> ddpm_forward(std::span<const double> z0, std::size_t t, std::span<const double> eps,
                                 const DiffusionSchedule& sched) {
  if (z0.size() != eps.size()) throw DimensionError("ddpm_forward: z0 and eps differ in length");
  const double ab = sched.at(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  std::vector<double> out(z0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + b * eps[i];
  return out;
}

std::vector<double> v_target(std::span<const double> z0, std::span<const double> eps, std::size_t t,
                             const DiffusionSchedule& sched) {
  if (z0.size() != eps.size()) throw DimensionError("v_target: z0 and eps differ in length");
  const double ab = sched.at(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  std::vector<double> out(z0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * eps[i] - b * z0[i];
  return out;
}

std::vector<double> z0_from_v(std::span<const double> zt, std::span<const double> v, double ab) {
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  std::vector<double> out(zt.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * zt[i] - b * v[i];
  return out;
}

std::vector<double> eps_from_v(std::span<const double> zt, std::span<const double> v, double ab) {
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  std::vector<double> out(zt.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = b * zt[i] + a * v[i];
  return out;
}

double minsnr_weight(std::size_t t, const DiffusionSchedule& sched, double gamma) {
  const double snr = sched.snr(t);
  return std::min(snr, gamma) / snr;
}

std::vector<double> cfg_combine(std::span<const double> vc, std::span<const double> vu, double w) {
  if (vc.size() != vu.size()) throw DimensionError("cfg_combine: conditional and unconditional outputs differ");
  std::vector<double> out(vc.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 + w) * vc[i] - w * vu[i];
  return out;
}

std::vector<std::vector<double>> perturb_ensemble(std::span<const double> z_hat, double sigma, std::size_t M,
                                                  std::uint64_t seed) {
  if (sigma < 0) throw ConfigError("perturb_ensemble: sigma must be non-negative");
  if (M == 0) throw ConfigError("perturb_ensemble: M must be at least 1");
  nc::Rng rng(seed);
  std::vector<std::vector<double>> out(M, std::vector<double>(z_hat.begin(), z_hat.end()));
  for (auto& member : out)
    for (auto& x : member) x += sigma * rng.normal();
  return out;
}

std::vector<double> fm_integrate(const VelocityFn& v, std::vector<double> z, std::size_t N) {
  if (N < 1) throw ConfigError("fm_integrate: need at least one Euler step");
  const double dt = 1.0 / static_cast<double>(N);
  for (std::size_t k = 0; k < N; ++k) {
    const double t = 1.0 - static_cast<double>(k) * dt;
    const auto vel = v(z, t);
    if (vel.size() != z.size()) throw DimensionError("fm_integrate: velocity field changed the state size");
    for (std::size_t i = 0; i < z.size(); ++i) z[i] -= dt * vel[i];
  }
  return z;
}

}  // namespace splice::bridge
