#include <algorithm>
#include <cmath>

#include "splice/bridge/bridge.hpp"
#include "splice/errors.hpp"

namespace splice::bridge {

using nc::Tensor;

namespace {

std::vector<double> gaussian(std::size_t n, nc::Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Guided model output for the current state of every sample.
std::vector<double> guided(const BridgeNet& net, const BridgeInput& in, const std::vector<double>& z, double time,
                           const GuidanceConfig& g) {
  nc::NoGradGuard ng;
  const std::size_t rows = in.batch * in.gap_len;
  const Tensor zt({rows, net.cfg.repr_dim}, z);
  const std::vector<double> times(in.batch, time);
  auto vc = bridge_forward(net, in, &zt, times);
  std::vector<double> cond(vc.values().begin(), vc.values().end());
  const double w = g.cfg_weight();
  if (w == 0.0) return cond;
  auto vu = bridge_forward(net, in, &zt, times, std::vector<std::uint8_t>(in.batch, 1));
  return cfg_combine(cond, vu.values(), w);
}

void require_generative(const BridgeNet& net, Mode want, const char* op) {
  if (net.mode != want) throw ConfigError(std::string(op) + ": network mode is " + mode_name(net.mode));
}

}  // namespace

Tensor diffusion_loss(const BridgeNet& net, const BridgeInput& in, std::span<const double> z0,
                      const DiffusionSchedule& sched, nc::Rng& rng, double p_uncond, double minsnr_gamma) {
  require_generative(net, Mode::Diffusion, "diffusion_loss");
  const std::size_t B = in.batch, G = in.gap_len, p = net.cfg.repr_dim, block = G * p;
  if (z0.size() != B * block) throw DimensionError("diffusion_loss: targets are not [batch*gap, repr]");
  std::vector<double> zt(z0.size()), vt(z0.size()), times(B), row_w(B * G);
  std::vector<std::uint8_t> drop(B);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t t = rng.uniform_int(1, sched.T);
    const auto eps = gaussian(block, rng);
    drop[b] = rng.bernoulli(p_uncond);
    const auto zb = z0.subspan(b * block, block);
    const auto x = ddpm_forward(zb, t, eps, sched);
    const auto v = v_target(zb, eps, t, sched);
    std::copy(x.begin(), x.end(), zt.begin() + static_cast<std::ptrdiff_t>(b * block));
    std::copy(v.begin(), v.end(), vt.begin() + static_cast<std::ptrdiff_t>(b * block));
    times[b] = static_cast<double>(t);
    const double w = minsnr_weight(t, sched, minsnr_gamma) / static_cast<double>(B * block);
    std::fill_n(row_w.begin() + static_cast<std::ptrdiff_t>(b * G), G, w);
  }
  const Tensor zt_t({B * G, p}, std::move(zt));
  Tensor pred = bridge_forward(net, in, &zt_t, times, drop);
  Tensor err = nc::sum_axis1(nc::square(nc::sub(pred, Tensor({B * G, p}, std::move(vt)))));
  return nc::sum(nc::mul(err, Tensor({B * G}, std::move(row_w))));
}

Tensor fm_loss(const BridgeNet& net, const BridgeInput& in, std::span<const double> z0, nc::Rng& rng, double p_uncond) {
  require_generative(net, Mode::FlowMatching, "fm_loss");
  const std::size_t B = in.batch, G = in.gap_len, p = net.cfg.repr_dim, block = G * p;
  if (z0.size() != B * block) throw DimensionError("fm_loss: targets are not [batch*gap, repr]");
  std::vector<double> zt(z0.size()), target(z0.size()), times(B);
  std::vector<std::uint8_t> drop(B);
  for (std::size_t b = 0; b < B; ++b) {
    const double t = rng.uniform();
    const auto eps = gaussian(block, rng);
    drop[b] = rng.bernoulli(p_uncond);
    for (std::size_t i = 0; i < block; ++i) {
      const double x0 = z0[b * block + i];
      zt[b * block + i] = (1.0 - t) * x0 + t * eps[i];
      target[b * block + i] = eps[i] - x0;
    }
    times[b] = 1000.0 * t;
  }
  const Tensor zt_t({B * G, p}, std::move(zt));
  Tensor pred = bridge_forward(net, in, &zt_t, times, drop);
  return nc::mse(pred, Tensor({B * G, p}, std::move(target)));
}

std::vector<double> ddim_sample(const BridgeNet& net, const BridgeInput& in, const DiffusionSchedule& sched,
                                std::size_t steps, double eta, const GuidanceConfig& guidance, std::uint64_t seed,
                                std::size_t n_samples) {
  require_generative(net, Mode::Diffusion, "ddim_sample");
  if (steps < 1 || steps > sched.T)
    throw ConfigError("ddim_sample: steps must be in [1, " + std::to_string(sched.T) + "]");
  if (eta != 0.0) throw ConfigError("ddim_sample: only the deterministic eta = 0 sampler is implemented");
  if (n_samples < 1) throw ConfigError("ddim_sample: n_samples must be positive");
  const BridgeInput batch = in.repeat(n_samples);
  nc::Rng rng(seed);
  auto z = gaussian(n_samples * in.gap_len * net.cfg.repr_dim, rng);
  auto tau = [&](std::size_t k) {
    return static_cast<std::size_t>(std::llround(static_cast<double>(k) * static_cast<double>(sched.T) /
                                                 static_cast<double>(steps)));
  };
  for (std::size_t k = steps; k >= 1; --k) {
    const std::size_t t = tau(k), tp = tau(k - 1);
    const auto v = guided(net, batch, z, static_cast<double>(t), guidance);
    const double ab = sched.at(t), abp = sched.at(tp);
    const auto x0 = z0_from_v(z, v, ab);
    const auto eps = eps_from_v(z, v, ab);
    const double a = std::sqrt(abp), b = std::sqrt(1.0 - abp);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = a * x0[i] + b * eps[i];
  }
  return z;
}

std::vector<double> fm_sample_euler(const BridgeNet& net, const BridgeInput& in, std::size_t N,
                                    const GuidanceConfig& guidance, FmInit init, std::uint64_t seed,
                                    std::size_t n_samples, std::span<const double> z_bridge, double init_sigma) {
  require_generative(net, Mode::FlowMatching, "fm_sample_euler");
  if (N < 1) throw ConfigError("fm_sample_euler: N must be at least 1");
  if (n_samples < 1) throw ConfigError("fm_sample_euler: n_samples must be positive");
  const std::size_t block = in.gap_len * net.cfg.repr_dim;
  const BridgeInput batch = in.repeat(n_samples);
  nc::Rng rng(seed);
  auto z = gaussian(n_samples * block, rng);
  if (init == FmInit::BridgeResidual) {
    if (z_bridge.size() != block) throw DimensionError("fm_sample_euler: FM-C needs the bridge estimate [gap, repr]");
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = z_bridge[i % block] + init_sigma * z[i];
  }
  return fm_integrate([&](const std::vector<double>& state, double t) { return guided(net, batch, state, 1000.0 * t, guidance); },
                      std::move(z), N);
}

}  // namespace splice::bridge
