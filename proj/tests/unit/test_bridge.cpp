#include <doctest.h>

#include <cmath>
#include <numeric>

#include "splice/bridge/bridge.hpp"
#include "splice/errors.hpp"
#include "splice/numcore/gradcheck.hpp"

using namespace splice;
using namespace splice::bridge;

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
  nc::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

BridgeConfig tiny_config() {
  BridgeConfig c;
  c.backbone = {8, 2, 1, 2};
  c.repr_dim = 4;
  c.cov_dim = 3;
  c.max_len = 12;
  return c;
}

BridgeInput tiny_input(std::size_t batch, std::uint64_t seed) {
  BridgeInput in;
  in.batch = batch;
  in.ctx_len = 6;
  in.gap_len = 3;
  in.ctx = randn(batch * in.ctx_len * 4, seed);
  in.cov = randn(batch * in.length() * 3, seed + 1);
  return in;
}

}  // namespace

TEST_CASE("cosine schedule endpoints and monotonicity") {
  const auto s = DiffusionSchedule::cosine(1000);
  CHECK(s.at(0) == 1.0);
  CHECK(s.alpha_bar.size() == 1001);
  for (std::size_t t = 1; t <= 1000; ++t) {
    CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    CHECK(s.beta[t] <= 0.999);
  }
  CHECK(s.at(1000) < 1e-8);
  const double f0 = std::pow(std::cos(0.008 / 1.008 * M_PI / 2), 2);
  const double f5 = std::pow(std::cos((0.5 + 0.008) / 1.008 * M_PI / 2), 2);
  CHECK(s.at(500) == doctest::Approx(f5 / f0));
  CHECK_THROWS(s.at(1001));
  CHECK_THROWS_AS(DiffusionSchedule::cosine(0), ConfigError);
}

TEST_CASE("v-parameterisation inverts exactly") {
  const auto sched = DiffusionSchedule::cosine(1000);
  const auto z0 = randn(20, 1), eps = randn(20, 2);
  for (std::size_t t : {1u, 250u, 600u, 999u}) {
    const auto zt = ddpm_forward(z0, t, eps, sched);
    const auto v = v_target(z0, eps, t, sched);
    const auto z0r = z0_from_v(zt, v, sched.at(t));
    const auto er = eps_from_v(zt, v, sched.at(t));
    for (std::size_t i = 0; i < z0.size(); ++i) {
      CHECK(z0r[i] == doctest::Approx(z0[i]).epsilon(1e-10));
      CHECK(er[i] == doctest::Approx(eps[i]).epsilon(1e-10));
    }
  }
}

TEST_CASE("min-SNR weight caps high-SNR steps") {
  const auto sched = DiffusionSchedule::cosine(1000);
  for (std::size_t t = 1; t <= 1000; t += 37) {
    const double snr = sched.snr(t);
    const double w = minsnr_weight(t, sched, 5.0);
    CHECK(w == doctest::Approx(std::min(snr, 5.0) / snr));
    CHECK(w <= 1.0 + 1e-12);
  }
  CHECK(minsnr_weight(1000, sched, 5.0) == doctest::Approx(1.0));
}

TEST_CASE("classifier-free guidance combination") {
  const std::vector<double> c{1, 2}, u{0, 4};
  const auto g = cfg_combine(c, u, 2.0);
  CHECK(g[0] == doctest::Approx(3.0));
  CHECK(g[1] == doctest::Approx(-2.0));
  CHECK(cfg_combine(c, u, 0.0) == c);
  GuidanceConfig gc;
  gc.scale = 3.0;
  CHECK(gc.cfg_weight() == 2.0);
}

TEST_CASE("perturbation ensemble statistics") {
  const std::vector<double> z(50, 1.0);
  const auto ens = perturb_ensemble(z, 0.15, 400, 9);
  REQUIRE(ens.size() == 400);
  double s = 0, ss = 0;
  for (const auto& m : ens)
    for (double x : m) {
      s += x - 1.0;
      ss += (x - 1.0) * (x - 1.0);
    }
  const double n = 400.0 * 50.0;
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::sqrt(ss / n) == doctest::Approx(0.15).epsilon(0.03));
  CHECK(perturb_ensemble(z, 0.0, 2, 1)[1] == z);
  CHECK(perturb_ensemble(z, 0.15, 3, 4) == perturb_ensemble(z, 0.15, 3, 4));
  CHECK_THROWS_AS(perturb_ensemble(z, 0.1, 0, 1), ConfigError);
  CHECK_THROWS_AS(perturb_ensemble(z, -0.1, 2, 1), ConfigError);
}

TEST_CASE("Euler flow integration is exact for a constant velocity") {
  const std::vector<double> x0{0.5, -1.0}, eps{2.0, 3.0};
  // straight path z_t = (1 - t) x0 + t eps has velocity eps - x0
  VelocityFn v = [&](const std::vector<double>&, double) {
    return std::vector<double>{eps[0] - x0[0], eps[1] - x0[1]};
  };
  for (std::size_t N : {1u, 5u, 100u}) {
    const auto out = fm_integrate(v, eps, N);
    CHECK(out[0] == doctest::Approx(x0[0]).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(x0[1]).epsilon(1e-12));
  }
  // dz/dt = z integrates backwards to z1 * (1 - 1/N)^N
  VelocityFn lin = [](const std::vector<double>& z, double) { return z; };
  CHECK(fm_integrate(lin, {1.0}, 4)[0] == doctest::Approx(std::pow(0.75, 4)));
  CHECK_THROWS_AS(fm_integrate(v, eps, 0), ConfigError);
}

TEST_CASE("bridge forward output shapes and input validation") {
  nc::Rng rng(1);
  const BridgeNet det(tiny_config(), Mode::Deterministic, rng);
  const auto in = tiny_input(2, 3);
  CHECK(bridge_forward(det, in).shape() == nc::Shape{6, 4});
  auto bad = in;
  bad.cov.pop_back();
  CHECK_THROWS_AS(bridge_forward(det, bad), DimensionError);
  auto too_long = tiny_input(1, 3);
  too_long.ctx_len = 10;
  too_long.ctx = randn(10 * 4, 1);
  too_long.cov = randn(13 * 3, 1);
  CHECK_THROWS_AS(bridge_forward(det, too_long), DimensionError);
  CHECK(bridge_predict(det, tiny_input(1, 5)).size() == 12);

  const BridgeNet gen(tiny_config(), Mode::Diffusion, rng);
  CHECK_THROWS_AS(bridge_forward(gen, in), DimensionError);
  const nc::Tensor zt({6, 4}, randn(24, 7));
  CHECK(bridge_forward(gen, in, &zt, {10.0, 500.0}).shape() == nc::Shape{6, 4});
  CHECK_THROWS_AS(bridge_forward(gen, in, &zt, {10.0}), DimensionError);
  CHECK_THROWS_AS(bridge_predict(gen, tiny_input(1, 5)), ConfigError);
}

TEST_CASE("context tokens are dropped for the unconditional branch") {
  nc::Rng rng(2);
  const BridgeNet gen(tiny_config(), Mode::FlowMatching, rng);
  auto a = tiny_input(1, 3);
  auto b = a;
  for (auto& x : b.ctx) x += 5.0;
  const nc::Tensor zt({3, 4}, randn(12, 8));
  const auto ua = bridge_forward(gen, a, &zt, {300.0}, {1});
  const auto ub = bridge_forward(gen, b, &zt, {300.0}, {1});
  const auto ca = bridge_forward(gen, a, &zt, {300.0}, {0});
  const auto cb = bridge_forward(gen, b, &zt, {300.0}, {0});
  double du = 0, dc = 0;
  for (std::size_t i = 0; i < ua.numel(); ++i) {
    du = std::max(du, std::abs(ua.values()[i] - ub.values()[i]));
    dc = std::max(dc, std::abs(ca.values()[i] - cb.values()[i]));
  }
  CHECK(du < 1e-12);
  CHECK(dc > 1e-6);
}

TEST_CASE("deterministic bridge objective gradients") {
  nc::Rng rng(3);
  BridgeNet net(tiny_config(), Mode::Deterministic, rng);
  const auto in = tiny_input(2, 4);
  const nc::Tensor target({6, 4}, randn(24, 9));
  auto params = nc::parameters(net);
  const auto r = nc::grad_check([&] { return nc::mse(bridge_forward(net, in), target); }, params, 1e-5, 1e-3);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("diffusion and flow-matching losses have correct gradients") {
  const auto sched = DiffusionSchedule::cosine(1000);
  const auto in = tiny_input(2, 5);
  const auto z0 = randn(24, 10);
  for (Mode mode : {Mode::Diffusion, Mode::FlowMatching}) {
    nc::Rng init(4);
    BridgeNet net(tiny_config(), mode, init);
    auto params = nc::parameters(net);
    // Re-seeding inside the closure fixes t, eps and condition drops across evaluations.
    auto loss = [&] {
      nc::Rng rng(77);
      return mode == Mode::Diffusion ? diffusion_loss(net, in, z0, sched, rng, 0.5) : fm_loss(net, in, z0, rng, 0.5);
    };
    const auto r = nc::grad_check(loss, params, 1e-5, 1e-3);
    INFO(mode_name(mode));
    CHECK(r.max_rel_error < 1e-5);
    CHECK(std::isfinite(loss().item()));
  }
  nc::Rng rng(1), init(1);
  BridgeNet det(tiny_config(), Mode::Deterministic, init);
  CHECK_THROWS_AS(diffusion_loss(det, in, z0, sched, rng, 0.1), ConfigError);
  BridgeNet fm(tiny_config(), Mode::FlowMatching, init);
  CHECK_THROWS_AS(fm_loss(fm, in, std::vector<double>(5), rng, 0.1), DimensionError);
}

TEST_CASE("samplers validate arguments and are seed-reproducible") {
  const auto sched = DiffusionSchedule::cosine(100);
  nc::Rng init(5);
  const BridgeNet diff(tiny_config(), Mode::Diffusion, init);
  const BridgeNet fm(tiny_config(), Mode::FlowMatching, init);
  const auto in = tiny_input(1, 6);
  GuidanceConfig g;
  CHECK_THROWS_AS(ddim_sample(diff, in, sched, 0, 0.0, g, 1), ConfigError);
  CHECK_THROWS_AS(ddim_sample(diff, in, sched, 101, 0.0, g, 1), ConfigError);
  CHECK_THROWS_AS(ddim_sample(diff, in, sched, 10, 0.5, g, 1), ConfigError);
  CHECK_THROWS_AS(ddim_sample(fm, in, sched, 10, 0.0, g, 1), ConfigError);
  const auto a = ddim_sample(diff, in, sched, 10, 0.0, g, 3, 2);
  CHECK(a.size() == 2 * 3 * 4);
  CHECK(a == ddim_sample(diff, in, sched, 10, 0.0, g, 3, 2));

  CHECK_THROWS_AS(fm_sample_euler(fm, in, 0, g, FmInit::Noise, 1), ConfigError);
  CHECK_THROWS_AS(fm_sample_euler(fm, in, 5, g, FmInit::BridgeResidual, 1), DimensionError);
  const std::vector<double> zb(12, 0.3);
  const auto c = fm_sample_euler(fm, in, 5, g, FmInit::BridgeResidual, 2, 3, zb);
  CHECK(c.size() == 3 * 12);
  for (double x : c) CHECK(std::isfinite(x));
  g.scale = 3.0;
  const auto guided = fm_sample_euler(fm, in, 5, g, FmInit::Noise, 2);
  g.scale = 1.0;
  CHECK(guided != fm_sample_euler(fm, in, 5, g, FmInit::Noise, 2));
}

TEST_CASE("window slicing and bridge training") {
  BridgeData d;
  d.n_days = 40;
  d.repr_dim = 4;
  d.cov_dim = 3;
  d.emb.resize(40 * 4);
  d.cov.resize(40 * 3);
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t j = 0; j < 4; ++j) d.emb[i * 4 + j] = std::sin(0.9 * static_cast<double>(i) + static_cast<double>(j));
    for (std::size_t j = 0; j < 3; ++j) d.cov[i * 3 + j] = std::cos(0.3 * static_cast<double>(i * (j + 1)));
  }
  const auto in = window_input(d, {2, 5}, 6, 3);
  CHECK(in.ctx.size() == 2 * 6 * 4);
  CHECK(in.ctx[0] == d.emb[2 * 4]);
  const auto tg = window_targets(d, {2, 5}, 6, 3);
  CHECK(tg.size() == 2 * 3 * 4);
  CHECK(tg[0] == d.emb[8 * 4]);
  CHECK_THROWS_AS(window_input(d, {35}, 6, 3), ProtocolError);

  nc::Rng init(6);
  BridgeNet net(tiny_config(), Mode::Deterministic, init);
  BridgeTrainConfig tc;
  tc.ctx_len = 6;
  tc.gap_len = 3;
  tc.max_epochs = 30;
  tc.steps_per_epoch = 4;
  tc.batch_size = 4;
  tc.lr = 3e-3;
  tc.lr_min = 3e-4;
  std::vector<std::size_t> train(25), val{26, 28, 30};
  std::iota(train.begin(), train.end(), 0);
  const auto rep = train_bridge(net, d, train, val, tc);
  CHECK(rep.val_loss.size() >= 1);
  CHECK(*std::min_element(rep.val_loss.begin(), rep.val_loss.end()) < rep.initial_val_loss);
  CHECK_THROWS_AS(train_bridge(net, d, {}, val, tc), ProtocolError);
}
