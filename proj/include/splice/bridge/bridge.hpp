#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "splice/data/dataset.hpp"
#include "splice/jepa/jepa.hpp"
#include "splice/numcore/layers.hpp"

namespace splice::bridge {

// ---------------------------------------------------------------------------
// noise schedule and closed-form diffusion / flow-matching algebra

struct DiffusionSchedule {
  std::size_t T = 1000;
  double s = 0.008;
  std::vector<double> alpha_bar;  // [T+1], alpha_bar[0] = 1
  std::vector<double> beta;       // [T+1], beta[0] = 0, clipped at 0.999

  // alpha_bar_t = f(t)/f(0), f(t) = cos^2(((t/T) + s)/(1 + s) * pi/2)
  static DiffusionSchedule cosine(std::size_t T = 1000, double s = 0.008);
  double at(std::size_t t) const;
  double snr(std::size_t t) const;  // clamped to [1e-8, 1e8]
};

// z_t = sqrt(ab) z0 + sqrt(1 - ab) eps
std::vector<double> ddpm_forward(std::span<const double> z0, std::size_t t, std::span<const double> eps,
                                 const DiffusionSchedule& sched);
// v = sqrt(ab) eps - sqrt(1 - ab) z0
std::vector<double> v_target(std::span<const double> z0, std::span<const double> eps, std::size_t t,
                             const DiffusionSchedule& sched);
// z0 = sqrt(ab) z_t - sqrt(1 - ab) v ;  eps = sqrt(1 - ab) z_t + sqrt(ab) v
std::vector<double> z0_from_v(std::span<const double> zt, std::span<const double> v, double alpha_bar);
std::vector<double> eps_from_v(std::span<const double> zt, std::span<const double> v, double alpha_bar);
// min(SNR_t, gamma) / SNR_t
double minsnr_weight(std::size_t t, const DiffusionSchedule& sched, double gamma = 5.0);

// (1 + w) v_cond - w v_uncond
std::vector<double> cfg_combine(std::span<const double> v_cond, std::span<const double> v_uncond, double w);

struct GuidanceConfig {
  // Sweep convention: 1 means no guidance; the combination weight is scale - 1.
  double scale = 1.0;
  double p_uncond = 0.15;
  double cfg_weight() const { return scale - 1.0; }
};

// M trajectories z_hat + sigma * eps_m.
std::vector<std::vector<double>> perturb_ensemble(std::span<const double> z_hat, double sigma, std::size_t M,
                                                  std::uint64_t seed);

// Euler integration of dz/dt = v(z, t) from t = 1 down to t = 0 in N steps:
// z_{t - dt} = z_t - dt v(z_t, t).
using VelocityFn = std::function<std::vector<double>(const std::vector<double>& z, double t)>;
std::vector<double> fm_integrate(const VelocityFn& v, std::vector<double> z1, std::size_t N);

// ---------------------------------------------------------------------------
// backbone

enum class Mode { Deterministic, Diffusion, FlowMatching };
std::string mode_name(Mode m);

struct BridgeConfig {
  nc::TransformerConfig backbone{128, 4, 6, 4};
  std::size_t repr_dim = jepa::kReprDim;
  std::size_t cov_dim = 10;
  std::size_t max_len = 365 + 91;
};

struct BridgeNet {
  BridgeConfig cfg;
  Mode mode = Mode::Deterministic;
  nc::Linear ctx_proj;    // context embedding -> token
  nc::Linear cov_proj;    // per-day covariates, added to every token
  nc::Linear noisy_proj;  // z_t on gap tokens (generative modes)
  nc::Linear time_proj;   // sinusoidal time features (generative modes)
  nc::Embedding pos;
  nc::Embedding mask_token;
  nc::Embedding null_token;  // replaces context tokens for the unconditional branch
  nc::Transformer backbone;
  nc::Linear out;

  BridgeNet() = default;
  BridgeNet(const BridgeConfig& cfg, Mode mode, nc::Rng& rng);

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    ctx_proj.visit(prefix + "ctx_proj.", f);
    cov_proj.visit(prefix + "cov_proj.", f);
    if (mode != Mode::Deterministic) {
      noisy_proj.visit(prefix + "noisy_proj.", f);
      time_proj.visit(prefix + "time_proj.", f);
      null_token.visit(prefix + "null_token.", f);
    } else {
      mask_token.visit(prefix + "mask_token.", f);
    }
    pos.visit(prefix + "pos.", f);
    backbone.visit(prefix + "backbone.", f);
    out.visit(prefix + "out.", f);
  }
};

// A batch of windows: context embeddings plus covariates for every day.
struct BridgeInput {
  std::size_t batch = 1;
  std::size_t ctx_len = 365;
  std::size_t gap_len = 91;
  std::vector<double> ctx;  // [batch * ctx_len, repr]
  std::vector<double> cov;  // [batch * (ctx_len + gap_len), cov_dim]

  std::size_t length() const { return ctx_len + gap_len; }
  // The same window repeated n times.
  BridgeInput repeat(std::size_t n) const;
};

// Returns [batch * gap_len, repr]. Deterministic mode ignores z_t/time.
// time: one value per batch element, in schedule units (diffusion step, or
// 1000 t for flow matching). null_ctx: per batch element, 1 = unconditional.
nc::Tensor bridge_forward(const BridgeNet& net, const BridgeInput& in, const nc::Tensor* z_t = nullptr,
                          const std::vector<double>& time = {}, const std::vector<std::uint8_t>& null_ctx = {});

// Deterministic gap embeddings [gap_len, repr] for a single window.
std::vector<double> bridge_predict(const BridgeNet& net, const BridgeInput& in);

// Training objectives on a batch with ground-truth gap embeddings z0.
// Each draws its own t, eps and condition drops from rng.
nc::Tensor diffusion_loss(const BridgeNet& net, const BridgeInput& in, std::span<const double> z0,
                          const DiffusionSchedule& sched, nc::Rng& rng, double p_uncond, double minsnr_gamma = 5.0);
nc::Tensor fm_loss(const BridgeNet& net, const BridgeInput& in, std::span<const double> z0, nc::Rng& rng,
                   double p_uncond);

// Samplers over a single window; n_samples trajectories are drawn jointly
// and returned as [n_samples * gap_len, repr].
std::vector<double> ddim_sample(const BridgeNet& net, const BridgeInput& in, const DiffusionSchedule& sched,
                                std::size_t steps, double eta, const GuidanceConfig& guidance, std::uint64_t seed,
                                std::size_t n_samples = 1);

enum class FmInit { Noise, BridgeResidual };  // FM-A, FM-C
std::vector<double> fm_sample_euler(const BridgeNet& net, const BridgeInput& in, std::size_t N,
                                    const GuidanceConfig& guidance, FmInit init, std::uint64_t seed,
                                    std::size_t n_samples = 1, std::span<const double> z_bridge = {},
                                    double init_sigma = 0.15);

// ---------------------------------------------------------------------------
// training data and loops

struct BridgeData {
  std::size_t n_days = 0;
  std::size_t repr_dim = jepa::kReprDim;
  std::size_t cov_dim = 0;
  std::vector<double> emb;  // [n_days, repr]
  std::vector<double> cov;  // [n_days, cov_dim], daily means of conditioning columns
};

BridgeData make_bridge_data(const jepa::JepaModel& jepa, const data::Series& series,
                            const std::vector<std::size_t>& cov_columns = data::conditioning_columns());

// Windows starting at `starts`: context [s, s+C), gap [s+C, s+C+G).
BridgeInput window_input(const BridgeData& d, const std::vector<std::size_t>& starts, std::size_t ctx_len,
                         std::size_t gap_len);
std::vector<double> window_targets(const BridgeData& d, const std::vector<std::size_t>& starts, std::size_t ctx_len,
                                   std::size_t gap_len);

struct BridgeTrainConfig {
  double lr = 2e-4;
  double lr_min = 2e-5;
  double weight_decay = 1e-4;
  std::size_t patience = 40;
  std::size_t max_epochs = 200;
  std::size_t steps_per_epoch = 8;
  std::size_t batch_size = 8;
  double p_uncond = 0.15;
  double minsnr_gamma = 5.0;
  std::size_t ctx_len = 365;
  std::size_t gap_len = 91;
  std::uint64_t seed = 42;
};

struct BridgeTrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  double initial_val_loss = 0;
  std::size_t best_epoch = 0;
};

// Mode of `net` selects the objective. Throws TrainingError on divergence.
BridgeTrainReport train_bridge(BridgeNet& net, const BridgeData& d, const std::vector<std::size_t>& train_starts,
                               const std::vector<std::size_t>& val_starts, const BridgeTrainConfig& cfg,
                               const DiffusionSchedule& sched = DiffusionSchedule::cosine());

// Validation objective with fixed draws (deterministic: plain latent MSE).
double bridge_validation_loss(const BridgeNet& net, const BridgeData& d, const std::vector<std::size_t>& starts,
                              const BridgeTrainConfig& cfg, const DiffusionSchedule& sched, std::uint64_t seed);

}  // namespace splice::bridge
