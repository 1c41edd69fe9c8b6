#include "splice/pipeline/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <json.hpp>

#include "splice/data/synth.hpp"
#include "splice/errors.hpp"
#include "splice/numcore/checkpoint.hpp"

namespace splice::pipeline {

namespace fs = std::filesystem;
using nc::Tensor;

namespace {

std::string hash_doubles(const std::vector<double>& v) {
  return fnv1a_hex(std::string(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double)));
}

class Timer {
 public:
  Timer() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

jepa::JepaConfig jepa_config(const RunConfig& c) {
  jepa::JepaConfig jc;
  jc.predictor = {c.jepa_d_model, c.jepa_heads, c.jepa_layers, 4};
  return jc;
}

bridge::BridgeConfig bridge_config(const RunConfig& c) {
  bridge::BridgeConfig bc;
  bc.backbone = {c.bridge_d_model, c.bridge_heads, c.bridge_layers, 4};
  bc.cov_dim = data::conditioning_columns().size();
  bc.max_len = data::kContextDays + c.gap_len;
  return bc;
}

decoder::DecoderConfig decoder_config(const std::string& name) {
  if (name == "base") return decoder::DecoderConfig::base();
  if (name == "enhanced" || name == "untrained") return decoder::DecoderConfig::enhanced();
  throw ConfigError("decoder: no hourly decoder named '" + name + "'");
}

std::string mode_slug(bridge::Mode m) {
  switch (m) {
    case bridge::Mode::Deterministic: return "det";
    case bridge::Mode::Diffusion: return "ddim";
    case bridge::Mode::FlowMatching: return "fm";
  }
  return "unknown";
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return nc::Rng::mix(seed ^ nc::Rng::mix(stream + 0x9E3779B97F4A7C15ULL));
}

Prepared prepare_data(const RunConfig& cfg) {
  Prepared d;
  std::vector<data::HourlyRecord> records;
  if (cfg.dataset.rfind("synth:", 0) == 0) {
    d.name = cfg.dataset.substr(6);
    auto sc = data::synth_preset(d.name);
    sc.n_days = cfg.n_days;
    records = data::synth_generate(sc, cfg.data_seed);
  } else if (cfg.dataset.rfind("csv:", 0) == 0) {
    const fs::path path = cfg.dataset.substr(4);
    d.name = path.stem().string();
    records = data::load_csv(path).records;
  } else {
    throw ConfigError("dataset must be synth:<preset> or csv:<path>, got '" + cfg.dataset + "'");
  }
  d.raw = data::build_series(records);
  const std::size_t n = d.raw.n_days();
  d.windows = data::sliding_windows(n, cfg.gap_len);
  d.split = data::train_val_split(n);
  d.stats = data::zscore_fit(d.raw, d.split.n_train);
  d.norm = data::zscore_apply(d.raw, d.stats);
  d.unit = data::minmax_fit(std::span<const double>(d.raw.values).subspan(0, d.split.n_train * d.raw.frame_size()),
                            d.raw.n_features);
  d.data_hash = hash_doubles(d.raw.values);
  return d;
}

BridgeWindows bridge_windows(std::size_t n_train, std::size_t gap_len, std::size_t context_len) {
  if (n_train < context_len + gap_len + 1)
    throw ProtocolError("bridge: " + std::to_string(n_train) + " training days cannot hold a " +
                        std::to_string(context_len) + "+" + std::to_string(gap_len) + " day window");
  const std::size_t count = n_train - context_len - gap_len + 1;
  const std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.15 * count)));
  if (n_val >= count) throw ProtocolError("bridge: too few training windows to hold out a validation set");
  BridgeWindows w;
  for (std::size_t s = 0; s < count; ++s) (s < count - n_val ? w.train : w.val).push_back(s);
  return w;
}

// ---------------------------------------------------------------------------

Pipeline::Pipeline(RunConfig cfg, bool use_cache) : cfg_(std::move(cfg)), use_cache_(use_cache) {
  validate(cfg_);
  data_ = prepare_data(cfg_);
  models_.schedule = bridge::DiffusionSchedule::cosine(cfg_.diffusion_T);
}

std::string Pipeline::manifest_hash() const {
  const auto m = to_map(cfg_);
  std::string text;
  for (const auto& k : training_keys()) text += k + "=" + m.at(k) + "\n";
  text += "data=" + data_.data_hash + "\n";
  return fnv1a_hex(text);
}

fs::path Pipeline::run_dir() const {
  return fs::path(cfg_.runs_dir) / (data_.name + "-g" + std::to_string(cfg_.gap_len) + "-" + manifest_hash());
}

void Pipeline::stage_jepa() {
  if (models_.jepa) return;
  if (load_stage_jepa()) return;
  Timer t;
  nc::Rng rng(stream_seed(cfg_.seed, 1));
  jepa::JepaModel m(jepa_config(cfg_), rng);
  jepa::JepaTrainConfig tc;
  tc.max_epochs = cfg_.jepa_epochs;
  tc.steps_per_epoch = cfg_.jepa_steps;
  tc.batch_size = cfg_.jepa_batch;
  tc.patience = cfg_.jepa_patience;
  tc.seed = stream_seed(cfg_.seed, 2);
  jepa::JepaTrainReport rep;
  jepa::DailyDecoderReport drep;
  try {
    rep = jepa::train_jepa(m, data_.norm, data_.split.n_train, tc);
    jepa::DecoderTrainConfig dc;
    dc.max_epochs = cfg_.daily_epochs;
    dc.seed = stream_seed(cfg_.seed, 3);
    drep = jepa::train_daily_decoder(m, data_.norm, data_.split.n_train, dc);
  } catch (const TrainingError& e) {
    throw TrainingError(std::string("stage jepa: ") + e.what());
  }
  fs::create_directories(run_dir());
  auto params = nc::parameters(m);
  nc::save_checkpoint(run_dir() / "jepa.ckpt", params);
  jepa::write_jepa_log_csv((run_dir() / "jepa_log.csv").string(), rep);
  nlohmann::json j{{"initial_val_loss", rep.initial_val_loss},
                   {"final_val_loss", rep.final_val_loss},
                   {"best_epoch", rep.best_epoch},
                   {"mean_embedding_std", rep.mean_embedding_std},
                   {"collapse_warning", rep.collapse_warning},
                   {"daily_decoder_train_mse", drep.train_mse},
                   {"daily_decoder_mean_frame_mse", drep.mean_frame_mse}};
  stage_logs_["jepa"] = j.dump();
  std::ofstream(run_dir() / "jepa_summary.json") << j.dump(2) << "\n";
  models_.jepa = std::move(m);
  timings_.push_back({"jepa", t.seconds(), false});
}

bool Pipeline::load_stage_jepa() {
  if (models_.jepa) return true;
  const auto path = run_dir() / "jepa.ckpt";
  if (!use_cache_ || !fs::exists(path)) return false;
  Timer t;
  nc::Rng rng(stream_seed(cfg_.seed, 1));
  jepa::JepaModel m(jepa_config(cfg_), rng);
  auto params = nc::parameters(m);
  nc::load_checkpoint(path, params);
  models_.jepa = std::move(m);
  timings_.push_back({"jepa", t.seconds(), true});
  return true;
}

void Pipeline::build_bridge_data() {
  if (models_.bdata) return;
  models_.bdata = bridge::make_bridge_data(*models_.jepa, data_.norm);
}

void Pipeline::stage_decoder(const std::string& name, bool auto_prereq) {
  if (name == "daily") {
    if (!models_.jepa && !auto_prereq && !load_stage_jepa())
      throw TrainingError("stage decoder: the daily decoder needs a JEPA checkpoint");
    stage_jepa();
    return;
  }
  if (models_.decoders.count(name)) return;
  if (!models_.jepa) {
    if (!auto_prereq && !load_stage_jepa())
      throw TrainingError("stage decoder: missing JEPA checkpoint (" + (run_dir() / "jepa.ckpt").string() + ")");
    stage_jepa();
  }
  if (name == "untrained") {
    nc::Rng rng(stream_seed(cfg_.seed, 4));
    models_.decoders.emplace(name, decoder::HourlyDecoder(decoder_config(name), rng));
    return;
  }
  if (load_stage_decoder(name)) return;
  Timer t;
  nc::Rng rng(stream_seed(cfg_.seed, name == "base" ? 5 : 6));
  decoder::HourlyDecoder dec(decoder_config(name), rng);
  decoder::DecoderTrainConfig tc;
  tc.max_epochs = cfg_.decoder_epochs;
  tc.batch_size = cfg_.decoder_batch;
  tc.patience = cfg_.decoder_patience;
  tc.seed = stream_seed(cfg_.seed, 7);
  decoder::DecoderTrainReport rep;
  try {
    rep = decoder::train_decoder(dec, *models_.jepa, data_.norm, data_.split.n_train, tc);
  } catch (const TrainingError& e) {
    throw TrainingError("stage decoder (" + name + "): " + e.what());
  }
  fs::create_directories(run_dir());
  decoder::save_decoder(run_dir() / ("decoder-" + name + ".ckpt"), dec);
  nlohmann::json j{{"train_loss", rep.train_loss},
                   {"val_loss", rep.val_loss},
                   {"best_epoch", rep.best_epoch},
                   {"augmented_batches", rep.augmented_batches},
                   {"batches", rep.batches}};
  std::ofstream(run_dir() / ("decoder-" + name + "_log.json")) << j.dump(2) << "\n";
  models_.decoders.emplace(name, std::move(dec));
  timings_.push_back({"decoder-" + name, t.seconds(), false});
}

bool Pipeline::load_stage_decoder(const std::string& name) {
  if (models_.decoders.count(name)) return true;
  const auto path = run_dir() / ("decoder-" + name + ".ckpt");
  if (!use_cache_ || !fs::exists(path)) return false;
  nc::Rng rng(0);
  decoder::HourlyDecoder dec(decoder_config(name), rng);
  decoder::load_decoder(path, dec);
  models_.decoders.emplace(name, std::move(dec));
  timings_.push_back({"decoder-" + name, 0.0, true});
  return true;
}

void Pipeline::stage_bridge(bridge::Mode mode, bool auto_prereq) {
  if (models_.bridges.count(mode)) return;
  if (!models_.jepa) {
    if (!auto_prereq && !load_stage_jepa())
      throw TrainingError("stage bridge: missing JEPA checkpoint (" + (run_dir() / "jepa.ckpt").string() + ")");
    stage_jepa();
  }
  build_bridge_data();
  if (load_stage_bridge(mode)) return;
  Timer t;
  nc::Rng rng(stream_seed(cfg_.seed, 10 + static_cast<std::uint64_t>(mode)));
  bridge::BridgeNet net(bridge_config(cfg_), mode, rng);
  bridge::BridgeTrainConfig tc;
  tc.max_epochs = cfg_.bridge_epochs;
  tc.steps_per_epoch = cfg_.bridge_steps;
  tc.batch_size = cfg_.bridge_batch;
  tc.patience = cfg_.bridge_patience;
  tc.p_uncond = cfg_.p_uncond;
  tc.minsnr_gamma = cfg_.minsnr_gamma;
  tc.ctx_len = data::kContextDays;
  tc.gap_len = cfg_.gap_len;
  tc.seed = stream_seed(cfg_.seed, 20 + static_cast<std::uint64_t>(mode));
  const auto wins = bridge_windows(data_.split.n_train, cfg_.gap_len);
  bridge::BridgeTrainReport rep;
  try {
    rep = bridge::train_bridge(net, *models_.bdata, wins.train, wins.val, tc, models_.schedule);
  } catch (const TrainingError& e) {
    throw TrainingError("stage bridge (" + bridge::mode_name(mode) + "): " + e.what());
  }
  fs::create_directories(run_dir());
  auto params = nc::parameters(net);
  nc::save_checkpoint(run_dir() / ("bridge-" + mode_slug(mode) + ".ckpt"), params);
  nlohmann::json j{{"train_loss", rep.train_loss},
                   {"val_loss", rep.val_loss},
                   {"initial_val_loss", rep.initial_val_loss},
                   {"best_epoch", rep.best_epoch}};
  std::ofstream(run_dir() / ("bridge-" + mode_slug(mode) + "_log.json")) << j.dump(2) << "\n";
  models_.bridges.emplace(mode, std::move(net));
  timings_.push_back({"bridge-" + mode_slug(mode), t.seconds(), false});
}

bool Pipeline::load_stage_bridge(bridge::Mode mode) {
  if (models_.bridges.count(mode)) return true;
  const auto path = run_dir() / ("bridge-" + mode_slug(mode) + ".ckpt");
  if (!use_cache_ || !fs::exists(path)) return false;
  nc::Rng rng(0);
  bridge::BridgeNet net(bridge_config(cfg_), mode, rng);
  auto params = nc::parameters(net);
  nc::load_checkpoint(path, params);
  models_.bridges.emplace(mode, std::move(net));
  timings_.push_back({"bridge-" + mode_slug(mode), 0.0, true});
  return true;
}

void Pipeline::ensure(const Variant& v, const std::string& decoder_name) {
  if (!v.neural()) return;
  stage_jepa();
  build_bridge_data();
  if (v.base == Base::JepaOnly) return;
  stage_decoder(decoder_name);
  if (v.base == Base::Bridge || v.base == Base::BridgeFmC) stage_bridge(bridge::Mode::Deterministic);
  if (v.base == Base::BridgeDdim) stage_bridge(bridge::Mode::Diffusion);
  if (v.base == Base::BridgeFmA || v.base == Base::BridgeFmC) stage_bridge(bridge::Mode::FlowMatching);
}

void Pipeline::write_manifest() const {
  nlohmann::json j;
  j["manifest_hash"] = manifest_hash();
  j["seed"] = cfg_.seed;
  j["config"] = to_map(cfg_);
  j["inputs"] = {{"dataset", cfg_.dataset}, {"data_hash", data_.data_hash}, {"n_days", data_.raw.n_days()},
                 {"n_train", data_.split.n_train}, {"n_windows", data_.windows.size()}};
  nlohmann::json ck = nlohmann::json::object();
  for (const auto& entry : fs::exists(run_dir()) ? fs::directory_iterator(run_dir()) : fs::directory_iterator()) {
    if (entry.path().extension() != ".ckpt") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ck[entry.path().filename().string()] = {{"path", entry.path().string()}, {"hash", fnv1a_hex(bytes)}};
  }
  j["checkpoints"] = ck;
  // Training times survive later runs that only load the cached stage.
  std::map<std::string, nlohmann::json> trained;
  if (std::ifstream prev(run_dir() / "manifest.json"); prev) {
    const auto old = nlohmann::json::parse(prev, nullptr, false);
    if (old.is_object() && old.contains("timing") && old["timing"].is_array())
      for (const auto& e : old["timing"])
        if (e.contains("stage") && e.contains("train_seconds")) trained[e["stage"].get<std::string>()] = e;
  }
  for (const auto& t : timings_) {
    auto& e = trained[t.stage];
    e["stage"] = t.stage;
    e["cached"] = t.cached;
    if (!t.cached) e["train_seconds"] = t.seconds;
    if (t.cached) e["load_seconds"] = t.seconds;
    if (!e.contains("train_seconds")) e["train_seconds"] = nullptr;
  }
  nlohmann::json tj = nlohmann::json::array();
  for (const auto& [stage, e] : trained) tj.push_back(e);
  j["timing"] = tj;
  fs::create_directories(run_dir());
  std::ofstream(run_dir() / "manifest.json") << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// inference

namespace {

// Decodes n_traj latent trajectories [n_traj * gap, repr] to raw frames.
std::vector<double> decode_latents(Pipeline& p, const std::string& decoder_name, const data::GapWindow& w,
                                   const std::vector<double>& z, std::size_t n_traj) {
  const auto& d = p.data();
  const std::size_t G = w.gap_len, repr = jepa::kReprDim;
  if (z.size() != n_traj * G * repr) throw DimensionError("decode: latent size mismatch");
  nc::NoGradGuard ng;
  std::vector<double> out;
  if (decoder_name == "daily") {
    auto frames = jepa::daily_decode(*p.models().jepa, Tensor({n_traj * G, repr}, z));
    out.assign(frames.values().begin(), frames.values().end());
  } else {
    const auto& dec = p.models().decoders.at(decoder_name);
    const auto cond1 = decoder::conditioning_rows(d.norm, w.gap_begin(), w.gap_end(), dec.cfg.cond_columns);
    std::vector<double> cond;
    cond.reserve(cond1.size() * n_traj);
    for (std::size_t m = 0; m < n_traj; ++m) cond.insert(cond.end(), cond1.begin(), cond1.end());
    auto frames = decoder::decode_hourly(dec, Tensor({n_traj * G, repr}, z),
                                         Tensor({n_traj * G * data::kHours, dec.cfg.cond_dim()}, std::move(cond)));
    out.assign(frames.values().begin(), frames.values().end());
  }
  data::zscore_invert(out, d.stats);
  return out;
}

}  // namespace

std::vector<double> gap_truth(const Prepared& d, const data::GapWindow& w) {
  const auto fs_ = d.raw.frame_size();
  return {d.raw.values.begin() + static_cast<std::ptrdiff_t>(w.gap_begin() * fs_),
          d.raw.values.begin() + static_cast<std::ptrdiff_t>(w.gap_end() * fs_)};
}

std::vector<double> load_column(const std::vector<double>& frames, std::size_t n_features) {
  std::vector<double> out(frames.size() / n_features);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = frames[i * n_features + data::kLoad];
  return out;
}

std::string effective_decoder(const Variant& v, const std::string& decoder_name) {
  if (v.base == Base::SeasonalNaive) return "none";
  if (v.base == Base::JepaOnly) return "daily";
  return decoder_name;
}

Imputation impute_window(Pipeline& p, const Variant& v, const std::string& decoder_name, const data::GapWindow& w,
                         const ImputeOptions& opt) {
  const auto& cfg = p.config();
  const auto& d = p.data();
  Imputation imp;
  if (w.gap_len != cfg.gap_len) throw ProtocolError("impute: window gap length differs from the trained gap length");
  if (v.base == Base::SeasonalNaive) {
    auto sn = data::seasonal_naive(d.raw, w);
    if (!sn.available)
      throw ProtocolError("seasonal-naive: window at day " + std::to_string(w.start) + " has no day one year earlier");
    imp.point = std::move(sn.frames);
    return imp;
  }
  const std::string dec_name = effective_decoder(v, decoder_name);
  p.ensure(v, dec_name);
  auto& models = p.models();
  const auto& bd = *models.bdata;
  const std::size_t G = w.gap_len, C = w.context_len, repr = bd.repr_dim, M = std::max<std::size_t>(1, opt.members);
  std::vector<double> latents;  // [n_traj * G, repr]
  std::size_t n_traj = 1;
  std::size_t point_index = 0;
  if (v.base == Base::JepaOnly) {
    const std::span<const double> ctx(bd.emb.data() + w.start * repr, C * repr);
    imp.latent_point = jepa::rollout_gap(*models.jepa, ctx, C, G);
    latents = imp.latent_point;
  } else {
    const auto in = bridge::window_input(bd, {w.start}, C, G);
    const bridge::GuidanceConfig guide{cfg.guidance, cfg.p_uncond};
    std::vector<double> z_hat;
    if (v.base == Base::Bridge || v.base == Base::BridgeFmC)
      z_hat = bridge::bridge_predict(models.bridges.at(bridge::Mode::Deterministic), in);
    if (v.base == Base::Bridge) {
      imp.latent_point = z_hat;
      latents = z_hat;
      if (M > 1) {
        for (auto& m : bridge::perturb_ensemble(z_hat, cfg.ensemble_sigma, M, opt.seed))
          latents.insert(latents.end(), m.begin(), m.end());
        n_traj = M + 1;
        point_index = 0;
      }
    } else {
      if (v.base == Base::BridgeDdim) {
        latents = bridge::ddim_sample(models.bridges.at(bridge::Mode::Diffusion), in, models.schedule,
                                      cfg.ddim_steps, 0.0, guide, opt.seed, M);
      } else {
        const auto init = v.base == Base::BridgeFmA ? bridge::FmInit::Noise : bridge::FmInit::BridgeResidual;
        latents = bridge::fm_sample_euler(models.bridges.at(bridge::Mode::FlowMatching), in, cfg.fm_steps, guide, init,
                                          opt.seed, M, z_hat, cfg.fm_init_sigma);
      }
      n_traj = M;
      imp.latent_point.assign(latents.begin(), latents.begin() + static_cast<std::ptrdiff_t>(G * repr));
    }
  }
  auto frames = decode_latents(p, dec_name, w, latents, n_traj);
  const std::size_t block = G * data::kHours * d.raw.n_features;
  imp.point.assign(frames.begin() + static_cast<std::ptrdiff_t>(point_index * block),
                   frames.begin() + static_cast<std::ptrdiff_t>((point_index + 1) * block));
  if (v.base == Base::Bridge && n_traj > 1) {
    imp.members.assign(frames.begin() + static_cast<std::ptrdiff_t>(block), frames.end());
    imp.n_members = M;
  } else if (v.generative()) {
    imp.members = std::move(frames);
    imp.n_members = M;
  }
  return imp;
}

metrics::WindowMetrics score_window(const Prepared& d, const data::GapWindow& w, const Imputation& imp) {
  const std::size_t nf = d.raw.n_features;
  const auto truth = gap_truth(d, w);
  if (imp.point.size() != truth.size()) throw DimensionError("score: imputation does not cover the gap");
  metrics::WindowMetrics m;
  m.window_start = w.start;
  auto p01 = imp.point, t01 = truth;
  data::minmax_apply(p01, d.unit);
  data::minmax_apply(t01, d.unit);
  m.all_feature_mse = metrics::gap_mse_allfeat(p01, t01);
  const auto pl = load_column(imp.point, nf), tl = load_column(truth, nf);
  const auto lm = metrics::load_mse_minmax(pl, tl);
  m.degenerate = lm.degenerate;
  m.load_mse_minmax = lm.mse;
  const auto mp = metrics::mape(pl, tl);
  m.mape_pct = mp.pct;
  m.mape_excluded = mp.excluded;
  if (!lm.degenerate) {
    m.rmse_physical = metrics::rmse_physical(lm.mse, lm.range);
    m.mae_physical = metrics::mae_from_rmse(m.rmse_physical);
    const double lo = *std::min_element(tl.begin(), tl.end());
    auto scale = [&](std::vector<double> x) {
      for (auto& v : x) v = (v - lo) / lm.range;
      return x;
    };
    const auto ts = scale(tl);
    if (imp.n_members > 0)
      m.crps = metrics::crps_ensemble_mean(scale(load_column(imp.members, nf)), imp.n_members, ts);
    else
      m.crps = metrics::crps_ensemble_mean(scale(pl), 1, ts);
    const std::size_t last = w.gap_begin() - 1;
    const auto b = metrics::boundary_discontinuity(d.raw.at(last, data::kHours - 2, data::kLoad),
                                                   d.raw.at(last, data::kHours - 1, data::kLoad), pl.front(), lm.range);
    m.boundary_d = b.d;
  }
  return m;
}

EvalResult evaluate(Pipeline& p, const Variant& v, const std::string& decoder_name) {
  const auto& cfg = p.config();
  const auto& d = p.data();
  if (d.windows.empty()) throw ProtocolError("evaluate: zero protocol windows");
  p.ensure(v, decoder_name);
  EvalResult res;
  res.seed = cfg.seed;
  res.report.dataset = d.name;
  res.report.variant = v.name();
  const std::size_t n = d.windows.size();
  std::vector<metrics::WindowMetrics> per(n);
  const bool ensemble = v.base != Base::JepaOnly && v.base != Base::SeasonalNaive;
  if (v.conformal == Conformal::None) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto imp = impute_window(p, v, decoder_name, d.windows[i],
                                     {ensemble ? cfg.ensemble_m : 1, stream_seed(cfg.seed, 1000 + i)});
      per[i] = score_window(d, d.windows[i], imp);
    }
  } else {
    conformal::AciConfig ac;
    ac.alpha = cfg.alpha;
    ac.gamma = cfg.gamma;
    ac.cal_fraction = cfg.cal_fraction;
    ac.s_cal = cfg.s_cal;
    ac.s_inf = cfg.s_inf;
    const std::size_t nf = d.raw.n_features;
    conformal::WindowSampler sampler = [&](std::size_t i, std::size_t S) {
      const auto imp = impute_window(p, v, decoder_name, d.windows[i], {S, stream_seed(cfg.seed, 1000 + i)});
      if (imp.n_members < 2) throw CalibrationError("conformal: variant " + v.name() + " yields no ensemble");
      per[i] = score_window(d, d.windows[i], imp);
      return conformal::ConformalWindow{load_column(imp.members, nf), imp.n_members,
                                        load_column(gap_truth(d, d.windows[i]), nf)};
    };
    auto rep = conformal::aci_run(sampler, n, ac);
    const bool aci = v.conformal == Conformal::Aci;
    std::map<std::size_t, std::pair<double, std::size_t>> width;
    for (const auto& s : rep.trace)
      if (std::isfinite(s.hi - s.lo)) {
        width[s.window].first += s.hi - s.lo;
        ++width[s.window].second;
      }
    for (std::size_t k = 0; k < rep.window_coverage.size(); ++k) {
      const std::size_t i = rep.n_cal_windows + k;
      if (aci) {
        per[i].coverage = rep.window_coverage[k];
        if (width.count(i)) per[i].mean_width = width[i].first / static_cast<double>(width[i].second);
      }
    }
    res.aci = std::move(rep);
    res.aci_cfg = ac;
  }
  res.report.windows = std::move(per);
  return res;
}

GuidanceSweep sweep_guidance(Pipeline& p, const Variant& v, const std::vector<double>& scales,
                             std::size_t max_windows) {
  if (!v.generative())
    throw ConfigError("sweep-guidance: variant " + v.name() + " has no generative head to guide");
  if (scales.empty()) throw ConfigError("sweep-guidance: no scales");
  p.ensure(v, p.config().decoder);
  const auto& cfg = p.config();
  auto& models = p.models();
  const auto& bd = *models.bdata;
  auto val = bridge_windows(p.data().split.n_train, cfg.gap_len).val;
  if (val.size() > max_windows) {
    std::vector<std::size_t> pick;
    for (std::size_t k = 0; k < max_windows; ++k) pick.push_back(val[k * val.size() / max_windows]);
    val = pick;
  }
  GuidanceSweep out;
  for (double s : scales) {
    double total = 0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < val.size(); ++k) {
      const auto in = bridge::window_input(bd, {val[k]}, data::kContextDays, cfg.gap_len);
      const auto truth = bridge::window_targets(bd, {val[k]}, data::kContextDays, cfg.gap_len);
      const bridge::GuidanceConfig g{s, cfg.p_uncond};
      const auto seed = stream_seed(cfg.seed, 5000 + k);
      std::vector<double> z;
      if (v.base == Base::BridgeDdim) {
        z = bridge::ddim_sample(models.bridges.at(bridge::Mode::Diffusion), in, models.schedule, cfg.ddim_steps, 0.0, g,
                                seed);
      } else {
        std::vector<double> z_hat;
        if (v.base == Base::BridgeFmC) z_hat = bridge::bridge_predict(models.bridges.at(bridge::Mode::Deterministic), in);
        z = bridge::fm_sample_euler(models.bridges.at(bridge::Mode::FlowMatching), in, cfg.fm_steps, g,
                                    v.base == Base::BridgeFmA ? bridge::FmInit::Noise : bridge::FmInit::BridgeResidual,
                                    seed, 1, z_hat, cfg.fm_init_sigma);
      }
      for (std::size_t i = 0; i < z.size(); ++i) total += (z[i] - truth[i]) * (z[i] - truth[i]);
      count += z.size();
    }
    out.rows.push_back({s, total / static_cast<double>(count)});
  }
  const auto best = std::min_element(out.rows.begin(), out.rows.end(),
                                     [](const auto& a, const auto& b) { return a.val_mse < b.val_mse; });
  const auto worst = std::max_element(out.rows.begin(), out.rows.end(),
                                      [](const auto& a, const auto& b) { return a.val_mse < b.val_mse; });
  out.selected = best->scale;
  out.relative_spread = best->val_mse > 0 ? (worst->val_mse - best->val_mse) / best->val_mse : 0.0;
  return out;
}

}  // namespace splice::pipeline
