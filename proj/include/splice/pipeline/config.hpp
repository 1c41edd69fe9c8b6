#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace splice::pipeline {

inline constexpr const char* kSeedEnv = "SPLICE_SEED";

// Flat run configuration. Every field is addressable as `key = value`.
struct RunConfig {
  // data
  std::string dataset = "synth:stable-commercial";  // synth:<preset> | csv:<path>
  std::size_t n_days = 800;                          // synthetic length
  std::size_t gap_len = 91;
  std::uint64_t seed = 42;        // training and sampling
  std::uint64_t data_seed = 7;    // synthetic generator
  std::string profile = "desk";  // desk | paper

  // inference
  std::string variant = "bridge+aci";
  std::string decoder = "enhanced";  // enhanced | base | daily | untrained
  std::size_t ensemble_m = 20;
  double ensemble_sigma = 0.15;
  double guidance = 1.0;
  std::size_t ddim_steps = 50;
  std::size_t fm_steps = 5;
  double fm_init_sigma = 0.15;

  // conformal
  double alpha = 0.05;
  double gamma = 0.01;
  double cal_fraction = 0.5;
  std::size_t s_cal = 50;
  std::size_t s_inf = 20;

  // JEPA stage
  std::size_t jepa_d_model = 128;
  std::size_t jepa_heads = 4;
  std::size_t jepa_layers = 4;
  std::size_t jepa_epochs = 200;
  std::size_t jepa_steps = 16;
  std::size_t jepa_batch = 16;
  std::size_t jepa_patience = 50;
  std::size_t daily_epochs = 100;

  // hourly decoder stage
  std::size_t decoder_epochs = 100;
  std::size_t decoder_batch = 32;
  std::size_t decoder_patience = 20;

  // bridge stage
  std::size_t bridge_d_model = 128;
  std::size_t bridge_heads = 4;
  std::size_t bridge_layers = 6;
  std::size_t bridge_epochs = 200;
  std::size_t bridge_steps = 8;
  std::size_t bridge_batch = 8;
  std::size_t bridge_patience = 40;
  double p_uncond = 0.15;
  double minsnr_gamma = 5.0;
  std::size_t diffusion_T = 1000;

  // output
  std::string runs_dir = "runs";
};

// Defaults for a named profile: "paper" keeps the full-scale
// hyperparameters, "desk" shrinks widths and epoch counts for a single CPU.
RunConfig default_config(const std::string& profile = "desk");

// Sets one field from its text form. Throws ConfigError on an unknown key or
// a malformed value. Setting "profile" resets every field to that profile.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);
// "key=value"
void apply_override(RunConfig& cfg, const std::string& assignment);
// Cross-field checks; throws ConfigError.
void validate(const RunConfig& cfg);

// `key = value` lines; '#' starts a comment. A "profile" line is applied
// first regardless of position.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);

// Applies SPLICE_SEED if set.
void apply_env_seed(RunConfig& cfg);

// Fields as sorted key/value text.
std::map<std::string, std::string> to_map(const RunConfig& cfg);
std::string to_text(const RunConfig& cfg);

// Keys that change trained weights; everything else only affects inference.
const std::vector<std::string>& training_keys();

// FNV-1a 64-bit, hex.
std::string fnv1a_hex(const std::string& bytes);

// Pipeline variants: a base model plus an optional conformal layer, written
// e.g. "bridge+fm-c+aci".
enum class Base { SeasonalNaive, JepaOnly, Bridge, BridgeDdim, BridgeFmA, BridgeFmC };
enum class Conformal { None, Cqr, Aci };

struct Variant {
  Base base = Base::Bridge;
  Conformal conformal = Conformal::None;
  std::string name() const;
  bool generative() const { return base == Base::BridgeDdim || base == Base::BridgeFmA || base == Base::BridgeFmC; }
  bool neural() const { return base != Base::SeasonalNaive; }
};
Variant parse_variant(const std::string& text);
std::string base_name(Base b);

}  // namespace splice::pipeline
