#include "splice/pipeline/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "splice/errors.hpp"

namespace splice::pipeline {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return x;
}

std::string num(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SIZE_FIELD(name)                                                                      \
  {                                                                                           \
#name, {[](RunConfig& c, const std::string& v) { c.name = to_size(#name, v); },           \
             [](const RunConfig& c) { return std::to_string(c.name); } }                     \
  }
#define REAL_FIELD(name)                                                                      \
  {                                                                                           \
#name, {[](RunConfig& c, const std::string& v) { c.name = to_double(#name, v); },         \
             [](const RunConfig& c) { return num(c.name); } }                                \
  }
#define TEXT_FIELD(name)                                                                      \
  {                                                                                           \
#name, {[](RunConfig& c, const std::string& v) { c.name = v; },                           \
             [](const RunConfig& c) { return c.name; } }                                     \
  }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> f{
      TEXT_FIELD(dataset),
      SIZE_FIELD(n_days),
      SIZE_FIELD(gap_len),
      {"seed", {[](RunConfig& c, const std::string& v) { c.seed = to_size("seed", v); },
                [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"data_seed", {[](RunConfig& c, const std::string& v) { c.data_seed = to_size("data_seed", v); },
                     [](const RunConfig& c) { return std::to_string(c.data_seed); }}},
      TEXT_FIELD(variant),
      TEXT_FIELD(decoder),
      SIZE_FIELD(ensemble_m),
      REAL_FIELD(ensemble_sigma),
      REAL_FIELD(guidance),
      SIZE_FIELD(ddim_steps),
      SIZE_FIELD(fm_steps),
      REAL_FIELD(fm_init_sigma),
      REAL_FIELD(alpha),
      REAL_FIELD(gamma),
      REAL_FIELD(cal_fraction),
      SIZE_FIELD(s_cal),
      SIZE_FIELD(s_inf),
      SIZE_FIELD(jepa_d_model),
      SIZE_FIELD(jepa_heads),
      SIZE_FIELD(jepa_layers),
      SIZE_FIELD(jepa_epochs),
      SIZE_FIELD(jepa_steps),
      SIZE_FIELD(jepa_batch),
      SIZE_FIELD(jepa_patience),
      SIZE_FIELD(daily_epochs),
      SIZE_FIELD(decoder_epochs),
      SIZE_FIELD(decoder_batch),
      SIZE_FIELD(decoder_patience),
      SIZE_FIELD(bridge_d_model),
      SIZE_FIELD(bridge_heads),
      SIZE_FIELD(bridge_layers),
      SIZE_FIELD(bridge_epochs),
      SIZE_FIELD(bridge_steps),
      SIZE_FIELD(bridge_batch),
      SIZE_FIELD(bridge_patience),
      REAL_FIELD(p_uncond),
      REAL_FIELD(minsnr_gamma),
      SIZE_FIELD(diffusion_T),
      TEXT_FIELD(runs_dir),
  };
  return f;
}

#undef SIZE_FIELD
#undef REAL_FIELD
#undef TEXT_FIELD

}  // namespace

void validate(const RunConfig& c) {
  if (c.gap_len == 0) throw ConfigError("config: gap_len must be positive");
  if (!(c.alpha > 0 && c.alpha < 1)) throw ConfigError("config: alpha must lie in (0, 1)");
  if (!(c.gamma > 0)) throw ConfigError("config: gamma must be positive");
  if (!(c.cal_fraction > 0 && c.cal_fraction < 1)) throw ConfigError("config: cal_fraction must lie in (0, 1)");
  if (c.ensemble_m == 0) throw ConfigError("config: ensemble_m must be at least 1");
  if (c.ensemble_sigma < 0) throw ConfigError("config: ensemble_sigma must be non-negative");
  if (c.guidance < 1.0) throw ConfigError("config: guidance scale must be >= 1 (1 = unguided)");
  if (c.decoder != "enhanced" && c.decoder != "base" && c.decoder != "daily" && c.decoder != "untrained")
    throw ConfigError("config: decoder must be enhanced, base, daily or untrained, got '" + c.decoder + "'");
  if (c.jepa_heads == 0 || c.jepa_d_model % c.jepa_heads)
    throw ConfigError("config: jepa_d_model must be divisible by jepa_heads");
  if (c.bridge_heads == 0 || c.bridge_d_model % c.bridge_heads)
    throw ConfigError("config: bridge_d_model must be divisible by bridge_heads");
  parse_variant(c.variant);
}

RunConfig default_config(const std::string& profile) {
  RunConfig c;
  if (profile == "paper") {
    c.profile = "paper";
    return c;
  }
  if (profile != "desk") throw ConfigError("config: unknown profile '" + profile + "' (desk | paper)");
  c.profile = "desk";
  c.jepa_d_model = 32;
  c.jepa_heads = 2;
  c.jepa_layers = 2;
  c.jepa_epochs = 40;
  c.jepa_steps = 8;
  c.jepa_batch = 16;
  c.jepa_patience = 15;
  c.daily_epochs = 40;
  c.decoder_epochs = 25;
  c.decoder_batch = 32;
  c.decoder_patience = 8;
  c.bridge_d_model = 32;
  c.bridge_heads = 2;
  c.bridge_layers = 2;
  c.bridge_epochs = 40;
  c.bridge_steps = 6;
  c.bridge_batch = 8;
  c.bridge_patience = 15;
  return c;
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  const std::string k = trim(key), v = trim(value);
  if (k == "profile") {
    const auto keep_seed = cfg.seed;
    cfg = default_config(v);
    cfg.seed = keep_seed;
    return;
  }
  const auto it = fields().find(k);
  if (it == fields().end()) throw ConfigError("config: unknown key '" + k + "'");
  it->second.set(cfg, v);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("config: expected key=value, got '" + assignment + "'");
  apply_override(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

RunConfig parse_config(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line, profile = "desk";
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config: expected 'key = value'", lineno);
    const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "profile")
      profile = value;
    else
      entries.emplace_back(key, value);
  }
  RunConfig cfg = default_config(profile);
  for (const auto& [k, v] : entries) apply_override(cfg, k, v);
  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  return parse_config(in);
}

void apply_env_seed(RunConfig& cfg) {
  if (const char* s = std::getenv(kSeedEnv); s && *s) cfg.seed = to_size(kSeedEnv, s);
}

std::map<std::string, std::string> to_map(const RunConfig& cfg) {
  std::map<std::string, std::string> m;
  m["profile"] = cfg.profile;
  for (const auto& [k, f] : fields()) m[k] = f.get(cfg);
  return m;
}

std::string to_text(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& [k, v] : to_map(cfg)) os << k << " = " << v << "\n";
  return os.str();
}

const std::vector<std::string>& training_keys() {
  static const std::vector<std::string> keys{
      "dataset",        "data_seed",      "n_days",         "gap_len",        "seed",           "profile",
      "jepa_d_model",   "jepa_heads",     "jepa_layers",    "jepa_epochs",    "jepa_steps",
      "jepa_batch",     "jepa_patience",  "daily_epochs",   "decoder_epochs", "decoder_batch",
      "decoder_patience", "bridge_d_model", "bridge_heads", "bridge_layers",  "bridge_epochs",
      "bridge_steps",   "bridge_batch",   "bridge_patience", "p_uncond",      "minsnr_gamma",
      "diffusion_T"};
  return keys;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string base_name(Base b) {
  switch (b) {
    case Base::SeasonalNaive: return "seasonal-naive";
    case Base::JepaOnly: return "jepa-only";
    case Base::Bridge: return "bridge";
    case Base::BridgeDdim: return "bridge+ddim";
    case Base::BridgeFmA: return "bridge+fm-a";
    case Base::BridgeFmC: return "bridge+fm-c";
  }
  return "unknown";
}

std::string Variant::name() const {
  std::string n = base_name(base);
  if (conformal == Conformal::Cqr) n += "+cqr";
  if (conformal == Conformal::Aci) n += "+aci";
  return n;
}

Variant parse_variant(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string tok; std::getline(ss, tok, '+');) parts.push_back(trim(tok));
  if (parts.empty() || parts[0].empty()) parts.insert(parts.begin(), "bridge");
  Variant v;
  const auto& head = parts[0];
  if (head == "seasonal-naive")
    v.base = Base::SeasonalNaive;
  else if (head == "jepa-only")
    v.base = Base::JepaOnly;
  else if (head == "bridge" || head == "full")
    v.base = Base::Bridge;
  else
    throw ConfigError("variant: unknown base '" + head + "' in '" + text + "'");
  bool backend_set = false;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto& p = parts[i];
    if (p == "ddim" || p == "fm-a" || p == "fm-c") {
      if (v.base != Base::Bridge || backend_set)
        throw ConfigError("variant: a generative backend needs the bridge base, in '" + text + "'");
      v.base = p == "ddim" ? Base::BridgeDdim : p == "fm-a" ? Base::BridgeFmA : Base::BridgeFmC;
      backend_set = true;
    } else if (p == "cqr" || p == "aci") {
      if (v.conformal != Conformal::None) throw ConfigError("variant: more than one conformal layer in '" + text + "'");
      v.conformal = p == "cqr" ? Conformal::Cqr : Conformal::Aci;
    } else {
      throw ConfigError("variant: unknown component '" + p + "' in '" + text + "'");
    }
  }
  if (v.base == Base::SeasonalNaive && v.conformal != Conformal::None)
    throw ConfigError("variant: seasonal-naive produces no ensemble to calibrate");
  return v;
}

}  // namespace splice::pipeline
