#include "sifm/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include "sifm/errors.hpp"

namespace sifm {

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("train.epochs must be > 0");
  if (batch_size <= 0) throw ConfigError("train.batch_size must be > 0");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("train.eps must be > 0");
  if (early_stop_patience <= 0) throw ConfigError("train.early_stop_patience must be > 0");
  if (anchor_stride <= 0) throw ConfigError("train.anchor_stride must be > 0");
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw ConfigError("train.train_frac must be in (0, 1)");
  if (!(val_frac > 0.0 && val_frac < 1.0)) throw ConfigError("train.val_frac must be in (0, 1)");
  if (!(train_frac + val_frac < 1.0))
    throw ConfigError("train.train_frac + train.val_frac must leave room for a test split");
}

void RunConfig::validate() const {
  synth.validate();
  // Codec geometry is checked against the actual grid at model build time;
  // here only the internal constraints.
  codec.validate(synth.height, synth.width);
  fusion.validate();
  train.validate();
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& v, const std::string& key) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError(key + ": not a number: '" + v + "'");
  return out;
}

template <typename I>
I parse_int(const std::string& v, const std::string& key) {
  I out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError(key + ": not an integer: '" + v + "'");
  return out;
}

std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
  std::vector<int> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) out.push_back(parse_int<int>(item, key));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct KvLine {
  int line;
  std::string key, value;
};

std::vector<KvLine> split_kv(const std::string& text) {
  std::vector<KvLine> out;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" +
                        trim(raw) + "'");
    KvLine kv{lineno, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    if (kv.key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    out.push_back(std::move(kv));
  }
  return out;
}

// Applies one key to the sub-configs. Returns false for unknown keys so
// each document type can layer its own key set on top.
bool apply_model_key(const KvLine& kv, std::int64_t& height, std::int64_t& width,
                     CodecConfig& codec, FusionConfig& fusion) {
  const std::string& k = kv.key;
  const std::string& v = kv.value;
  if (k == "model.height") height = parse_int<std::int64_t>(v, k);
  else if (k == "model.width") width = parse_int<std::int64_t>(v, k);
  else if (k == "codec.patch_size") codec.patch_size = parse_int<int>(v, k);
  else if (k == "codec.stem_channels") codec.stem_channels = parse_int<int>(v, k);
  else if (k == "codec.num_merge_stages") codec.num_merge_stages = parse_int<int>(v, k);
  else if (k == "codec.attn_window") codec.attn_window = parse_int<int>(v, k);
  else if (k == "codec.heads_per_stage") codec.heads_per_stage = parse_int_list(v, k);
  else if (k == "codec.token_dim") codec.token_dim = parse_int<int>(v, k);
  else if (k == "codec.ln_eps") codec.ln_eps = parse_double(v, k);
  else if (k == "fusion.d") fusion.d = parse_int<int>(v, k);
  else if (k == "fusion.num_layers") fusion.num_layers = parse_int<int>(v, k);
  else if (k == "fusion.num_heads") fusion.num_heads = parse_int<int>(v, k);
  else if (k == "fusion.ffn_hidden") fusion.ffn_hidden = parse_int<int>(v, k);
  else if (k == "fusion.backbone") fusion.backbone = backbone_from_name(v);
  else if (k == "fusion.ln_eps") fusion.ln_eps = parse_double(v, k);
  else return false;
  return true;
}

void serialize_model_keys(std::ostringstream& out, std::int64_t height, std::int64_t width,
                          const CodecConfig& codec, const FusionConfig& fusion) {
  out << "model.height = " << height << "\n";
  out << "model.width = " << width << "\n";
  out << "codec.patch_size = " << codec.patch_size << "\n";
  out << "codec.stem_channels = " << codec.stem_channels << "\n";
  out << "codec.num_merge_stages = " << codec.num_merge_stages << "\n";
  out << "codec.attn_window = " << codec.attn_window << "\n";
  out << "codec.heads_per_stage = ";
  for (std::size_t i = 0; i < codec.heads_per_stage.size(); ++i)
    out << (i ? "," : "") << codec.heads_per_stage[i];
  out << "\n";
  out << "codec.token_dim = " << codec.token_dim << "\n";
  out << "codec.ln_eps = " << format_double(codec.ln_eps) << "\n";
  out << "fusion.d = " << fusion.d << "\n";
  out << "fusion.num_layers = " << fusion.num_layers << "\n";
  out << "fusion.num_heads = " << fusion.num_heads << "\n";
  out << "fusion.ffn_hidden = " << fusion.ffn_hidden << "\n";
  out << "fusion.backbone = " << backbone_name(fusion.backbone) << "\n";
  out << "fusion.ln_eps = " << format_double(fusion.ln_eps) << "\n";
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::int64_t model_h = 0, model_w = 0;  // accepted but unused in run docs
  for (const KvLine& kv : split_kv(text)) {
    const std::string& k = kv.key;
    const std::string& v = kv.value;
    if (apply_model_key(kv, model_h, model_w, cfg.codec, cfg.fusion)) continue;
    if (k == "synth.height") cfg.synth.height = parse_int<std::int64_t>(v, k);
    else if (k == "synth.width") cfg.synth.width = parse_int<std::int64_t>(v, k);
    else if (k == "synth.num_days") cfg.synth.num_days = parse_int<std::int64_t>(v, k);
    else if (k == "synth.seasonal_amplitude") cfg.synth.seasonal_amplitude = parse_double(v, k);
    else if (k == "synth.period_days") cfg.synth.period_days = parse_int<std::int64_t>(v, k);
    else if (k == "synth.linear_trend_per_day") cfg.synth.linear_trend_per_day = parse_double(v, k);
    else if (k == "synth.noise_std") cfg.synth.noise_std = parse_double(v, k);
    else if (k == "synth.spatial_gradient_strength")
      cfg.synth.spatial_gradient_strength = parse_double(v, k);
    else if (k == "synth.rng_seed") cfg.synth.rng_seed = parse_int<std::uint64_t>(v, k);
    else if (k == "train.epochs") cfg.train.epochs = parse_int<int>(v, k);
    else if (k == "train.batch_size") cfg.train.batch_size = parse_int<int>(v, k);
    else if (k == "train.lr") cfg.train.lr = parse_double(v, k);
    else if (k == "train.beta1") cfg.train.beta1 = parse_double(v, k);
    else if (k == "train.beta2") cfg.train.beta2 = parse_double(v, k);
    else if (k == "train.eps") cfg.train.eps = parse_double(v, k);
    else if (k == "train.rng_seed") cfg.train.rng_seed = parse_int<std::uint64_t>(v, k);
    else if (k == "train.granularity_mode") cfg.train.granularity_mode = mode_from_name(v);
    else if (k == "train.early_stop_patience") cfg.train.early_stop_patience = parse_int<int>(v, k);
    else if (k == "train.anchor_stride") cfg.train.anchor_stride = parse_int<int>(v, k);
    else if (k == "train.train_frac") cfg.train.train_frac = parse_double(v, k);
    else if (k == "train.val_frac") cfg.train.val_frac = parse_double(v, k);
    else if (k == "paths.data") cfg.data_path = v;
    else if (k == "paths.checkpoint") cfg.checkpoint_path = v;
    else if (k == "paths.out_dir") cfg.out_dir = v;
    else
      throw ConfigError("line " + std::to_string(kv.line) + ": unknown key '" + k + "'");
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "synth.height = " << cfg.synth.height << "\n";
  out << "synth.width = " << cfg.synth.width << "\n";
  out << "synth.num_days = " << cfg.synth.num_days << "\n";
  out << "synth.seasonal_amplitude = " << format_double(cfg.synth.seasonal_amplitude) << "\n";
  out << "synth.period_days = " << cfg.synth.period_days << "\n";
  out << "synth.linear_trend_per_day = " << format_double(cfg.synth.linear_trend_per_day) << "\n";
  out << "synth.noise_std = " << format_double(cfg.synth.noise_std) << "\n";
  out << "synth.spatial_gradient_strength = "
      << format_double(cfg.synth.spatial_gradient_strength) << "\n";
  out << "synth.rng_seed = " << cfg.synth.rng_seed << "\n";
  serialize_model_keys(out, cfg.synth.height, cfg.synth.width, cfg.codec, cfg.fusion);
  out << "train.epochs = " << cfg.train.epochs << "\n";
  out << "train.batch_size = " << cfg.train.batch_size << "\n";
  out << "train.lr = " << format_double(cfg.train.lr) << "\n";
  out << "train.beta1 = " << format_double(cfg.train.beta1) << "\n";
  out << "train.beta2 = " << format_double(cfg.train.beta2) << "\n";
  out << "train.eps = " << format_double(cfg.train.eps) << "\n";
  out << "train.rng_seed = " << cfg.train.rng_seed << "\n";
  out << "train.granularity_mode = " << mode_name(cfg.train.granularity_mode) << "\n";
  out << "train.early_stop_patience = " << cfg.train.early_stop_patience << "\n";
  out << "train.anchor_stride = " << cfg.train.anchor_stride << "\n";
  out << "train.train_frac = " << format_double(cfg.train.train_frac) << "\n";
  out << "train.val_frac = " << format_double(cfg.train.val_frac) << "\n";
  if (!cfg.data_path.empty()) out << "paths.data = " << cfg.data_path << "\n";
  if (!cfg.checkpoint_path.empty()) out << "paths.checkpoint = " << cfg.checkpoint_path << "\n";
  if (!cfg.out_dir.empty()) out << "paths.out_dir = " << cfg.out_dir << "\n";
  return out.str();
}

std::string serialize_model_descriptor(const ModelConfig& cfg, GranularityMode mode) {
  std::ostringstream out;
  serialize_model_keys(out, cfg.height, cfg.width, cfg.codec, cfg.fusion);
  out << "train.granularity_mode = " << mode_name(mode) << "\n";
  return out.str();
}

std::pair<ModelConfig, GranularityMode> parse_model_descriptor(const std::string& text) {
  ModelConfig cfg;
  GranularityMode mode = GranularityMode::multi;
  for (const KvLine& kv : split_kv(text)) {
    if (apply_model_key(kv, cfg.height, cfg.width, cfg.codec, cfg.fusion)) continue;
    if (kv.key == "train.granularity_mode") mode = mode_from_name(kv.value);
    else
      throw ConfigError("line " + std::to_string(kv.line) + ": unknown key '" + kv.key +
                        "' in model descriptor");
  }
  return {cfg, mode};
}

}  // namespace sifm
