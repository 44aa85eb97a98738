#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "texlab/common.hpp"
#include "texlab/inversion.hpp"
#include "texlab/models.hpp"
#include "texlab/training.hpp"

namespace texlab {

inline constexpr const char* kVersion = "0.1.0";

enum class KeyType { Int, Float, Bool, String };

struct KeySpec {
  const char* name;
  KeyType type;
  const char* default_value;
};

// Every configurable knob, with defaults sized so the full corpus -> GAN ->
// encoder -> eval pipeline runs on a single CPU core in well under an hour.
inline const std::vector<KeySpec>& config_registry() {
  static const std::vector<KeySpec> keys = {
      {"run.seed", KeyType::Int, "0"},
      {"run.output_dir", KeyType::String, "runs/out"},
      {"run.deterministic", KeyType::Bool, "false"},

      {"corpus.crop_size", KeyType::Int, "32"},
      {"corpus.crops_per_family", KeyType::Int, "40"},
      {"corpus.ingest_dir", KeyType::String, ""},

      {"model.seed", KeyType::Int, "7"},
      {"model.latent_dim", KeyType::Int, "32"},
      {"model.image_size", KeyType::Int, "32"},
      {"model.gen_base_channels", KeyType::Int, "64"},
      {"model.gen_channels", KeyType::String, "64,32,16"},
      {"model.enc_channels", KeyType::String, "16,32,64,64,64"},
      {"model.enc_fc", KeyType::Int, "128"},
      {"model.disc_channels", KeyType::String, "16,32,64,64"},
      {"model.disc_fc", KeyType::Int, "64"},
      {"model.phi_channels", KeyType::String, "16,32,64,64"},
      {"model.phi_weights_file", KeyType::String, ""},
      {"model.identity_mapping", KeyType::Bool, "false"},

      {"gan.steps", KeyType::Int, "3000"},
      {"gan.batch_size", KeyType::Int, "16"},
      {"gan.lr_g", KeyType::Float, "0.002"},
      {"gan.lr_d", KeyType::Float, "0.002"},
      {"gan.r1_weight", KeyType::Float, "1.0"},
      {"gan.loss_form", KeyType::String, "nonsaturating_logistic"},
      {"gan.seed", KeyType::Int, "1"},
      {"gan.checkpoint_every", KeyType::Int, "500"},

      {"enc.steps", KeyType::Int, "10000"},
      {"enc.batch_size", KeyType::Int, "32"},
      {"enc.lr", KeyType::Float, "0.0001"},
      {"enc.lr_decay_factor", KeyType::Float, "0.2"},
      {"enc.lr_decay_every", KeyType::Int, "4000"},
      {"enc.seed", KeyType::Int, "2"},

      {"invert.init_mode", KeyType::String, "encoder"},
      {"invert.loss_mode", KeyType::String, "style_gram"},
      {"invert.max_iters", KeyType::Int, "500"},
      {"invert.lr", KeyType::Float, "0.01"},
      {"invert.tol", KeyType::Float, "1e-05"},
      {"invert.seed", KeyType::Int, "3"},
      {"invert.restarts", KeyType::Int, "0"},
      {"invert.plain_sgd", KeyType::Bool, "false"},
      {"invert.content_layer", KeyType::Int, "1"},

      {"lab.steps", KeyType::Int, "8"},
      {"lab.sigma", KeyType::Float, "0.1"},
      {"lab.crops_n", KeyType::Int, "4"},
      {"lab.mean_w_samples", KeyType::Int, "10000"},
      {"lab.refine_iters", KeyType::Int, "200"},
      {"lab.pixel_iters", KeyType::Int, "400"},
      {"lab.transform_kind", KeyType::String, "scale"},
      {"lab.scale_factor", KeyType::Float, "1.5"},
      {"lab.color_offset", KeyType::String, "0.2,0.1,-0.1"},
      {"lab.seed", KeyType::Int, "5"},

      {"metrics.n_latent_samples", KeyType::Int, "1000"},
      {"metrics.retrieval_k", KeyType::Int, "3"},

      {"eval.n_crops", KeyType::Int, "20"},
      {"eval.n_gen", KeyType::Int, "50"},
      {"eval.seed", KeyType::Int, "4"},
  };
  return keys;
}

inline const KeySpec* find_key(const std::string& name) {
  for (const auto& k : config_registry())
    if (name == k.name) return &k;
  return nullptr;
}

namespace detail {

inline std::string canonical_int(const std::string& key, const std::string& raw) {
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(raw.c_str(), &end, 10);
  require(end && *end == '\0' && !raw.empty() && errno == 0, ErrorCode::TypeError,
          "key " + key + " expects an integer, got '" + raw + "'");
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%lld", v);
  return buf;
}

inline std::string canonical_float(const std::string& key, const std::string& raw) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(raw.c_str(), &end);
  require(end && *end == '\0' && !raw.empty() && errno == 0 && std::isfinite(v),
          ErrorCode::TypeError, "key " + key + " expects a finite number, got '" + raw + "'");
  // shortest representation that parses back to the same double
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string canonical_bool(const std::string& key, const std::string& raw) {
  if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return "true";
  if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return "false";
  fail(ErrorCode::TypeError, "key " + key + " expects a boolean, got '" + raw + "'");
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace detail

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_registry()) set(k.name, k.default_value);
  }

  void set(const std::string& key, const std::string& raw) {
    const KeySpec* spec = find_key(key);
    require(spec != nullptr, ErrorCode::UnknownKey, "unknown config key: " + key);
    switch (spec->type) {
      case KeyType::Int: values_[key] = detail::canonical_int(key, detail::trim(raw)); break;
      case KeyType::Float: values_[key] = detail::canonical_float(key, detail::trim(raw)); break;
      case KeyType::Bool: values_[key] = detail::canonical_bool(key, detail::trim(raw)); break;
      case KeyType::String: values_[key] = detail::trim(raw); break;
    }
  }

  long long get_int(const std::string& key) const { return std::stoll(raw(key)); }
  double get_double(const std::string& key) const { return std::stod(raw(key)); }
  bool get_bool(const std::string& key) const { return raw(key) == "true"; }
  const std::string& get_string(const std::string& key) const { return raw(key); }

  const std::string& raw(const std::string& key) const {
    auto it = values_.find(key);
    require(it != values_.end(), ErrorCode::UnknownKey, "unknown config key: " + key);
    return it->second;
  }

  // Stable digest over the normalized key=value pairs (keys are kept sorted
  // by the map ordering).
  std::uint64_t hash() const { return hash_prefix(""); }

  // Digest restricted to keys with the given prefix; the model section hash
  // is what checkpoints are verified against.
  std::uint64_t hash_prefix(const std::string& prefix) const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [k, v] : values_) {
      if (k.rfind(prefix, 0) != 0) continue;
      h = fnv1a(k, h);
      h = fnv1a("=", h);
      h = fnv1a(v, h);
      h = fnv1a("\n", h);
    }
    return h;
  }
  std::uint64_t model_hash() const { return hash_prefix("model."); }

  void save(const std::string& path) const {
    std::ofstream f(path);
    require(f.good(), ErrorCode::IoError, "cannot write " + path);
    for (const auto& [k, v] : values_) f << k << " = " << v << "\n";
  }

  bool operator==(const RunConfig& o) const { return values_ == o.values_; }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// key = value lines, '#' comments, duplicate keys rejected.
inline RunConfig config_load(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorCode::MissingArtifact, "config file not found: " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  std::map<std::string, int> seen;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::ParseError,
            "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    require(++seen[key] == 1, ErrorCode::ParseError,
            "line " + std::to_string(lineno) + ": duplicate key " + key);
    cfg.set(key, val);
  }
  return cfg;
}

// Environment overrides: TEXLAB_CORPUS_CROP_SIZE maps to corpus.crop_size.
inline void apply_env_overrides(RunConfig& cfg, char** envp = nullptr) {
  for (const auto& k : config_registry()) {
    std::string env = "TEXLAB_";
    for (const char* p = k.name; *p; ++p)
      env += *p == '.' ? '_' : static_cast<char>(std::toupper(*p));
    const char* v = std::getenv(env.c_str());
    if (v) cfg.set(k.name, v);
  }
  (void)envp;
}

// ---- typed views over the flat config ----

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = detail::trim(tok);
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

inline std::array<double, 3> parse_double3(const std::string& s) {
  std::array<double, 3> out{0, 0, 0};
  std::stringstream ss(s);
  std::string tok;
  int i = 0;
  while (std::getline(ss, tok, ',') && i < 3) out[i++] = std::stod(detail::trim(tok));
  require(i == 3, ErrorCode::TypeError, "expected three comma-separated numbers, got '" + s + "'");
  return out;
}

inline ModelDims model_dims_from(const RunConfig& cfg) {
  ModelDims d;
  d.latent_dim = static_cast<int>(cfg.get_int("model.latent_dim"));
  d.image_size = static_cast<int>(cfg.get_int("model.image_size"));
  d.gen_base_channels = static_cast<int>(cfg.get_int("model.gen_base_channels"));
  d.gen_channels = parse_int_list(cfg.get_string("model.gen_channels"));
  d.enc_channels = parse_int_list(cfg.get_string("model.enc_channels"));
  d.enc_fc = static_cast<int>(cfg.get_int("model.enc_fc"));
  d.disc_channels = parse_int_list(cfg.get_string("model.disc_channels"));
  d.disc_fc = static_cast<int>(cfg.get_int("model.disc_fc"));
  d.phi_channels = parse_int_list(cfg.get_string("model.phi_channels"));
  d.validate();
  return d;
}

inline GanTrainConfig gan_config_from(const RunConfig& cfg) {
  GanTrainConfig g;
  g.steps = static_cast<int>(cfg.get_int("gan.steps"));
  g.batch_size = static_cast<int>(cfg.get_int("gan.batch_size"));
  g.lr_g = cfg.get_double("gan.lr_g");
  g.lr_d = cfg.get_double("gan.lr_d");
  g.r1_weight = cfg.get_double("gan.r1_weight");
  g.loss_form = gan_loss_form_from_name(cfg.get_string("gan.loss_form"));
  g.seed = derive_seed(cfg.get_int("run.seed"), "gan", cfg.get_int("gan.seed"));
  g.checkpoint_every = static_cast<int>(cfg.get_int("gan.checkpoint_every"));
  g.validate();
  return g;
}

inline EncoderTrainConfig encoder_config_from(const RunConfig& cfg) {
  EncoderTrainConfig e;
  e.steps = static_cast<int>(cfg.get_int("enc.steps"));
  e.batch_size = static_cast<int>(cfg.get_int("enc.batch_size"));
  e.lr = cfg.get_double("enc.lr");
  e.lr_decay_factor = cfg.get_double("enc.lr_decay_factor");
  e.lr_decay_every = static_cast<int>(cfg.get_int("enc.lr_decay_every"));
  e.seed = derive_seed(cfg.get_int("run.seed"), "encoder", cfg.get_int("enc.seed"));
  e.validate();
  return e;
}

inline InversionConfig inversion_config_from(const RunConfig& cfg) {
  InversionConfig v;
  v.init_mode = init_mode_from_name(cfg.get_string("invert.init_mode"));
  v.loss_mode = loss_mode_from_name(cfg.get_string("invert.loss_mode"));
  v.max_iters = static_cast<int>(cfg.get_int("invert.max_iters"));
  v.lr = cfg.get_double("invert.lr");
  v.tol = cfg.get_double("invert.tol");
  v.seed = derive_seed(cfg.get_int("run.seed"), "invert", cfg.get_int("invert.seed"));
  v.restarts = static_cast<int>(cfg.get_int("invert.restarts"));
  v.plain_sgd = cfg.get_bool("invert.plain_sgd");
  v.content_layer = static_cast<int>(cfg.get_int("invert.content_layer"));
  v.validate();
  return v;
}

// ---- run manifest ----

struct RunManifest {
  std::string command;
  std::uint64_t config_hash = 0;
  std::uint64_t model_config_hash = 0;
  std::map<std::string, std::uint64_t> seeds;
  std::string started_at, finished_at;
  std::vector<std::string> artifacts;
  std::string version = kVersion;
};

inline std::string iso8601_now() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Written atomically (temp file + rename) at run end.
inline void write_manifest(const RunManifest& m, const std::string& path) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["model_config_hash"] = m.model_config_hash;
  j["seeds"] = m.seeds;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  j["artifacts"] = m.artifacts;
  j["version"] = m.version;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp);
    require(f.good(), ErrorCode::IoError, "cannot write " + tmp);
    f << j.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace texlab
