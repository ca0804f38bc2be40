#include "apo/configfile.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "apo/digest.hpp"

namespace apo::configfile {

namespace {

constexpr int kSchemaVersion = 1;

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const int64_t x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const uint64_t x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  }
}

void set_key(TrainConfig& c, const std::string& key, const std::string& value) {
  try {
    if (key == "group_size") c.group_size = static_cast<int>(parse_int(key, value));
    else if (key == "lambda") c.lambda = parse_double(key, value);
    else if (key == "beta") c.beta = parse_double(key, value);
    else if (key == "mu") c.mu = parse_double(key, value);
    else if (key == "clip_epsilon") c.clip_epsilon = parse_double(key, value);
    else if (key == "learning_rate") c.learning_rate = parse_double(key, value);
    else if (key == "lr_multiplier") c.lr_multiplier = parse_double(key, value);
    else if (key == "fd_variant") c.fd_variant = projection_variant_from_string(value);
    else if (key == "enable_dads") c.enable_dads = parse_bool(key, value);
    else if (key == "enable_stcr") c.enable_stcr = parse_bool(key, value);
    else if (key == "enable_kl") c.enable_kl = parse_bool(key, value);
    else if (key == "seed") c.seed = parse_u64(key, value);
    else if (key == "epsilon_std") c.epsilon_std = parse_double(key, value);
    else if (key == "batch_size") c.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "updates_per_rollout") c.updates_per_rollout = static_cast<int>(parse_int(key, value));
    else if (key == "lmean_scope") c.lmean_scope = lmean_scope_from_string(value);
    else if (key == "max_length") c.max_length = static_cast<int>(parse_int(key, value));
    else if (key == "optimizer") c.optimizer = optimizer_kind_from_string(value);
    else if (key == "embed_dim") c.embed_dim = static_cast<int>(parse_int(key, value));
    else if (key == "warmstart_demos") c.warmstart_demos = static_cast<int>(parse_int(key, value));
    else if (key == "warmstart_epochs") c.warmstart_epochs = static_cast<int>(parse_int(key, value));
    else if (key == "warmstart_lr") c.warmstart_lr = parse_double(key, value);
    else throw ConfigError("unknown config key: " + key);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

const std::vector<std::string>& key_order() {
  static const std::vector<std::string> keys = {
      "group_size", "lambda", "beta", "mu", "clip_epsilon", "learning_rate",
      "lr_multiplier", "fd_variant", "enable_dads", "enable_stcr", "enable_kl",
      "seed", "epsilon_std", "batch_size", "updates_per_rollout",
      "lmean_scope", "max_length", "optimizer", "embed_dim",
      "warmstart_demos", "warmstart_epochs", "warmstart_lr"};
  return keys;
}

std::string get_key(const TrainConfig& c, const std::string& key) {
  if (key == "group_size") return std::to_string(c.group_size);
  if (key == "lambda") return format_double(c.lambda);
  if (key == "beta") return format_double(c.beta);
  if (key == "mu") return format_double(c.mu);
  if (key == "clip_epsilon") return format_double(c.clip_epsilon);
  if (key == "learning_rate") return format_double(c.learning_rate);
  if (key == "lr_multiplier") return format_double(c.lr_multiplier);
  if (key == "fd_variant") return to_string(c.fd_variant);
  if (key == "enable_dads") return c.enable_dads ? "true" : "false";
  if (key == "enable_stcr") return c.enable_stcr ? "true" : "false";
  if (key == "enable_kl") return c.enable_kl ? "true" : "false";
  if (key == "seed") return std::to_string(c.seed);
  if (key == "epsilon_std") return format_double(c.epsilon_std);
  if (key == "batch_size") return std::to_string(c.batch_size);
  if (key == "updates_per_rollout") return std::to_string(c.updates_per_rollout);
  if (key == "lmean_scope") return to_string(c.lmean_scope);
  if (key == "max_length") return std::to_string(c.max_length);
  if (key == "optimizer") return to_string(c.optimizer);
  if (key == "embed_dim") return std::to_string(c.embed_dim);
  if (key == "warmstart_demos") return std::to_string(c.warmstart_demos);
  if (key == "warmstart_epochs") return std::to_string(c.warmstart_epochs);
  if (key == "warmstart_lr") return format_double(c.warmstart_lr);
  throw ConfigError("unknown config key: " + key);
}

}  // namespace

TrainConfig parse_text(const std::string& text) {
  TrainConfig config;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool saw_schema = false;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": empty key or value");
    }
    if (key == "schema_version") {
      if (parse_int(key, value) != kSchemaVersion) {
        throw ConfigError("unsupported schema_version " + value);
      }
      saw_schema = true;
      continue;
    }
    set_key(config, key, value);
  }
  if (!saw_schema) {
    throw ConfigError("missing schema_version");
  }
  config.validate();
  return config;
}

TrainConfig parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file: " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_text(buffer.str());
}

void apply_env_overrides(TrainConfig& config) {
  for (const std::string& key : key_order()) {
    std::string env_name = "APO_";
    for (char c : key) {
      env_name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    if (const char* value = std::getenv(env_name.c_str())) {
      set_key(config, key, value);
    }
  }
  config.validate();
}

std::string canonical_text(const TrainConfig& config) {
  std::string out = "schema_version=" + std::to_string(kSchemaVersion) + "\n";
  for (const std::string& key : key_order()) {
    out += key;
    out += '=';
    out += get_key(config, key);
    out += '\n';
  }
  return out;
}

std::string config_hash(const TrainConfig& config) {
  return digest::sha1_hex(canonical_text(config));
}

void write_file(const std::filesystem::path& path, const TrainConfig& config) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot write config file: " + path.string());
  }
  out << "# APO run configuration (schema v" << kSchemaVersion << ")\n";
  out << "# group_size: responses sampled per question\n";
  out << "# lambda: format-reward weight in r = accuracy + lambda*format\n";
  out << "# beta: base KL penalty weight\n";
  out << "# mu: STCR length-penalty base, strictly > 1\n";
  out << "# learning_rate is scaled by lr_multiplier for desk-scale runs\n";
  out << "# max_length: decode cap in tokens\n";
  out << "schema_version = " << kSchemaVersion << "\n";
  for (const std::string& key : key_order()) {
    out << key << " = " << get_key(config, key) << "\n";
  }
  if (!out) {
    throw ConfigError("config write failed: " + path.string());
  }
}

}  // namespace apo::configfile
