#include "vct/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "vct/rng.hpp"

namespace vct {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string format_value(const std::string& v) { return v; }
std::string format_value(int64_t v) { return std::to_string(v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void assign_value(const std::string& key, const std::string& raw, std::string& out) {
  (void)key;
  out = raw;
}
void assign_value(const std::string& key, const std::string& raw, int64_t& out) {
  size_t pos = 0;
  out = std::stoll(raw, &pos);
  if (pos != raw.size()) throw std::invalid_argument("config: bad integer for " + key);
}
void assign_value(const std::string& key, const std::string& raw, bool& out) {
  if (raw == "true" || raw == "1")
    out = true;
  else if (raw == "false" || raw == "0")
    out = false;
  else
    throw std::invalid_argument("config: bad boolean for " + key + ": " + raw);
}
void assign_value(const std::string& key, const std::string& raw, double& out) {
  size_t pos = 0;
  out = std::stod(raw, &pos);
  if (pos != raw.size()) throw std::invalid_argument("config: bad number for " + key);
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": missing '='");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (!seen.insert(key).second)
      throw std::invalid_argument("config: duplicate key " + key);
    bool matched = false;
    for_each_config_field(cfg, [&](const char* name, auto& field) {
      if (key == name) {
        assign_value(key, val, field);
        matched = true;
      }
    });
    if (!matched) throw std::invalid_argument("config: unknown key " + key);
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string canonical_config(const ExperimentConfig& c) {
  std::map<std::string, std::string> kv;
  for_each_config_field(const_cast<ExperimentConfig&>(c),
                        [&](const char* name, auto& field) { kv[name] = format_value(field); });
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

uint64_t config_hash(const ExperimentConfig& c) { return fnv1a64(canonical_config(c)); }

int64_t token_count(const ExperimentConfig& c) {
  if (c.codec == "patch") {
    int64_t side = c.image_size / c.patch_size;
    return side * side;
  }
  return 16;  // conv codecs always bottleneck at a 4x4 grid
}

void validate_config(const ExperimentConfig& c) {
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  if (c.dataset != "minishapes" && c.dataset != "miniscene")
    fail("unknown dataset " + c.dataset);
  if (c.codec != "patch" && c.codec != "conv-ae" && c.codec != "pretrained-conv-ae")
    fail("unknown codec " + c.codec);
  if (c.image_size < 8 || (c.image_size & (c.image_size - 1)) != 0)
    fail("image_size must be a power of two >= 8");
  if (c.codec == "patch" && c.image_size % c.patch_size != 0)
    fail("image_size not divisible by patch_size");
  if (c.codec != "patch" && c.image_size < 16)
    fail("conv codec needs image_size >= 16");
  if (c.dim <= 0 || c.heads <= 0 || c.dim % c.heads != 0)
    fail("dim must be a positive multiple of heads");
  if (c.concepts < 1) fail("concepts must be >= 1");
  if (c.enc_layers < 1 || c.dec_layers < 1) fail("layer counts must be >= 1");
  if (c.cnn_detokenizer && c.transformer_detokenizer)
    fail("cnn_detokenizer and transformer_detokenizer are mutually exclusive");
  if (c.batch < 2) fail("batch must be >= 2 (token swapping needs a partner)");
  if (c.steps < 0) fail("steps must be >= 0");
  if (c.scene_min_objects < 0 || c.scene_max_objects > 4 ||
      c.scene_min_objects > c.scene_max_objects)
    fail("scene object range must satisfy 0 <= min <= max <= 4");
  if (c.lr <= 0) fail("lr must be positive");
  if (c.dis_weight < 0) fail("dis_weight must be >= 0");
  if (c.init_std <= 0) fail("init_std must be positive");
  if (c.log_every < 1 || c.ckpt_every < 1) fail("log/ckpt cadence must be >= 1");
}

}  // namespace vct
