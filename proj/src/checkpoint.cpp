#include "vct/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace vct {

namespace {

// Raw fixed-width records; assumes a little-endian host.
template <typename T>
void put(std::ostream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
void put_str(std::ostream& f, const std::string& s) {
  put<uint64_t>(f, s.size());
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string get_str(std::istream& f) {
  uint64_t n = get<uint64_t>(f);
  if (n > (1ull << 30)) throw std::runtime_error("checkpoint: implausible string length");
  std::string s(n, '\0');
  f.read(s.data(), static_cast<std::streamsize>(n));
  if (!f) throw std::runtime_error("checkpoint: truncated file");
  return s;
}
void put_f32(std::ostream& f, const Tensor<float>& t) {
  f.write(reinterpret_cast<const char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}
void get_f32(std::istream& f, Tensor<float>& t) {
  f.read(reinterpret_cast<char*>(t.data.data()),
         static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!f) throw std::runtime_error("checkpoint: truncated file");
}

constexpr char kMagic[4] = {'V', 'C', 'T', '1'};

CheckpointInfo read_header(std::istream& f) {
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  CheckpointInfo info;
  info.version = get<uint32_t>(f);
  if (info.version != 1) throw std::runtime_error("checkpoint: unsupported version");
  info.config_hash = get<uint64_t>(f);
  info.config_text = get_str(f);
  info.step = get<int64_t>(f);
  info.rng_state = get_str(f);
  return info;
}

}  // namespace

void save_checkpoint(const std::string& path, const ExperimentConfig& cfg,
                     const ParameterStore<float>& store, const Adam<float>& opt, int64_t step) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + tmp);
    f.write(kMagic, 4);
    put<uint32_t>(f, 1);
    put<uint64_t>(f, config_hash(cfg));
    put_str(f, canonical_config(cfg));
    put<int64_t>(f, step);
    put_str(f, "");  // rng: all draws are counter-derived
    put<uint64_t>(f, store.size());
    for (const Parameter<float>& p : store) {
      put_str(f, p.name);
      put<uint64_t>(f, p.value.shape.size());
      for (int64_t d : p.value.shape) put<int64_t>(f, d);
      put_f32(f, p.value);
    }
    put<uint8_t>(f, 1);  // optimizer state present
    put<int64_t>(f, opt.step_count());
    const auto& m = opt.moment1();
    const auto& v = opt.moment2();
    if (m.size() != store.size() || v.size() != store.size())
      throw std::runtime_error("checkpoint: optimizer does not match parameter store");
    for (size_t i = 0; i < store.size(); ++i) {
      put_f32(f, m[i]);
      put_f32(f, v[i]);
    }
    if (!f) throw std::runtime_error("checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointInfo load_checkpoint(const std::string& path, const ExperimentConfig& expect,
                               ParameterStore<float>& store, Adam<float>& opt, bool force) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  CheckpointInfo info = read_header(f);
  if (!force && info.config_hash != config_hash(expect))
    throw std::runtime_error("checkpoint: config hash mismatch (" + hex64(info.config_hash) +
                             " in file, " + hex64(config_hash(expect)) +
                             " expected); pass force to override");
  uint64_t n = get<uint64_t>(f);
  if (n != store.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
  for (size_t i = 0; i < store.size(); ++i) {
    Parameter<float>& p = store.at(i);
    std::string name = get_str(f);
    if (name != p.name)
      throw std::runtime_error("checkpoint: parameter order mismatch at " + name);
    uint64_t nd = get<uint64_t>(f);
    std::vector<int64_t> shape(nd);
    for (auto& d : shape) d = get<int64_t>(f);
    if (shape != p.value.shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    get_f32(f, p.value);
  }
  uint8_t has_opt = get<uint8_t>(f);
  if (has_opt) {
    opt.set_step_count(get<int64_t>(f));
    auto& m = opt.moment1();
    auto& v = opt.moment2();
    if (m.size() != store.size() || v.size() != store.size())
      throw std::runtime_error("checkpoint: optimizer does not match parameter store");
    for (size_t i = 0; i < store.size(); ++i) {
      get_f32(f, m[i]);
      get_f32(f, v[i]);
    }
  }
  return info;
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  return read_header(f);
}

}  // namespace vct
