#include "pd/networks.hpp"

#include "pd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "json.hpp"

namespace pd {

template <typename T>
Tensor<T>& ParamStore<T>::add(const std::string& name, Shape shape) {
  if (has(name)) throw ConfigError("ParamStore: duplicate parameter " + name);
  Entry e;
  e.name = name;
  e.value = Tensor<T>::zeros(shape);
  e.m.assign(e.value.numel(), T(0));
  e.v.assign(e.value.numel(), T(0));
  entries.push_back(std::move(e));
  return entries.back().value;
}

template <typename T>
Tensor<T>& ParamStore<T>::operator[](const std::string& name) {
  for (Entry& e : entries)
    if (e.name == name) return e.value;
  throw ConfigError("ParamStore: no parameter named " + name);
}

template <typename T>
const Tensor<T>& ParamStore<T>::at(const std::string& name) const {
  for (const Entry& e : entries)
    if (e.name == name) return e.value;
  throw ConfigError("ParamStore: no parameter named " + name);
}

template <typename T>
bool ParamStore<T>::has(const std::string& name) const {
  for (const Entry& e : entries)
    if (e.name == name) return true;
  return false;
}

template <typename T>
std::int64_t ParamStore<T>::scalar_count() const {
  std::int64_t total = 0;
  for (const Entry& e : entries) total += e.value.numel();
  return total;
}

template <typename T>
void ParamStore<T>::watch_all(Tape<T>& tape) {
  for (Entry& e : entries) tape.watch(e.value);
}

template <typename T>
void ParamStore<T>::unwatch_all() {
  for (Entry& e : entries) unwatch(e.value);
}

// --- configs ----------------------------------------------------------------

DepthNetConfig DepthNetConfig::paper() {
  DepthNetConfig c;
  c.encoder_depth = 7;
  c.base_channels = 32;
  c.max_channels = 512;
  c.kernel_sizes = {7, 5, 3, 3, 3, 3, 3};
  return c;
}

DepthNetConfig DepthNetConfig::toy() {
  DepthNetConfig c;
  c.encoder_depth = 4;
  c.base_channels = 16;
  c.max_channels = 64;
  c.kernel_sizes = {3, 3, 3, 3};
  return c;
}

void DepthNetConfig::validate() const {
  if (output_scales != 4)
    throw ConfigError("DepthNetConfig: output_scales is fixed at 4");
  if (encoder_depth < output_scales - 1)
    throw ConfigError("DepthNetConfig: encoder_depth must be >= 3, got " +
                      std::to_string(encoder_depth));
  if (base_channels < 1 || max_channels < base_channels)
    throw ConfigError("DepthNetConfig: need 1 <= base_channels <= max_channels");
  if (!(d_max_fraction > 0.0) || d_max_fraction > 0.5)
    throw ConfigError("DepthNetConfig: d_max_fraction must be in (0, 0.5]");
  if (!kernel_sizes.empty() && int(kernel_sizes.size()) != encoder_depth)
    throw ConfigError("DepthNetConfig: kernel_sizes must list one odd size per stage");
  for (int k : kernel_sizes)
    if (k < 1 || k % 2 == 0)
      throw ConfigError("DepthNetConfig: kernel sizes must be odd, got " +
                        std::to_string(k));
}

int DepthNetConfig::channels_at(int stage) const {
  const std::int64_t c = std::int64_t(base_channels) << (stage - 1);
  return int(std::min<std::int64_t>(c, max_channels));
}

ConfidenceNetConfig ConfidenceNetConfig::paper() {
  ConfidenceNetConfig c;
  c.stages = 5;
  c.base_channels = 32;
  c.max_channels = 256;
  return c;
}

ConfidenceNetConfig ConfidenceNetConfig::toy() {
  ConfidenceNetConfig c;
  c.stages = 3;
  c.base_channels = 8;
  c.max_channels = 32;
  return c;
}

void ConfidenceNetConfig::validate() const {
  if (stages < 1) throw ConfigError("ConfidenceNetConfig: stages must be positive");
  if (base_channels < 1 || max_channels < base_channels)
    throw ConfigError("ConfidenceNetConfig: need 1 <= base_channels <= max_channels");
}

int ConfidenceNetConfig::channels_at(int stage) const {
  const std::int64_t c = std::int64_t(base_channels) << (stage - 1);
  return int(std::min<std::int64_t>(c, max_channels));
}

// --- initialization ----------------------------------------------------------

namespace {

int stage_kernel(const DepthNetConfig& cfg, int stage) {
  return cfg.kernel_sizes.empty() ? 3 : cfg.kernel_sizes[stage - 1];
}

template <typename T>
void he_fill(Tensor<T>& kernel, std::mt19937_64& rng) {
  const Shape s = kernel.shape;
  const double fan_in = double(s.c) * s.h * s.w;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (T& v : *kernel.data) v = T(dist(rng));
}

// conv parameter pair; the kernel is He-filled, the bias stays zero
template <typename T>
void add_conv(ParamStore<T>& p, std::mt19937_64& rng, const std::string& name,
              int out_c, int in_c, int k) {
  he_fill(p.add(name + ".w", Shape{out_c, in_c, k, k}), rng);
  p.add(name + ".b", Shape{1, out_c, 1, 1});
}

// channel width of the decoder feature entering stage j+1 (or a head at j)
int depthnet_feature_channels(const DepthNetConfig& cfg, int j) {
  if (j == 0) return cfg.channels_at(cfg.encoder_depth);       // bottleneck
  if (j == cfg.encoder_depth) return cfg.base_channels;        // full res, no skip
  return 2 * cfg.channels_at(cfg.encoder_depth - j);           // upconv + skip
}

const char* kHeadNames[4] = {"head8", "head4", "head2", "head1"};

// Fresh heads emit sigmoid(-1) ~= 0.27 of d_max instead of 0.5. Starting half
// way up the range strands training: disparities that large push most samples
// into the clamped border where the sampling gradient vanishes, and constant
// maps minimize the smoothness/consistency terms, so nothing pulls the
// predictions back down. Low initial disparities sit inside the matching
// basin. The shift is equivalent to a negative head-bias initialization.
constexpr double kHeadPreSigmoidShift = -1.0;

}  // namespace

template <typename T>
ParamStore<T> init_depthnet(const DepthNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParamStore<T> p;
  const int E = cfg.encoder_depth;
  int in_c = 3;
  for (int i = 1; i <= E; ++i) {
    const int c = cfg.channels_at(i), k = stage_kernel(cfg, i);
    add_conv(p, rng, "enc" + std::to_string(i) + ".a", c, in_c, k);
    add_conv(p, rng, "enc" + std::to_string(i) + ".b", c, c, k);
    in_c = c;
  }
  for (int j = 1; j <= E; ++j) {
    const int out_c = j == E ? cfg.base_channels : cfg.channels_at(E - j);
    add_conv(p, rng, "dec" + std::to_string(j), out_c,
             depthnet_feature_channels(cfg, j - 1), 3);
  }
  for (int s = 0; s < 4; ++s)
    add_conv(p, rng, kHeadNames[s], 2, depthnet_feature_channels(cfg, E - 3 + s), 3);
  return p;
}

template <typename T>
ParamStore<T> init_confidencenet(const ConfidenceNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParamStore<T> p;
  const int S = cfg.stages;
  int in_c = 3;
  for (int i = 1; i <= S; ++i) {
    add_conv(p, rng, "enc" + std::to_string(i), cfg.channels_at(i), in_c, 3);
    in_c = cfg.channels_at(i);
  }
  for (int j = 1; j <= S; ++j) {
    const int out_c = j == S ? cfg.base_channels : cfg.channels_at(S - j);
    add_conv(p, rng, "up" + std::to_string(j), out_c, in_c, 3);
    in_c = out_c;
  }
  add_conv(p, rng, "head", 1, in_c, 3);
  return p;
}

// --- forward passes ----------------------------------------------------------

namespace {

void check_divisible(Shape s, int levels, const char* who) {
  const int div = 1 << levels;
  if (s.h % div != 0 || s.w % div != 0)
    throw ConfigError(std::string(who) + ": input extents " + s.str() +
                      " not divisible by 2^" + std::to_string(levels));
}

}  // namespace

template <typename T>
DisparityPyramid<T> depthnet_forward(const Tensor<T>& I_l, ParamStore<T>& params,
                                     const DepthNetConfig& cfg) {
  cfg.validate();
  const int E = cfg.encoder_depth;
  check_divisible(I_l.shape, E, "depthnet_forward");

  std::vector<Tensor<T>> enc(E + 1);
  enc[0] = I_l;
  for (int i = 1; i <= E; ++i) {
    const std::string base = "enc" + std::to_string(i);
    const int k = stage_kernel(cfg, i), pad = k / 2;
    Tensor<T> x = elu(conv2d(enc[i - 1], params[base + ".a.w"],
                             params[base + ".a.b"], 2, pad));
    enc[i] = elu(conv2d(x, params[base + ".b.w"], params[base + ".b.b"], 1, pad));
  }

  DisparityPyramid<T> pyr;
  auto emit = [&](const Tensor<T>& feature, int s) {
    Tensor<T> raw = conv2d(feature, params[std::string(kHeadNames[s]) + ".w"],
                           params[std::string(kHeadNames[s]) + ".b"], 1, 1);
    const T d_max = T(cfg.d_max_fraction) * T(feature.shape.w);
    Tensor<T> d = scale(sigmoid(add(raw, T(kHeadPreSigmoidShift))), d_max);
    pyr.left[s] = DisparityMap<T>{slice_channels(d, 0, 1), Side::left};
    pyr.right[s] = DisparityMap<T>{slice_channels(d, 1, 1), Side::right};
  };

  Tensor<T> f = enc[E];
  if (E == 3) emit(f, 0);  // the bottleneck itself sits at 1/8 resolution
  for (int j = 1; j <= E; ++j) {
    const std::string base = "dec" + std::to_string(j);
    f = elu(upsample2x_conv(f, params[base + ".w"], params[base + ".b"]));
    if (E - j >= 1) f = concat_channels(f, enc[E - j]);
    const int s = j - (E - 3);
    if (s >= 0) emit(f, s);
  }
  return pyr;
}

template <typename T>
ConfidenceMap<T> confidencenet_forward(const Tensor<T>& I_l, ParamStore<T>& params,
                                       const ConfidenceNetConfig& cfg) {
  cfg.validate();
  check_divisible(I_l.shape, cfg.stages, "confidencenet_forward");
  Tensor<T> f = I_l;
  for (int i = 1; i <= cfg.stages; ++i) {
    const std::string base = "enc" + std::to_string(i);
    f = elu(conv2d(f, params[base + ".w"], params[base + ".b"], 2, 1));
  }
  for (int j = 1; j <= cfg.stages; ++j) {
    const std::string base = "up" + std::to_string(j);
    f = elu(upsample2x_conv(f, params[base + ".w"], params[base + ".b"]));
  }
  return ConfidenceMap<T>{sigmoid(conv2d(f, params["head.w"], params["head.b"], 1, 1))};
}

// --- optimizer ----------------------------------------------------------------

void AdamConfig::validate() const {
  if (!(lr > 0) || !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) ||
      !(eps > 0))
    throw ConfigError("AdamConfig: need lr>0, betas in [0,1), eps>0");
}

template <typename T>
void adam_step(ParamStore<T>& params, const AdamConfig& cfg) {
  cfg.validate();
  for (const auto& e : params.entries)
    if (!e.value.grad)
      throw ConfigError("adam_step: missing gradient for " + e.name);
  params.step += 1;
  const double t = double(params.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& e : params.entries) {
    T* p = e.value.data->data();
    const T* g = e.value.grad->data();
    for (std::int64_t i = 0; i < e.value.numel(); ++i) {
      const double gi = g[i];
      const double m = cfg.beta1 * double(e.m[i]) + (1.0 - cfg.beta1) * gi;
      const double v = cfg.beta2 * double(e.v[i]) + (1.0 - cfg.beta2) * gi * gi;
      e.m[i] = T(m);
      e.v[i] = T(v);
      p[i] -= T(cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps));
    }
  }
}

double scheduled_lr(double base_lr, std::int64_t step, std::int64_t total_steps) {
  if (total_steps < 1) throw ConfigError("scheduled_lr: total_steps must be positive");
  return step * 2 >= total_steps ? base_lr * 0.5 : base_lr;
}

// --- config maps -----------------------------------------------------------------

namespace {

int map_int(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw ConfigError("checkpoint config: missing key " + key);
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw ConfigError("checkpoint config: bad integer for " + key + ": " + it->second);
  }
}

double map_double(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw ConfigError("checkpoint config: missing key " + key);
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ConfigError("checkpoint config: bad number for " + key + ": " + it->second);
  }
}

}  // namespace

std::map<std::string, std::string> to_config_map(const DepthNetConfig& cfg) {
  std::map<std::string, std::string> m;
  m["encoder_depth"] = std::to_string(cfg.encoder_depth);
  m["base_channels"] = std::to_string(cfg.base_channels);
  m["max_channels"] = std::to_string(cfg.max_channels);
  m["d_max_fraction"] = std::to_string(cfg.d_max_fraction);
  std::string ks;
  for (std::size_t i = 0; i < cfg.kernel_sizes.size(); ++i)
    ks += (i ? "," : "") + std::to_string(cfg.kernel_sizes[i]);
  m["kernel_sizes"] = ks;
  return m;
}

DepthNetConfig depthnet_config_from_map(const std::map<std::string, std::string>& m) {
  DepthNetConfig cfg;
  cfg.encoder_depth = map_int(m, "encoder_depth");
  cfg.base_channels = map_int(m, "base_channels");
  cfg.max_channels = map_int(m, "max_channels");
  cfg.d_max_fraction = map_double(m, "d_max_fraction");
  cfg.kernel_sizes.clear();
  const std::string ks = m.count("kernel_sizes") ? m.at("kernel_sizes") : "";
  std::size_t pos = 0;
  while (pos < ks.size()) {
    std::size_t next = ks.find(',', pos);
    if (next == std::string::npos) next = ks.size();
    cfg.kernel_sizes.push_back(std::stoi(ks.substr(pos, next - pos)));
    pos = next + 1;
  }
  cfg.validate();
  return cfg;
}

std::map<std::string, std::string> to_config_map(const ConfidenceNetConfig& cfg) {
  std::map<std::string, std::string> m;
  m["stages"] = std::to_string(cfg.stages);
  m["conf_base_channels"] = std::to_string(cfg.base_channels);
  m["conf_max_channels"] = std::to_string(cfg.max_channels);
  return m;
}

ConfidenceNetConfig confidencenet_config_from_map(
    const std::map<std::string, std::string>& m) {
  ConfidenceNetConfig cfg;
  cfg.stages = map_int(m, "stages");
  cfg.base_channels = map_int(m, "conf_base_channels");
  cfg.max_channels = map_int(m, "conf_max_channels");
  cfg.validate();
  return cfg;
}

// --- checkpoints ---------------------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'P', 'D', 'C', 'K', 'P', 'T', '1', '\n'};

bool host_little_endian() {
  const std::uint16_t probe = 1;
  return *reinterpret_cast<const unsigned char*>(&probe) == 1;
}

void write_f32_le(std::ostream& os, const float* src, std::int64_t count) {
  if (host_little_endian()) {
    os.write(reinterpret_cast<const char*>(src), count * 4);
    return;
  }
  for (std::int64_t i = 0; i < count; ++i) {
    unsigned char b[4];
    std::memcpy(b, &src[i], 4);
    std::swap(b[0], b[3]);
    std::swap(b[1], b[2]);
    os.write(reinterpret_cast<const char*>(b), 4);
  }
}

void read_f32_le(std::istream& is, float* dst, std::int64_t count) {
  is.read(reinterpret_cast<char*>(dst), count * 4);
  if (!host_little_endian())
    for (std::int64_t i = 0; i < count; ++i) {
      unsigned char b[4];
      std::memcpy(b, &dst[i], 4);
      std::swap(b[0], b[3]);
      std::swap(b[1], b[2]);
      std::memcpy(&dst[i], b, 4);
    }
}

template <typename T>
std::vector<float> to_f32(const std::vector<T>& src) {
  return std::vector<float>(src.begin(), src.end());
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const ParamStore<T>& params,
                     const std::map<std::string, std::string>& config) {
  nlohmann::json manifest;
  manifest["step"] = params.step;
  manifest["config"] = config;
  nlohmann::json plist = nlohmann::json::array();
  for (const auto& e : params.entries) {
    const Shape s = e.value.shape;
    plist.push_back({{"name", e.name}, {"shape", {s.n, s.c, s.h, s.w}}});
  }
  manifest["params"] = std::move(plist);
  const std::string text = manifest.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot create " + path);
  f.write(kCkptMagic, sizeof(kCkptMagic));
  const std::uint64_t len = text.size();
  unsigned char lenb[8];
  for (int i = 0; i < 8; ++i) lenb[i] = (len >> (8 * i)) & 0xff;
  f.write(reinterpret_cast<const char*>(lenb), 8);
  f.write(text.data(), std::streamsize(text.size()));
  for (const auto& e : params.entries) {
    const std::vector<float> value = to_f32(*e.value.data);
    write_f32_le(f, value.data(), std::int64_t(value.size()));
    const std::vector<float> m = to_f32(e.m), v = to_f32(e.v);
    write_f32_le(f, m.data(), std::int64_t(m.size()));
    write_f32_le(f, v.data(), std::int64_t(v.size()));
  }
  if (!f) throw IoError("checkpoint write failed: " + path);
}

template <typename T>
std::map<std::string, std::string> load_checkpoint(const std::string& path,
                                                   ParamStore<T>& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw IoError("not a checkpoint file: " + path);
  unsigned char lenb[8];
  f.read(reinterpret_cast<char*>(lenb), 8);
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= std::uint64_t(lenb[i]) << (8 * i);
  std::string text(len, '\0');
  f.read(text.data(), std::streamsize(len));
  if (!f) throw IoError("truncated checkpoint manifest: " + path);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint manifest in " + path + ": " + e.what());
  }

  const bool fresh = params.entries.empty();
  const auto& plist = manifest.at("params");
  if (!fresh && plist.size() != params.entries.size())
    throw ConfigError("checkpoint " + path + " holds " + std::to_string(plist.size()) +
                      " parameters, store expects " +
                      std::to_string(params.entries.size()));
  for (std::size_t i = 0; i < plist.size(); ++i) {
    const std::string name = plist[i].at("name");
    const auto& sh = plist[i].at("shape");
    const Shape shape{sh.at(0).get<int>(), sh.at(1).get<int>(),
                      sh.at(2).get<int>(), sh.at(3).get<int>()};
    if (fresh) {
      params.add(name, shape);
    } else if (params.entries[i].name != name ||
               !(params.entries[i].value.shape == shape)) {
      throw ConfigError("checkpoint parameter " + std::to_string(i) + " is " + name +
                        " " + shape.str() + ", store expects " +
                        params.entries[i].name + " " +
                        params.entries[i].value.shape.str());
    }
  }
  for (auto& e : params.entries) {
    const std::int64_t n = e.value.numel();
    std::vector<float> buf(n);
    read_f32_le(f, buf.data(), n);
    std::copy(buf.begin(), buf.end(), e.value.data->begin());
    read_f32_le(f, buf.data(), n);
    std::copy(buf.begin(), buf.end(), e.m.begin());
    read_f32_le(f, buf.data(), n);
    std::copy(buf.begin(), buf.end(), e.v.begin());
  }
  if (!f) throw IoError("truncated checkpoint data: " + path);
  params.step = manifest.at("step").get<std::int64_t>();

  std::map<std::string, std::string> config;
  for (auto it = manifest.at("config").begin(); it != manifest.at("config").end(); ++it)
    config[it.key()] = it.value();
  return config;
}

#define PD_INSTANTIATE_NETWORKS(T)                                                   \
  template struct ParamStore<T>;                                                     \
  template ParamStore<T> init_depthnet<T>(const DepthNetConfig&, std::uint64_t);     \
  template ParamStore<T> init_confidencenet<T>(const ConfidenceNetConfig&,           \
                                               std::uint64_t);                       \
  template DisparityPyramid<T> depthnet_forward<T>(const Tensor<T>&, ParamStore<T>&, \
                                                   const DepthNetConfig&);           \
  template ConfidenceMap<T> confidencenet_forward<T>(                                \
      const Tensor<T>&, ParamStore<T>&, const ConfidenceNetConfig&);                 \
  template void adam_step<T>(ParamStore<T>&, const AdamConfig&);                     \
  template void save_checkpoint<T>(const std::string&, const ParamStore<T>&,         \
                                   const std::map<std::string, std::string>&);       \
  template std::map<std::string, std::string> load_checkpoint<T>(const std::string&, \
                                                                 ParamStore<T>&);

PD_INSTANTIATE_NETWORKS(float)
PD_INSTANTIATE_NETWORKS(double)

}  // namespace pd
