#include "tokflow/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tokflow/errors.hpp"

namespace tokflow {

namespace {
constexpr double kPi = 3.14159265358979323846;

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }
}  // namespace

SyntheticImage generate_image(size_t class_id, RngStream& rng, const ImageGenConfig& cfg) {
  if (class_id >= cfg.num_classes)
    throw ContractError("generate_image: class id out of range");
  SyntheticImage img;
  img.height = cfg.height;
  img.width = cfg.width;
  img.class_id = class_id;
  img.pixels.resize(cfg.height * cfg.width);

  // Class template: orientation of the grating and blob placement are fixed
  // per class; only the deformation and noise vary between samples.
  double theta = kPi * static_cast<double>(class_id) / static_cast<double>(cfg.num_classes);
  double ct = std::cos(theta), st = std::sin(theta);
  double freq = 2.0 * kPi * 2.5 / static_cast<double>(cfg.width);
  double blob_angle = 2.0 * kPi * static_cast<double>(class_id) /
                      static_cast<double>(cfg.num_classes);
  double bx = 0.5 * cfg.width + 0.25 * cfg.width * std::cos(blob_angle);
  double by = 0.5 * cfg.height + 0.25 * cfg.height * std::sin(blob_angle);
  double blob_r2 = 0.02 * cfg.width * cfg.height;

  // Smooth random deformation: two low-frequency sinusoids per axis.
  double ax1 = cfg.deform * rng.normal(), px1 = 2.0 * kPi * rng.uniform();
  double ay1 = cfg.deform * rng.normal(), py1 = 2.0 * kPi * rng.uniform();
  double ax2 = 0.5 * cfg.deform * rng.normal(), px2 = 2.0 * kPi * rng.uniform();
  double ay2 = 0.5 * cfg.deform * rng.normal(), py2 = 2.0 * kPi * rng.uniform();
  // No mirror augmentation: a horizontal flip maps the 45-degree grating onto
  // the 135-degree one (and swaps the left/right blob placements), which would
  // alias class pairs instead of adding diversity.

  for (size_t y = 0; y < cfg.height; ++y) {
    for (size_t x = 0; x < cfg.width; ++x) {
      double xf = static_cast<double>(x);
      double yf = static_cast<double>(y);
      double dx = ax1 * std::sin(2.0 * kPi * yf / cfg.height + px1) +
                  ax2 * std::sin(4.0 * kPi * yf / cfg.height + px2);
      double dy = ay1 * std::sin(2.0 * kPi * xf / cfg.width + py1) +
                  ay2 * std::sin(4.0 * kPi * xf / cfg.width + py2);
      double u = xf + dx, v = yf + dy;
      double g = 0.5 + 0.3 * std::sin(freq * (u * ct + v * st));
      double r2 = (u - bx) * (u - bx) + (v - by) * (v - by);
      double blob = 0.4 * std::exp(-r2 / (2.0 * blob_r2));
      double n = cfg.noise > 0.0 ? cfg.noise * rng.normal() : 0.0;
      img.pixels[y * cfg.width + x] = clamp01(g + blob + n);
    }
  }
  return img;
}

FeatureGrid frozen_encode(const SyntheticImage& img, uint64_t encoder_seed,
                          const FrozenEncoderConfig& cfg) {
  if (img.height % cfg.patch_size != 0 || img.width % cfg.patch_size != 0)
    throw ConfigError("frozen_encode: image dims not divisible by patch size");
  size_t gh = img.height / cfg.patch_size;
  size_t gw = img.width / cfg.patch_size;
  size_t wpix = cfg.window * cfg.window;

  // Fixed random projection; depends only on the encoder seed.
  RngStream wrng = RngStream(encoder_seed).sub("frozen-projection");
  std::vector<double> proj(wpix * cfg.feature_dim);
  double pscale = 1.0 / std::sqrt(static_cast<double>(wpix));
  for (double& w : proj) w = pscale * wrng.normal();
  std::vector<double> pbias(cfg.feature_dim);
  for (double& b : pbias) b = 0.3 * wrng.normal();

  std::vector<double> raw(gh * gw * cfg.feature_dim, 0.0);
  std::vector<double> window(wpix);
  long off = (static_cast<long>(cfg.window) - static_cast<long>(cfg.patch_size)) / 2;
  for (size_t gy = 0; gy < gh; ++gy) {
    for (size_t gx = 0; gx < gw; ++gx) {
      size_t wi = 0;
      for (size_t vy = 0; vy < cfg.window; ++vy) {
        for (size_t vx = 0; vx < cfg.window; ++vx) {
          long py = static_cast<long>(gy * cfg.patch_size) - off + static_cast<long>(vy);
          long px = static_cast<long>(gx * cfg.patch_size) - off + static_cast<long>(vx);
          py = std::clamp(py, 0L, static_cast<long>(img.height) - 1);
          px = std::clamp(px, 0L, static_cast<long>(img.width) - 1);
          window[wi++] = img.pixels[static_cast<size_t>(py) * img.width +
                                    static_cast<size_t>(px)] - 0.5;
        }
      }
      double* f = raw.data() + (gy * gw + gx) * cfg.feature_dim;
      for (size_t d = 0; d < cfg.feature_dim; ++d) {
        double s = pbias[d];
        for (size_t w = 0; w < wpix; ++w) s += window[w] * proj[w * cfg.feature_dim + d];
        f[d] = std::tanh(2.0 * s);
      }
    }
  }

  // 3x3 binomial blend: center keeps `center_weight`, the remainder is split
  // among available neighbors by binomial weights. Injects the spatial
  // redundancy that the compressor is meant to exploit.
  FeatureGrid out;
  out.grid_h = gh;
  out.grid_w = gw;
  out.feature_dim = cfg.feature_dim;
  out.class_id = img.class_id;
  out.features.assign(gh * gw * cfg.feature_dim, 0.0);
  const int bw[3] = {1, 2, 1};
  for (size_t gy = 0; gy < gh; ++gy) {
    for (size_t gx = 0; gx < gw; ++gx) {
      double* f = out.features.data() + (gy * gw + gx) * cfg.feature_dim;
      double nsum = 0.0;
      for (int oy = -1; oy <= 1; ++oy)
        for (int ox = -1; ox <= 1; ++ox) {
          if (oy == 0 && ox == 0) continue;
          long ny = static_cast<long>(gy) + oy, nx = static_cast<long>(gx) + ox;
          if (ny < 0 || nx < 0 || ny >= static_cast<long>(gh) || nx >= static_cast<long>(gw))
            continue;
          nsum += bw[oy + 1] * bw[ox + 1];
        }
      for (int oy = -1; oy <= 1; ++oy)
        for (int ox = -1; ox <= 1; ++ox) {
          long ny = static_cast<long>(gy) + oy, nx = static_cast<long>(gx) + ox;
          if (ny < 0 || nx < 0 || ny >= static_cast<long>(gh) || nx >= static_cast<long>(gw))
            continue;
          double w = (oy == 0 && ox == 0)
                         ? cfg.center_weight
                         : (1.0 - cfg.center_weight) * bw[oy + 1] * bw[ox + 1] / nsum;
          const double* src =
              raw.data() + (static_cast<size_t>(ny) * gw + static_cast<size_t>(nx)) *
                               cfg.feature_dim;
          for (size_t d = 0; d < cfg.feature_dim; ++d) f[d] += w * src[d];
        }
    }
  }
  return out;
}

Dataset generate_dataset(DatasetManifest manifest, const ImageGenConfig& img_cfg,
                         const FrozenEncoderConfig& enc_cfg) {
  Dataset ds;
  RngStream root(manifest.generator_seed);
  auto make_split = [&](const char* name, size_t count) {
    std::vector<FeatureGrid> grids;
    grids.reserve(count);
    RngStream split = root.sub(name);
    for (size_t i = 0; i < count; ++i) {
      RngStream irng = split.sub(i);
      size_t cls = i % manifest.num_classes;
      SyntheticImage img = generate_image(cls, irng, img_cfg);
      grids.push_back(frozen_encode(img, manifest.encoder_seed, enc_cfg));
    }
    return grids;
  };
  ds.train = make_split("train", manifest.train_count);
  ds.val = make_split("val", manifest.val_count);

  size_t D = enc_cfg.feature_dim;
  std::vector<double> mean(D, 0.0), var(D, 0.0);
  size_t n = 0;
  for (const FeatureGrid& g : ds.train)
    for (size_t p = 0; p < g.patches(); ++p, ++n)
      for (size_t d = 0; d < D; ++d) mean[d] += g.features[p * D + d];
  for (size_t d = 0; d < D; ++d) mean[d] /= static_cast<double>(n);
  for (const FeatureGrid& g : ds.train)
    for (size_t p = 0; p < g.patches(); ++p)
      for (size_t d = 0; d < D; ++d) {
        double c = g.features[p * D + d] - mean[d];
        var[d] += c * c;
      }
  manifest.feature_mean = mean;
  manifest.feature_std.resize(D);
  for (size_t d = 0; d < D; ++d)
    manifest.feature_std[d] = std::max(1e-8, std::sqrt(var[d] / static_cast<double>(n)));
  ds.manifest = manifest;
  return ds;
}

void standardize(std::vector<FeatureGrid>& grids, const DatasetManifest& m) {
  for (FeatureGrid& g : grids) {
    size_t D = g.feature_dim;
    if (m.feature_mean.size() != D) throw DimError("standardize: stats dim mismatch");
    for (size_t p = 0; p < g.patches(); ++p)
      for (size_t d = 0; d < D; ++d)
        g.features[p * D + d] =
            (g.features[p * D + d] - m.feature_mean[d]) / m.feature_std[d];
  }
}

void destandardize_features(std::vector<double>& features, const DatasetManifest& m) {
  size_t D = m.feature_mean.size();
  for (size_t i = 0; i < features.size(); ++i) {
    size_t d = i % D;
    features[i] = features[i] * m.feature_std[d] + m.feature_mean[d];
  }
}

namespace {

void put_u32(std::ofstream& f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<char*>(b), 4);
}

uint32_t get_u32(std::ifstream& f, size_t& offset, const std::string& path) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (f.gcount() != 4)
    throw FormatError(path + ": truncated at byte offset " + std::to_string(offset));
  offset += 4;
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32(std::ofstream& f, double x) {
  float v = static_cast<float>(x);
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                        static_cast<unsigned char>((bits >> 8) & 0xff),
                        static_cast<unsigned char>((bits >> 16) & 0xff),
                        static_cast<unsigned char>((bits >> 24) & 0xff)};
  f.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

void write_fgrd(const std::string& path, const std::vector<FeatureGrid>& grids) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  uint32_t ph = 0, pw = 0, dim = 0;
  if (!grids.empty()) {
    ph = static_cast<uint32_t>(grids[0].grid_h);
    pw = static_cast<uint32_t>(grids[0].grid_w);
    dim = static_cast<uint32_t>(grids[0].feature_dim);
    for (const FeatureGrid& g : grids)
      if (g.grid_h != ph || g.grid_w != pw || g.feature_dim != dim)
        throw DimError("write_fgrd: grids have inconsistent shapes");
  }
  f.write("FGRD", 4);
  put_u32(f, 1);
  put_u32(f, static_cast<uint32_t>(grids.size()));
  put_u32(f, ph);
  put_u32(f, pw);
  put_u32(f, dim);
  for (const FeatureGrid& g : grids) {
    put_u32(f, static_cast<uint32_t>(g.class_id));
    for (double x : g.features) put_f32(f, x);
  }
  if (!f) throw IoError("write failed: " + path);
}

std::vector<FeatureGrid> read_fgrd(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  size_t offset = 0;
  char magic[4];
  f.read(magic, 4);
  if (f.gcount() != 4 || std::memcmp(magic, "FGRD", 4) != 0)
    throw FormatError(path + ": bad magic at byte offset 0");
  offset = 4;
  uint32_t version = get_u32(f, offset, path);
  if (version != 1)
    throw FormatError(path + ": unsupported version " + std::to_string(version) +
                      " at byte offset 4");
  uint32_t count = get_u32(f, offset, path);
  uint32_t ph = get_u32(f, offset, path);
  uint32_t pw = get_u32(f, offset, path);
  uint32_t dim = get_u32(f, offset, path);
  std::vector<FeatureGrid> grids;
  grids.reserve(count);
  size_t per = static_cast<size_t>(ph) * pw * dim;
  for (uint32_t i = 0; i < count; ++i) {
    FeatureGrid g;
    g.grid_h = ph;
    g.grid_w = pw;
    g.feature_dim = dim;
    g.class_id = get_u32(f, offset, path);
    g.features.resize(per);
    std::vector<unsigned char> buf(per * 4);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<size_t>(f.gcount()) != buf.size())
      throw FormatError(path + ": truncated at byte offset " + std::to_string(offset));
    for (size_t j = 0; j < per; ++j) {
      uint32_t bits = static_cast<uint32_t>(buf[4 * j]) |
                      (static_cast<uint32_t>(buf[4 * j + 1]) << 8) |
                      (static_cast<uint32_t>(buf[4 * j + 2]) << 16) |
                      (static_cast<uint32_t>(buf[4 * j + 3]) << 24);
      float v;
      std::memcpy(&v, &bits, 4);
      g.features[j] = v;
    }
    offset += buf.size();
    grids.push_back(std::move(g));
  }
  return grids;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "[dataset]\n";
  f << "num_classes=" << m.num_classes << "\n";
  f << "train_count=" << m.train_count << "\n";
  f << "val_count=" << m.val_count << "\n";
  f << "generator_seed=" << m.generator_seed << "\n";
  f << "encoder_seed=" << m.encoder_seed << "\n";
  f << "[standardization]\n";
  f.precision(17);
  f << "feature_mean=";
  for (size_t i = 0; i < m.feature_mean.size(); ++i)
    f << (i ? "," : "") << m.feature_mean[i];
  f << "\nfeature_std=";
  for (size_t i = 0; i < m.feature_std.size(); ++i)
    f << (i ? "," : "") << m.feature_std[i];
  f << "\n";
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  DatasetManifest m;
  std::string line;
  auto parse_list = [](const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
  };
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '[' || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(path + ": malformed line: " + line);
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "num_classes") m.num_classes = std::stoull(value);
    else if (key == "train_count") m.train_count = std::stoull(value);
    else if (key == "val_count") m.val_count = std::stoull(value);
    else if (key == "generator_seed") m.generator_seed = std::stoull(value);
    else if (key == "encoder_seed") m.encoder_seed = std::stoull(value);
    else if (key == "feature_mean") m.feature_mean = parse_list(value);
    else if (key == "feature_std") m.feature_std = parse_list(value);
    else throw FormatError(path + ": unknown manifest key: " + key);
  }
  return m;
}

}  // namespace tokflow
