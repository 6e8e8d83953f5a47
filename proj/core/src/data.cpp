#include "csda/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "csda/rng.hpp"

namespace csda {

namespace {

struct Color {
  double r, g, b;
};

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Smooth value-noise field: coarse uniform grid, bilinear interpolation.
class TextureField {
 public:
  TextureField(int size, double scale, Rng& rng) : scale_(std::max(scale, 1.0)) {
    cells_ = static_cast<int>(std::ceil(size / scale_)) + 2;
    values_.resize(static_cast<std::size_t>(cells_) * cells_);
    for (auto& v : values_) v = rng.uniform(-1.0, 1.0);
  }
  double at(double x, double y) const {
    const double gx = x / scale_, gy = y / scale_;
    const int x0 = static_cast<int>(gx), y0 = static_cast<int>(gy);
    const double fx = gx - x0, fy = gy - y0;
    auto v = [&](int xx, int yy) {
      return values_[static_cast<std::size_t>(std::min(yy, cells_ - 1)) * cells_ +
                     std::min(xx, cells_ - 1)];
    };
    const double top = v(x0, y0) * (1 - fx) + v(x0 + 1, y0) * fx;
    const double bot = v(x0, y0 + 1) * (1 - fx) + v(x0 + 1, y0 + 1) * fx;
    return top * (1 - fy) + bot * fy;
  }

 private:
  double scale_;
  int cells_;
  std::vector<double> values_;
};

// Paints one axis-oriented stripe; when `label` is set the pixels are
// marked blade in the mask. Shading multiplies all channels equally, so
// the stripe's chroma tilt (r vs b) survives shadowing.
struct Stripe {
  double cx, cy, dir_x, dir_y, half_width, half_length;

  bool contains(double x, double y, double* s_perp = nullptr) const {
    const double rx = x - cx, ry = y - cy;
    const double perp = rx * -dir_y + ry * dir_x;
    const double along = rx * dir_x + ry * dir_y;
    if (std::abs(perp) > half_width || std::abs(along) > half_length) return false;
    if (s_perp) *s_perp = perp;
    return true;
  }
};

bool try_generate(const SceneParams& p, std::uint64_t stream_seed, Sample& out) {
  const int s = p.image_size;
  Rng rng(stream_seed);

  // Family palette: background colors shared by every scene of a family.
  // All backgrounds lean blue/green (r <= b on average); the blade's only
  // reliable signature is a small consistent red-over-blue chroma tilt.
  Rng fam(Rng::derive(0xFA1111E5u, static_cast<std::uint64_t>(p.scene_family_id)));
  const Color sky{0.26 + 0.12 * fam.uniform(), 0.33 + 0.12 * fam.uniform(),
                  0.42 + 0.12 * fam.uniform()};
  const double ground_r = 0.15 + 0.11 * fam.uniform();
  const Color ground{ground_r, 0.26 + 0.14 * fam.uniform(),
                     ground_r + 0.05 + 0.10 * fam.uniform()};
  // Blade brightness is a family habit, not a class cue: dim-blade
  // families sit below the distractor streaks, bright ones above, so a
  // brightness threshold learned on the training families does not
  // transfer to held-out ones.
  const double blade_base = 0.50 + 0.42 * fam.uniform();

  Tensor image(Shape{s, s, 3}, 0.0);
  Tensor mask(Shape{s, s}, 0.0);

  TextureField texture(s, p.background_texture_scale, rng);
  TextureField chroma(s, p.background_texture_scale * 1.7, rng);
  for (int y = 0; y < s; ++y) {
    const double t = static_cast<double>(y) / (s - 1);
    for (int x = 0; x < s; ++x) {
      const double n = 0.05 * texture.at(x, y);
      const double c = 0.05 * chroma.at(x, y);  // overlaps the blade tilt
      double* px = &image.data[(static_cast<std::size_t>(y) * s + x) * 3];
      px[0] = std::min(0.60, clamp01(sky.r + (ground.r - sky.r) * t + n + c));
      px[1] = std::min(0.60, clamp01(sky.g + (ground.g - sky.g) * t + n));
      px[2] = std::min(0.60, clamp01(sky.b + (ground.b - sky.b) * t + n - c));
    }
  }

  // Distractors, all background-labeled: bright neutral streaks shaped
  // like blades (brightness and shape alone cannot separate the classes)
  // plus a few bright blobs.
  const int n_streaks = 2 + static_cast<int>(rng.uniform_int(3));
  for (int i = 0; i < n_streaks; ++i) {
    const double a = rng.uniform(0.0, 3.14159265358979323846);
    Stripe streak{rng.uniform(0.0, s), rng.uniform(0.0, s), std::sin(a), std::cos(a),
                  rng.uniform(1.0, 2.5), rng.uniform(0.3 * s, 0.9 * s)};
    const double value = 0.65 + 0.20 * rng.uniform();
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        if (!streak.contains(x, y)) continue;
        double* px = &image.data[(static_cast<std::size_t>(y) * s + x) * 3];
        px[0] = clamp01(value * 0.98);
        px[1] = value;
        px[2] = clamp01(value * 1.02);
      }
  }
  const int n_speckles = 3 + static_cast<int>(rng.uniform_int(5));
  for (int i = 0; i < n_speckles; ++i) {
    const double cx = rng.uniform(0.0, s), cy = rng.uniform(0.0, s);
    const double radius = 1.0 + 1.5 * rng.uniform();
    const double value = 0.75 + 0.15 * rng.uniform();
    const int lo_y = std::max(0, static_cast<int>(cy - radius - 1));
    const int hi_y = std::min(s - 1, static_cast<int>(cy + radius + 1));
    for (int y = lo_y; y <= hi_y; ++y)
      for (int x = std::max(0, static_cast<int>(cx - radius - 1));
           x <= std::min(s - 1, static_cast<int>(cx + radius + 1)); ++x) {
        const double dx = x - cx, dy = y - cy;
        if (dx * dx + dy * dy > radius * radius) continue;
        double* px = &image.data[(static_cast<std::size_t>(y) * s + x) * 3];
        px[0] = clamp01(value * 0.99);
        px[1] = value;
        px[2] = clamp01(value * 1.01);
      }
  }

  // One elongated light blade. Its red-over-blue tilt is multiplicative,
  // so the shadowed half keeps the tilt while its intensity drops below
  // the background's (the intensity-inversion failure mode).
  const double angle = rng.uniform(p.blade_angle_min, p.blade_angle_max) *
                       3.14159265358979323846 / 180.0;
  Stripe blade_stripe{s / 2.0 + rng.uniform(-s / 8.0, s / 8.0),
                      s / 2.0 + rng.uniform(-s / 8.0, s / 8.0),
                      std::sin(angle),
                      std::cos(angle),
                      rng.uniform(p.blade_width_min, p.blade_width_max) / 2.0,
                      0.9 * s};
  const double base = clamp01(blade_base + rng.uniform(-0.03, 0.03));
  const double tilt = 0.07;  // blade chroma signature
  const bool shadowed = rng.bernoulli(p.shadow_probability);
  const double shadow_factor =
      rng.uniform(p.shadow_strength_min, p.shadow_strength_max);

  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      double s_perp = 0.0;
      if (!blade_stripe.contains(x, y, &s_perp)) continue;
      mask.data[static_cast<std::size_t>(y) * s + x] = 1.0;
      const double f = shadowed && s_perp > 0.0 ? shadow_factor : 1.0;
      double* px = &image.data[(static_cast<std::size_t>(y) * s + x) * 3];
      px[0] = clamp01(base * f * (1.0 + tilt));
      px[1] = clamp01(base * f);
      px[2] = clamp01(base * f * (1.0 - tilt));
    }

  for (auto& v : image.data) v = clamp01(v + rng.normal(0.0, p.noise_sigma));

  const double fraction = blade_fraction(mask);
  if (fraction < 0.05 || fraction > 0.7) return false;
  out.image = std::move(image);
  out.mask = std::move(mask);
  return true;
}

}  // namespace

double blade_fraction(const Tensor& mask) {
  double s = 0.0;
  for (double v : mask.data) s += v;
  return s / static_cast<double>(mask.size());
}

Sample generate(const SceneParams& params, std::uint64_t seed) {
  Sample sample;
  sample.seed = seed;
  for (std::uint64_t attempt = 0; attempt < 100; ++attempt)
    if (try_generate(params, Rng::derive(seed, attempt), sample)) return sample;
  throw std::runtime_error("generate: blade fraction bounds unsatisfiable for seed " +
                           std::to_string(seed));
}

Tensor normalize(const Tensor& image, bool* constant_channel_warning) {
  if (image.rank() != 3)
    throw std::invalid_argument("normalize: expected HxWxC image, got " +
                                shape_str(image.dims));
  const int c = image.dims[2];
  const std::size_t pixels = image.size() / static_cast<std::size_t>(c);
  Tensor out(image.dims, 0.0);
  if (constant_channel_warning) *constant_channel_warning = false;
  for (int ch = 0; ch < c; ++ch) {
    double lo = 1e300, hi = -1e300;
    for (std::size_t p = 0; p < pixels; ++p) {
      const double v = image.data[p * c + static_cast<std::size_t>(ch)];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi == lo) {
      if (constant_channel_warning) *constant_channel_warning = true;
      continue;  // channel stays all-zeros
    }
    const double inv = 1.0 / (hi - lo);
    for (std::size_t p = 0; p < pixels; ++p)
      out.data[p * c + static_cast<std::size_t>(ch)] =
          (image.data[p * c + static_cast<std::size_t>(ch)] - lo) * inv;
  }
  return out;
}

Tensor resize_bilinear(const Tensor& image, int out_h, int out_w) {
  if (image.rank() != 3)
    throw std::invalid_argument("resize_bilinear: expected HxWxC, got " +
                                shape_str(image.dims));
  const int h = image.dims[0], w = image.dims[1], c = image.dims[2];
  if (h == out_h && w == out_w) return image;
  Tensor out(Shape{out_h, out_w, c}, 0.0);
  const double sy = static_cast<double>(h) / out_h, sx = static_cast<double>(w) / out_w;
  for (int oy = 0; oy < out_h; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    fy = std::max(0.0, std::min(fy, h - 1.0));
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      fx = std::max(0.0, std::min(fx, w - 1.0));
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < c; ++ch) {
        auto at = [&](int yy, int xx) {
          return image.data[(static_cast<std::size_t>(yy) * w + xx) * c + ch];
        };
        const double top = at(y0, x0) * (1 - wx) + at(y0, x1) * wx;
        const double bot = at(y1, x0) * (1 - wx) + at(y1, x1) * wx;
        out.data[(static_cast<std::size_t>(oy) * out_w + ox) * c + ch] =
            top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

Tensor resize_nearest(const Tensor& mask, int out_h, int out_w) {
  if (mask.rank() != 2)
    throw std::invalid_argument("resize_nearest: expected HxW, got " +
                                shape_str(mask.dims));
  const int h = mask.dims[0], w = mask.dims[1];
  if (h == out_h && w == out_w) return mask;
  Tensor out(Shape{out_h, out_w}, 0.0);
  const double sy = static_cast<double>(h) / out_h, sx = static_cast<double>(w) / out_w;
  for (int oy = 0; oy < out_h; ++oy) {
    const int y = std::min(static_cast<int>((oy + 0.5) * sy), h - 1);
    for (int ox = 0; ox < out_w; ++ox) {
      const int x = std::min(static_cast<int>((ox + 0.5) * sx), w - 1);
      out.data[static_cast<std::size_t>(oy) * out_w + ox] =
          mask.data[static_cast<std::size_t>(y) * w + x];
    }
  }
  return out;
}

namespace {

Sample flip(const Sample& in, bool horizontal, bool vertical) {
  const int h = in.mask.dims[0], w = in.mask.dims[1];
  Sample out;
  out.seed = in.seed;
  out.image = Tensor(in.image.dims, 0.0);
  out.mask = Tensor(in.mask.dims, 0.0);
  for (int y = 0; y < h; ++y) {
    const int sy = vertical ? h - 1 - y : y;
    for (int x = 0; x < w; ++x) {
      const int sx = horizontal ? w - 1 - x : x;
      out.mask.data[static_cast<std::size_t>(y) * w + x] =
          in.mask.data[static_cast<std::size_t>(sy) * w + sx];
      for (int c = 0; c < 3; ++c)
        out.image.data[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            in.image.data[(static_cast<std::size_t>(sy) * w + sx) * 3 + c];
    }
  }
  return out;
}

Sample crop_window(const Sample& in, int oy, int ox, int cs) {
  Sample out;
  out.seed = in.seed;
  out.image = Tensor(Shape{cs, cs, 3}, 0.0);
  out.mask = Tensor(Shape{cs, cs}, 0.0);
  const int w = in.mask.dims[1];
  for (int y = 0; y < cs; ++y)
    for (int x = 0; x < cs; ++x) {
      out.mask.data[static_cast<std::size_t>(y) * cs + x] =
          in.mask.data[static_cast<std::size_t>(oy + y) * w + (ox + x)];
      for (int c = 0; c < 3; ++c)
        out.image.data[(static_cast<std::size_t>(y) * cs + x) * 3 + c] =
            in.image.data[(static_cast<std::size_t>(oy + y) * w + (ox + x)) * 3 + c];
    }
  return out;
}

}  // namespace

Sample augment(const Sample& sample, std::uint64_t seed, const AugmentOptions& options) {
  Rng rng(Rng::derive(seed, 0x41u));
  const bool hflip = options.force_hflip || (options.enable_flips && rng.bernoulli(0.5));
  const bool vflip = options.force_vflip || (options.enable_flips && rng.bernoulli(0.5));
  Sample out = (hflip || vflip) ? flip(sample, hflip, vflip) : sample;

  if (!options.enable_crop) return out;

  const int s = out.mask.dims[0];
  const int cs = static_cast<int>(std::lround(0.875 * s));
  const int max_off = s - cs;
  for (int attempt = 0; attempt < 20; ++attempt) {
    const int oy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_off + 1)));
    const int ox = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_off + 1)));
    Sample cropped = crop_window(out, oy, ox, cs);
    const double fraction = blade_fraction(cropped.mask);
    if (fraction < 0.02 || fraction > 0.8) continue;  // resample crop
    cropped.image = resize_bilinear(cropped.image, s, s);
    cropped.mask = resize_nearest(cropped.mask, s, s);
    return cropped;
  }
  return out;  // no admissible crop found; keep the flipped sample
}

DatasetManifest make_manifest(const SceneParams& params, int n_train, int n_val,
                              int n_test, int n_families, std::uint64_t seed) {
  if (n_families < 2)
    throw std::invalid_argument("make_manifest: need at least 2 families");
  DatasetManifest m;
  m.params = params;
  // Hold the last third of the families out for the test split.
  const int n_test_families = std::max(1, n_families / 3);
  const int n_trainval_families = n_families - n_test_families;
  Rng rng(Rng::derive(seed, 0xDA7Au));
  std::uint64_t next_seed = 1;
  auto push = [&](int count, const std::string& split, bool test_families) {
    for (int i = 0; i < count; ++i) {
      ManifestEntry e;
      e.seed = Rng::derive(seed, next_seed++);
      e.family_id = test_families
                        ? n_trainval_families +
                              static_cast<int>(rng.uniform_int(
                                  static_cast<std::uint64_t>(n_test_families)))
                        : static_cast<int>(rng.uniform_int(
                              static_cast<std::uint64_t>(n_trainval_families)));
      e.split = split;
      m.entries.push_back(e);
    }
  };
  push(n_train, "train", false);
  push(n_val, "val", false);
  push(n_test, "test", true);
  return m;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_manifest: cannot open " + path);
  const SceneParams& p = m.params;
  os << "# csda dataset manifest v1\n";
  os << "# image_size=" << p.image_size << "\n";
  os << "# blade_width_min=" << p.blade_width_min << "\n";
  os << "# blade_width_max=" << p.blade_width_max << "\n";
  os << "# blade_angle_min=" << p.blade_angle_min << "\n";
  os << "# blade_angle_max=" << p.blade_angle_max << "\n";
  os << "# background_texture_scale=" << p.background_texture_scale << "\n";
  os << "# shadow_probability=" << p.shadow_probability << "\n";
  os << "# shadow_strength_min=" << p.shadow_strength_min << "\n";
  os << "# shadow_strength_max=" << p.shadow_strength_max << "\n";
  os << "# noise_sigma=" << p.noise_sigma << "\n";
  for (const ManifestEntry& e : m.entries)
    os << e.seed << "," << e.family_id << "," << e.split << "\n";
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_manifest: cannot open " + path);
  DatasetManifest m;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2);
      const double value = std::stod(line.substr(eq + 1));
      SceneParams& p = m.params;
      if (key == "image_size") p.image_size = static_cast<int>(value);
      else if (key == "blade_width_min") p.blade_width_min = value;
      else if (key == "blade_width_max") p.blade_width_max = value;
      else if (key == "blade_angle_min") p.blade_angle_min = value;
      else if (key == "blade_angle_max") p.blade_angle_max = value;
      else if (key == "background_texture_scale") p.background_texture_scale = value;
      else if (key == "shadow_probability") p.shadow_probability = value;
      else if (key == "shadow_strength_min") p.shadow_strength_min = value;
      else if (key == "shadow_strength_max") p.shadow_strength_max = value;
      else if (key == "noise_sigma") p.noise_sigma = value;
      continue;
    }
    std::istringstream ls(line);
    ManifestEntry e;
    char comma;
    if (!(ls >> e.seed >> comma >> e.family_id >> comma) || !std::getline(ls, e.split))
      throw std::runtime_error("read_manifest: bad line: " + line);
    m.entries.push_back(e);
  }
  return m;
}

std::vector<ManifestEntry> split_entries(const DatasetManifest& manifest,
                                         const std::string& split) {
  std::vector<ManifestEntry> out;
  for (const ManifestEntry& e : manifest.entries)
    if (e.split == split) out.push_back(e);
  return out;
}

std::vector<Sample> materialize_split(const DatasetManifest& manifest,
                                      const std::string& split) {
  const std::vector<ManifestEntry> entries = split_entries(manifest, split);
  std::vector<Sample> samples(entries.size());
  int threads = 1;
  if (const char* env = std::getenv("CSDA_THREADS")) threads = std::max(1, std::atoi(env));
  threads = std::min<int>(threads, static_cast<int>(entries.size()) > 0
                                       ? static_cast<int>(entries.size())
                                       : 1);
  auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      SceneParams p = manifest.params;
      p.scene_family_id = entries[i].family_id;
      samples[i] = generate(p, entries[i].seed);
    }
  };
  if (threads <= 1) {
    worker(0, entries.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (entries.size() + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const std::size_t begin = static_cast<std::size_t>(t) * chunk;
      const std::size_t end = std::min(entries.size(), begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(worker, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  return samples;
}

}  // namespace csda
