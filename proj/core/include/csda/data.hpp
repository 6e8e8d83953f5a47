#ifndef CSDA_DATA_HPP
#define CSDA_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "csda/tensor.hpp"

namespace csda {

// Synthetic blade-scene generator parameters. A scene family groups
// images sharing a background palette (held-out-family evaluation).
struct SceneParams {
  int image_size = 64;
  double blade_width_min = 2.5;
  double blade_width_max = 6.0;
  double blade_angle_min = -60.0;  // degrees from vertical
  double blade_angle_max = 60.0;
  double background_texture_scale = 8.0;  // texture cell size, pixels
  double shadow_probability = 0.5;
  double shadow_strength_min = 0.25;
  double shadow_strength_max = 0.5;
  double noise_sigma = 0.01;
  int scene_family_id = 0;
};

// One scene: H x W x 3 image in [0,1], H x W binary mask, and the seed
// that produced it.
struct Sample {
  Tensor image;
  Tensor mask;
  std::uint64_t seed = 0;
};

double blade_fraction(const Tensor& mask);

// Deterministic in (params, seed). The scene is a textured sky/landscape
// gradient plus one elongated light blade; with probability
// shadow_probability one longitudinal half of the blade is darkened
// (intensity inversion against the background). Regenerates internally
// until the blade covers [0.05, 0.7] of the pixels.
Sample generate(const SceneParams& params, std::uint64_t seed);

// Per-image, per-channel min-max into [0,1]. A constant channel maps to
// zeros and sets the warning flag.
Tensor normalize(const Tensor& image, bool* constant_channel_warning = nullptr);

struct AugmentOptions {
  bool enable_flips = true;
  bool enable_crop = true;
  bool force_hflip = false;  // test hook: deterministic flip
  bool force_vflip = false;
};

// Independent 50% horizontal/vertical flips, then a random crop to 87.5%
// of each side resized back (bilinear image, nearest mask). Crops leaving
// the blade fraction outside [0.02, 0.8] are resampled.
Sample augment(const Sample& sample, std::uint64_t seed,
               const AugmentOptions& options = {});

Tensor resize_bilinear(const Tensor& image, int out_h, int out_w);
Tensor resize_nearest(const Tensor& mask, int out_h, int out_w);

// ---- dataset manifest ---------------------------------------------------
// Text file of `seed,family_id,split` lines; '#' header lines carry the
// SceneParams so a manifest fully reproduces its dataset.

struct ManifestEntry {
  std::uint64_t seed = 0;
  int family_id = 0;
  std::string split;  // train | val | test
};

struct DatasetManifest {
  SceneParams params;
  std::vector<ManifestEntry> entries;
};

// Assigns families so test families never appear in train/validation.
DatasetManifest make_manifest(const SceneParams& params, int n_train, int n_val,
                              int n_test, int n_families, std::uint64_t seed);

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

// Regenerates the samples of one split. Parallelized by seed up to the
// CSDA_THREADS cap (single-threaded when unset or 1).
std::vector<Sample> materialize_split(const DatasetManifest& manifest,
                                      const std::string& split);
std::vector<ManifestEntry> split_entries(const DatasetManifest& manifest,
                                         const std::string& split);

}  // namespace csda

#endif  // CSDA_DATA_HPP
