#include "csda/network.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "csda/csdt.hpp"
#include "csda/nn_ops.hpp"
#include "csda/rng.hpp"

namespace csda {

namespace {

struct LayerShape {
  std::string name;
  Shape w;  // empty for bias-only entries (not used)
  Shape b;
};

std::vector<LayerShape> enumerate_layers(const NetworkSpec& spec,
                                         const std::string& prefix) {
  std::vector<LayerShape> layers;
  auto conv = [&](const std::string& n, int k, int cin, int cout) {
    layers.push_back({prefix + n, Shape{k, k, cin, cout}, Shape{cout}});
  };
  if (spec.depth == 0) {
    conv("conv", 3, spec.in_channels, spec.out_channels);
    return layers;
  }
  auto width = [&](int level) { return spec.base_width << level; };
  for (int l = 0; l < spec.depth; ++l) {
    const int cin = l == 0 ? spec.in_channels : width(l - 1);
    conv("enc" + std::to_string(l) + "_conv1", 3, cin, width(l));
    conv("enc" + std::to_string(l) + "_conv2", 3, width(l), width(l));
  }
  conv("bottleneck_conv1", 3, width(spec.depth - 1), width(spec.depth));
  conv("bottleneck_conv2", 3, width(spec.depth), width(spec.depth));
  for (int l = spec.depth - 1; l >= 0; --l) {
    layers.push_back({prefix + "up" + std::to_string(l),
                      Shape{2, 2, width(l + 1), width(l)}, Shape{width(l)}});
    const int cin = spec.skip_connections ? 2 * width(l) : width(l);
    conv("dec" + std::to_string(l) + "_conv1", 3, cin, width(l));
    conv("dec" + std::to_string(l) + "_conv2", 3, width(l), width(l));
  }
  conv("final", 1, spec.base_width, spec.out_channels);
  return layers;
}

}  // namespace

ParamStore build_unet(const NetworkSpec& spec, std::uint64_t seed,
                      const std::string& prefix) {
  Rng rng(seed);
  ParamStore store;
  for (const LayerShape& layer : enumerate_layers(spec, prefix)) {
    Tensor w(layer.w, 0.0);
    const int fan_in = layer.w[0] * layer.w[1] * layer.w[2];
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : w.data) v = rng.normal(0.0, stddev);
    store.push_back({layer.name + "_w", std::move(w)});
    store.push_back({layer.name + "_b", Tensor(layer.b, 0.0)});
  }
  return store;
}

std::size_t unet_param_count(const NetworkSpec& spec) {
  std::size_t n = 0;
  for (const LayerShape& layer : enumerate_layers(spec, "")) {
    n += shape_numel(layer.w);
    n += shape_numel(layer.b);
  }
  return n;
}

Tensor unet_forward(const NetworkSpec& spec, const std::vector<Tensor>& params,
                    const Tensor& x) {
  if (x.rank() != 4)
    throw std::invalid_argument("unet_forward: expected NHWC batch, got " +
                                shape_str(x.dims));
  if (x.dims[3] != spec.in_channels)
    throw std::invalid_argument("unet_forward: channel mismatch, expected " +
                                std::to_string(spec.in_channels) + " got " +
                                std::to_string(x.dims[3]));
  const int div = 1 << spec.depth;
  if (x.dims[1] % div || x.dims[2] % div)
    throw std::invalid_argument("unet_forward: spatial extents of " +
                                shape_str(x.dims) + " not divisible by " +
                                std::to_string(div));

  std::size_t cursor = 0;
  auto next = [&]() -> const Tensor& {
    if (cursor >= params.size())
      throw std::invalid_argument("unet_forward: parameter list too short");
    return params[cursor++];
  };
  auto conv_block = [&](const Tensor& in) {
    const Tensor& w = next();
    const Tensor& b = next();
    return relu(conv2d(in, w, b));
  };

  if (spec.depth == 0) {
    const Tensor& w = next();
    const Tensor& b = next();
    return conv2d(x, w, b);
  }

  std::vector<Tensor> skips;
  Tensor h = x;
  for (int l = 0; l < spec.depth; ++l) {
    h = conv_block(h);
    h = conv_block(h);
    skips.push_back(h);
    h = maxpool2x2(h);
  }
  h = conv_block(h);
  h = conv_block(h);
  for (int l = spec.depth - 1; l >= 0; --l) {
    const Tensor& uw = next();
    const Tensor& ub = next();
    h = relu(conv_transpose2d_x2(h, uw, ub));
    if (spec.skip_connections)
      h = concat_channels(skips[static_cast<std::size_t>(l)], h);
    h = conv_block(h);
    h = conv_block(h);
  }
  const Tensor& fw = next();
  const Tensor& fb = next();
  return conv2d(h, fw, fb);
}

ModelPair build_model_pair(int d_cs, const NetworkSpec& base, std::uint64_t seed,
                           bool seg_enabled, bool seg_on_rgb) {
  ModelPair model;
  model.colorspace_spec = base;
  model.colorspace_spec.in_channels = 3;
  model.colorspace_spec.out_channels = d_cs;
  model.seg_spec = base;
  model.seg_spec.in_channels = seg_on_rgb ? 3 : d_cs;
  model.seg_spec.out_channels = 1;
  model.seg_enabled = seg_enabled;
  if (!seg_on_rgb)
    model.colorspace_params = build_unet(model.colorspace_spec, seed, "cs_");
  if (seg_enabled)
    model.seg_params = build_unet(model.seg_spec, Rng::derive(seed, 1), "seg_");
  return model;
}

Tensor forward_colorspace(const ModelPair& model, const std::vector<Tensor>& params,
                          const Tensor& x) {
  return sigmoid(unet_forward(model.colorspace_spec, params, x));
}

Tensor forward_segmentation(const ModelPair& model, const std::vector<Tensor>& params,
                            const Tensor& y) {
  return sigmoid(unet_forward(model.seg_spec, params, y));
}

void save_params(const std::string& dir, const ParamStore& cs, const ParamStore& seg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream blob(dir + "/params.csdt", std::ios::binary);
  std::ofstream manifest(dir + "/manifest.txt");
  if (!blob || !manifest)
    throw std::runtime_error("save_params: cannot write to " + dir);
  auto dump = [&](const ParamStore& store) {
    for (const NamedParam& p : store) {
      manifest << p.name;
      for (std::size_t i = 0; i < p.value.dims.size(); ++i)
        manifest << (i ? "x" : " ") << p.value.dims[i];
      manifest << " " << blob.tellp() << "\n";
      write_csdt(blob, p.value);
    }
  };
  dump(cs);
  dump(seg);
}

void load_params(const std::string& dir, ParamStore& cs, ParamStore& seg) {
  std::ifstream manifest(dir + "/manifest.txt");
  std::ifstream blob(dir + "/params.csdt", std::ios::binary);
  if (!manifest || !blob)
    throw std::runtime_error("load_params: missing checkpoint files in " + dir);
  std::string name, shape;
  std::streamoff offset;
  auto find = [&](const std::string& n) -> NamedParam* {
    for (auto& p : cs)
      if (p.name == n) return &p;
    for (auto& p : seg)
      if (p.name == n) return &p;
    return nullptr;
  };
  std::size_t loaded = 0;
  while (manifest >> name >> shape >> offset) {
    NamedParam* p = find(name);
    if (!p) throw std::runtime_error("load_params: unexpected parameter " + name);
    blob.seekg(offset);
    Tensor t = read_csdt(blob);
    if (t.dims != p->value.dims)
      throw std::runtime_error("load_params: shape mismatch for " + name + ": " +
                               shape_str(t.dims) + " vs " + shape_str(p->value.dims));
    p->value.data = std::move(t.data);
    ++loaded;
  }
  if (loaded != cs.size() + seg.size())
    throw std::runtime_error("load_params: checkpoint parameter count mismatch");
}

}  // namespace csda
