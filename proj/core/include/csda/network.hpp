#ifndef CSDA_NETWORK_HPP
#define CSDA_NETWORK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "csda/tensor.hpp"

namespace csda {

// Compact U-Net topology. depth = number of down/up levels (0 degenerates
// to a single 3x3 conv). Input spatial extents must be divisible by
// 2^depth; output spatial extents equal the input's.
struct NetworkSpec {
  int in_channels = 3;
  int out_channels = 1;
  int depth = 3;
  int base_width = 8;
  bool skip_connections = true;
};

struct NamedParam {
  std::string name;
  Tensor value;
};

using ParamStore = std::vector<NamedParam>;

// Deterministic He-style initialization (fan-in scaled normal weights,
// zero biases) from the seed. Parameter order is fixed and matches what
// unet_forward consumes.
ParamStore build_unet(const NetworkSpec& spec, std::uint64_t seed,
                      const std::string& prefix = "");

// Closed-form parameter count for a spec (layer-shape enumeration).
std::size_t unet_param_count(const NetworkSpec& spec);

// Runs the network on an NHWC batch. `params` are tensors in build order;
// pass tracked leaves to collect gradients. No output nonlinearity.
Tensor unet_forward(const NetworkSpec& spec, const std::vector<Tensor>& params,
                    const Tensor& x);

// Colorspace transformer and segmentation head. The trailing sigmoid of
// the colorspace net is mandatory (the ln-loss positivity depends on it).
struct ModelPair {
  NetworkSpec colorspace_spec;  // in 3, out d_CS
  NetworkSpec seg_spec;         // in d_CS, out 1
  ParamStore colorspace_params;
  ParamStore seg_params;
  bool seg_enabled = true;  // false for the DDA-only ablation
};

ModelPair build_model_pair(int d_cs, const NetworkSpec& base, std::uint64_t seed,
                           bool seg_enabled = true, bool seg_on_rgb = false);

// Y = sigmoid(colorspace net (x)); values in (0,1).
Tensor forward_colorspace(const ModelPair& model, const std::vector<Tensor>& params,
                          const Tensor& x);

// M-hat = sigmoid(seg net (y)); single channel in (0,1).
Tensor forward_segmentation(const ModelPair& model, const std::vector<Tensor>& params,
                            const Tensor& y);

// Checkpoint container: `params.csdt` holds one CSDT record per
// parameter; `manifest.txt` lists name, shape, and byte offset per line.
void save_params(const std::string& dir, const ParamStore& cs, const ParamStore& seg);
void load_params(const std::string& dir, ParamStore& cs, ParamStore& seg);

}  // namespace csda

#endif  // CSDA_NETWORK_HPP
