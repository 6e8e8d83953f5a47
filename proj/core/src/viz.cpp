#include "csda/viz.hpp"

#include <cstdio>
#include <filesystem>

#include "csda/png_io.hpp"
#include "csda/trainer.hpp"

namespace csda {

PanelLayout layout(int d_cs) {
  if (d_cs < 1)
    throw std::invalid_argument("layout: d_cs must be >= 1, got " + std::to_string(d_cs));
  PanelLayout out;
  if (d_cs == 1) {
    out.grayscale = true;
    out.triplets.push_back({0, -1, -1});
    return out;
  }
  for (int c = 0; c < d_cs; c += 3) {
    std::array<int, 3> triplet{-1, -1, -1};
    for (int k = 0; k < 3 && c + k < d_cs; ++k) triplet[static_cast<std::size_t>(k)] = c + k;
    out.triplets.push_back(triplet);
  }
  return out;
}

void export_visualization(const ModelPair& model, const std::vector<Sample>& samples,
                          const std::string& out_dir, double threshold) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const bool has_colorspace = !model.colorspace_params.empty();
  const PanelLayout panels =
      has_colorspace ? layout(model.colorspace_spec.out_channels) : PanelLayout{};

  for (std::size_t i = 0; i < samples.size(); ++i) {
    char prefix[64];
    std::snprintf(prefix, sizeof(prefix), "%s/sample%03zu", out_dir.c_str(), i);
    const Sample& s = samples[i];
    const int h = s.mask.dims[0], w = s.mask.dims[1];

    save_png_rgb(std::string(prefix) + "_input.png", s.image);
    save_png_gray(std::string(prefix) + "_mask.png", s.mask);

    const Tensor scores = predict(model, s);
    Tensor pred(Shape{h, w}, 0.0);
    for (std::size_t j = 0; j < pred.size(); ++j)
      pred.data[j] = scores.data[j] > threshold ? 1.0 : 0.0;
    save_png_gray(std::string(prefix) + "_pred.png", pred);

    if (!has_colorspace) continue;

    Tensor norm = normalize(s.image);
    Tensor x(Shape{1, h, w, 3}, std::vector<double>(norm.data));
    std::vector<Tensor> params;
    for (const NamedParam& p : model.colorspace_params) params.push_back(p.value);
    const Tensor y = forward_colorspace(model, params, x);
    const int d = y.dims[3];

    for (int c = 0; c < d; ++c) {
      Tensor channel(Shape{h, w}, 0.0);
      for (int py = 0; py < h; ++py)
        for (int px = 0; px < w; ++px)
          channel.data[static_cast<std::size_t>(py) * w + px] =
              y.data[(static_cast<std::size_t>(py) * w + px) * d + c];
      char name[96];
      std::snprintf(name, sizeof(name), "%s_channel_%d.png", prefix, c);
      save_png_gray(name, channel);
    }

    for (std::size_t p = 0; p < panels.triplets.size(); ++p) {
      char name[96];
      std::snprintf(name, sizeof(name), "%s_panel_%zu.png", prefix, p);
      if (panels.grayscale) {
        Tensor gray(Shape{h, w}, 0.0);
        for (std::size_t j = 0; j < gray.size(); ++j) gray.data[j] = y.data[j];
        save_png_gray(name, gray);
        continue;
      }
      Tensor rgb(Shape{h, w, 3}, 0.0);
      const auto& triplet = panels.triplets[p];
      for (int py = 0; py < h; ++py)
        for (int px = 0; px < w; ++px)
          for (int k = 0; k < 3; ++k) {
            const int c = triplet[static_cast<std::size_t>(k)];
            rgb.data[(static_cast<std::size_t>(py) * w + px) * 3 + k] =
                c < 0 ? 0.0 : y.data[(static_cast<std::size_t>(py) * w + px) * d + c];
          }
      save_png_rgb(name, rgb);
    }
  }
}

}  // namespace csda
