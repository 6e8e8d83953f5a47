#ifndef CSDA_VIZ_HPP
#define CSDA_VIZ_HPP

#include <array>
#include <string>
#include <vector>

#include "csda/data.hpp"
#include "csda/network.hpp"

namespace csda {

// RGB triplet grouping of colorspace channels. Slot value -1 means a
// zero-filled channel; zero-fills appear only in trailing slots of the
// last triplet. d_CS = 1 renders as a single grayscale panel.
struct PanelLayout {
  bool grayscale = false;
  std::vector<std::array<int, 3>> triplets;
};

PanelLayout layout(int d_cs);

// Writes, per sample: input, ground-truth mask (bilevel 0/255), each RGB
// panel, the predicted mask at the given threshold, and one grayscale
// image per colorspace channel. File names are deterministic:
// <sample>_<role>[_k].png.
void export_visualization(const ModelPair& model, const std::vector<Sample>& samples,
                          const std::string& out_dir, double threshold = 0.5);

}  // namespace csda

#endif  // CSDA_VIZ_HPP
