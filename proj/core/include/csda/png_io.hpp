#ifndef CSDA_PNG_IO_HPP
#define CSDA_PNG_IO_HPP

#include <string>

#include "csda/tensor.hpp"

namespace csda {

// 8-bit PNG I/O. Values are scaled [0,1] <-> [0,255] with rounding;
// save-then-load reproduces the quantized values exactly. Non-8-bit or
// unreadable files raise std::runtime_error naming the path.

void save_png_rgb(const std::string& path, const Tensor& image);  // HxWx3
void save_png_gray(const std::string& path, const Tensor& gray);  // HxW

Tensor load_png_rgb(const std::string& path);
Tensor load_png_gray(const std::string& path);

}  // namespace csda

#endif  // CSDA_PNG_IO_HPP
