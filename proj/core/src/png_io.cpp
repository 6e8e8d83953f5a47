#include "csda/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace csda {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

unsigned char quantize(double v) {
  const double s = std::lround(std::min(1.0, std::max(0.0, v)) * 255.0);
  return static_cast<unsigned char>(s);
}

void write_png(const std::string& path, const unsigned char* pixels, int h, int w,
               int channels) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("png: cannot open for write: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                            nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: allocation failure writing " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: write error: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<std::size_t>(y)] =
        const_cast<png_bytep>(pixels + static_cast<std::size_t>(y) * w * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<unsigned char> read_png(const std::string& path, int want_channels, int* h,
                                    int* w) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("png: cannot open for read: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                           nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: allocation failure reading " + path);
  }
  std::vector<unsigned char> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: read error: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: expected 8-bit depth in " + path + ", got " +
                             std::to_string(depth));
  }
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (want_channels == 3) {
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
      png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
  } else {
    if (color != PNG_COLOR_TYPE_GRAY) {
      png_destroy_read_struct(&png, &info, nullptr);
      throw std::runtime_error("png: expected 8-bit grayscale in " + path);
    }
  }
  png_read_update_info(png, info);
  *h = static_cast<int>(png_get_image_height(png, info));
  *w = static_cast<int>(png_get_image_width(png, info));
  pixels.resize(static_cast<std::size_t>(*h) * *w * want_channels);
  std::vector<png_bytep> rows(static_cast<std::size_t>(*h));
  for (int y = 0; y < *h; ++y)
    rows[static_cast<std::size_t>(y)] =
        pixels.data() + static_cast<std::size_t>(y) * *w * want_channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels;
}

}  // namespace

void save_png_rgb(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dims[2] != 3)
    throw std::invalid_argument("save_png_rgb: expected HxWx3, got " +
                                shape_str(image.dims));
  const int h = image.dims[0], w = image.dims[1];
  std::vector<unsigned char> pixels(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) pixels[i] = quantize(image.data[i]);
  write_png(path, pixels.data(), h, w, 3);
}

void save_png_gray(const std::string& path, const Tensor& gray) {
  if (gray.rank() != 2)
    throw std::invalid_argument("save_png_gray: expected HxW, got " +
                                shape_str(gray.dims));
  const int h = gray.dims[0], w = gray.dims[1];
  std::vector<unsigned char> pixels(gray.size());
  for (std::size_t i = 0; i < gray.size(); ++i) pixels[i] = quantize(gray.data[i]);
  write_png(path, pixels.data(), h, w, 1);
}

Tensor load_png_rgb(const std::string& path) {
  int h = 0, w = 0;
  std::vector<unsigned char> pixels = read_png(path, 3, &h, &w);
  Tensor out(Shape{h, w, 3}, 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = pixels[i] / 255.0;
  return out;
}

Tensor load_png_gray(const std::string& path) {
  int h = 0, w = 0;
  std::vector<unsigned char> pixels = read_png(path, 1, &h, &w);
  Tensor out(Shape{h, w}, 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = pixels[i] / 255.0;
  return out;
}

}  // namespace csda
