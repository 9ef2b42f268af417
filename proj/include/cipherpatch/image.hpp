#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cipherpatch {

// Real-valued image, values in [0,1], row-major (row, column, channel).
struct ImageTensor {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<float> data;  // size h*w*c

  static ImageTensor zeros(int h, int w, int c);

  float at(int y, int x, int ch) const {
    return data[static_cast<std::size_t>((y * w + x) * c + ch)];
  }
  float& at(int y, int x, int ch) {
    return data[static_cast<std::size_t>((y * w + x) * c + ch)];
  }

  bool same_shape(const ImageTensor& o) const {
    return h == o.h && w == o.w && c == o.c;
  }
  bool operator==(const ImageTensor& o) const = default;
};

// Binary PPM (P6, maxval 255). Byte b maps to b/255 on read; on write each
// value is round(v*255) clamped to [0,255]. Three channels only.
ImageTensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageTensor& img);

// Raw tensor file: magic "IMGT", u32 version=1, u32 h, w, c, then h*w*c
// 32-bit little-endian IEEE-754 reals, row-major. Lossless.
ImageTensor read_tensor(const std::string& path);
void write_tensor(const std::string& path, const ImageTensor& img);

// Dispatch on extension: ".ppm" or ".imgt".
ImageTensor load_image(const std::string& path);
void save_image(const std::string& path, const ImageTensor& img);

}  // namespace cipherpatch
