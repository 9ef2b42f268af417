#include "cipherpatch/image.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "cipherpatch/detail/bytes.hpp"
#include "cipherpatch/errors.hpp"

namespace cipherpatch {

using detail::read_f32_le;
using detail::read_u32_le;
using detail::write_f32_le;
using detail::write_u32_le;

namespace {

// Skips PPM whitespace and '#' comment lines, then reads one unsigned int.
int read_pnm_int(std::istream& in) {
  int ch = in.get();
  while (ch != EOF && (std::isspace(ch) || ch == '#')) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    }
    ch = in.get();
  }
  if (ch == EOF || !std::isdigit(ch)) {
    throw FormatError("malformed PPM header");
  }
  int value = 0;
  while (ch != EOF && std::isdigit(ch)) {
    value = value * 10 + (ch - '0');
    ch = in.get();
  }
  return value;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ImageTensor ImageTensor::zeros(int h, int w, int c) {
  ImageTensor img;
  img.h = h;
  img.w = w;
  img.c = c;
  img.data.assign(static_cast<std::size_t>(h) * w * c, 0.0f);
  return img;
}

ImageTensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '6') {
    throw FormatError(path + ": not a binary PPM (P6)");
  }
  const int w = read_pnm_int(in);
  const int h = read_pnm_int(in);
  const int maxval = read_pnm_int(in);
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw FormatError(path + ": unsupported PPM header");
  }
  // the header int reader consumed the single whitespace after maxval
  const std::size_t n = static_cast<std::size_t>(h) * w * 3;
  std::vector<unsigned char> bytes(n);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (!in) throw FormatError(path + ": truncated pixel data");
  ImageTensor img = ImageTensor::zeros(h, w, 3);
  for (std::size_t i = 0; i < n; ++i) {
    img.data[i] = static_cast<float>(bytes[i]) / 255.0f;
  }
  return img;
}

void write_ppm(const std::string& path, const ImageTensor& img) {
  if (img.c != 3) {
    throw DimensionError("PPM requires 3 channels, image has " +
                         std::to_string(img.c));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> bytes(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const long q = std::lround(static_cast<double>(img.data[i]) * 255.0);
    bytes[i] = static_cast<unsigned char>(std::min(255L, std::max(0L, q)));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

ImageTensor read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::size_t offset = 0;
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "IMGT", 4) != 0) {
    throw FormatError(path + ": bad magic at offset 0");
  }
  offset = 4;
  const std::uint32_t version = read_u32_le(in, offset);
  if (version != 1) {
    throw FormatError(path + ": unsupported version " + std::to_string(version) +
                      " at offset 4");
  }
  const std::uint32_t h = read_u32_le(in, offset);
  const std::uint32_t w = read_u32_le(in, offset);
  const std::uint32_t c = read_u32_le(in, offset);
  if (h == 0 || w == 0 || c == 0) {
    throw FormatError(path + ": zero dimension at offset 8");
  }
  ImageTensor img = ImageTensor::zeros(static_cast<int>(h), static_cast<int>(w),
                                       static_cast<int>(c));
  for (auto& v : img.data) {
    v = read_f32_le(in, offset);
  }
  return img;
}

void write_tensor(const std::string& path, const ImageTensor& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write("IMGT", 4);
  write_u32_le(out, 1);
  write_u32_le(out, static_cast<std::uint32_t>(img.h));
  write_u32_le(out, static_cast<std::uint32_t>(img.w));
  write_u32_le(out, static_cast<std::uint32_t>(img.c));
  for (float v : img.data) {
    write_f32_le(out, v);
  }
  if (!out) throw IoError("write failed: " + path);
}

ImageTensor load_image(const std::string& path) {
  if (ends_with(path, ".ppm")) return read_ppm(path);
  if (ends_with(path, ".imgt")) return read_tensor(path);
  throw FormatError(path + ": unknown image extension (want .ppm or .imgt)");
}

void save_image(const std::string& path, const ImageTensor& img) {
  if (ends_with(path, ".ppm")) {
    write_ppm(path, img);
  } else if (ends_with(path, ".imgt")) {
    write_tensor(path, img);
  } else {
    throw FormatError(path + ": unknown image extension (want .ppm or .imgt)");
  }
}

}  // namespace cipherpatch
