#include "cipherpatch/vit.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "cipherpatch/detail/bytes.hpp"

namespace cipherpatch::vit {

using detail::read_f32_le;
using detail::read_u16_le;
using detail::read_u32_le;
using detail::write_f32_le;
using detail::write_u16_le;
using detail::write_u32_le;

void ViTConfig::validate() const {
  if (image_h < 1 || image_w < 1 || channels < 1) {
    throw ConfigError("image dimensions must be positive");
  }
  if (patch < 1 || image_h % patch != 0 || image_w % patch != 0) {
    throw ConfigError("patch size " + std::to_string(patch) +
                      " must divide image " + std::to_string(image_h) + "x" +
                      std::to_string(image_w));
  }
  if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) +
                      " must be a positive multiple of heads " +
                      std::to_string(heads));
  }
  if (layers < 0) throw ConfigError("layer count must be non-negative");
  if (mlp_hidden < 1) throw ConfigError("mlp_hidden must be positive");
  if (classes < 1) throw ConfigError("classes must be positive");
}

ParamsF init_params(const ViTConfig& cfg, std::uint64_t seed) {
  ParamsF p = shaped_params<float>(cfg);
  GaussianRng rng(seed);
  const float scale = 0.02f;
  auto is_gaussian = [](const std::string& name) {
    if (name == "patch_embed" || name == "pos_embed") return true;
    if (name == "head.weight") return true;
    // per-layer projection weights: attn.wq/wk/wv/wo and mlp.w_in/w_out
    const auto dot = name.rfind('.');
    if (dot == std::string::npos) return false;
    const std::string leaf = name.substr(dot + 1);
    return leaf.size() >= 1 && leaf[0] == 'w';
  };
  auto ends_with = [](const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() &&
           s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  };
  for (auto& [name, tensor] : tensor_refs(p)) {
    if (ends_with(name, ".gain")) {
      tensor->setOnes();
    } else if (is_gaussian(name)) {
      for (Eigen::Index r = 0; r < tensor->rows(); ++r) {
        for (Eigen::Index c = 0; c < tensor->cols(); ++c) {
          (*tensor)(r, c) = rng.next_scaled(scale);
        }
      }
    }
    // biases and the class token stay zero
  }
  return p;
}

namespace {

constexpr char kWeightsMagic[4] = {'V', 'I', 'T', 'W'};

void write_one_tensor(std::ostream& out, const std::string& name,
                      const Matf& tensor) {
  if (name.size() > 0xFFFF) throw IoError("tensor name too long: " + name);
  write_u16_le(out, static_cast<std::uint16_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  const bool vec = tensor.rows() == 1;
  out.put(vec ? char(1) : char(2));
  if (!vec) write_u32_le(out, static_cast<std::uint32_t>(tensor.rows()));
  write_u32_le(out, static_cast<std::uint32_t>(tensor.cols()));
  for (Eigen::Index r = 0; r < tensor.rows(); ++r) {
    for (Eigen::Index c = 0; c < tensor.cols(); ++c) {
      write_f32_le(out, tensor(r, c));
    }
  }
}

struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

}  // namespace

void save_params(const std::string& path, const ParamsF& params,
                 const ViTConfig& cfg) {
  cfg.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  auto refs = tensor_refs(params);
  out.write(kWeightsMagic, 4);
  write_u32_le(out, 1);  // version
  write_u32_le(out, static_cast<std::uint32_t>(refs.size() + 1));
  Matf config_row(1, 9);
  config_row << float(cfg.image_h), float(cfg.image_w), float(cfg.channels),
      float(cfg.patch), float(cfg.embed_dim), float(cfg.heads),
      float(cfg.layers), float(cfg.mlp_hidden), float(cfg.classes);
  write_one_tensor(out, "config", config_row);
  for (const auto& [name, tensor] : refs) {
    write_one_tensor(out, name, *tensor);
  }
  if (!out) throw IoError("write failed: " + path);
}

std::pair<ParamsF, ViTConfig> load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::size_t offset = 0;
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kWeightsMagic, 4) != 0) {
    throw FormatError(path + ": bad magic at offset 0");
  }
  offset = 4;
  const std::uint32_t version = read_u32_le(in, offset);
  if (version != 1) {
    throw FormatError(path + ": unsupported version " +
                      std::to_string(version) + " at offset 4");
  }
  const std::uint32_t count = read_u32_le(in, offset);
  std::map<std::string, RawTensor> raw;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::size_t header_at = offset;
    const std::uint16_t name_len = read_u16_le(in, offset);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) {
      throw FormatError(path + ": truncated tensor name at offset " +
                        std::to_string(offset));
    }
    offset += name_len;
    const int rank = in.get();
    if (rank == EOF || rank < 1 || rank > 2) {
      throw FormatError(path + ": bad tensor rank at offset " +
                        std::to_string(offset));
    }
    offset += 1;
    RawTensor rt;
    std::size_t total = 1;
    for (int d = 0; d < rank; ++d) {
      const std::uint32_t dim = read_u32_le(in, offset);
      if (dim == 0) {
        throw FormatError(path + ": zero tensor dimension at offset " +
                          std::to_string(offset - 4));
      }
      rt.dims.push_back(dim);
      total *= dim;
    }
    rt.data.resize(total);
    for (auto& v : rt.data) v = read_f32_le(in, offset);
    if (!raw.emplace(name, std::move(rt)).second) {
      throw FormatError(path + ": duplicate tensor \"" + name +
                        "\" at offset " + std::to_string(header_at));
    }
  }

  auto cfg_it = raw.find("config");
  if (cfg_it == raw.end() || cfg_it->second.data.size() != 9) {
    throw FormatError(path + ": missing or malformed config tensor");
  }
  const auto& c = cfg_it->second.data;
  ViTConfig cfg;
  cfg.image_h = static_cast<int>(c[0]);
  cfg.image_w = static_cast<int>(c[1]);
  cfg.channels = static_cast<int>(c[2]);
  cfg.patch = static_cast<int>(c[3]);
  cfg.embed_dim = static_cast<int>(c[4]);
  cfg.heads = static_cast<int>(c[5]);
  cfg.layers = static_cast<int>(c[6]);
  cfg.mlp_hidden = static_cast<int>(c[7]);
  cfg.classes = static_cast<int>(c[8]);
  cfg.validate();

  ParamsF params = shaped_params<float>(cfg);
  std::size_t used = 1;  // the config tensor
  for (auto& [name, tensor] : tensor_refs(params)) {
    auto it = raw.find(name);
    if (it == raw.end()) {
      throw FormatError(path + ": missing tensor \"" + name + "\"");
    }
    const RawTensor& rt = it->second;
    const std::size_t want =
        static_cast<std::size_t>(tensor->rows()) * tensor->cols();
    if (rt.data.size() != want) {
      throw FormatError(path + ": tensor \"" + name + "\" has " +
                        std::to_string(rt.data.size()) + " values, expected " +
                        std::to_string(want));
    }
    std::memcpy(tensor->data(), rt.data.data(), want * sizeof(float));
    ++used;
  }
  if (used != raw.size()) {
    throw FormatError(path + ": file contains unrecognized tensors");
  }
  return {std::move(params), cfg};
}

Matf extract_patches(const ImageTensor& x, const ViTConfig& cfg) {
  if (x.h != cfg.image_h || x.w != cfg.image_w || x.c != cfg.channels) {
    throw DimensionError("extract_patches: image " + std::to_string(x.h) + "x" +
                         std::to_string(x.w) + "x" + std::to_string(x.c) +
                         " does not match configured " +
                         std::to_string(cfg.image_h) + "x" +
                         std::to_string(cfg.image_w) + "x" +
                         std::to_string(cfg.channels));
  }
  const int p = cfg.patch;
  const int grid_w = cfg.image_w / p;
  Matf patches(cfg.tokens(), cfg.patch_dim());
  for (int by = 0; by < cfg.image_h / p; ++by) {
    for (int bx = 0; bx < grid_w; ++bx) {
      const int row = by * grid_w + bx;
      int col = 0;
      for (int ly = 0; ly < p; ++ly) {
        for (int lx = 0; lx < p; ++lx) {
          for (int ch = 0; ch < cfg.channels; ++ch) {
            patches(row, col++) = x.at(by * p + ly, bx * p + lx, ch);
          }
        }
      }
    }
  }
  return patches;
}

Matf embed(const ImageTensor& x, const ParamsF& p, const ViTConfig& cfg) {
  return embed_tokens(extract_patches(x, cfg), p);
}

Matf forward(const ImageTensor& x, const ParamsF& p, const ViTConfig& cfg) {
  return forward_patches(extract_patches(x, cfg), p, cfg);
}

}  // namespace cipherpatch::vit
