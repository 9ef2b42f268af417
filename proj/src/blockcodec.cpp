#include "cipherpatch/blockcodec.hpp"

#include <string>

#include "cipherpatch/errors.hpp"

namespace cipherpatch {

Permutation EncryptionKeys::block_perm(std::size_t n_blocks) const {
  return k1 ? gen_permutation(*k1, n_blocks) : Permutation::identity(n_blocks);
}

Permutation EncryptionKeys::pixel_perm(std::size_t flat_len) const {
  return k2 ? gen_permutation(*k2, flat_len) : Permutation::identity(flat_len);
}

BlockGrid split_blocks(const ImageTensor& x, int p) {
  if (p < 1 || x.h % p != 0 || x.w % p != 0) {
    throw BlockSizeError("block size " + std::to_string(p) +
                         " does not divide image " + std::to_string(x.h) + "x" +
                         std::to_string(x.w));
  }
  BlockGrid g;
  g.block_size = p;
  g.channels = x.c;
  g.grid_h = x.h / p;
  g.grid_w = x.w / p;
  g.blocks.reserve(static_cast<std::size_t>(g.n_blocks()));
  for (int by = 0; by < g.grid_h; ++by) {
    for (int bx = 0; bx < g.grid_w; ++bx) {
      Block b;
      b.pixels = p * p;
      b.channels = x.c;
      b.values.resize(static_cast<std::size_t>(p) * p * x.c);
      for (int ly = 0; ly < p; ++ly) {
        for (int lx = 0; lx < p; ++lx) {
          for (int ch = 0; ch < x.c; ++ch) {
            b.at(ly * p + lx, ch) = x.at(by * p + ly, bx * p + lx, ch);
          }
        }
      }
      g.blocks.push_back(std::move(b));
    }
  }
  return g;
}

ImageTensor concatenate_blocks(const BlockGrid& g) {
  const int p = g.block_size;
  ImageTensor x = ImageTensor::zeros(g.grid_h * p, g.grid_w * p, g.channels);
  for (int i = 0; i < g.n_blocks(); ++i) {
    const Block& b = g.blocks[static_cast<std::size_t>(i)];
    const int by = i / g.grid_w;
    const int bx = i % g.grid_w;
    for (int ly = 0; ly < p; ++ly) {
      for (int lx = 0; lx < p; ++lx) {
        for (int ch = 0; ch < g.channels; ++ch) {
          x.at(by * p + ly, bx * p + lx, ch) = b.at(ly * p + lx, ch);
        }
      }
    }
  }
  return x;
}

BlockGrid scramble_blocks(const BlockGrid& g, const Permutation& perm) {
  if (perm.size() != static_cast<std::size_t>(g.n_blocks())) {
    throw DimensionError("scramble_blocks: permutation over " +
                         std::to_string(perm.size()) + " slots, grid has " +
                         std::to_string(g.n_blocks()) + " blocks");
  }
  BlockGrid out = g;
  out.blocks = apply_slots(perm, g.blocks);
  return out;
}

BlockGrid scramble_blocks(const BlockGrid& g, std::uint64_t k1) {
  return scramble_blocks(g, gen_permutation(k1, static_cast<std::size_t>(g.n_blocks())));
}

std::vector<float> flatten_block(const Block& b) {
  return b.values;  // stored in the frozen flattening order
}

Block unflatten_block(std::span<const float> flat, int pixels, int channels) {
  if (flat.size() != static_cast<std::size_t>(pixels) * channels) {
    throw DimensionError("unflatten_block: expected " +
                         std::to_string(pixels * channels) + " values, got " +
                         std::to_string(flat.size()));
  }
  Block b;
  b.pixels = pixels;
  b.channels = channels;
  b.values.assign(flat.begin(), flat.end());
  return b;
}

std::vector<float> shuffle_pixels(std::span<const float> flat, const Permutation& perm) {
  if (flat.size() != perm.size()) {
    throw DimensionError("shuffle_pixels: permutation over " +
                         std::to_string(perm.size()) + " slots, vector has " +
                         std::to_string(flat.size()));
  }
  std::vector<float> out(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    out[i] = flat[perm[i]];
  }
  return out;
}

std::vector<float> shuffle_pixels(std::span<const float> flat, std::uint64_t k2) {
  return shuffle_pixels(flat, gen_permutation(k2, flat.size()));
}

ImageTensor encrypt_image(const ImageTensor& x, const EncryptionKeys& keys) {
  BlockGrid g = split_blocks(x, static_cast<int>(keys.block));
  const Permutation bp = keys.block_perm(static_cast<std::size_t>(g.n_blocks()));
  const Permutation pp = keys.pixel_perm(g.blocks.front().values.size());
  g = scramble_blocks(g, bp);
  for (Block& b : g.blocks) {
    b.values = shuffle_pixels(b.values, pp);
  }
  return concatenate_blocks(g);
}

ImageTensor decrypt_image(const ImageTensor& x, const EncryptionKeys& keys) {
  BlockGrid g = split_blocks(x, static_cast<int>(keys.block));
  const Permutation bp = keys.block_perm(static_cast<std::size_t>(g.n_blocks()));
  const Permutation pp = keys.pixel_perm(g.blocks.front().values.size());
  const Permutation inv_pp = inverse(pp);
  for (Block& b : g.blocks) {
    b.values = shuffle_pixels(b.values, inv_pp);
  }
  g = scramble_blocks(g, inverse(bp));
  return concatenate_blocks(g);
}

}  // namespace cipherpatch
