#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cipherpatch/image.hpp"
#include "cipherpatch/permutation.hpp"

namespace cipherpatch {

// One p*p image block, stored pixel-major, channel-minor: the value of
// in-block pixel q (raster order) and channel ch sits at q*channels + ch.
// This layout is the frozen flattening order shared with the ViT patch
// extractor, so a flattened block and a flattened patch are interchangeable.
struct Block {
  int pixels = 0;    // p*p
  int channels = 0;  // c
  std::vector<float> values;

  float at(int pix, int ch) const {
    return values[static_cast<std::size_t>(pix * channels + ch)];
  }
  float& at(int pix, int ch) {
    return values[static_cast<std::size_t>(pix * channels + ch)];
  }
  bool operator==(const Block& o) const = default;
};

// Non-overlapping p*p blocks of an image in raster-scan order.
struct BlockGrid {
  int block_size = 0;  // p
  int channels = 0;
  int grid_h = 0;  // blocks per column
  int grid_w = 0;  // blocks per row
  std::vector<Block> blocks;

  int n_blocks() const { return grid_h * grid_w; }
};

// Secret keys for one encrypted domain: k1 permutes blocks, k2 permutes the
// flattened values inside every block. An absent key is the identity
// sentinel, giving the block-only / pixel-only modes. k1 == k2 is permitted.
struct EncryptionKeys {
  std::optional<std::uint64_t> k1;
  std::optional<std::uint64_t> k2;
  std::uint32_t block = 0;  // p, in pixels

  static EncryptionKeys both(std::uint64_t k1, std::uint64_t k2, std::uint32_t p) {
    return {k1, k2, p};
  }
  static EncryptionKeys block_only(std::uint64_t k1, std::uint32_t p) {
    return {k1, std::nullopt, p};
  }
  static EncryptionKeys pixel_only(std::uint64_t k2, std::uint32_t p) {
    return {std::nullopt, k2, p};
  }
  static EncryptionKeys identity(std::uint32_t p) {
    return {std::nullopt, std::nullopt, p};
  }

  Permutation block_perm(std::size_t n_blocks) const;
  Permutation pixel_perm(std::size_t flat_len) const;
};

// Splits into raster-ordered blocks. Throws BlockSizeError unless p divides
// both h and w. concatenate_blocks is the exact inverse.
BlockGrid split_blocks(const ImageTensor& x, int p);
ImageTensor concatenate_blocks(const BlockGrid& g);

// Reorders whole blocks: output block i = input block perm[i]. The keyed
// overload derives the permutation from k1 over n_blocks slots.
BlockGrid scramble_blocks(const BlockGrid& g, const Permutation& perm);
BlockGrid scramble_blocks(const BlockGrid& g, std::uint64_t k1);

// Flattened view of a block in the frozen order above; length L = p*p*c.
std::vector<float> flatten_block(const Block& b);
Block unflatten_block(std::span<const float> flat, int pixels, int channels);

// Reorders a flattened block: output[i] = input[perm[i]]. The keyed overload
// derives the permutation from k2 over L slots; every block of an image
// shares the same pixel permutation.
std::vector<float> shuffle_pixels(std::span<const float> flat, const Permutation& perm);
std::vector<float> shuffle_pixels(std::span<const float> flat, std::uint64_t k2);

// Full pipeline: split -> scramble blocks (k1) -> flatten -> shuffle pixels
// (k2) -> concatenate. Shape and the global pixel-value multiset are
// preserved; decrypt_image inverts it bit-exactly under the same keys.
ImageTensor encrypt_image(const ImageTensor& x, const EncryptionKeys& keys);
ImageTensor decrypt_image(const ImageTensor& x, const EncryptionKeys& keys);

}  // namespace cipherpatch
