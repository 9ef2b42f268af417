#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "cipherpatch/blockcodec.hpp"
#include "cipherpatch/image.hpp"
#include "cipherpatch/permutation.hpp"
#include "cipherpatch/vit.hpp"

namespace cipherpatch::adapt {

// A model rewritten to operate directly on encrypted inputs, together with
// the keys that produced it. Re-running the adaptation with the same keys
// yields bit-identical weights.
struct AdaptedModel {
  vit::ParamsF params;
  EncryptionKeys provenance;
};

// Position-embedding rows follow the block scramble; row 0 (the class-token
// position) is pinned. Identity key leaves the matrix unchanged.
Matf adapt_pos_embedding(const Matf& pos_embed, const Permutation& block_perm);
Matf adapt_pos_embedding(const Matf& pos_embed, std::optional<std::uint64_t> k1);

// Patch-embedding rows follow the in-block pixel shuffle, so the shuffled
// flattened patch times the adapted matrix reproduces the plain product.
Matf adapt_patch_embedding(const Matf& patch_embed, const Permutation& pixel_perm);
Matf adapt_patch_embedding(const Matf& patch_embed, std::optional<std::uint64_t> k2);

// Copies the model and substitutes the two embedding matrices; every other
// weight is untouched. keys.block must match cfg.patch.
AdaptedModel adapt_model(const vit::ParamsF& params, const EncryptionKeys& keys,
                         const vit::ViTConfig& cfg);

struct EquivalenceRow {
  int image;
  float max_abs_diff;
  bool pass;
};

struct EquivalenceReport {
  std::vector<EquivalenceRow> rows;
  float tolerance = 0.0f;
  float max_abs_diff = 0.0f;  // aggregate over all images
  bool all_pass = false;
};

// For each image, runs the source model on the plain image and the adapted
// model on the image encrypted with `keys`, and compares logits. Evaluates
// images in parallel (bounded by CIPHERPATCH_THREADS); each image writes its
// own report row, so results do not depend on the thread count.
EquivalenceReport verify_equivalence(const vit::ParamsF& source,
                                     const AdaptedModel& adapted,
                                     const std::vector<ImageTensor>& images,
                                     const EncryptionKeys& keys,
                                     const vit::ViTConfig& cfg, float tol);

// CSV schema: image,max_abs_diff,pass (pass as 1/0).
void write_equivalence_csv(std::ostream& out, const EquivalenceReport& report);

// Adapted weights on disk are an ordinary weight file plus a "<path>.prov"
// JSON sidecar recording k1, k2 and the block size as decimal strings
// ("identity" for an absent key).
void save_adapted(const std::string& path, const AdaptedModel& model,
                  const vit::ViTConfig& cfg);
std::pair<AdaptedModel, vit::ViTConfig> load_adapted(const std::string& path);

}  // namespace cipherpatch::adapt
