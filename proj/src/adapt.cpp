#include "cipherpatch/adapt.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include <json.hpp>

#include "cipherpatch/parallel.hpp"

namespace cipherpatch::adapt {

Matf adapt_pos_embedding(const Matf& pos_embed, const Permutation& block_perm) {
  if (static_cast<std::size_t>(pos_embed.rows()) != block_perm.size() + 1) {
    throw DimensionError("adapt_pos_embedding: " + std::to_string(pos_embed.rows()) +
                         " rows vs permutation over " +
                         std::to_string(block_perm.size()) + " blocks");
  }
  return apply_rows(extend_for_class_token(block_perm), pos_embed);
}

Matf adapt_pos_embedding(const Matf& pos_embed, std::optional<std::uint64_t> k1) {
  if (!k1) return pos_embed;
  const std::size_t n = static_cast<std::size_t>(pos_embed.rows()) - 1;
  return adapt_pos_embedding(pos_embed, gen_permutation(*k1, n));
}

Matf adapt_patch_embedding(const Matf& patch_embed, const Permutation& pixel_perm) {
  if (static_cast<std::size_t>(patch_embed.rows()) != pixel_perm.size()) {
    throw DimensionError("adapt_patch_embedding: " +
                         std::to_string(patch_embed.rows()) +
                         " rows vs permutation over " +
                         std::to_string(pixel_perm.size()) + " slots");
  }
  return apply_rows(pixel_perm, patch_embed);
}

Matf adapt_patch_embedding(const Matf& patch_embed, std::optional<std::uint64_t> k2) {
  if (!k2) return patch_embed;
  const std::size_t l = static_cast<std::size_t>(patch_embed.rows());
  return adapt_patch_embedding(patch_embed, gen_permutation(*k2, l));
}

AdaptedModel adapt_model(const vit::ParamsF& params, const EncryptionKeys& keys,
                         const vit::ViTConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(keys.block) != cfg.patch) {
    throw ConfigError("encryption block size " + std::to_string(keys.block) +
                      " must equal the model patch size " +
                      std::to_string(cfg.patch));
  }
  AdaptedModel out{params, keys};
  out.params.pos_embed = adapt_pos_embedding(params.pos_embed, keys.k1);
  out.params.patch_embed = adapt_patch_embedding(params.patch_embed, keys.k2);
  return out;
}

EquivalenceReport verify_equivalence(const vit::ParamsF& source,
                                     const AdaptedModel& adapted,
                                     const std::vector<ImageTensor>& images,
                                     const EncryptionKeys& keys,
                                     const vit::ViTConfig& cfg, float tol) {
  if (!(tol > 0.0f)) {
    throw ConfigError("equivalence tolerance must be positive");
  }
  auto src_refs = vit::tensor_refs(source);
  auto adp_refs = vit::tensor_refs(adapted.params);
  if (src_refs.size() != adp_refs.size()) {
    throw DimensionError("source and adapted models have different layouts");
  }
  for (std::size_t i = 0; i < src_refs.size(); ++i) {
    if (src_refs[i].second->rows() != adp_refs[i].second->rows() ||
        src_refs[i].second->cols() != adp_refs[i].second->cols()) {
      throw DimensionError("shape mismatch in tensor \"" + src_refs[i].first +
                           "\" between source and adapted models");
    }
  }

  EquivalenceReport report;
  report.tolerance = tol;
  report.rows.resize(images.size());
  parallel_for(images.size(), [&](std::size_t i) {
    const Matf plain_logits = vit::forward(images[i], source, cfg);
    const ImageTensor enc = encrypt_image(images[i], keys);
    const Matf enc_logits = vit::forward(enc, adapted.params, cfg);
    const float diff = (plain_logits - enc_logits).cwiseAbs().maxCoeff();
    report.rows[i] = {static_cast<int>(i), diff, diff <= tol};
  });
  report.max_abs_diff = 0.0f;
  report.all_pass = true;
  for (const auto& row : report.rows) {
    report.max_abs_diff = std::max(report.max_abs_diff, row.max_abs_diff);
    report.all_pass = report.all_pass && row.pass;
  }
  return report;
}

void write_equivalence_csv(std::ostream& out, const EquivalenceReport& report) {
  out << "image,max_abs_diff,pass\n";
  for (const auto& row : report.rows) {
    out << row.image << "," << std::setprecision(9) << row.max_abs_diff << ","
        << (row.pass ? 1 : 0) << "\n";
  }
}

namespace {

std::string key_to_string(const std::optional<std::uint64_t>& k) {
  return k ? std::to_string(*k) : "identity";
}

std::optional<std::uint64_t> key_from_string(const std::string& s,
                                             const std::string& path) {
  if (s == "identity") return std::nullopt;
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(path + ": bad key value \"" + s + "\"");
  }
}

}  // namespace

void save_adapted(const std::string& path, const AdaptedModel& model,
                  const vit::ViTConfig& cfg) {
  vit::save_params(path, model.params, cfg);
  nlohmann::json prov;
  prov["k1"] = key_to_string(model.provenance.k1);
  prov["k2"] = key_to_string(model.provenance.k2);
  prov["p"] = std::to_string(model.provenance.block);
  std::ofstream out(path + ".prov");
  if (!out) throw IoError("cannot open " + path + ".prov for writing");
  out << prov.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path + ".prov");
}

std::pair<AdaptedModel, vit::ViTConfig> load_adapted(const std::string& path) {
  auto [params, cfg] = vit::load_params(path);
  const std::string prov_path = path + ".prov";
  std::ifstream in(prov_path);
  if (!in) throw IoError("cannot open " + prov_path);
  nlohmann::json prov;
  try {
    in >> prov;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(prov_path + ": " + e.what());
  }
  if (!prov.contains("k1") || !prov.contains("k2") || !prov.contains("p")) {
    throw FormatError(prov_path + ": missing k1/k2/p");
  }
  EncryptionKeys keys;
  keys.k1 = key_from_string(prov["k1"].get<std::string>(), prov_path);
  keys.k2 = key_from_string(prov["k2"].get<std::string>(), prov_path);
  const std::string p_str = prov["p"].get<std::string>();
  try {
    keys.block = static_cast<std::uint32_t>(std::stoul(p_str));
  } catch (const std::exception&) {
    throw FormatError(prov_path + ": bad block size \"" + p_str + "\"");
  }
  return {AdaptedModel{std::move(params), keys}, cfg};
}

}  // namespace cipherpatch::adapt
