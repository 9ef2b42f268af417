#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cipherpatch/errors.hpp"
#include "cipherpatch/image.hpp"
#include "cipherpatch/permutation.hpp"
#include "cipherpatch/rng.hpp"

namespace cipherpatch::vit {

template <typename T>
using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Model geometry. Defaults are the toy configuration used by the test
// harness; full-size configs are structurally identical.
struct ViTConfig {
  int image_h = 32;
  int image_w = 32;
  int channels = 3;
  int patch = 8;
  int embed_dim = 64;
  int heads = 4;
  int layers = 2;
  int mlp_hidden = 128;
  int classes = 10;

  int tokens() const { return (image_h / patch) * (image_w / patch); }     // N
  int patch_dim() const { return patch * patch * channels; }              // L
  int head_dim() const { return embed_dim / heads; }

  void validate() const;
  static ViTConfig toy() { return ViTConfig{}; }

  bool operator==(const ViTConfig&) const = default;
};

// One pre-LN encoder block: z += MSA(LN(z)); z += MLP(LN(z)).
// Vectors are stored as 1xD matrices so every tensor shares one type.
template <typename T>
struct EncoderLayer {
  MatT<T> ln1_gain, ln1_bias;
  MatT<T> wq, bq, wk, bk, wv, bv, wo, bo;
  MatT<T> ln2_gain, ln2_bias;
  MatT<T> mlp_w_in, mlp_b_in, mlp_w_out, mlp_b_out;
};

// All model weights. The same structure doubles as the gradient set and the
// SGD momentum state (tensor-for-tensor).
template <typename T>
struct Params {
  using Scalar = T;

  MatT<T> patch_embed;  // L x D
  MatT<T> pos_embed;    // (N+1) x D, row 0 is the class-token position
  MatT<T> class_token;  // 1 x D
  std::vector<EncoderLayer<T>> layers;
  MatT<T> final_ln_gain, final_ln_bias;  // 1 x D
  MatT<T> head_weight;                   // D x classes
  MatT<T> head_bias;                     // 1 x classes
};

using ParamsF = Params<float>;

// Enumerates every weight tensor in a fixed order with stable names.
// save/load, the optimizer and the adaptation all iterate this list.
template <typename T>
std::vector<std::pair<std::string, MatT<T>*>> tensor_refs(Params<T>& p) {
  std::vector<std::pair<std::string, MatT<T>*>> refs;
  refs.emplace_back("patch_embed", &p.patch_embed);
  refs.emplace_back("pos_embed", &p.pos_embed);
  refs.emplace_back("class_token", &p.class_token);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    EncoderLayer<T>& l = p.layers[i];
    const std::string pre = "layers." + std::to_string(i) + ".";
    refs.emplace_back(pre + "ln1.gain", &l.ln1_gain);
    refs.emplace_back(pre + "ln1.bias", &l.ln1_bias);
    refs.emplace_back(pre + "attn.wq", &l.wq);
    refs.emplace_back(pre + "attn.bq", &l.bq);
    refs.emplace_back(pre + "attn.wk", &l.wk);
    refs.emplace_back(pre + "attn.bk", &l.bk);
    refs.emplace_back(pre + "attn.wv", &l.wv);
    refs.emplace_back(pre + "attn.bv", &l.bv);
    refs.emplace_back(pre + "attn.wo", &l.wo);
    refs.emplace_back(pre + "attn.bo", &l.bo);
    refs.emplace_back(pre + "ln2.gain", &l.ln2_gain);
    refs.emplace_back(pre + "ln2.bias", &l.ln2_bias);
    refs.emplace_back(pre + "mlp.w_in", &l.mlp_w_in);
    refs.emplace_back(pre + "mlp.b_in", &l.mlp_b_in);
    refs.emplace_back(pre + "mlp.w_out", &l.mlp_w_out);
    refs.emplace_back(pre + "mlp.b_out", &l.mlp_b_out);
  }
  refs.emplace_back("final_ln.gain", &p.final_ln_gain);
  refs.emplace_back("final_ln.bias", &p.final_ln_bias);
  refs.emplace_back("head.weight", &p.head_weight);
  refs.emplace_back("head.bias", &p.head_bias);
  return refs;
}

template <typename T>
std::vector<std::pair<std::string, const MatT<T>*>> tensor_refs(const Params<T>& p) {
  auto mut = tensor_refs(const_cast<Params<T>&>(p));
  std::vector<std::pair<std::string, const MatT<T>*>> refs;
  refs.reserve(mut.size());
  for (auto& [name, ptr] : mut) refs.emplace_back(name, ptr);
  return refs;
}

// Zero-valued parameter set with the shapes demanded by cfg.
template <typename T>
Params<T> shaped_params(const ViTConfig& cfg) {
  cfg.validate();
  const int d = cfg.embed_dim;
  Params<T> p;
  p.patch_embed = MatT<T>::Zero(cfg.patch_dim(), d);
  p.pos_embed = MatT<T>::Zero(cfg.tokens() + 1, d);
  p.class_token = MatT<T>::Zero(1, d);
  p.layers.resize(static_cast<std::size_t>(cfg.layers));
  for (auto& l : p.layers) {
    l.ln1_gain = MatT<T>::Zero(1, d);
    l.ln1_bias = MatT<T>::Zero(1, d);
    l.wq = MatT<T>::Zero(d, d);
    l.bq = MatT<T>::Zero(1, d);
    l.wk = MatT<T>::Zero(d, d);
    l.bk = MatT<T>::Zero(1, d);
    l.wv = MatT<T>::Zero(d, d);
    l.bv = MatT<T>::Zero(1, d);
    l.wo = MatT<T>::Zero(d, d);
    l.bo = MatT<T>::Zero(1, d);
    l.ln2_gain = MatT<T>::Zero(1, d);
    l.ln2_bias = MatT<T>::Zero(1, d);
    l.mlp_w_in = MatT<T>::Zero(d, cfg.mlp_hidden);
    l.mlp_b_in = MatT<T>::Zero(1, cfg.mlp_hidden);
    l.mlp_w_out = MatT<T>::Zero(cfg.mlp_hidden, d);
    l.mlp_b_out = MatT<T>::Zero(1, d);
  }
  p.final_ln_gain = MatT<T>::Zero(1, d);
  p.final_ln_bias = MatT<T>::Zero(1, d);
  p.head_weight = MatT<T>::Zero(d, cfg.classes);
  p.head_bias = MatT<T>::Zero(1, cfg.classes);
  return p;
}

template <typename T>
Params<T> zeros_like(const Params<T>& src) {
  Params<T> out = src;
  for (auto& [name, t] : tensor_refs(out)) t->setZero();
  return out;
}

template <typename To, typename From>
Params<To> params_cast(const Params<From>& src) {
  Params<To> out;
  out.layers.resize(src.layers.size());
  auto src_refs = tensor_refs(src);
  auto dst_refs = tensor_refs(out);
  for (std::size_t i = 0; i < src_refs.size(); ++i) {
    *dst_refs[i].second = src_refs[i].second->template cast<To>();
  }
  return out;
}

// Deterministic seeded init: gaussian (scale 0.02) for projection weights
// and both embeddings, ones for layer-norm gains, zeros for biases and the
// class token. Consumption order is the tensor_refs order.
ParamsF init_params(const ViTConfig& cfg, std::uint64_t seed);

// Weight file, magic "VITW": u32 version=1, u32 tensor count, then per
// tensor u16 name length, name bytes, u8 rank, u32 dims..., f32 LE data.
// A "config" tensor carries the nine ViTConfig integers.
void save_params(const std::string& path, const ParamsF& params, const ViTConfig& cfg);
std::pair<ParamsF, ViTConfig> load_params(const std::string& path);

// --- numerics ---

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(M_SQRT1_2)));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);  // 1/sqrt(2*pi)
  return cdf + x * pdf;
}

// Row-wise softmax with max subtraction.
template <typename T>
MatT<T> softmax_rows(const MatT<T>& x) {
  MatT<T> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct LnCache {
  MatT<T> xhat;          // normalized rows before gain/bias
  std::vector<T> rstd;   // per-row 1/sqrt(var+eps)
};

template <typename T>
MatT<T> layer_norm(const MatT<T>& x, const MatT<T>& gain, const MatT<T>& bias,
                   LnCache<T>* cache = nullptr) {
  const Eigen::Index d = x.cols();
  MatT<T> xhat(x.rows(), d);
  std::vector<T> rstd(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T mean = x.row(r).mean();
    const T var = (x.row(r).array() - mean).square().sum() / T(d);
    const T rs = T(1) / std::sqrt(var + T(kLayerNormEps));
    xhat.row(r) = (x.row(r).array() - mean) * rs;
    rstd[static_cast<std::size_t>(r)] = rs;
  }
  MatT<T> out(x.rows(), d);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    out.row(r) = xhat.row(r).cwiseProduct(gain.row(0)) + bias.row(0);
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return out;
}

// Gradient through layer_norm. Accumulates dgain/dbias, returns dx.
template <typename T>
MatT<T> layer_norm_backward(const MatT<T>& dy, const LnCache<T>& cache,
                            const MatT<T>& gain, MatT<T>& dgain, MatT<T>& dbias) {
  const Eigen::Index d = dy.cols();
  MatT<T> dx(dy.rows(), d);
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const auto xhat = cache.xhat.row(r);
    const auto g = dy.row(r).cwiseProduct(gain.row(0));
    const T m1 = g.mean();
    const T m2 = g.cwiseProduct(xhat).mean();
    dx.row(r) = (g.array() - m1 - xhat.array() * m2) *
                cache.rstd[static_cast<std::size_t>(r)];
    dgain.row(0) += dy.row(r).cwiseProduct(xhat);
    dbias.row(0) += dy.row(r);
  }
  return dx;
}

template <typename T>
struct LayerCache {
  MatT<T> input;  // z entering the block
  LnCache<T> ln1;
  MatT<T> ln1_out;
  MatT<T> q, k, v;
  std::vector<MatT<T>> probs;  // per-head attention, rows sum to 1
  MatT<T> att_concat;
  MatT<T> z_mid;  // after the attention residual
  LnCache<T> ln2;
  MatT<T> ln2_out;
  MatT<T> mlp_pre, mlp_act;
};

template <typename T>
struct ForwardCache {
  MatT<T> patches;  // N x L
  MatT<T> z0;
  std::vector<LayerCache<T>> layers;
  MatT<T> encoder_out;
  LnCache<T> cls_ln;  // final LN over the class-token row
  MatT<T> cls_ln_out;
  MatT<T> logits;  // 1 x classes
};

// Eq-style embedded patch sequence: row 0 = class token + its position row,
// row i = patches.row(i-1) * patch_embed + pos_embed.row(i).
template <typename T>
MatT<T> embed_tokens(const MatT<T>& patches, const Params<T>& p) {
  if (patches.cols() != p.patch_embed.rows() ||
      patches.rows() + 1 != p.pos_embed.rows()) {
    throw DimensionError("embed_tokens: patches " + std::to_string(patches.rows()) +
                         "x" + std::to_string(patches.cols()) +
                         " inconsistent with embeddings");
  }
  MatT<T> z(patches.rows() + 1, p.pos_embed.cols());
  z.row(0) = p.class_token.row(0);
  z.bottomRows(patches.rows()).noalias() = patches * p.patch_embed;
  z += p.pos_embed;
  return z;
}

// The encoder blocks only; the final layer norm is applied by classify.
// Token rows 1..N are exchangeable: permuting them permutes the output rows
// identically (row 0 is pinned), which is what makes the block-scrambling
// adaptation exact.
template <typename T>
MatT<T> encoder_forward(const MatT<T>& z_in, const Params<T>& p, const ViTConfig& cfg,
                        std::vector<LayerCache<T>>* caches = nullptr) {
  if (z_in.rows() != cfg.tokens() + 1 || z_in.cols() != cfg.embed_dim) {
    throw DimensionError("encoder_forward: expected " +
                         std::to_string(cfg.tokens() + 1) + "x" +
                         std::to_string(cfg.embed_dim) + " token sequence");
  }
  const Eigen::Index n = z_in.rows();
  const int hs = cfg.head_dim();
  const T scale = T(1) / std::sqrt(T(hs));
  MatT<T> z = z_in;
  if (caches) caches->clear();
  for (std::size_t li = 0; li < p.layers.size(); ++li) {
    const EncoderLayer<T>& l = p.layers[li];
    LayerCache<T> c;
    c.input = z;

    c.ln1_out = layer_norm(z, l.ln1_gain, l.ln1_bias, &c.ln1);
    c.q = (c.ln1_out * l.wq).rowwise() + l.bq.row(0);
    c.k = (c.ln1_out * l.wk).rowwise() + l.bk.row(0);
    c.v = (c.ln1_out * l.wv).rowwise() + l.bv.row(0);
    c.att_concat.resize(n, cfg.embed_dim);
    c.probs.resize(static_cast<std::size_t>(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
      const auto qh = c.q.block(0, h * hs, n, hs);
      const auto kh = c.k.block(0, h * hs, n, hs);
      const auto vh = c.v.block(0, h * hs, n, hs);
      MatT<T> scores = qh * kh.transpose() * scale;
      MatT<T> probs = softmax_rows(scores);
      c.att_concat.block(0, h * hs, n, hs).noalias() = probs * vh;
      c.probs[static_cast<std::size_t>(h)] = std::move(probs);
    }
    z += (c.att_concat * l.wo).rowwise() + l.bo.row(0);
    c.z_mid = z;

    c.ln2_out = layer_norm(z, l.ln2_gain, l.ln2_bias, &c.ln2);
    c.mlp_pre = (c.ln2_out * l.mlp_w_in).rowwise() + l.mlp_b_in.row(0);
    c.mlp_act = c.mlp_pre.unaryExpr([](T v) { return gelu(v); });
    z += (c.mlp_act * l.mlp_w_out).rowwise() + l.mlp_b_out.row(0);

    if (!z.allFinite()) {
      throw NumericError("non-finite values after encoder layer " +
                         std::to_string(li));
    }
    if (caches) caches->push_back(std::move(c));
  }
  return z;
}

// Final layer norm over the class-token row, then the linear head.
template <typename T>
MatT<T> classify(const MatT<T>& z_out, const Params<T>& p,
                 LnCache<T>* cls_cache = nullptr, MatT<T>* cls_ln_out = nullptr) {
  MatT<T> cls = z_out.row(0);
  MatT<T> normed = layer_norm(cls, p.final_ln_gain, p.final_ln_bias, cls_cache);
  if (cls_ln_out) *cls_ln_out = normed;
  MatT<T> logits = (normed * p.head_weight).rowwise() + p.head_bias.row(0);
  return logits;
}

template <typename T>
MatT<T> forward_patches(const MatT<T>& patches, const Params<T>& p,
                        const ViTConfig& cfg, ForwardCache<T>* cache = nullptr) {
  MatT<T> z0 = embed_tokens(patches, p);
  std::vector<LayerCache<T>> layer_caches;
  MatT<T> out = encoder_forward(z0, p, cfg, cache ? &layer_caches : nullptr);
  LnCache<T> cls_ln;
  MatT<T> cls_ln_out;
  MatT<T> logits = classify(out, p, cache ? &cls_ln : nullptr,
                            cache ? &cls_ln_out : nullptr);
  if (cache) {
    cache->patches = patches;
    cache->z0 = std::move(z0);
    cache->layers = std::move(layer_caches);
    cache->encoder_out = std::move(out);
    cache->cls_ln = std::move(cls_ln);
    cache->cls_ln_out = std::move(cls_ln_out);
    cache->logits = logits;
  }
  return logits;
}

// Gradient of one sample's contribution given d(loss)/d(logits).
template <typename T>
void backward_sample(const Params<T>& p, const ViTConfig& cfg,
                     const ForwardCache<T>& cache, const MatT<T>& dlogits,
                     Params<T>& g) {
  const Eigen::Index n = cache.encoder_out.rows();
  const int hs = cfg.head_dim();
  const T scale = T(1) / std::sqrt(T(hs));

  // head
  g.head_weight.noalias() += cache.cls_ln_out.transpose() * dlogits;
  g.head_bias += dlogits;
  MatT<T> dcls_ln = dlogits * p.head_weight.transpose();

  // final LN (class-token row only)
  MatT<T> dcls = layer_norm_backward(dcls_ln, cache.cls_ln, p.final_ln_gain,
                                     g.final_ln_gain, g.final_ln_bias);
  MatT<T> dz = MatT<T>::Zero(n, cfg.embed_dim);
  dz.row(0) = dcls.row(0);

  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const EncoderLayer<T>& l = p.layers[li];
    const LayerCache<T>& c = cache.layers[li];
    EncoderLayer<T>& gl = g.layers[li];

    // MLP residual branch
    MatT<T> dmlp_out = dz;  // residual passes dz through unchanged
    gl.mlp_w_out.noalias() += c.mlp_act.transpose() * dmlp_out;
    gl.mlp_b_out += dmlp_out.colwise().sum();
    MatT<T> dact = dmlp_out * l.mlp_w_out.transpose();
    MatT<T> dpre =
        dact.cwiseProduct(c.mlp_pre.unaryExpr([](T v) { return gelu_grad(v); }));
    gl.mlp_w_in.noalias() += c.ln2_out.transpose() * dpre;
    gl.mlp_b_in += dpre.colwise().sum();
    MatT<T> dln2_out = dpre * l.mlp_w_in.transpose();
    dz += layer_norm_backward(dln2_out, c.ln2, l.ln2_gain, gl.ln2_gain,
                              gl.ln2_bias);

    // attention residual branch
    MatT<T> datt_out = dz;
    gl.wo.noalias() += c.att_concat.transpose() * datt_out;
    gl.bo += datt_out.colwise().sum();
    MatT<T> datt = datt_out * l.wo.transpose();
    MatT<T> dq(n, cfg.embed_dim), dk(n, cfg.embed_dim), dv(n, cfg.embed_dim);
    for (int h = 0; h < cfg.heads; ++h) {
      const auto qh = c.q.block(0, h * hs, n, hs);
      const auto kh = c.k.block(0, h * hs, n, hs);
      const auto vh = c.v.block(0, h * hs, n, hs);
      const MatT<T>& probs = c.probs[static_cast<std::size_t>(h)];
      const auto datt_h = datt.block(0, h * hs, n, hs);
      MatT<T> dprobs = datt_h * vh.transpose();
      dv.block(0, h * hs, n, hs).noalias() = probs.transpose() * datt_h;
      MatT<T> dscores(n, n);
      for (Eigen::Index r = 0; r < n; ++r) {
        const T dot = dprobs.row(r).cwiseProduct(probs.row(r)).sum();
        dscores.row(r) = probs.row(r).array() * (dprobs.row(r).array() - dot);
      }
      dq.block(0, h * hs, n, hs).noalias() = dscores * kh * scale;
      dk.block(0, h * hs, n, hs).noalias() = dscores.transpose() * qh * scale;
    }
    gl.wq.noalias() += c.ln1_out.transpose() * dq;
    gl.bq += dq.colwise().sum();
    gl.wk.noalias() += c.ln1_out.transpose() * dk;
    gl.bk += dk.colwise().sum();
    gl.wv.noalias() += c.ln1_out.transpose() * dv;
    gl.bv += dv.colwise().sum();
    MatT<T> dln1_out = dq * l.wq.transpose();
    dln1_out.noalias() += dk * l.wk.transpose();
    dln1_out.noalias() += dv * l.wv.transpose();
    dz += layer_norm_backward(dln1_out, c.ln1, l.ln1_gain, gl.ln1_gain,
                              gl.ln1_bias);
  }

  // embedding
  g.pos_embed += dz;
  g.class_token.row(0) += dz.row(0);
  g.patch_embed.noalias() += cache.patches.transpose() * dz.bottomRows(n - 1);
}

// Mean cross-entropy over the batch plus exact gradients for every weight
// tensor. Samples are visited in order; accumulation order is fixed.
template <typename T>
T loss_and_grads(const Params<T>& p, const ViTConfig& cfg,
                 const std::vector<MatT<T>>& patch_batch,
                 const std::vector<int>& labels, Params<T>& grads) {
  if (patch_batch.empty() || patch_batch.size() != labels.size()) {
    throw DimensionError("loss_and_grads: empty batch or label count mismatch");
  }
  grads = zeros_like(p);
  const T inv_b = T(1) / T(patch_batch.size());
  T loss = T(0);
  for (std::size_t s = 0; s < patch_batch.size(); ++s) {
    const int label = labels[s];
    if (label < 0 || label >= cfg.classes) {
      throw DimensionError("label " + std::to_string(label) +
                           " out of range [0, " + std::to_string(cfg.classes) + ")");
    }
    ForwardCache<T> cache;
    MatT<T> logits = forward_patches(patch_batch[s], p, cfg, &cache);
    MatT<T> probs = softmax_rows(logits);
    loss -= std::log(probs(0, label)) * inv_b;
    MatT<T> dlogits = probs * inv_b;
    dlogits(0, label) -= inv_b;
    backward_sample(p, cfg, cache, dlogits, grads);
  }
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite loss");
  }
  return loss;
}

// Loss only, same path as loss_and_grads without the backward sweep.
template <typename T>
T batch_loss(const Params<T>& p, const ViTConfig& cfg,
             const std::vector<MatT<T>>& patch_batch, const std::vector<int>& labels) {
  if (patch_batch.empty() || patch_batch.size() != labels.size()) {
    throw DimensionError("batch_loss: empty batch or label count mismatch");
  }
  const T inv_b = T(1) / T(patch_batch.size());
  T loss = T(0);
  for (std::size_t s = 0; s < patch_batch.size(); ++s) {
    MatT<T> logits = forward_patches(patch_batch[s], p, cfg);
    MatT<T> probs = softmax_rows(logits);
    loss -= std::log(probs(0, labels[s])) * inv_b;
  }
  return loss;
}

// SGD with momentum and L2 weight decay folded into the gradient:
// g <- g + wd*w; buf <- momentum*buf + g; w <- w - lr*buf.
template <typename T>
void sgd_step(Params<T>& params, const Params<T>& grads, T lr, T momentum,
              T weight_decay, Params<T>& state) {
  auto p_refs = tensor_refs(params);
  auto g_refs = tensor_refs(grads);
  auto s_refs = tensor_refs(state);
  for (std::size_t i = 0; i < p_refs.size(); ++i) {
    MatT<T>& w = *p_refs[i].second;
    const MatT<T>& g = *g_refs[i].second;
    MatT<T>& buf = *s_refs[i].second;
    buf = momentum * buf + (g + weight_decay * w);
    w -= lr * buf;
  }
}

// Flattened patch rows in raster order; row layout matches the block codec's
// frozen flattening (pixel-major, channel-minor).
Matf extract_patches(const ImageTensor& x, const ViTConfig& cfg);

// Float convenience wrappers over the image path.
Matf embed(const ImageTensor& x, const ParamsF& p, const ViTConfig& cfg);
Matf forward(const ImageTensor& x, const ParamsF& p, const ViTConfig& cfg);

}  // namespace cipherpatch::vit
