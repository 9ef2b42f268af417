#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "cipherpatch/adapt.hpp"
#include "cipherpatch/blockcodec.hpp"
#include "cipherpatch/image.hpp"
#include "cipherpatch/vit.hpp"

namespace cipherpatch::harness {

// Labelled image set. Labels live in [0, classes); items of a generated set
// are class-major (all of class 0, then class 1, ...).
struct Dataset {
  std::vector<ImageTensor> images;
  std::vector<int> labels;
  int classes = 0;
  std::string split;  // "train" or "test"

  std::size_t size() const { return images.size(); }
};

// Deterministic synthetic classification task: class k is an oriented
// sinusoidal grating (angle pi*k/classes) with a random per-image phase,
// identical mean and amplitude for every class, plus seeded gaussian pixel
// noise. Class identity is carried purely by spatial structure; the global
// value histogram is class-independent, so an encrypted image leaks no class
// signal through first-order statistics.
Dataset gen_synthetic_dataset(std::uint64_t seed, int n_per_class, int classes,
                              const vit::ViTConfig& cfg,
                              const std::string& split = "train");

// Applies encrypt_image to every item; labels and order unchanged.
Dataset encrypt_dataset(const Dataset& d, const EncryptionKeys& keys);

struct TrainRecord {
  int epoch;  // 1-based
  float train_loss;
  float train_acc;
  float test_loss;
  float test_acc;
};

// Defaults follow the reference recipe: batch 32, lr 0.001, momentum 0.9,
// weight decay 0.0005, 15 epochs.
struct TrainOptions {
  int epochs = 15;
  float lr = 0.001f;
  float momentum = 0.9f;
  float weight_decay = 0.0005f;
  int batch = 32;
  std::uint64_t seed = 0;  // drives the per-epoch shuffle only
};

// Mean cross-entropy and argmax accuracy from precomputed logits; the
// reduction order is the sample order regardless of how logits were made.
std::pair<float, float> evaluate_logits(const std::vector<Matf>& logits,
                                        const std::vector<int>& labels);

// Full-model evaluation. Images are evaluated in parallel (bounded by
// CIPHERPATCH_THREADS) with per-sample slots, so the result is independent
// of the thread count.
std::pair<float, float> evaluate(const vit::ParamsF& params,
                                 const vit::ViTConfig& cfg, const Dataset& d);

// SGD fine-tuning loop. Each epoch visits the training set once in a
// seeded shuffled order (reshuffled every epoch), then records end-of-epoch
// metrics on both sets. Deterministic: same inputs and seed give
// bit-identical final weights. Throws NumericError with the epoch and batch
// index if the loss diverges.
std::vector<TrainRecord> train(vit::ParamsF& params, const vit::ViTConfig& cfg,
                               const Dataset& train_set, const Dataset& test_set,
                               const TrainOptions& opts);

// CSV schema: epoch,train_loss,train_acc,test_loss,test_acc.
void write_train_csv(std::ostream& out, const std::vector<TrainRecord>& records);

enum class Scenario { plain, proposed, without_da };

Scenario scenario_from_string(const std::string& s);
std::string to_string(Scenario s);

struct ExperimentOptions {
  Scenario scenario = Scenario::plain;
  EncryptionKeys keys{};  // consumed by proposed and without_da
  TrainOptions train_opts{};  // train_opts.seed is the master seed
  int train_per_class = 64;
  int test_per_class = 16;
};

struct ExperimentResult {
  std::vector<TrainRecord> records;
  vit::ParamsF final_params;
  Dataset test_set;  // the (possibly encrypted) set the records scored against
};

// The shared starting point for every scenario: a model trained to
// convergence on plain data drawn from the task distribution (separate data
// seed). Deterministic in (cfg, master_seed).
vit::ParamsF pretrain_source(const vit::ViTConfig& cfg, std::uint64_t master_seed);

// One experiment:
//   plain      -> fine-tune the source model on plain data
//   proposed   -> adapt the source model with keys, fine-tune on encrypted
//                 data, score on the encrypted test set
//   without_da -> fine-tune the source model unchanged on encrypted data
// All three share datasets, shuffle order and the pretrained source for a
// given master seed, so plain and proposed form an exactly-paired run.
// Passing a precomputed source model skips the pretraining phase.
ExperimentResult run_experiment(const ExperimentOptions& opts,
                                const vit::ViTConfig& cfg,
                                const vit::ParamsF* source = nullptr);

}  // namespace cipherpatch::harness
