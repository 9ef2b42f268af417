#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cipherpatch/adapt.hpp"
#include "cipherpatch/blockcodec.hpp"
#include "cipherpatch/harness.hpp"
#include "cipherpatch/image.hpp"
#include "cipherpatch/rng.hpp"
#include "cipherpatch/vit.hpp"

namespace fs = std::filesystem;
using namespace cipherpatch;

namespace {

// Shared --k1/--k2/--block flags. Omitted keys mean identity; --mode can
// additionally restrict which permutation is applied.
struct KeyArgs {
  std::optional<std::uint64_t> k1;
  std::optional<std::uint64_t> k2;
  std::uint32_t block = 0;
  std::string mode = "both";

  EncryptionKeys keys() const {
    EncryptionKeys k{k1, k2, block};
    if (mode == "block") {
      k.k2.reset();
    } else if (mode == "pixel") {
      k.k1.reset();
    } else if (mode != "both") {
      throw ConfigError("unknown mode \"" + mode + "\" (want block|pixel|both)");
    }
    return k;
  }
};

void add_key_flags(CLI::App* cmd, KeyArgs& args, bool with_mode) {
  cmd->add_option("--k1", args.k1, "block-scrambling key (omit for identity)");
  cmd->add_option("--k2", args.k2, "pixel-shuffling key (omit for identity)");
  cmd->add_option("--block", args.block, "block size in pixels")->required();
  if (with_mode) {
    cmd->add_option("--mode", args.mode, "block|pixel|both (default both)")
        ->check(CLI::IsMember({"block", "pixel", "both"}));
  }
}

std::vector<fs::path> image_files_in(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".ppm" || ext == ".imgt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

int run(int argc, char** argv) {
  CLI::App app{"block-wise keyed image encryption with matching ViT adaptation"};
  app.require_subcommand(1);

  // keygen
  auto* keygen = app.add_subcommand("keygen", "derive a key pair from a seed");
  std::uint64_t keygen_seed = 0;
  keygen->add_option("--seed", keygen_seed, "seed for key derivation")->required();
  keygen->callback([&] {
    SplitMix64 rng(keygen_seed);
    std::cout << "k1 " << rng.next() << "\n";
    std::cout << "k2 " << rng.next() << "\n";
  });

  // encrypt / decrypt
  struct CodecArgs {
    std::string in, out;
    KeyArgs keys;
  };
  CodecArgs enc_args, dec_args;
  for (auto [name, desc, args] :
       {std::tuple{"encrypt", "encrypt an image", &enc_args},
        std::tuple{"decrypt", "decrypt an image", &dec_args}}) {
    auto* cmd = app.add_subcommand(name, desc);
    cmd->add_option("--in", args->in, "input image (.ppm or .imgt)")->required();
    cmd->add_option("--out", args->out, "output image (.ppm or .imgt)")->required();
    add_key_flags(cmd, args->keys, /*with_mode=*/true);
    const bool is_encrypt = std::string(name) == "encrypt";
    cmd->callback([args, is_encrypt] {
      const ImageTensor img = load_image(args->in);
      const EncryptionKeys keys = args->keys.keys();
      save_image(args->out,
                 is_encrypt ? encrypt_image(img, keys) : decrypt_image(img, keys));
    });
  }

  // adapt
  auto* adapt_cmd = app.add_subcommand("adapt", "adapt model weights to a key pair");
  struct {
    std::string weights, out;
    KeyArgs keys;
  } adapt_args;
  adapt_cmd->add_option("--weights", adapt_args.weights, "source weight file")
      ->required();
  adapt_cmd->add_option("--out", adapt_args.out, "adapted weight file")->required();
  add_key_flags(adapt_cmd, adapt_args.keys, /*with_mode=*/false);
  adapt_cmd->callback([&] {
    auto [params, cfg] = vit::load_params(adapt_args.weights);
    const adapt::AdaptedModel model =
        adapt::adapt_model(params, adapt_args.keys.keys(), cfg);
    adapt::save_adapted(adapt_args.out, model, cfg);
  });

  // infer
  auto* infer = app.add_subcommand("infer", "classify one image");
  struct {
    std::string weights, image;
  } infer_args;
  infer->add_option("--weights", infer_args.weights, "weight file")->required();
  infer->add_option("--image", infer_args.image, "image to classify")->required();
  infer->callback([&] {
    auto [params, cfg] = vit::load_params(infer_args.weights);
    const Matf logits = vit::forward(load_image(infer_args.image), params, cfg);
    std::cout << "logits";
    for (Eigen::Index i = 0; i < logits.cols(); ++i) {
      std::cout << " " << std::setprecision(9) << logits(0, i);
    }
    std::cout << "\n";
    Eigen::Index argmax = 0;
    logits.row(0).maxCoeff(&argmax);
    std::cout << "argmax " << argmax << "\n";
  });

  // verify
  auto* verify = app.add_subcommand(
      "verify", "check plain-vs-encrypted logit equivalence over a directory");
  struct {
    std::string weights, images;
    KeyArgs keys;
    float tol = 1e-4f;
  } verify_args;
  verify->add_option("--weights", verify_args.weights, "source weight file")
      ->required();
  add_key_flags(verify, verify_args.keys, /*with_mode=*/false);
  verify->add_option("--images", verify_args.images, "directory of images")
      ->required();
  verify->add_option("--tol", verify_args.tol, "max allowed |logit diff|")
      ->required();
  int verify_status = 0;
  verify->callback([&] {
    auto [params, cfg] = vit::load_params(verify_args.weights);
    const EncryptionKeys keys = verify_args.keys.keys();
    const adapt::AdaptedModel model = adapt::adapt_model(params, keys, cfg);
    std::vector<ImageTensor> images;
    for (const auto& path : image_files_in(verify_args.images)) {
      images.push_back(load_image(path.string()));
    }
    if (images.empty()) {
      throw IoError("no .ppm or .imgt images in " + verify_args.images);
    }
    const adapt::EquivalenceReport report = adapt::verify_equivalence(
        params, model, images, keys, cfg, verify_args.tol);
    adapt::write_equivalence_csv(std::cout, report);
    verify_status = report.all_pass ? 0 : 1;
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "run one training scenario");
  struct {
    std::string scenario = "plain";
    std::optional<std::uint64_t> k1, k2;
    harness::TrainOptions opts;
    std::string out;
    std::string save_weights;
  } train_args;
  train_cmd
      ->add_option("--scenario", train_args.scenario, "plain|proposed|without_da")
      ->required()
      ->check(CLI::IsMember({"plain", "proposed", "without_da"}));
  train_cmd->add_option("--k1", train_args.k1, "block-scrambling key");
  train_cmd->add_option("--k2", train_args.k2, "pixel-shuffling key");
  train_cmd->add_option("--epochs", train_args.opts.epochs, "epochs (default 15)");
  train_cmd->add_option("--lr", train_args.opts.lr, "learning rate (default 0.001)");
  train_cmd->add_option("--batch", train_args.opts.batch, "batch size (default 32)");
  train_cmd->add_option("--seed", train_args.opts.seed, "master seed")->required();
  train_cmd->add_option("--out", train_args.out, "per-epoch metrics CSV")
      ->required();
  train_cmd->add_option("--save-weights", train_args.save_weights,
                        "also save the final weights here");
  train_cmd->callback([&] {
    const vit::ViTConfig cfg = vit::ViTConfig::toy();
    harness::ExperimentOptions opts;
    opts.scenario = harness::scenario_from_string(train_args.scenario);
    opts.keys = EncryptionKeys{train_args.k1, train_args.k2,
                               static_cast<std::uint32_t>(cfg.patch)};
    opts.train_opts = train_args.opts;
    const harness::ExperimentResult result = harness::run_experiment(opts, cfg);
    std::ofstream csv(train_args.out);
    if (!csv) throw IoError("cannot open " + train_args.out + " for writing");
    harness::write_train_csv(csv, result.records);
    if (!csv) throw IoError("write failed: " + train_args.out);
    if (!train_args.save_weights.empty()) {
      vit::save_params(train_args.save_weights, result.final_params, cfg);
    }
    if (!result.records.empty()) {
      std::cout << "final test_acc " << std::setprecision(9)
                << result.records.back().test_acc << "\n";
    }
  });

  CLI11_PARSE(app, argc, argv);
  return verify_status;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
