// csda: command-line driver for colorspace-discriminant segmentation.
//
// Subcommands: gen-data, train, eval, gradcheck, visualize, ablate.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "csda/config.hpp"
#include "csda/data.hpp"
#include "csda/gradcheck.hpp"
#include "csda/losses.hpp"
#include "csda/png_io.hpp"
#include "csda/rng.hpp"
#include "csda/trainer.hpp"
#include "csda/viz.hpp"

namespace fs = std::filesystem;
using namespace csda;

namespace {

int cmd_gen_data(const std::string& out_dir, int n_train, int n_val, int n_test,
                 int families, int image_size, double shadow_prob, double noise_sigma,
                 std::uint64_t seed, bool write_images) {
  SceneParams params;
  params.image_size = image_size;
  params.shadow_probability = shadow_prob;
  params.noise_sigma = noise_sigma;
  DatasetManifest manifest =
      make_manifest(params, n_train, n_val, n_test, families, seed);
  fs::create_directories(out_dir);
  write_manifest(out_dir + "/manifest.txt", manifest);
  if (write_images) {
    fs::create_directories(out_dir + "/images");
    fs::create_directories(out_dir + "/masks");
    std::size_t index = 0;
    for (const ManifestEntry& e : manifest.entries) {
      SceneParams p = params;
      p.scene_family_id = e.family_id;
      const Sample sample = generate(p, e.seed);
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%05zu.png", e.split.c_str(), index);
      save_png_rgb(out_dir + "/images/" + name, sample.image);
      save_png_gray(out_dir + "/masks/" + name, sample.mask);
      ++index;
    }
  }
  std::cout << "wrote " << manifest.entries.size() << " entries to " << out_dir
            << "/manifest.txt\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir) {
  const TrainConfig config = load_config(config_path);
  const DatasetManifest manifest = read_manifest(data_dir + "/manifest.txt");
  const TrainResult result = train(config, manifest);
  fs::create_directories(out_dir);
  write_metrics_csv(out_dir + "/metrics.csv", result.log);
  save_checkpoint(out_dir + "/checkpoint", config, result);
  std::cout << "best val mIoU " << result.best_val_miou << " at epoch "
            << result.best_epoch << "\n";
  if (result.empty_class_batches)
    std::cout << "note: " << result.empty_class_batches
              << " batches skipped the discriminant term (empty class)\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_dir, const std::string& data_dir,
             const std::string& split, const std::string& out_dir) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_dir);
  const DatasetManifest manifest = read_manifest(data_dir + "/manifest.txt");
  const EvalResult result =
      evaluate_split(ckpt.model, manifest, split, ckpt.threshold);
  fs::create_directories(out_dir);
  write_eval_csv(out_dir + "/eval_" + split + ".csv", result);
  write_family_csv(out_dir + "/families_" + split + ".csv", result);
  const SegMetrics& m = result.aggregate;
  std::printf("%s: acc %.4f  precision %.4f  recall %.4f  f1 %.4f  miou %.4f\n",
              split.c_str(), m.accuracy, m.precision, m.recall, m.f1, m.miou);
  return 0;
}

// Random sigmoid-bounded pixel batch for the loss gradient checks.
Tensor random_feature_batch(Rng& rng, int pixels, int channels) {
  Tensor y(Shape{pixels, channels}, 0.0);
  for (auto& v : y.data) v = rng.uniform(0.05, 0.95);
  return y;
}

Tensor random_mask(Rng& rng, int pixels) {
  Tensor m(Shape{pixels}, 0.0);
  bool has0 = false, has1 = false;
  for (auto& v : m.data) {
    v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    (v == 1.0 ? has1 : has0) = true;
  }
  if (!has0) m.data[0] = 0.0;
  if (!has1) m.data[1] = 1.0;
  return m;
}

int cmd_gradcheck(std::uint64_t seed) {
  const int pixels = 32, channels = 2;
  bool ok = true;
  for (LossVariant variant :
       {LossVariant::kCsda, LossVariant::kCsdaLn, LossVariant::kCsdaDelta}) {
    LossConfig cfg;
    cfg.variant = variant;
    cfg.d_cs = channels;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(trial)));
      const Tensor y0 = random_feature_batch(rng, pixels, channels);
      const Tensor mask = random_mask(rng, pixels);
      auto f = [&](Tape&, const Tensor& y) {
        ClassStats stats = class_stats(y, mask);
        Tensor u = mean_diff(stats);
        ScatterPair pair = scatter_pair(stats);
        return discriminant_loss(pair, u, cfg);
      };
      worst = std::max(worst, finite_difference_check(f, y0, 1e-5));
    }
    std::printf("loss %-11s max relative gradient error: %.3e\n",
                to_string(variant).c_str(), worst);
    ok = ok && worst < 1e-4;
  }

  // end-to-end spot probes through both networks
  {
    TrainConfig cfg;
    cfg.depth = 1;
    cfg.base_width = 2;
    cfg.d_cs = 2;
    cfg.seed = seed;
    cfg.image_size = 8;
    ModelPair model = model_for_config(cfg);
    Rng rng(Rng::derive(seed, 777));
    const int s = cfg.image_size;
    Tensor x(Shape{1, s, s, 3}, 0.0);
    for (auto& v : x.data) v = rng.uniform();
    Tensor mask(Shape{1, s, s}, 0.0);
    for (auto& v : mask.data) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
    const LossConfig lcfg = cfg.loss_config();

    double worst = 0.0;
    auto probe_store = [&](ParamStore& store, const char* label) {
      for (int k = 0; k < 5; ++k) {
        const std::size_t pi = rng.uniform_int(store.size());
        auto f = [&](Tape& tape, const Tensor& p) {
          std::vector<Tensor> cs, seg;
          for (std::size_t j = 0; j < model.colorspace_params.size(); ++j)
            cs.push_back(&store == &model.colorspace_params && j == pi
                             ? p
                             : tape.leaf(model.colorspace_params[j].value));
          for (std::size_t j = 0; j < model.seg_params.size(); ++j)
            seg.push_back(&store == &model.seg_params && j == pi
                              ? p
                              : tape.leaf(model.seg_params[j].value));
          Tensor y = forward_colorspace(model, cs, x);
          Tensor probs = forward_segmentation(model, seg, y);
          return focal_loss(probs, mask, lcfg);
        };
        worst = std::max(worst, finite_difference_check(f, store[pi].value, 1e-5));
      }
      std::printf("network %-10s max relative gradient error (5 probes): %.3e\n",
                  label, worst);
    };
    probe_store(model.colorspace_params, "colorspace");
    probe_store(model.seg_params, "segmentation");
    ok = ok && worst < 1e-3;
  }

  std::printf("gradcheck: %s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

int cmd_visualize(const std::string& checkpoint_dir, const std::string& data_dir,
                  const std::string& split, int count, const std::string& out_dir) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_dir);
  const DatasetManifest manifest = read_manifest(data_dir + "/manifest.txt");
  std::vector<Sample> samples = materialize_split(manifest, split);
  if (count > 0 && static_cast<std::size_t>(count) < samples.size())
    samples.resize(static_cast<std::size_t>(count));
  export_visualization(ckpt.model, samples, out_dir, ckpt.threshold);
  std::cout << "wrote visualizations for " << samples.size() << " samples to "
            << out_dir << "\n";
  return 0;
}

int cmd_ablate(const std::string& data_dir, const std::string& config_path,
               const std::vector<int>& dcs_values, const std::string& out_file) {
  const DatasetManifest manifest = read_manifest(data_dir + "/manifest.txt");
  TrainConfig base = config_path.empty() ? TrainConfig{} : load_config(config_path);
  std::ofstream os(out_file);
  if (!os) throw std::runtime_error("ablate: cannot open " + out_file);
  os << "d_cs,mode,acc,precision,recall,f1,iou0,iou1,miou\n";
  for (int d : dcs_values) {
    for (AblationMode mode : {AblationMode::kFull, AblationMode::kDdaOnly,
                              AblationMode::kFocalOnly, AblationMode::kTwoNetFocal}) {
      TrainConfig cfg = base;
      cfg.d_cs = d;
      cfg.ablation = mode;
      const TrainResult result = train(cfg, manifest);
      const EvalResult ev =
          evaluate_split(result.model, manifest, "test", result.threshold);
      const SegMetrics& m = ev.aggregate;
      char buf[192];
      std::snprintf(buf, sizeof(buf), "%d,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", d,
                    to_string(mode).c_str(), m.accuracy, m.precision, m.recall, m.f1,
                    m.iou_c0, m.iou_c1, m.miou);
      os << buf << "\n";
      std::printf("d_cs=%d %-13s f1 %.4f miou %.4f\n", d, to_string(mode).c_str(),
                  m.f1, m.miou);
    }
  }
  std::cout << "wrote " << out_file << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Colorspace discriminant analysis toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic blade dataset");
  std::string gen_out;
  int n_train = 600, n_val = 100, n_test = 100, families = 6, image_size = 64;
  double shadow_prob = 0.5, noise_sigma = 0.01;
  std::uint64_t gen_seed = 1;
  bool no_images = false;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--n-train", n_train);
  gen->add_option("--n-val", n_val);
  gen->add_option("--n-test", n_test);
  gen->add_option("--families", families);
  gen->add_option("--image-size", image_size);
  gen->add_option("--shadow-prob", shadow_prob);
  gen->add_option("--noise-sigma", noise_sigma);
  gen->add_option("--seed", gen_seed);
  gen->add_flag("--manifest-only", no_images, "Skip writing PNGs");

  // train
  auto* tr = app.add_subcommand("train", "Train a model from a config file");
  std::string train_config, train_data, train_out;
  tr->add_option("--config", train_config, "TrainConfig key=value file")->required();
  tr->add_option("--data", train_data, "Dataset directory (holds manifest.txt)")
      ->required();
  tr->add_option("--out", train_out, "Output directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  std::string eval_ckpt, eval_data, eval_split = "test", eval_out;
  ev->add_option("--checkpoint", eval_ckpt)->required();
  ev->add_option("--data", eval_data)->required();
  ev->add_option("--split", eval_split);
  ev->add_option("--out", eval_out)->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  std::uint64_t gc_seed = 7;
  gc->add_option("--seed", gc_seed);

  // visualize
  auto* viz = app.add_subcommand("visualize", "Export colorspace panels and masks");
  std::string viz_ckpt, viz_data, viz_split = "test", viz_out;
  int viz_count = 4;
  viz->add_option("--checkpoint", viz_ckpt)->required();
  viz->add_option("--data", viz_data)->required();
  viz->add_option("--split", viz_split);
  viz->add_option("--count", viz_count);
  viz->add_option("--out", viz_out)->required();

  // ablate
  auto* ab = app.add_subcommand("ablate", "Run the four model variants per d_cs");
  std::string ab_data, ab_config, ab_out = "ablation.csv";
  std::vector<int> ab_dcs{1, 2, 3, 4, 5, 6};
  ab->add_option("--data", ab_data)->required();
  ab->add_option("--config", ab_config, "Base TrainConfig (optional)");
  ab->add_option("--dcs", ab_dcs, "Comma-separated d_cs values")->delimiter(',');
  ab->add_option("--out", ab_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_data(gen_out, n_train, n_val, n_test, families, image_size,
                          shadow_prob, noise_sigma, gen_seed, !no_images);
    if (tr->parsed()) return cmd_train(train_config, train_data, train_out);
    if (ev->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_split, eval_out);
    if (gc->parsed()) return cmd_gradcheck(gc_seed);
    if (viz->parsed())
      return cmd_visualize(viz_ckpt, viz_data, viz_split, viz_count, viz_out);
    if (ab->parsed()) return cmd_ablate(ab_data, ab_config, ab_dcs, ab_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
