#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "csda/losses.hpp"
#include "csda/metrics.hpp"
#include "csda/rng.hpp"
#include "csda/trainer.hpp"

using namespace csda;

namespace {

std::string file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Two-color 8x8 toy scene: background one color, a square block of the
// other; linearly separable by color alone.
Sample toy_sample(std::uint64_t seed) {
  Rng rng(seed);
  const int s = 8;
  Sample out;
  out.image = Tensor(Shape{s, s, 3}, 0.0);
  out.mask = Tensor(Shape{s, s}, 0.0);
  out.seed = seed;
  const int r0 = 1 + static_cast<int>(rng.uniform_int(3));
  const int c0 = 1 + static_cast<int>(rng.uniform_int(3));
  for (int r = 0; r < s; ++r)
    for (int c = 0; c < s; ++c) {
      const bool fg = r >= r0 && r < r0 + 4 && c >= c0 && c < c0 + 4;
      const std::size_t p = static_cast<std::size_t>(r * s + c) * 3;
      const double j = 0.02 * rng.uniform();
      if (fg) {
        out.image.data[p + 0] = 0.8 + j;
        out.image.data[p + 1] = 0.6 + j;
        out.image.data[p + 2] = 0.2 + j;
        out.mask.data[static_cast<std::size_t>(r * s + c)] = 1.0;
      } else {
        out.image.data[p + 0] = 0.2 + j;
        out.image.data[p + 1] = 0.3 + j;
        out.image.data[p + 2] = 0.7 + j;
      }
    }
  return out;
}

// Stacks toy samples into one NHWC batch plus a flat mask batch.
void toy_batch(int n, Tensor& x, Tensor& mask) {
  const int s = 8;
  x = Tensor(Shape{n, s, s, 3}, 0.0);
  mask = Tensor(Shape{n, s, s}, 0.0);
  for (int i = 0; i < n; ++i) {
    Sample t = toy_sample(static_cast<std::uint64_t>(i) + 1);
    std::copy(t.image.data.begin(), t.image.data.end(),
              x.data.begin() + static_cast<std::ptrdiff_t>(i) * s * s * 3);
    std::copy(t.mask.data.begin(), t.mask.data.end(),
              mask.data.begin() + static_cast<std::ptrdiff_t>(i) * s * s);
  }
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.image_size = 32;
  cfg.depth = 1;
  cfg.base_width = 2;
  cfg.d_cs = 2;
  cfg.batch_size = 4;
  cfg.max_epochs = 2;
  cfg.learning_rate = 1e-3;
  cfg.seed = 3;
  cfg.augment = false;
  return cfg;
}

DatasetManifest tiny_manifest() {
  SceneParams params;
  params.image_size = 32;
  return make_manifest(params, 8, 4, 4, 3, 11);
}

}  // namespace

TEST_CASE("adam first step has the closed form") {
  ParamStore params;
  params.push_back({"w", Tensor(Shape{3}, {1.0, 2.0, 3.0})});
  AdamState state;
  std::vector<std::vector<double>> grads{{1.0, 1.0, 1.0}};
  adam_step(params, grads, state, 1e-4);
  const double want_delta = -1e-4 / (1.0 + 1e-8);
  CHECK(params[0].value.data[0] == doctest::Approx(1.0 + want_delta).epsilon(1e-12));
  CHECK(params[0].value.data[2] == doctest::Approx(3.0 + want_delta).epsilon(1e-12));

  // zero gradient leaves parameters unchanged
  ParamStore zero;
  zero.push_back({"w", Tensor(Shape{2}, {5.0, 6.0})});
  AdamState zstate;
  adam_step(zero, {{0.0, 0.0}}, zstate, 1e-4);
  CHECK(zero[0].value.data == std::vector<double>{5.0, 6.0});
}

TEST_CASE("adam rejects a non-finite gradient, naming the parameter") {
  ParamStore params;
  params.push_back({"enc0_conv1_w", Tensor(Shape{1}, {1.0})});
  AdamState state;
  CHECK_THROWS_WITH_AS(
      adam_step(params, {{std::nan("")}}, state, 1e-4),
      doctest::Contains("enc0_conv1_w"), std::runtime_error);
}

TEST_CASE("plateau scheduler fires after three non-improving epochs") {
  PlateauScheduler sched(1e-4, 3, 0.5, 1e-6);
  CHECK(sched.observe(0.80) == doctest::Approx(1e-4));
  CHECK(sched.observe(0.79) == doctest::Approx(1e-4));
  CHECK(sched.observe(0.78) == doctest::Approx(1e-4));
  CHECK(sched.observe(0.77) == doctest::Approx(5e-5));

  PlateauScheduler up(1e-4, 3, 0.5, 1e-6);
  for (double v : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}) CHECK(up.observe(v) == doctest::Approx(1e-4));

  PlateauScheduler floor(1e-6, 3, 0.5, 1e-6);
  for (int i = 0; i < 8; ++i) floor.observe(0.5 - 0.01 * i);
  CHECK(floor.lr() == doctest::Approx(1e-6));
}

TEST_CASE("metrics from hand-computed confusion cases") {
  Confusion c{3, 1, 1, 5};
  SegMetrics m = metrics_from_confusion(c);
  CHECK(m.accuracy == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(m.precision == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(m.recall == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(m.f1 == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(m.iou_c1 == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(m.iou_c0 == doctest::Approx(5.0 / 7.0).epsilon(1e-12));
  CHECK(m.miou == doctest::Approx((0.6 + 5.0 / 7.0) / 2.0).epsilon(1e-12));
  CHECK(m.miou == doctest::Approx(0.6571).epsilon(1e-3));

  SegMetrics perfect = metrics_from_confusion(Confusion{4, 0, 0, 6});
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.miou == 1.0);

  // all-background prediction on a mixed image
  SegMetrics degenerate = metrics_from_confusion(Confusion{0, 0, 4, 6});
  CHECK(degenerate.recall == 0.0);
  CHECK(degenerate.iou_c1 == 0.0);
}

TEST_CASE("confusion counting thresholds scores against the mask") {
  Tensor scores(Shape{6}, {0.9, 0.8, 0.4, 0.3, 0.6, 0.1});
  Tensor mask(Shape{6}, {1, 1, 1, 0, 0, 0});
  Confusion c = confusion_counts(scores, mask, 0.5);
  CHECK(c.tp == 2);
  CHECK(c.fn == 1);
  CHECK(c.fp == 1);
  CHECK(c.tn == 2);
}

TEST_CASE("threshold sweep cases") {
  Tensor mask(Shape{6}, {1, 1, 1, 0, 0, 0});
  SweepResult perfect = threshold_sweep(mask, mask);
  CHECK(perfect.accuracy == doctest::Approx(1.0));
  CHECK(perfect.threshold == doctest::Approx(0.05));

  Tensor constant(Shape{6}, 0.5);
  Tensor skew(Shape{6}, {1, 0, 0, 0, 0, 0});
  SweepResult c = threshold_sweep(constant, skew);
  CHECK(c.accuracy == doctest::Approx(5.0 / 6.0));

  // inverted scores: brute force over the grid agrees
  Tensor inv(Shape{6}, {0.1, 0.2, 0.3, 0.7, 0.8, 0.9});
  SweepResult s = threshold_sweep(inv, mask);
  double brute = 0.0;
  for (int i = 1; i <= 19; ++i) {
    const double t = 0.05 * i;
    SegMetrics m = metrics_from_confusion(confusion_counts(inv, mask, t));
    brute = std::max(brute, m.accuracy);
  }
  CHECK(s.accuracy == doctest::Approx(brute));
}

TEST_CASE("config round trip is the identity") {
  TrainConfig cfg;
  cfg.variant = LossVariant::kCsdaLn;
  cfg.d_cs = 5;
  cfg.lambda_p = 0.7;
  cfg.lambda_f = 0.25;
  cfg.learning_rate = 3.5e-4;
  cfg.batch_size = 4;
  cfg.max_epochs = 17;
  cfg.patience = 2;
  cfg.lr_factor = 0.25;
  cfg.min_lr = 1e-7;
  cfg.seed = 123456789ULL;
  cfg.image_size = 32;
  cfg.ablation = AblationMode::kTwoNetFocal;
  cfg.depth = 2;
  cfg.base_width = 4;
  cfg.focal_gamma = 1.5;
  cfg.focal_alpha = 0.3;
  cfg.augment = false;
  TrainConfig back = parse_config(serialize_config(cfg));
  CHECK(serialize_config(back) == serialize_config(cfg));
  CHECK(back.variant == cfg.variant);
  CHECK(back.seed == cfg.seed);
  CHECK(back.learning_rate == cfg.learning_rate);
  CHECK(back.ablation == cfg.ablation);
  CHECK(back.augment == cfg.augment);
}

TEST_CASE("discriminant gradients touch only the colorspace net") {
  TrainConfig cfg = tiny_config();
  ModelPair model = model_for_config(cfg);
  Rng rng(15);
  Tensor x(Shape{2, 8, 8, 3}, 0.0);
  for (auto& v : x.data) v = rng.uniform();
  Tensor mask(Shape{2, 8, 8}, 0.0);
  for (auto& v : mask.data) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
  mask.data[0] = 0.0;
  mask.data[1] = 1.0;

  auto grads_norms = [&](bool discriminant_only) {
    Tape tape;
    std::vector<Tensor> cs, seg;
    for (const NamedParam& p : model.colorspace_params) cs.push_back(tape.leaf(p.value));
    for (const NamedParam& p : model.seg_params) seg.push_back(tape.leaf(p.value));
    Tensor y = forward_colorspace(model, cs, x);
    const LossConfig lcfg = cfg.loss_config();
    if (discriminant_only) {
      ClassStats stats = class_stats(y, mask);
      tape.backward(discriminant_loss(scatter_pair(stats), mean_diff(stats), lcfg));
    } else {
      Tensor probs = forward_segmentation(model, seg, y);
      tape.backward(focal_loss(probs, mask, lcfg));
    }
    double cs_norm = 0.0, seg_norm = 0.0;
    for (const Tensor& p : cs)
      for (double g : tape.grad(p)) cs_norm += g * g;
    for (const Tensor& p : seg)
      for (double g : tape.grad(p)) seg_norm += g * g;
    return std::pair<double, double>{cs_norm, seg_norm};
  };

  auto [dda_cs, dda_seg] = grads_norms(true);
  CHECK(dda_cs > 0.0);
  CHECK(dda_seg == 0.0);
  auto [focal_cs, focal_seg] = grads_norms(false);
  CHECK(focal_cs > 0.0);
  CHECK(focal_seg > 0.0);
}

TEST_CASE("training is deterministic and logs the best validation miou") {
  TrainConfig cfg = tiny_config();
  DatasetManifest manifest = tiny_manifest();
  TrainResult a = train(cfg, manifest);
  TrainResult b = train(cfg, manifest);
  write_metrics_csv("det_a.csv", a.log);
  write_metrics_csv("det_b.csv", b.log);
  CHECK(file_bytes("det_a.csv") == file_bytes("det_b.csv"));

  double max_val = -1.0;
  for (const EpochRow& row : a.log)
    if (row.split == "val") max_val = std::max(max_val, row.metrics.miou);
  CHECK(a.best_val_miou == doctest::Approx(max_val).epsilon(1e-12));
}

TEST_CASE("full mode with lambda_p zero reproduces two_net_focal exactly") {
  DatasetManifest manifest = tiny_manifest();
  TrainConfig a = tiny_config();
  a.ablation = AblationMode::kFull;
  a.lambda_p = 0.0;
  TrainConfig b = tiny_config();
  b.ablation = AblationMode::kTwoNetFocal;
  TrainResult ra = train(a, manifest);
  TrainResult rb = train(b, manifest);
  REQUIRE(ra.log.size() == rb.log.size());
  for (std::size_t i = 0; i < ra.log.size(); ++i) {
    CHECK(ra.log[i].loss == rb.log[i].loss);
    CHECK(ra.log[i].metrics.miou == rb.log[i].metrics.miou);
  }
}

TEST_CASE("checkpoint save and load round trip") {
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 1;
  DatasetManifest manifest = tiny_manifest();
  TrainResult result = train(cfg, manifest);
  save_checkpoint("ckpt_rt", cfg, result);
  Checkpoint back = load_checkpoint("ckpt_rt");
  CHECK(back.config.d_cs == cfg.d_cs);
  CHECK(back.threshold == doctest::Approx(result.threshold));
  REQUIRE(back.model.colorspace_params.size() == result.model.colorspace_params.size());

  // predictions of the restored model match at 32-bit parameter precision
  Sample s = generate(manifest.params, manifest.entries[0].seed);
  Tensor p1 = predict(result.model, s);
  Tensor p2 = predict(back.model, s);
  REQUIRE(p1.dims == p2.dims);
  for (std::size_t i = 0; i < p1.size(); ++i)
    CHECK(p1.data[i] == doctest::Approx(p2.data[i]).epsilon(1e-5));
}

TEST_CASE("focal training separates a two-color toy set") {
  TrainConfig cfg;
  cfg.ablation = AblationMode::kFocalOnly;
  cfg.depth = 1;
  cfg.base_width = 4;
  cfg.image_size = 8;
  cfg.seed = 2;
  ModelPair model = model_for_config(cfg);
  const LossConfig lcfg = cfg.loss_config();

  Tensor x, mask;
  toy_batch(4, x, mask);

  AdamState state;
  for (int step = 0; step < 200; ++step) {
    Tape tape;
    std::vector<Tensor> seg;
    for (const NamedParam& p : model.seg_params) seg.push_back(tape.leaf(p.value));
    Tensor probs = forward_segmentation(model, seg, x);
    tape.backward(focal_loss(probs, mask, lcfg));
    std::vector<std::vector<double>> grads;
    for (const Tensor& p : seg) grads.push_back(tape.grad(p));
    adam_step(model.seg_params, grads, state, 1e-2);
  }

  std::vector<Tensor> seg;
  for (const NamedParam& p : model.seg_params) seg.push_back(p.value);
  Tensor probs = forward_segmentation(model, seg, x);
  SegMetrics m = metrics_from_confusion(confusion_counts(probs, mask, 0.5));
  CHECK(m.f1 > 0.99);
}

TEST_CASE("dda training separates the toy set after a threshold sweep") {
  TrainConfig cfg;
  cfg.ablation = AblationMode::kDdaOnly;
  cfg.variant = LossVariant::kCsdaDelta;
  cfg.depth = 1;
  cfg.base_width = 4;
  cfg.image_size = 8;
  cfg.seed = 2;
  ModelPair model = model_for_config(cfg);
  CHECK(model.colorspace_spec.out_channels == 1);
  const LossConfig lcfg = cfg.loss_config();

  Tensor x, mask;
  toy_batch(4, x, mask);

  AdamState state;
  for (int step = 0; step < 100; ++step) {
    Tape tape;
    std::vector<Tensor> cs;
    for (const NamedParam& p : model.colorspace_params) cs.push_back(tape.leaf(p.value));
    Tensor y = forward_colorspace(model, cs, x);
    ClassStats stats = class_stats(y, mask);
    tape.backward(discriminant_loss(scatter_pair(stats), mean_diff(stats), lcfg));
    std::vector<std::vector<double>> grads;
    for (const Tensor& p : cs) grads.push_back(tape.grad(p));
    adam_step(model.colorspace_params, grads, state, 1e-2);
  }

  std::vector<Tensor> cs;
  for (const NamedParam& p : model.colorspace_params) cs.push_back(p.value);
  Tensor y = forward_colorspace(model, cs, x);
  SweepResult sweep = threshold_sweep(y, mask);
  CHECK(sweep.accuracy > 0.99);
}

TEST_CASE("evaluate_split aggregates per family") {
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 1;
  DatasetManifest manifest = tiny_manifest();
  TrainResult result = train(cfg, manifest);
  EvalResult ev = evaluate_split(result.model, manifest, "test", result.threshold);
  CHECK(ev.per_image.size() == 4);
  CHECK_FALSE(ev.per_family.empty());
  int n = 0;
  for (const auto& [fam, count] : ev.family_counts) n += count;
  CHECK(n == 4);
  write_eval_csv("eval_rt.csv", ev);
  write_family_csv("families_rt.csv", ev);
  CHECK(std::filesystem::file_size("eval_rt.csv") > 0);
  CHECK(std::filesystem::file_size("families_rt.csv") > 0);
}
