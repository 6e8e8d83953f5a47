#include "csda/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "csda/rng.hpp"

namespace csda {

void adam_step(ParamStore& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, double lr) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  if (grads.size() != params.size())
    throw std::invalid_argument("adam_step: gradient count mismatch");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].value.size(), 0.0);
      state.v[i].assign(params[i].value.size(), 0.0);
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& theta = params[i].value.data;
    const auto& g = grads[i];
    if (g.size() != theta.size())
      throw std::invalid_argument("adam_step: gradient shape mismatch for " +
                                  params[i].name);
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      if (!std::isfinite(g[j]))
        throw std::runtime_error("adam_step: non-finite gradient in parameter " +
                                 params[i].name);
      m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * g[j];
      v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      theta[j] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

double PlateauScheduler::observe(double score) {
  if (score > best_) {
    best_ = score;
    bad_epochs_ = 0;
  } else if (++bad_epochs_ >= patience_) {
    lr_ = std::max(lr_ * factor_, min_lr_);
    bad_epochs_ = 0;
  }
  return lr_;
}

ModelPair model_for_config(const TrainConfig& config) {
  NetworkSpec base;
  base.depth = config.depth;
  base.base_width = config.base_width;
  base.skip_connections = true;
  switch (config.ablation) {
    case AblationMode::kFull:
    case AblationMode::kTwoNetFocal:
      return build_model_pair(config.d_cs, base, config.seed, true, false);
    case AblationMode::kFocalOnly:
      return build_model_pair(config.d_cs, base, config.seed, true, true);
    case AblationMode::kDdaOnly:
      return build_model_pair(1, base, config.seed, false, false);
  }
  throw std::logic_error("model_for_config: bad ablation mode");
}

namespace {

std::vector<Tensor> make_leaves(Tape& tape, const ParamStore& store) {
  std::vector<Tensor> leaves;
  leaves.reserve(store.size());
  for (const NamedParam& p : store) leaves.push_back(tape.leaf(p.value));
  return leaves;
}

std::vector<Tensor> plain_values(const ParamStore& store) {
  std::vector<Tensor> values;
  values.reserve(store.size());
  for (const NamedParam& p : store) values.push_back(p.value);
  return values;
}

// Stacks normalized images and masks into batch tensors.
void assemble_batch(const std::vector<Sample>& samples, Tensor& x, Tensor& mask) {
  const int n = static_cast<int>(samples.size());
  const int h = samples[0].mask.dims[0], w = samples[0].mask.dims[1];
  x = Tensor(Shape{n, h, w, 3}, 0.0);
  mask = Tensor(Shape{n, h, w}, 0.0);
  for (int i = 0; i < n; ++i) {
    std::copy(samples[static_cast<std::size_t>(i)].image.data.begin(),
              samples[static_cast<std::size_t>(i)].image.data.end(),
              x.data.begin() + static_cast<std::size_t>(i) * h * w * 3);
    std::copy(samples[static_cast<std::size_t>(i)].mask.data.begin(),
              samples[static_cast<std::size_t>(i)].mask.data.end(),
              mask.data.begin() + static_cast<std::size_t>(i) * h * w);
  }
}

struct BatchLoss {
  Tensor loss;
  Tensor probs;  // probability map used for running train metrics
  bool skipped_discriminant = false;
  bool skip_update = false;  // DDA-only batch with an empty class
};

BatchLoss batch_forward(const TrainConfig& config, const ModelPair& model,
                        const std::vector<Tensor>& leaves_cs,
                        const std::vector<Tensor>& leaves_seg, const Tensor& x,
                        const Tensor& mask) {
  const LossConfig lcfg = config.loss_config();
  BatchLoss out;
  const bool use_cs = !model.colorspace_params.empty();
  Tensor y;
  if (use_cs) y = forward_colorspace(model, leaves_cs, x);
  if (model.seg_enabled)
    out.probs = forward_segmentation(model, leaves_seg, use_cs ? y : x);
  else
    out.probs = y;

  switch (config.ablation) {
    case AblationMode::kFull: {
      try {
        ClassStats stats = class_stats(y, mask);
        Tensor u = mean_diff(stats);
        ScatterPair pair = scatter_pair(stats);
        TotalLossResult total = total_loss(out.probs, mask, &pair, &u, lcfg);
        out.loss = total.value;
      } catch (const EmptyClassError&) {
        TotalLossResult total = total_loss(out.probs, mask, nullptr, nullptr, lcfg);
        out.loss = total.value;
        out.skipped_discriminant = true;
      }
      break;
    }
    case AblationMode::kTwoNetFocal:
    case AblationMode::kFocalOnly:
      out.loss = focal_loss(out.probs, mask, lcfg);
      break;
    case AblationMode::kDdaOnly: {
      try {
        ClassStats stats = class_stats(y, mask);
        Tensor u = mean_diff(stats);
        ScatterPair pair = scatter_pair(stats);
        out.loss = discriminant_loss(pair, u, lcfg);
      } catch (const EmptyClassError&) {
        out.skip_update = true;
        out.skipped_discriminant = true;
      }
      break;
    }
  }
  return out;
}

Tensor squeeze_to_mask(const Tensor& probs, int image_index, int h, int w) {
  Tensor out(Shape{h, w}, 0.0);
  const std::size_t offset = static_cast<std::size_t>(image_index) * h * w;
  std::copy(probs.data.begin() + static_cast<std::ptrdiff_t>(offset),
            probs.data.begin() + static_cast<std::ptrdiff_t>(offset + static_cast<std::size_t>(h) * w),
            out.data.begin());
  return out;
}

std::string fmt_row(const EpochRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.8g",
                r.epoch, r.split.c_str(), r.loss, r.metrics.accuracy,
                r.metrics.precision, r.metrics.recall, r.metrics.f1, r.metrics.iou_c0,
                r.metrics.iou_c1, r.metrics.miou, r.lr);
  return buf;
}

}  // namespace

Tensor predict(const ModelPair& model, const Sample& sample) {
  const Tensor norm = normalize(sample.image);
  const int h = norm.dims[0], w = norm.dims[1];
  Tensor x(Shape{1, h, w, 3}, 0.0);
  x.data = norm.data;
  const bool use_cs = !model.colorspace_params.empty();
  Tensor y;
  if (use_cs) y = forward_colorspace(model, plain_values(model.colorspace_params), x);
  Tensor probs;
  if (model.seg_enabled)
    probs = forward_segmentation(model, plain_values(model.seg_params), use_cs ? y : x);
  else
    probs = y;
  if (probs.dims.back() != 1)
    throw std::runtime_error("predict: expected single-channel output");
  return squeeze_to_mask(probs, 0, h, w);
}

TrainResult train(const TrainConfig& config, const DatasetManifest& manifest) {
  std::vector<Sample> train_samples = materialize_split(manifest, "train");
  std::vector<Sample> val_samples = materialize_split(manifest, "val");
  if (train_samples.empty() || val_samples.empty())
    throw std::runtime_error("train: dataset needs nonempty train and val splits");
  for (Sample& s : train_samples) s.image = normalize(s.image);

  TrainResult result;
  result.model = model_for_config(config);
  ModelPair& model = result.model;
  const bool is_dda = config.ablation == AblationMode::kDdaOnly;

  // One optimizer state across both stores, colorspace first.
  ParamStore all_params;
  auto rebuild_all = [&]() {
    all_params.clear();
    for (const NamedParam& p : model.colorspace_params) all_params.push_back(p);
    for (const NamedParam& p : model.seg_params) all_params.push_back(p);
  };
  auto writeback = [&]() {
    std::size_t k = 0;
    for (NamedParam& p : model.colorspace_params) p.value = all_params[k++].value;
    for (NamedParam& p : model.seg_params) p.value = all_params[k++].value;
  };
  rebuild_all();

  AdamState adam;
  PlateauScheduler scheduler(config.learning_rate, config.patience, config.lr_factor,
                             config.min_lr);
  ParamStore best_cs = model.colorspace_params;
  ParamStore best_seg = model.seg_params;
  result.best_val_miou = -1.0;

  const std::size_t n_train = train_samples.size();
  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    // seeded shuffle
    Rng shuffle_rng(Rng::derive(config.seed, 5000ull + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n_train; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    Confusion train_conf;
    double loss_sum = 0.0;
    int counted_batches = 0;
    std::size_t cursor = 0;
    std::uint64_t sample_counter = 0;
    int batch_index = 0;
    while (cursor < n_train) {
      const std::size_t take =
          std::min<std::size_t>(static_cast<std::size_t>(config.batch_size),
                                n_train - cursor);
      std::vector<Sample> batch;
      batch.reserve(take);
      for (std::size_t i = 0; i < take; ++i) {
        const Sample& s = train_samples[order[cursor + i]];
        if (config.augment) {
          const std::uint64_t aug_seed =
              Rng::derive(config.seed, 1000000ull * static_cast<std::uint64_t>(epoch) +
                                           sample_counter++);
          batch.push_back(augment(s, aug_seed));
        } else {
          batch.push_back(s);
        }
      }
      cursor += take;
      ++batch_index;

      Tensor x, mask;
      assemble_batch(batch, x, mask);

      Tape tape;
      std::vector<Tensor> leaves_cs = make_leaves(tape, model.colorspace_params);
      std::vector<Tensor> leaves_seg = make_leaves(tape, model.seg_params);
      BatchLoss bl = batch_forward(config, model, leaves_cs, leaves_seg, x, mask);
      if (bl.skipped_discriminant) ++result.empty_class_batches;
      if (bl.skip_update) continue;
      if (!std::isfinite(bl.loss.item()))
        throw std::runtime_error("train: non-finite loss at epoch " +
                                 std::to_string(epoch) + " batch " +
                                 std::to_string(batch_index) + " (" +
                                 to_string(config.ablation) + ")");
      tape.backward(bl.loss);

      std::vector<std::vector<double>> grads;
      grads.reserve(all_params.size());
      for (const Tensor& leaf : leaves_cs) grads.push_back(tape.grad(leaf));
      for (const Tensor& leaf : leaves_seg) grads.push_back(tape.grad(leaf));
      adam_step(all_params, grads, adam, scheduler.lr());
      writeback();

      loss_sum += bl.loss.item();
      ++counted_batches;
      train_conf.merge(confusion_counts(bl.probs, mask, 0.5));
    }

    EpochRow train_row;
    train_row.epoch = epoch;
    train_row.split = "train";
    train_row.loss = counted_batches ? loss_sum / counted_batches : 0.0;
    train_row.metrics = metrics_from_confusion(train_conf);
    train_row.lr = scheduler.lr();
    result.log.push_back(train_row);

    // ---- validation ----
    std::vector<Tensor> val_scores;
    val_scores.reserve(val_samples.size());
    for (const Sample& s : val_samples) val_scores.push_back(predict(model, s));

    double threshold = 0.5;
    if (is_dda) {
      // pool all validation pixels for the sweep
      std::size_t total = 0;
      for (const Tensor& s : val_scores) total += s.size();
      Tensor pooled(Shape{static_cast<int>(total)}, 0.0);
      Tensor pooled_mask(Shape{static_cast<int>(total)}, 0.0);
      std::size_t at = 0;
      for (std::size_t i = 0; i < val_samples.size(); ++i) {
        std::copy(val_scores[i].data.begin(), val_scores[i].data.end(),
                  pooled.data.begin() + static_cast<std::ptrdiff_t>(at));
        std::copy(val_samples[i].mask.data.begin(), val_samples[i].mask.data.end(),
                  pooled_mask.data.begin() + static_cast<std::ptrdiff_t>(at));
        at += val_scores[i].size();
      }
      threshold = threshold_sweep(pooled, pooled_mask).threshold;
    }

    Confusion val_conf;
    for (std::size_t i = 0; i < val_samples.size(); ++i)
      val_conf.merge(confusion_counts(val_scores[i], val_samples[i].mask, threshold));
    const SegMetrics val_metrics = metrics_from_confusion(val_conf);

    // validation loss, forward-only
    double val_loss = 0.0;
    {
      const LossConfig lcfg = config.loss_config();
      int n = 0;
      for (std::size_t i = 0; i < val_samples.size(); ++i) {
        Tensor probs(Shape{val_scores[i].dims[0], val_scores[i].dims[1], 1},
                     std::vector<double>(val_scores[i].data));
        try {
          if (config.ablation == AblationMode::kFocalOnly ||
              config.ablation == AblationMode::kTwoNetFocal) {
            val_loss += focal_loss(probs, val_samples[i].mask, lcfg).item();
          } else if (is_dda) {
            ClassStats stats = class_stats(probs, val_samples[i].mask);
            Tensor u = mean_diff(stats);
            ScatterPair pair = scatter_pair(stats);
            val_loss += discriminant_loss(pair, u, lcfg).item();
          } else {
            // full mode: discriminant on the colorspace output
            const Sample& s = val_samples[i];
            Tensor norm = normalize(s.image);
            Tensor x(Shape{1, norm.dims[0], norm.dims[1], 3}, std::vector<double>(norm.data));
            Tensor y = forward_colorspace(model, plain_values(model.colorspace_params), x);
            ClassStats stats = class_stats(y, s.mask);
            Tensor u = mean_diff(stats);
            ScatterPair pair = scatter_pair(stats);
            TotalLossResult total = total_loss(probs, s.mask, &pair, &u, lcfg);
            val_loss += total.value.item();
          }
          ++n;
        } catch (const EmptyClassError&) {
        }
      }
      if (n) val_loss /= n;
    }

    EpochRow val_row;
    val_row.epoch = epoch;
    val_row.split = "val";
    val_row.loss = val_loss;
    val_row.metrics = val_metrics;
    val_row.lr = scheduler.lr();
    result.log.push_back(val_row);

    if (val_metrics.miou > result.best_val_miou) {
      result.best_val_miou = val_metrics.miou;
      result.best_epoch = epoch;
      best_cs = model.colorspace_params;
      best_seg = model.seg_params;
      result.threshold = threshold;
    }
    scheduler.observe(val_metrics.miou);
  }

  model.colorspace_params = std::move(best_cs);
  model.seg_params = std::move(best_seg);
  return result;
}

EvalResult evaluate(const ModelPair& model, const std::vector<Sample>& samples,
                    const std::vector<int>& family_ids, double threshold) {
  if (samples.empty()) throw std::runtime_error("evaluate: empty split");
  EvalResult r;
  Confusion aggregate;
  std::map<int, Confusion> family_conf;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Tensor scores = predict(model, samples[i]);
    const Confusion c = confusion_counts(scores, samples[i].mask, threshold);
    r.per_image.push_back(metrics_from_confusion(c));
    const int family = i < family_ids.size() ? family_ids[i] : 0;
    r.family_ids.push_back(family);
    aggregate.merge(c);
    family_conf[family].merge(c);
    ++r.family_counts[family];
  }
  r.aggregate = metrics_from_confusion(aggregate);
  for (const auto& [family, conf] : family_conf)
    r.per_family[family] = metrics_from_confusion(conf);
  return r;
}

EvalResult evaluate_split(const ModelPair& model, const DatasetManifest& manifest,
                          const std::string& split, double threshold) {
  const std::vector<Sample> samples = materialize_split(manifest, split);
  std::vector<int> families;
  for (const ManifestEntry& e : split_entries(manifest, split))
    families.push_back(e.family_id);
  return evaluate(model, samples, families, threshold);
}

void write_metrics_csv(const std::string& path, const std::vector<EpochRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  os << "epoch,split,loss,acc,precision,recall,f1,iou0,iou1,miou,lr\n";
  for (const EpochRow& r : rows) os << fmt_row(r) << "\n";
}

void write_family_csv(const std::string& path, const EvalResult& result) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_family_csv: cannot open " + path);
  os << "family_id,n_images,acc,f1,miou\n";
  for (const auto& [family, m] : result.per_family) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%.6f,%.6f", family,
                  result.family_counts.at(family), m.accuracy, m.f1, m.miou);
    os << buf << "\n";
  }
}

void write_eval_csv(const std::string& path, const EvalResult& result) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_eval_csv: cannot open " + path);
  os << "image,family_id,acc,precision,recall,f1,iou0,iou1,miou\n";
  char buf[192];
  for (std::size_t i = 0; i < result.per_image.size(); ++i) {
    const SegMetrics& m = result.per_image[i];
    std::snprintf(buf, sizeof(buf), "%zu,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", i,
                  result.family_ids[i], m.accuracy, m.precision, m.recall, m.f1,
                  m.iou_c0, m.iou_c1, m.miou);
    os << buf << "\n";
  }
  const SegMetrics& m = result.aggregate;
  std::snprintf(buf, sizeof(buf), "aggregate,-1,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f",
                m.accuracy, m.precision, m.recall, m.f1, m.iou_c0, m.iou_c1, m.miou);
  os << buf << "\n";
}

void save_checkpoint(const std::string& dir, const TrainConfig& config,
                     const TrainResult& result) {
  std::filesystem::create_directories(dir);
  save_params(dir, result.model.colorspace_params, result.model.seg_params);
  save_config(dir + "/config.txt", config);
  std::ofstream os(dir + "/threshold.txt");
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", result.threshold);
  os << buf << "\n";
}

Checkpoint load_checkpoint(const std::string& dir) {
  Checkpoint ckpt;
  ckpt.config = load_config(dir + "/config.txt");
  ckpt.model = model_for_config(ckpt.config);
  load_params(dir, ckpt.model.colorspace_params, ckpt.model.seg_params);
  std::ifstream ts(dir + "/threshold.txt");
  if (ts) ts >> ckpt.threshold;
  return ckpt;
}

}  // namespace csda
