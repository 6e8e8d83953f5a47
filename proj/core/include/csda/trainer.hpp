#ifndef CSDA_TRAINER_HPP
#define CSDA_TRAINER_HPP

#include <map>
#include <string>
#include <vector>

#include "csda/config.hpp"
#include "csda/data.hpp"
#include "csda/metrics.hpp"
#include "csda/network.hpp"

namespace csda {

// Standard Adam (beta1 0.9, beta2 0.999, eps 1e-8) with bias correction.
// Throws std::runtime_error naming the parameter on a non-finite gradient.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  long step = 0;
};
void adam_step(ParamStore& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, double lr);

// Reduce-on-plateau over a higher-is-better validation score: after
// `patience` consecutive epochs without improvement the rate halves
// (times lr_factor) down to min_lr and the counter resets.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, int patience, double factor, double min_lr)
      : lr_(lr), patience_(patience), factor_(factor), min_lr_(min_lr) {}

  double observe(double score);
  double lr() const { return lr_; }

 private:
  double lr_;
  int patience_;
  double factor_;
  double min_lr_;
  double best_ = -1e300;
  int bad_epochs_ = 0;
};

struct EpochRow {
  int epoch = 0;
  std::string split;
  double loss = 0;
  SegMetrics metrics;
  double lr = 0;
};

struct TrainResult {
  ModelPair model;  // best-validation-mIoU parameters
  std::vector<EpochRow> log;
  double best_val_miou = 0;
  int best_epoch = -1;
  double threshold = 0.5;  // swept for the DDA ablation, fixed 0.5 otherwise
  int empty_class_batches = 0;
};

// End-to-end training on a dataset manifest. Fully deterministic in
// (config, manifest).
TrainResult train(const TrainConfig& config, const DatasetManifest& manifest);

// Probability map for one sample (normalized internally). For the DDA
// ablation this is the single colorspace channel itself.
Tensor predict(const ModelPair& model, const Sample& sample);

struct EvalResult {
  std::vector<SegMetrics> per_image;
  std::vector<int> family_ids;
  SegMetrics aggregate;  // micro-average over all pixels
  std::map<int, SegMetrics> per_family;
  std::map<int, int> family_counts;
};

EvalResult evaluate(const ModelPair& model, const std::vector<Sample>& samples,
                    const std::vector<int>& family_ids, double threshold);
EvalResult evaluate_split(const ModelPair& model, const DatasetManifest& manifest,
                          const std::string& split, double threshold);

// CSV writers. Metric log: epoch,split,loss,acc,precision,recall,f1,
// iou0,iou1,miou,lr. Family results: family_id,n_images,acc,f1,miou.
void write_metrics_csv(const std::string& path, const std::vector<EpochRow>& rows);
void write_family_csv(const std::string& path, const EvalResult& result);
void write_eval_csv(const std::string& path, const EvalResult& result);

// Checkpoint directory: params.csdt + manifest.txt (see network.hpp) plus
// config.txt carrying the TrainConfig and the decision threshold.
void save_checkpoint(const std::string& dir, const TrainConfig& config,
                     const TrainResult& result);
struct Checkpoint {
  TrainConfig config;
  ModelPair model;
  double threshold = 0.5;
};
Checkpoint load_checkpoint(const std::string& dir);

// Rebuilds the (untrained) model pair an ablation mode calls for.
ModelPair model_for_config(const TrainConfig& config);

}  // namespace csda

#endif  // CSDA_TRAINER_HPP
