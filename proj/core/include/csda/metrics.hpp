#ifndef CSDA_METRICS_HPP
#define CSDA_METRICS_HPP

#include <cstddef>

#include "csda/tensor.hpp"

namespace csda {

// Pixel confusion counts with class C1 = blade = mask 1.
struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  void merge(const Confusion& other) {
    tp += other.tp;
    fp += other.fp;
    fn += other.fn;
    tn += other.tn;
  }
};

struct SegMetrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  double iou_c0 = 0, iou_c1 = 0, miou = 0;
};

// Ratios with zero denominators resolve to 0, except an IoU whose class
// is absent on both sides, which is vacuously 1.
SegMetrics metrics_from_confusion(const Confusion& c);

// Thresholds `scores` at `threshold` (predict 1 when score > threshold)
// against a binary mask with the same pixel count.
Confusion confusion_counts(const Tensor& scores, const Tensor& mask, double threshold);

// Accuracy sweep over thresholds {0.05, 0.10, ..., 0.95}; ties resolve to
// the lower threshold.
struct SweepResult {
  double threshold = 0.5;
  double accuracy = 0;
};
SweepResult threshold_sweep(const Tensor& scores, const Tensor& mask);

}  // namespace csda

#endif  // CSDA_METRICS_HPP
