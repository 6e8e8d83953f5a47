#include "csda/metrics.hpp"

namespace csda {

SegMetrics metrics_from_confusion(const Confusion& c) {
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  SegMetrics m;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = m.precision + m.recall > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  m.iou_c1 = c.tp + c.fp + c.fn == 0 ? 1.0 : ratio(c.tp, c.tp + c.fp + c.fn);
  m.iou_c0 = c.tn + c.fp + c.fn == 0 ? 1.0 : ratio(c.tn, c.tn + c.fp + c.fn);
  m.miou = (m.iou_c0 + m.iou_c1) / 2.0;
  return m;
}

Confusion confusion_counts(const Tensor& scores, const Tensor& mask, double threshold) {
  if (scores.size() != mask.size())
    throw std::invalid_argument("confusion_counts: shape mismatch " +
                                shape_str(scores.dims) + " vs " + shape_str(mask.dims));
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores.data[i] > threshold;
    const bool truth = mask.data[i] == 1.0;
    if (pred && truth) ++c.tp;
    else if (pred && !truth) ++c.fp;
    else if (!pred && truth) ++c.fn;
    else ++c.tn;
  }
  return c;
}

SweepResult threshold_sweep(const Tensor& scores, const Tensor& mask) {
  SweepResult best;
  best.accuracy = -1.0;
  for (int i = 1; i <= 19; ++i) {
    const double t = 0.05 * i;
    const Confusion c = confusion_counts(scores, mask, t);
    const double acc = metrics_from_confusion(c).accuracy;
    if (acc > best.accuracy) {  // strict: ties keep the lower threshold
      best.accuracy = acc;
      best.threshold = t;
    }
  }
  return best;
}

}  // namespace csda
