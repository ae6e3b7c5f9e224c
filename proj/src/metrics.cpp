#include "geoagent/metrics.hpp"

#include <numeric>
#include <string>

#include "geoagent/errors.hpp"

namespace geoagent {

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

ConfusionMatrix confusion(const LabelMask& truth, const LabelMask& pred, int classes) {
  if (truth.height != pred.height || truth.width != pred.width) {
    throw DimensionError("confusion: mask shapes differ (" + std::to_string(truth.height) + "x" +
                         std::to_string(truth.width) + " vs " + std::to_string(pred.height) + "x" +
                         std::to_string(pred.width) + ")");
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.data.size(); ++i) {
    if (truth.data[i] >= classes || pred.data[i] >= classes) {
      throw DimensionError("confusion: label value outside [0, " + std::to_string(classes) + ")");
    }
    cm.add(truth.data[i], pred.data[i]);
  }
  return cm;
}

namespace {

struct ClassCounts {
  double tp = 0, fp = 0, fn = 0;
};

template <class PerClass>
double class_mean(const ConfusionMatrix& cm, PerClass per_class, const char* what) {
  const int K = cm.classes();
  double sum = 0.0;
  int present = 0;
  for (int k = 0; k < K; ++k) {
    ClassCounts c;
    c.tp = static_cast<double>(cm.at(k, k));
    for (int j = 0; j < K; ++j) {
      if (j == k) continue;
      c.fn += static_cast<double>(cm.at(k, j));
      c.fp += static_cast<double>(cm.at(j, k));
    }
    if (c.tp + c.fp + c.fn == 0) continue;
    sum += per_class(c);
    ++present;
  }
  if (present == 0) throw UndefinedScoreError(std::string(what) + ": no class present");
  return sum / present;
}

}  // namespace

double miou(const ConfusionMatrix& cm) {
  return class_mean(cm, [](const ClassCounts& c) { return c.tp / (c.tp + c.fp + c.fn); }, "miou");
}

double mf1(const ConfusionMatrix& cm) {
  return class_mean(
      cm, [](const ClassCounts& c) { return 2.0 * c.tp / (2.0 * c.tp + c.fp + c.fn); }, "mf1");
}

double score(const ConfusionMatrix& cm) { return miou(cm) + mf1(cm); }

double score(const LabelMask& truth, const LabelMask& pred) {
  const int K = std::max(truth.classes, pred.classes);
  return score(confusion(truth, pred, K));
}

double patch_reward(const LabelMask& truth, const LabelMask& pred_scaled,
                    const LabelMask& pred_local) {
  return score(truth, pred_scaled) - score(truth, pred_local);
}

double map_reward(const LabelMask& truth, const LabelMask& pred, const LabelMask& pred_local,
                  std::size_t patch_count) {
  return static_cast<double>(patch_count) * patch_reward(truth, pred, pred_local);
}

}  // namespace geoagent
