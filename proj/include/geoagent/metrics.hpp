#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "geoagent/tiling.hpp"

namespace geoagent {

/// K x K pixel counts; entry (i, j) counts pixels of truth i predicted as j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes)
      : classes_(classes), counts_(static_cast<std::size_t>(classes) * classes, 0) {}

  int classes() const { return classes_; }
  std::uint64_t at(int truth, int pred) const {
    return counts_[static_cast<std::size_t>(truth) * classes_ + pred];
  }
  void add(int truth, int pred, std::uint64_t n = 1) {
    counts_[static_cast<std::size_t>(truth) * classes_ + pred] += n;
  }
  std::uint64_t total() const;

 private:
  int classes_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion(const LabelMask& truth, const LabelMask& pred, int classes);

/// Mean over classes present in truth or prediction. Throws
/// UndefinedScoreError when no class is present.
double miou(const ConfusionMatrix& cm);
double mf1(const ConfusionMatrix& cm);

/// mIoU + mF1, in [0, 2].
double score(const LabelMask& truth, const LabelMask& pred);
double score(const ConfusionMatrix& cm);

/// Score gain of the chosen-scale prediction over the local-only one.
double patch_reward(const LabelMask& truth, const LabelMask& pred_scaled,
                    const LabelMask& pred_local);

/// T times the whole-map score gain over the local-only map.
double map_reward(const LabelMask& truth, const LabelMask& pred, const LabelMask& pred_local,
                  std::size_t patch_count);

struct RewardRecord {
  std::size_t t = 0;
  int action = 1;
  double patch_reward = 0.0;
  std::optional<double> map_bonus;  // only at t = T-1

  double total() const { return patch_reward + map_bonus.value_or(0.0); }
};

}  // namespace geoagent
