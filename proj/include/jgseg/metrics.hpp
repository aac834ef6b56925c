// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Overlap metrics on integer label masks. Convention: a class absent from
// both prediction and ground truth scores 1.0 (correct absence).

#pragma once

#include <cstdint>
#include <vector>

#include "jgseg/tensor.hpp"

namespace jgseg {

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
};

inline void check_mask_pair(const Tensor<int>& pred, const Tensor<int>& gt) {
  if (!(pred.shape() == gt.shape()))
    throw InvalidArgument("mask shape mismatch: " + shape_str(pred.shape()) + " vs " +
                          shape_str(gt.shape()));
}

inline ConfusionCounts confusion(const Tensor<int>& pred, const Tensor<int>& gt, int cls) {
  check_mask_pair(pred, gt);
  ConfusionCounts c;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const bool p = pred[i] == cls, g = gt[i] == cls;
    if (p && g)
      ++c.tp;
    else if (p && !g)
      ++c.fp;
    else if (!p && g)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

// 2 TP / (2 TP + FP + FN); 1.0 when the class is absent from both masks.
inline double dice_score(const Tensor<int>& pred, const Tensor<int>& gt, int cls) {
  const ConfusionCounts c = confusion(pred, gt, cls);
  const std::int64_t den = 2 * c.tp + c.fp + c.fn;
  if (den == 0) return 1.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
}

// TP / (TP + FP + FN); 1.0 when absent from both.
inline double jc_index(const Tensor<int>& pred, const Tensor<int>& gt, int cls) {
  const ConfusionCounts c = confusion(pred, gt, cls);
  const std::int64_t den = c.tp + c.fp + c.fn;
  if (den == 0) return 1.0;
  return static_cast<double>(c.tp) / static_cast<double>(den);
}

// Mean IoU over classes >= 1 from dataset-accumulated confusion counts.
// counts[c] accumulates class c over the whole evaluation set.
inline double miou_from_counts(const std::vector<ConfusionCounts>& counts) {
  if (counts.size() < 2) throw InvalidArgument("miou needs at least 2 classes");
  double acc = 0.0;
  for (size_t c = 1; c < counts.size(); ++c) {
    const auto& cc = counts[c];
    const std::int64_t den = cc.tp + cc.fp + cc.fn;
    acc += den == 0 ? 1.0 : static_cast<double>(cc.tp) / static_cast<double>(den);
  }
  return acc / static_cast<double>(counts.size() - 1);
}

inline void accumulate_confusion(std::vector<ConfusionCounts>& counts, const Tensor<int>& pred,
                                 const Tensor<int>& gt) {
  for (size_t c = 0; c < counts.size(); ++c) {
    const ConfusionCounts cc = confusion(pred, gt, static_cast<int>(c));
    counts[c].tp += cc.tp;
    counts[c].fp += cc.fp;
    counts[c].fn += cc.fn;
    counts[c].tn += cc.tn;
  }
}

// Single-pair mIoU convenience.
inline double miou(const Tensor<int>& pred, const Tensor<int>& gt, int num_classes) {
  if (num_classes < 2) throw InvalidArgument("miou needs at least 2 classes");
  std::vector<ConfusionCounts> counts(static_cast<size_t>(num_classes));
  accumulate_confusion(counts, pred, gt);
  return miou_from_counts(counts);
}

}  // namespace jgseg
