// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "langtrack/autodiff.hpp"
#include "langtrack/geometry.hpp"

#include <vector>

namespace langtrack {

struct LossWeights {
  double cls = 2.0;
  double l1 = 5.0;
  double giou = 2.0;
};

// Injective prediction -> ground-truth map; -1 marks background predictions.
struct Assignment {
  std::vector<int> pred_to_gt;
  double cost = 0.0;
};

// Minimum-total-cost assignment for a rectangular cost matrix, O(n^3).
// Matches min(P, G) pairs; when P >= G every ground truth gets matched.
Assignment hungarian_match(const Eigen::MatrixXd& cost);

// Per-query binary focal terms. `targets` holds 0/1 per row; alpha scales
// the whole term, so gamma = 0, alpha = 1 is exactly cross-entropy.
ad::Var focal_loss(ad::Tape& t, ad::Var scores, const Eigen::VectorXd& targets,
                   double alpha = 0.25, double gamma = 2.0);

// Row-wise sums of absolute differences over all four box coordinates.
ad::Var l1_box_loss(ad::Var pred_boxes, ad::Var gt_boxes);

// Row-wise 1 - GIoU for cxcywh boxes, in [0, 2].
ad::Var giou_loss_rows(ad::Var pred_boxes, ad::Var gt_boxes);

Eigen::MatrixXd boxes_to_matrix(const std::vector<Box>& boxes);

// Matching cost between detection predictions and ground truths:
// cls * (-score) + l1 * L1 + giou * (1 - GIoU), evaluated on plain values.
Eigen::MatrixXd detection_cost(const Eigen::VectorXd& scores,
                               const Eigen::MatrixXd& boxes,
                               const std::vector<Box>& gts,
                               const LossWeights& w);

// Weighted loss over one query group under a fixed assignment: matched rows
// incur focal(target 1) + L1 + GIoU, background rows focal(target 0) only.
// Component fields hold the unweighted sums for reporting.
struct GroupLoss {
  ad::Var total;
  double cls = 0.0;
  double l1 = 0.0;
  double giou = 0.0;
};
GroupLoss frame_loss(ad::Tape& t, ad::Var scores, ad::Var boxes,
                     const std::vector<Box>& gts, const Assignment& assign,
                     const LossWeights& w);

// Ground truth for one frame of a training clip. `newborn` flags first
// appearances, the only targets detect queries are matched against.
struct FrameGt {
  std::vector<int> ids;
  std::vector<Box> boxes;
  std::vector<bool> newborn;
};

// Predictions for one frame, split by query kind. Track queries carry the
// identity they follow; identity matching needs no Hungarian step.
struct FramePreds {
  ad::Var det_scores, det_boxes;
  ad::Var trk_scores, trk_boxes;
  std::vector<int> trk_ids;
};

struct ClipLossReport {
  ad::Var total;                  // scalar tape node, normalized
  double value = 0.0;
  double tracking = 0.0;          // weighted sums before normalization
  double detection = 0.0;
  int normalizer = 0;             // total ground-truth targets in the clip
  std::vector<double> frame_tracking;
  std::vector<double> frame_detection;
};

// Per-clip training loss: identity-matched track terms plus Hungarian-matched
// detection terms, summed over frames and divided by the total target count.
// A clip with no targets anywhere has loss 0.
ClipLossReport clip_loss(ad::Tape& t, const std::vector<FramePreds>& frames,
                         const std::vector<FrameGt>& gts,
                         const LossWeights& w);

}  // namespace langtrack
