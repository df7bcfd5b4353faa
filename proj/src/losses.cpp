// SPDX-License-Identifier: Apache-2.0
#include "langtrack/losses.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace langtrack {

namespace {

constexpr double kProbEps = 1e-12;

// Kuhn-Munkres with potentials over a rows <= cols matrix. Returns, for each
// column, the assigned row or -1.
std::vector<int> solve_rect(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_to_row(m, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] > 0) col_to_row[j - 1] = p[j] - 1;
  }
  return col_to_row;
}

}  // namespace

Assignment hungarian_match(const Eigen::MatrixXd& cost) {
  const int preds = static_cast<int>(cost.rows());
  const int gts = static_cast<int>(cost.cols());
  Assignment out;
  out.pred_to_gt.assign(preds, -1);
  if (preds == 0 || gts == 0) return out;
  if (!cost.allFinite()) {
    throw std::runtime_error("hungarian_match: costs must be finite");
  }
  if (preds <= gts) {
    const std::vector<int> col_to_row = solve_rect(cost);
    for (int j = 0; j < gts; ++j) {
      if (col_to_row[j] >= 0) out.pred_to_gt[col_to_row[j]] = j;
    }
  } else {
    const std::vector<int> col_to_row = solve_rect(cost.transpose());
    for (int j = 0; j < preds; ++j) {
      if (col_to_row[j] >= 0) out.pred_to_gt[j] = col_to_row[j];
    }
  }
  for (int i = 0; i < preds; ++i) {
    if (out.pred_to_gt[i] >= 0) out.cost += cost(i, out.pred_to_gt[i]);
  }
  return out;
}

ad::Var focal_loss(ad::Tape& t, ad::Var scores, const Eigen::VectorXd& targets,
                   double alpha, double gamma) {
  if (scores.cols() != 1 || scores.rows() != targets.size()) {
    throw std::runtime_error("focal_loss: scores must be targets-length column");
  }
  const Eigen::Index n = targets.size();
  // p_t = t*p + (1-t)*(1-p), folded into one affine map of p.
  Eigen::MatrixXd slope(n, 1), offset(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    slope(i, 0) = 2.0 * targets(i) - 1.0;
    offset(i, 0) = 1.0 - targets(i);
  }
  ad::Var pt = ad::add(ad::cmul(t.constant(slope), scores),
                       t.constant(offset));
  pt = ad::clamp(pt, kProbEps, 1.0 - kProbEps);
  ad::Var modulator =
      ad::pow_const(ad::add_const(ad::neg(pt), 1.0), gamma);
  ad::Var nll = ad::neg(ad::log_(pt));
  return ad::scale(ad::cmul(modulator, nll), alpha);
}

ad::Var l1_box_loss(ad::Var pred_boxes, ad::Var gt_boxes) {
  return ad::rowsum(ad::abs_(ad::sub(pred_boxes, gt_boxes)));
}

ad::Var giou_loss_rows(ad::Var pred_boxes, ad::Var gt_boxes) {
  if (pred_boxes.cols() != 4 || gt_boxes.cols() != 4) {
    throw std::runtime_error("giou_loss_rows: boxes must be M x 4");
  }
  auto corners = [](ad::Var b) {
    ad::Var cx = ad::slice_cols(b, 0, 1);
    ad::Var cy = ad::slice_cols(b, 1, 1);
    ad::Var w = ad::slice_cols(b, 2, 1);
    ad::Var h = ad::slice_cols(b, 3, 1);
    ad::Var hw = ad::scale(w, 0.5);
    ad::Var hh = ad::scale(h, 0.5);
    struct C {
      ad::Var x1, y1, x2, y2, w, h;
    };
    return C{ad::sub(cx, hw), ad::sub(cy, hh), ad::add(cx, hw),
             ad::add(cy, hh), w, h};
  };
  auto p = corners(pred_boxes);
  auto g = corners(gt_boxes);

  ad::Var iw = ad::relu(ad::sub(ad::cmin(p.x2, g.x2), ad::cmax(p.x1, g.x1)));
  ad::Var ih = ad::relu(ad::sub(ad::cmin(p.y2, g.y2), ad::cmax(p.y1, g.y1)));
  ad::Var inter = ad::cmul(iw, ih);
  ad::Var uni = ad::sub(ad::add(ad::cmul(p.w, p.h), ad::cmul(g.w, g.h)), inter);
  ad::Var iou = ad::cdiv(inter, uni);

  ad::Var ew = ad::sub(ad::cmax(p.x2, g.x2), ad::cmin(p.x1, g.x1));
  ad::Var eh = ad::sub(ad::cmax(p.y2, g.y2), ad::cmin(p.y1, g.y1));
  ad::Var enclose = ad::cmul(ew, eh);
  ad::Var giou = ad::sub(iou, ad::cdiv(ad::sub(enclose, uni), enclose));
  return ad::add_const(ad::neg(giou), 1.0);
}

Eigen::MatrixXd boxes_to_matrix(const std::vector<Box>& boxes) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(boxes.size()), 4);
  for (size_t i = 0; i < boxes.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = boxes[i].cx;
    m(static_cast<Eigen::Index>(i), 1) = boxes[i].cy;
    m(static_cast<Eigen::Index>(i), 2) = boxes[i].w;
    m(static_cast<Eigen::Index>(i), 3) = boxes[i].h;
  }
  return m;
}

Eigen::MatrixXd detection_cost(const Eigen::VectorXd& scores,
                               const Eigen::MatrixXd& boxes,
                               const std::vector<Box>& gts,
                               const LossWeights& w) {
  const Eigen::Index preds = scores.size();
  Eigen::MatrixXd cost(preds, static_cast<Eigen::Index>(gts.size()));
  for (Eigen::Index i = 0; i < preds; ++i) {
    Box pb{boxes(i, 0), boxes(i, 1), boxes(i, 2), boxes(i, 3)};
    for (size_t j = 0; j < gts.size(); ++j) {
      double l1 = std::abs(pb.cx - gts[j].cx) + std::abs(pb.cy - gts[j].cy) +
                  std::abs(pb.w - gts[j].w) + std::abs(pb.h - gts[j].h);
      cost(i, static_cast<Eigen::Index>(j)) = w.cls * (-scores(i)) +
                                              w.l1 * l1 +
                                              w.giou * (1.0 - giou(pb, gts[j]));
    }
  }
  return cost;
}

GroupLoss frame_loss(ad::Tape& t, ad::Var scores, ad::Var boxes,
                     const std::vector<Box>& gts, const Assignment& assign,
                     const LossWeights& w) {
  if (w.cls < 0 || w.l1 < 0 || w.giou < 0) {
    throw std::runtime_error("frame_loss: negative loss weight");
  }
  const int n = static_cast<int>(scores.rows());
  if (static_cast<int>(assign.pred_to_gt.size()) != n || boxes.rows() != n) {
    throw std::runtime_error("frame_loss: assignment/prediction size mismatch");
  }
  GroupLoss out;
  if (n == 0) {
    out.total = t.constant(Eigen::MatrixXd::Zero(1, 1));
    return out;
  }
  Eigen::VectorXd targets = Eigen::VectorXd::Zero(n);
  std::vector<int> matched_pred, matched_gt;
  for (int i = 0; i < n; ++i) {
    const int j = assign.pred_to_gt[i];
    if (j < 0) continue;
    if (j >= static_cast<int>(gts.size())) {
      throw std::runtime_error("frame_loss: assignment points past ground truth");
    }
    targets(i) = 1.0;
    matched_pred.push_back(i);
    matched_gt.push_back(j);
  }

  ad::Var cls = ad::sum(focal_loss(t, scores, targets));
  out.cls = t.scalar(cls);
  ad::Var total = ad::scale(cls, w.cls);

  if (!matched_pred.empty()) {
    std::vector<Box> picked;
    picked.reserve(matched_gt.size());
    for (int j : matched_gt) picked.push_back(gts[static_cast<size_t>(j)]);
    ad::Var pred_rows = ad::gather_rows(boxes, matched_pred);
    ad::Var gt_rows = t.constant(boxes_to_matrix(picked));
    ad::Var l1 = ad::sum(l1_box_loss(pred_rows, gt_rows));
    ad::Var gl = ad::sum(giou_loss_rows(pred_rows, gt_rows));
    out.l1 = t.scalar(l1);
    out.giou = t.scalar(gl);
    total = ad::add(total, ad::add(ad::scale(l1, w.l1), ad::scale(gl, w.giou)));
  }
  out.total = total;
  return out;
}

ClipLossReport clip_loss(ad::Tape& t, const std::vector<FramePreds>& frames,
                         const std::vector<FrameGt>& gts,
                         const LossWeights& w) {
  if (frames.size() != gts.size()) {
    throw std::runtime_error("clip_loss: frame count mismatch");
  }
  ClipLossReport rep;
  ad::Var total = t.constant(Eigen::MatrixXd::Zero(1, 1));
  for (size_t f = 0; f < frames.size(); ++f) {
    const FramePreds& pred = frames[f];
    const FrameGt& gt = gts[f];
    if (gt.ids.size() != gt.boxes.size() ||
        gt.ids.size() != gt.newborn.size()) {
      throw std::runtime_error("clip_loss: ground-truth field size mismatch");
    }
    rep.normalizer += static_cast<int>(gt.ids.size());

    // Track queries follow identities; each matches its own target if that
    // target is present, otherwise it is background this frame.
    Assignment track_assign;
    track_assign.pred_to_gt.assign(pred.trk_ids.size(), -1);
    for (size_t i = 0; i < pred.trk_ids.size(); ++i) {
      const auto it =
          std::find(gt.ids.begin(), gt.ids.end(), pred.trk_ids[i]);
      if (it != gt.ids.end()) {
        track_assign.pred_to_gt[i] =
            static_cast<int>(std::distance(gt.ids.begin(), it));
      }
    }
    GroupLoss track = frame_loss(t, pred.trk_scores, pred.trk_boxes, gt.boxes,
                                 track_assign, w);

    // Detect queries only compete for newborn targets.
    std::vector<Box> newborn_boxes;
    std::vector<int> newborn_index;
    for (size_t j = 0; j < gt.ids.size(); ++j) {
      if (gt.newborn[j]) {
        newborn_boxes.push_back(gt.boxes[j]);
        newborn_index.push_back(static_cast<int>(j));
      }
    }
    Assignment det_assign;
    const int nd = static_cast<int>(pred.det_scores.rows());
    if (newborn_boxes.empty()) {
      det_assign.pred_to_gt.assign(nd, -1);
    } else {
      det_assign = hungarian_match(
          detection_cost(pred.det_scores.value().col(0),
                         pred.det_boxes.value(), newborn_boxes, w));
      for (int& j : det_assign.pred_to_gt) {
        if (j >= 0) j = newborn_index[static_cast<size_t>(j)];
      }
    }
    GroupLoss det = frame_loss(t, pred.det_scores, pred.det_boxes, gt.boxes,
                               det_assign, w);

    rep.frame_tracking.push_back(t.scalar(track.total));
    rep.frame_detection.push_back(t.scalar(det.total));
    rep.tracking += rep.frame_tracking.back();
    rep.detection += rep.frame_detection.back();
    total = ad::add(total, ad::add(track.total, det.total));
  }
  if (rep.normalizer > 0) {
    total = ad::scale(total, 1.0 / rep.normalizer);
  } else {
    total = t.constant(Eigen::MatrixXd::Zero(1, 1));
  }
  rep.total = total;
  rep.value = t.scalar(total);
  return rep;
}

}  // namespace langtrack
