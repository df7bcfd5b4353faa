// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <langtrack/losses.hpp>
#include <langtrack/rng.hpp>

#include "support/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

using namespace langtrack;

namespace {

double focal_closed_form(double p, double target, double alpha, double gamma) {
  const double pt = target > 0.5 ? p : 1.0 - p;
  return alpha * std::pow(1.0 - pt, gamma) * (-std::log(pt));
}

// Minimum cost over every injective assignment of the smaller side.
double brute_force_cost(const Eigen::MatrixXd& c) {
  Eigen::MatrixXd a = c;
  if (a.rows() > a.cols()) a = c.transpose().eval();
  const int small = static_cast<int>(a.rows());
  const int large = static_cast<int>(a.cols());
  std::vector<int> order(large);
  std::iota(order.begin(), order.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int i = 0; i < small; ++i) s += a(i, order[i]);
    best = std::min(best, s);
  } while (std::next_permutation(order.begin(), order.end()));
  return best;
}

Eigen::MatrixXd random_cost(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-2.0, 2.0);
  }
  return m;
}

}  // namespace

TEST_CASE("focal terms match the closed form") {
  ad::Tape t;
  Eigen::MatrixXd p(3, 1);
  p << 0.5, 0.5, 1.0 - 1e-15;
  Eigen::VectorXd targets(3);
  targets << 1.0, 0.0, 1.0;
  const Eigen::MatrixXd v =
      focal_loss(t, t.constant(p), targets, 0.25, 2.0).value();
  CHECK(v(0, 0) == doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-12));
  CHECK(v(0, 0) == doctest::Approx(0.0433216988).epsilon(1e-7));
  CHECK(v(1, 0) == doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-12));
  // A perfect prediction costs (numerically) nothing.
  CHECK(v(2, 0) <= 1e-20);
}

TEST_CASE("focal with gamma zero and alpha one is cross-entropy") {
  Rng rng(5);
  ad::Tape t;
  Eigen::MatrixXd p(1000, 1);
  Eigen::VectorXd targets(1000);
  for (int i = 0; i < 1000; ++i) {
    p(i, 0) = rng.uniform(0.01, 0.99);
    targets(i) = rng.uniform() < 0.5 ? 0.0 : 1.0;
  }
  const Eigen::MatrixXd v =
      focal_loss(t, t.constant(p), targets, 1.0, 0.0).value();
  for (int i = 0; i < 1000; ++i) {
    const double ce = -(targets(i) * std::log(p(i, 0)) +
                        (1.0 - targets(i)) * std::log(1.0 - p(i, 0)));
    CHECK(v(i, 0) == doctest::Approx(ce).epsilon(1e-12));
  }
}

TEST_CASE("focal gradients match finite differences") {
  ParamStore store;
  Param& probe = store.add("probe.p", 6, 1);
  Rng rng(6);
  Eigen::VectorXd targets(6);
  for (int i = 0; i < 6; ++i) {
    probe.value(i, 0) = rng.uniform(0.05, 0.95);
    targets(i) = i % 2;
  }
  testsupport::LossBuilder build = [&](ad::Tape& t) {
    return ad::sum(focal_loss(t, t.leaf(store.at("probe.p")), targets));
  };
  const testsupport::GradReport rep = testsupport::gradcheck(store, build);
  INFO(rep.where);
  CHECK(rep.max_err < 1e-4);
}

TEST_CASE("box l1 sums coordinate gaps") {
  ad::Tape t;
  Eigen::MatrixXd a(2, 4), b(2, 4);
  a << 0.5, 0.5, 0.2, 0.2, 0.1, 0.2, 0.3, 0.4;
  b << 0.5, 0.5, 0.2, 0.4, 0.1, 0.2, 0.3, 0.4;
  const Eigen::MatrixXd v = l1_box_loss(t.constant(a), t.constant(b)).value();
  CHECK(v(0, 0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(v(1, 0) == 0.0);
  const Eigen::MatrixXd r = l1_box_loss(t.constant(b), t.constant(a)).value();
  CHECK(v == r);
}

TEST_CASE("giou loss agrees with the scalar geometry") {
  ad::Tape t;
  SUBCASE("identical boxes cost zero") {
    Eigen::MatrixXd a(1, 4);
    a << 0.4, 0.4, 0.3, 0.3;
    CHECK(giou_loss_rows(t.constant(a), t.constant(a)).value()(0, 0) == 0.0);
  }
  SUBCASE("corner-touching unit-grid halves") {
    Eigen::MatrixXd a(1, 4), b(1, 4);
    a << 0.25, 0.25, 0.5, 0.5;
    b << 0.75, 0.75, 0.5, 0.5;
    const double v = giou_loss_rows(t.constant(a), t.constant(b)).value()(0, 0);
    CHECK(v == doctest::Approx(1.5).epsilon(1e-12));
  }
  SUBCASE("far tiny boxes approach the upper bound") {
    Eigen::MatrixXd a(1, 4), b(1, 4);
    a << 0.01, 0.01, 0.005, 0.005;
    b << 0.99, 0.99, 0.005, 0.005;
    const double v = giou_loss_rows(t.constant(a), t.constant(b)).value()(0, 0);
    CHECK(v > 1.99);
    CHECK(v <= 2.0);
  }
  SUBCASE("random pairs match the double-sided evaluation") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      Box pa{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
             rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4)};
      Box pb{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
             rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4)};
      Eigen::MatrixXd a(1, 4), b(1, 4);
      a << pa.cx, pa.cy, pa.w, pa.h;
      b << pb.cx, pb.cy, pb.w, pb.h;
      const double v =
          giou_loss_rows(t.constant(a), t.constant(b)).value()(0, 0);
      CHECK(v == doctest::Approx(1.0 - giou(pa, pb)).epsilon(1e-12));
      CHECK(v >= 0.0);
      CHECK(v <= 2.0);
    }
  }
}

TEST_CASE("giou gradients match finite differences") {
  ParamStore store;
  Param& probe = store.add("probe.boxes", 3, 4);
  probe.value << 0.3, 0.3, 0.2, 0.25, 0.62, 0.41, 0.3, 0.2, 0.8, 0.8, 0.1, 0.15;
  Eigen::MatrixXd gt(3, 4);
  gt << 0.35, 0.27, 0.24, 0.2, 0.5, 0.5, 0.26, 0.24, 0.2, 0.24, 0.12, 0.18;
  testsupport::LossBuilder build = [&](ad::Tape& t) {
    return ad::sum(
        giou_loss_rows(t.leaf(store.at("probe.boxes")), t.constant(gt)));
  };
  const testsupport::GradReport rep = testsupport::gradcheck(store, build);
  INFO(rep.where);
  CHECK(rep.max_err < 1e-4);
}

TEST_CASE("assignment examples") {
  Eigen::MatrixXd c(2, 2);
  c << 1, 2, 3, 0;
  Assignment a = hungarian_match(c);
  CHECK(a.pred_to_gt == std::vector<int>{0, 1});
  CHECK(a.cost == doctest::Approx(1.0));

  Eigen::MatrixXd d = Eigen::MatrixXd::Ones(4, 4);
  d.diagonal().setZero();
  Assignment id = hungarian_match(d);
  CHECK(id.pred_to_gt == std::vector<int>{0, 1, 2, 3});
  CHECK(id.cost == 0.0);

  CHECK(hungarian_match(Eigen::MatrixXd(0, 3)).pred_to_gt.empty());
  Assignment none = hungarian_match(Eigen::MatrixXd(3, 0));
  CHECK(none.pred_to_gt == std::vector<int>{-1, -1, -1});

  Eigen::MatrixXd bad(1, 1);
  bad << std::numeric_limits<double>::infinity();
  CHECK_THROWS(hungarian_match(bad));
}

TEST_CASE("assignment matches brute force on small instances") {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const int rows = static_cast<int>(rng.uniform_int(1, 5));
    const int cols = static_cast<int>(rng.uniform_int(1, 5));
    const Eigen::MatrixXd c = random_cost(rng, rows, cols);
    const Assignment a = hungarian_match(c);
    int matched = 0;
    std::vector<bool> used(cols, false);
    for (int j : a.pred_to_gt) {
      if (j < 0) continue;
      CHECK(!used[j]);
      used[j] = true;
      ++matched;
    }
    CHECK(matched == std::min(rows, cols));
    CHECK(a.cost == doctest::Approx(brute_force_cost(c)).epsilon(1e-9));
  }
}

TEST_CASE("frame loss composes the weighted terms") {
  ad::Tape t;
  Eigen::MatrixXd scores(2, 1);
  scores << 0.5, 0.25;
  Eigen::MatrixXd boxes(2, 4);
  boxes << 0.5, 0.5, 0.2, 0.2, 0.9, 0.9, 0.1, 0.1;
  const std::vector<Box> gts = {{0.5, 0.5, 0.2, 0.4}};
  Assignment assign;
  assign.pred_to_gt = {0, -1};

  GroupLoss gl = frame_loss(t, t.constant(scores), t.constant(boxes), gts,
                            assign, LossWeights{});
  const double cls_want = focal_closed_form(0.5, 1, 0.25, 2) +
                          focal_closed_form(0.25, 0, 0.25, 2);
  CHECK(gl.cls == doctest::Approx(cls_want).epsilon(1e-12));
  CHECK(gl.l1 == doctest::Approx(0.2).epsilon(1e-12));
  // Concentric boxes: IoU 1/2, enclosure equals union, GIoU 1/2.
  CHECK(gl.giou == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(t.scalar(gl.total) ==
        doctest::Approx(2.0 * cls_want + 5.0 * 0.2 + 2.0 * 0.5).epsilon(1e-12));

  SUBCASE("zero weights zero the loss") {
    GroupLoss z = frame_loss(t, t.constant(scores), t.constant(boxes), gts,
                             assign, LossWeights{0.0, 0.0, 0.0});
    CHECK(t.scalar(z.total) == 0.0);
  }
  SUBCASE("perfect predictions cost nothing") {
    Eigen::MatrixXd ps(2, 1);
    ps << 1.0 - 1e-15, 1e-15;
    Eigen::MatrixXd pb(2, 4);
    pb << 0.5, 0.5, 0.2, 0.4, 0.9, 0.9, 0.1, 0.1;
    GroupLoss perfect = frame_loss(t, t.constant(ps), t.constant(pb), gts,
                                   assign, LossWeights{});
    CHECK(t.scalar(perfect.total) <= 1e-18);
  }
  SUBCASE("negative weights are rejected") {
    CHECK_THROWS(frame_loss(t, t.constant(scores), t.constant(boxes), gts,
                            assign, LossWeights{-1.0, 5.0, 2.0}));
  }
}

namespace {

// Two-frame clip with two tracked identities, one of which disappears, plus
// one newborn in each frame. Boxes are well separated so the matching is
// stable under finite-difference probes.
struct ClipFixture {
  ParamStore store;
  std::vector<FrameGt> gts;

  ClipFixture() {
    FrameGt g0;
    g0.ids = {1, 2, 3};
    g0.boxes = {{0.2, 0.2, 0.15, 0.2}, {0.6, 0.3, 0.2, 0.25},
                {0.75, 0.75, 0.18, 0.22}};
    g0.newborn = {false, false, true};
    FrameGt g1;
    g1.ids = {1, 4};
    g1.boxes = {{0.25, 0.22, 0.16, 0.2}, {0.45, 0.7, 0.2, 0.2}};
    g1.newborn = {false, true};
    gts = {g0, g1};

    auto add_probe = [&](const std::string& name, int rows, int cols,
                         double lo, double hi, std::uint64_t seed) {
      Param& p = store.add(name, rows, cols);
      Rng rng(seed);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) p.value(r, c) = rng.uniform(lo, hi);
      }
    };
    add_probe("det_scores0", 4, 1, 0.1, 0.9, 21);
    add_probe("det_boxes0", 4, 4, 0.1, 0.45, 22);
    add_probe("det_scores1", 4, 1, 0.1, 0.9, 23);
    add_probe("det_boxes1", 4, 4, 0.1, 0.45, 24);
    add_probe("trk_scores0", 2, 1, 0.2, 0.8, 25);
    add_probe("trk_boxes0", 2, 4, 0.15, 0.4, 26);
    add_probe("trk_scores1", 2, 1, 0.2, 0.8, 27);
    add_probe("trk_boxes1", 2, 4, 0.15, 0.4, 28);
  }

  std::vector<FramePreds> frames(ad::Tape& t) {
    std::vector<FramePreds> fr(2);
    fr[0].det_scores = t.leaf(store.at("det_scores0"));
    fr[0].det_boxes = t.leaf(store.at("det_boxes0"));
    fr[0].trk_scores = t.leaf(store.at("trk_scores0"));
    fr[0].trk_boxes = t.leaf(store.at("trk_boxes0"));
    fr[0].trk_ids = {1, 2};
    fr[1].det_scores = t.leaf(store.at("det_scores1"));
    fr[1].det_boxes = t.leaf(store.at("det_boxes1"));
    fr[1].trk_scores = t.leaf(store.at("trk_scores1"));
    fr[1].trk_boxes = t.leaf(store.at("trk_boxes1"));
    fr[1].trk_ids = {1, 2};  // identity 2 is gone: background target
    return fr;
  }
};

}  // namespace

TEST_CASE("clip loss bookkeeping") {
  ClipFixture fix;
  ad::Tape t;
  ClipLossReport rep = clip_loss(t, fix.frames(t), fix.gts, LossWeights{});
  CHECK(rep.normalizer == 5);
  CHECK(rep.tracking >= 0.0);
  CHECK(rep.detection >= 0.0);
  CHECK(rep.value >= 0.0);
  CHECK(rep.frame_tracking.size() == 2);
  CHECK(rep.value == doctest::Approx((rep.tracking + rep.detection) / 5.0)
                         .epsilon(1e-12));

  SUBCASE("no targets anywhere means zero loss") {
    std::vector<FrameGt> empty(2);
    ClipLossReport z = clip_loss(t, fix.frames(t), empty, LossWeights{});
    CHECK(z.value == 0.0);
    CHECK(z.normalizer == 0);
  }
}

TEST_CASE("single all-newborn frame reduces to matched detection loss") {
  ParamStore store;
  Rng rng(31);
  Param& ds = store.add("ds", 3, 1);
  Param& db = store.add("db", 3, 4);
  for (int i = 0; i < 3; ++i) {
    ds.value(i, 0) = rng.uniform(0.2, 0.8);
    for (int j = 0; j < 4; ++j) db.value(i, j) = rng.uniform(0.1, 0.4);
  }
  FrameGt gt;
  gt.ids = {7, 9};
  gt.boxes = {{0.3, 0.3, 0.2, 0.2}, {0.7, 0.6, 0.25, 0.2}};
  gt.newborn = {true, true};

  ad::Tape t;
  FramePreds fp;
  fp.det_scores = t.leaf(store.at("ds"));
  fp.det_boxes = t.leaf(store.at("db"));
  fp.trk_scores = t.constant(Eigen::MatrixXd(0, 1));
  fp.trk_boxes = t.constant(Eigen::MatrixXd(0, 4));
  ClipLossReport rep = clip_loss(t, {fp}, {gt}, LossWeights{});

  Assignment assign = hungarian_match(
      detection_cost(ds.value.col(0), db.value, gt.boxes, LossWeights{}));
  GroupLoss direct = frame_loss(t, t.leaf(store.at("ds")),
                                t.leaf(store.at("db")), gt.boxes, assign,
                                LossWeights{});
  CHECK(rep.value ==
        doctest::Approx(t.scalar(direct.total) / 2.0).epsilon(1e-12));
}

TEST_CASE("duplicating a frame leaves the normalized total unchanged") {
  ClipFixture fix;
  ad::Tape t;
  std::vector<FramePreds> one = {fix.frames(t)[0]};
  std::vector<FrameGt> one_gt = {fix.gts[0]};
  std::vector<FramePreds> two = {one[0], one[0]};
  std::vector<FrameGt> two_gt = {one_gt[0], one_gt[0]};
  const double a = clip_loss(t, one, one_gt, LossWeights{}).value;
  const double b = clip_loss(t, two, two_gt, LossWeights{}).value;
  CHECK(a == doctest::Approx(b).epsilon(1e-15));
}

TEST_CASE("detect query order does not matter") {
  ClipFixture fix;
  ad::Tape t;
  const double base = clip_loss(t, fix.frames(t), fix.gts, LossWeights{}).value;

  // Reverse the detect rows in both frames and rerun.
  for (const char* nm : {"det_scores0", "det_boxes0", "det_scores1",
                         "det_boxes1"}) {
    fix.store.at(nm).value = fix.store.at(nm).value.colwise().reverse().eval();
  }
  const double flipped =
      clip_loss(t, fix.frames(t), fix.gts, LossWeights{}).value;
  CHECK(base == doctest::Approx(flipped).epsilon(1e-12));
}

TEST_CASE("clip loss gradients match finite differences") {
  ClipFixture fix;
  testsupport::LossBuilder build = [&](ad::Tape& t) {
    return clip_loss(t, fix.frames(t), fix.gts, LossWeights{}).total;
  };
  const testsupport::GradReport rep = testsupport::gradcheck(fix.store, build);
  INFO(rep.where);
  CHECK(rep.max_err < 1e-4);
}
