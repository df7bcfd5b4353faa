// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "langtrack/mot_io.hpp"

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace langtrack {

// Both evaluators score a result Sequence against a ground-truth Sequence.
// Sequences must use positive ids, unique per frame; frame indices start at 1
// and missing frames read as empty. CLEAR and HOTA require a non-empty ground
// truth and throw std::invalid_argument otherwise.

inline constexpr int kNumAlphas = 19;

// k-th IoU threshold of the HOTA grid: 0.05, 0.10, ..., 0.95.
inline double alpha_level(int k) { return 0.05 * (k + 1); }

struct ClearScores {
  double mota = 0.0;
  int id_switches = 0;
  int false_positives = 0;
  int false_negatives = 0;
};

// All values are fractions; evaluate() converts to percentages.
struct HotaScores {
  double hota = 0.0;
  double deta = 0.0;
  double assa = 0.0;
  std::array<double, kNumAlphas> hota_alpha{};
  std::array<double, kNumAlphas> deta_alpha{};
  std::array<double, kNumAlphas> assa_alpha{};
};

// Scalar scores are percentages, per-alpha arrays stay fractions.
struct MetricsReport {
  double hota = 0.0;
  double deta = 0.0;
  double assa = 0.0;
  double mota = 0.0;
  double idf1 = 0.0;
  int id_switches = 0;
  int false_positives = 0;
  int false_negatives = 0;
  std::array<double, kNumAlphas> hota_alpha{};
  std::array<double, kNumAlphas> deta_alpha{};
  std::array<double, kNumAlphas> assa_alpha{};
};

// CLEAR-MOT protocol: matches from the previous frame persist while their
// IoU stays at or above the threshold, the remainder is Hungarian-matched,
// and an id switch is counted against a ground truth's last known partner.
// MOTA = 1 - (FN + FP + IDSW) / total ground-truth boxes.
ClearScores clear_mot(const Sequence& gt, const Sequence& res,
                      double iou_threshold = 0.5);

// Identity F1: one global bipartite mapping between ground-truth ids and
// result ids maximizing IDTP, then 2*IDTP / (2*IDTP + IDFP + IDFN).
// Conventions: empty gt and empty result give 1, empty gt alone gives 0.
double idf1(const Sequence& gt, const Sequence& res,
            double iou_threshold = 0.5);

// Higher-order tracking accuracy over the 19-threshold grid. Per alpha the
// per-frame matching maximizes the final HOTA_alpha: exactly (exhaustive
// search) when the matching space is small, otherwise via the two-pass
// alignment-score protocol refined by a hill climb on the same objective.
HotaScores hota(const Sequence& gt, const Sequence& res);

// All six Table-1 columns in one report.
MetricsReport evaluate(const Sequence& gt, const Sequence& res);

// JSON object mirroring MetricsReport field for field.
std::string report_json(const MetricsReport& report);

// Aligned text table, one row per named report, columns in Table-1 order:
// HOTA AssA DetA MOTA IDF1 IDS.
std::string report_table(
    const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace langtrack
