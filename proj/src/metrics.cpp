// SPDX-License-Identifier: Apache-2.0
#include "langtrack/metrics.hpp"

#include "langtrack/losses.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace langtrack {

namespace {

constexpr double kForbidden = 1e9;

void validate_sequence(const Sequence& seq, const char* what) {
  for (const auto& [frame, dets] : seq.frames) {
    if (frame < 1) {
      throw std::invalid_argument(std::string(what) +
                                  ": frame indices start at 1");
    }
    std::unordered_set<int> seen;
    for (const TrackedBox& d : dets) {
      if (d.id <= 0) {
        throw std::invalid_argument(std::string(what) + ": ids must be positive");
      }
      if (!seen.insert(d.id).second) {
        throw std::invalid_argument(std::string(what) +
                                    ": duplicate id in frame " +
                                    std::to_string(frame));
      }
    }
  }
}

// One frame of both sequences with ids compacted to dense indices.
struct HFrame {
  std::vector<int> g;                     // gt id index per gt det
  std::vector<int> r;                     // result id index per result det
  std::vector<std::vector<double>> sim;   // IoU, g.size() x r.size()
};

struct HProblem {
  std::vector<HFrame> frames;
  std::vector<int> g_count;  // dets per gt id
  std::vector<int> r_count;  // dets per result id
  int total_gt = 0;
  int total_res = 0;
};

HProblem build_problem(const Sequence& gt, const Sequence& res) {
  HProblem p;
  std::unordered_map<int, int> gid, rid;
  const int last = std::max(gt.num_frames(), res.num_frames());
  p.frames.resize(last);
  for (int f = 1; f <= last; ++f) {
    HFrame& hf = p.frames[f - 1];
    for (const TrackedBox& d : gt.at(f)) {
      auto [it, fresh] = gid.emplace(d.id, static_cast<int>(gid.size()));
      if (fresh) p.g_count.push_back(0);
      hf.g.push_back(it->second);
      ++p.g_count[it->second];
      ++p.total_gt;
    }
    for (const TrackedBox& d : res.at(f)) {
      auto [it, fresh] = rid.emplace(d.id, static_cast<int>(rid.size()));
      if (fresh) p.r_count.push_back(0);
      hf.r.push_back(it->second);
      ++p.r_count[it->second];
      ++p.total_res;
    }
    const auto& gd = gt.at(f);
    const auto& rd = res.at(f);
    hf.sim.assign(gd.size(), std::vector<double>(rd.size(), 0.0));
    for (std::size_t i = 0; i < gd.size(); ++i) {
      for (std::size_t j = 0; j < rd.size(); ++j) {
        hf.sim[i][j] = iou(gd[i].box, rd[j].box);
      }
    }
  }
  return p;
}

// Pair-count bookkeeping shared by the exact search and the hill climb.
struct PairCounts {
  std::vector<std::vector<int>> m;  // matches per (gt id, result id)
  std::vector<int> gmt, rmt;        // matches per gt id / per result id
  int tp = 0;

  PairCounts(int ng, int nr)
      : m(ng, std::vector<int>(nr, 0)), gmt(ng, 0), rmt(nr, 0) {}

  void add(int g, int r, int delta) {
    m[g][r] += delta;
    gmt[g] += delta;
    rmt[r] += delta;
    tp += delta;
  }
};

struct AlphaScore {
  double hota2 = -1.0;
  double deta = 0.0;
  double assa = 0.0;
};

// DetA * AssA for the current counts. AssA uses the symmetric association
// convention: for a matched pair, the error terms count every detection of
// either id that is not part of this pair's matches, including detections
// of the partner id matched elsewhere.
AlphaScore score_counts(const PairCounts& c, const HProblem& p) {
  AlphaScore s;
  s.hota2 = 0.0;
  if (c.tp == 0) return s;
  s.deta = static_cast<double>(c.tp) /
           static_cast<double>(p.total_gt + p.total_res - c.tp);
  double acc = 0.0;
  for (std::size_t g = 0; g < c.m.size(); ++g) {
    for (std::size_t r = 0; r < c.m[g].size(); ++r) {
      const int m = c.m[g][r];
      if (m == 0) continue;
      const int denom =
          p.g_count[g] + p.r_count[r] + c.gmt[g] + c.rmt[r] - 3 * m;
      acc += static_cast<double>(m) * (static_cast<double>(m) / denom);
    }
  }
  s.assa = acc / c.tp;
  s.hota2 = s.deta * s.assa;
  return s;
}

bool better(const AlphaScore& a, const AlphaScore& b) {
  if (a.hota2 != b.hota2) return a.hota2 > b.hota2;
  return a.deta > b.deta;
}

using PairList = std::vector<std::pair<int, int>>;  // det index pairs

PairList eligible_pairs(const HFrame& f, double alpha) {
  PairList out;
  for (std::size_t i = 0; i < f.g.size(); ++i) {
    for (std::size_t j = 0; j < f.r.size(); ++j) {
      if (f.sim[i][j] >= alpha) out.emplace_back(i, j);
    }
  }
  return out;
}

// Number of matchings (all subsets of pairwise-compatible pairs, the empty
// one included); stops counting once the cap is exceeded.
long long count_matchings(const PairList& pairs, int ng, int nr,
                          long long cap) {
  std::vector<char> gu(ng, 0), ru(nr, 0);
  long long n = 0;
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (n > cap) return;
    if (i == pairs.size()) {
      ++n;
      return;
    }
    rec(i + 1);
    auto [a, b] = pairs[i];
    if (!gu[a] && !ru[b]) {
      gu[a] = ru[b] = 1;
      rec(i + 1);
      gu[a] = ru[b] = 0;
    }
  };
  rec(0);
  return n;
}

constexpr long long kExactBudget = 200000;

// Exhaustive search over per-frame matchings maximizing DetA * AssA.
AlphaScore solve_exact(const HProblem& p,
                       const std::vector<PairList>& pairs_by_frame) {
  PairCounts counts(static_cast<int>(p.g_count.size()),
                    static_cast<int>(p.r_count.size()));
  AlphaScore best;
  // Dets get sequence-global indices so used-marks of outer frames cannot
  // shadow dets of inner frames while the recursion holds them.
  std::vector<int> goff(p.frames.size(), 0), roff(p.frames.size(), 0);
  for (std::size_t f = 1; f < p.frames.size(); ++f) {
    goff[f] = goff[f - 1] + static_cast<int>(p.frames[f - 1].g.size());
    roff[f] = roff[f - 1] + static_cast<int>(p.frames[f - 1].r.size());
  }
  std::vector<char> gu(p.total_gt, 0), ru(p.total_res, 0);

  std::function<void(std::size_t)> frame_rec;
  std::function<void(std::size_t, std::size_t)> pair_rec =
      [&](std::size_t f, std::size_t i) {
        const HFrame& hf = p.frames[f];
        const PairList& pairs = pairs_by_frame[f];
        if (i == pairs.size()) {
          frame_rec(f + 1);
          return;
        }
        pair_rec(f, i + 1);
        auto [a, b] = pairs[i];
        if (!gu[goff[f] + a] && !ru[roff[f] + b]) {
          gu[goff[f] + a] = ru[roff[f] + b] = 1;
          counts.add(hf.g[a], hf.r[b], 1);
          pair_rec(f, i + 1);
          counts.add(hf.g[a], hf.r[b], -1);
          gu[goff[f] + a] = ru[roff[f] + b] = 0;
        }
      };
  frame_rec = [&](std::size_t f) {
    if (f == p.frames.size()) {
      AlphaScore s = score_counts(counts, p);
      if (better(s, best)) best = s;
      return;
    }
    pair_rec(f, 0);
  };
  frame_rec(0);
  return best;
}

// Two-pass protocol matching: global alignment scores from potential match
// counts, then per-frame Hungarian on alignment * similarity.
std::vector<std::vector<int>> protocol_matching(
    const HProblem& p, const std::vector<PairList>& pairs_by_frame,
    double alpha) {
  const int ng = static_cast<int>(p.g_count.size());
  const int nr = static_cast<int>(p.r_count.size());
  std::vector<std::vector<int>> pot(ng, std::vector<int>(nr, 0));
  for (std::size_t f = 0; f < p.frames.size(); ++f) {
    for (auto [a, b] : pairs_by_frame[f]) {
      ++pot[p.frames[f].g[a]][p.frames[f].r[b]];
    }
  }
  std::vector<std::vector<double>> align(ng, std::vector<double>(nr, 0.0));
  for (int g = 0; g < ng; ++g) {
    for (int r = 0; r < nr; ++r) {
      const int denom = p.g_count[g] + p.r_count[r] - pot[g][r];
      if (denom > 0) align[g][r] = static_cast<double>(pot[g][r]) / denom;
    }
  }
  std::vector<std::vector<int>> match_of(p.frames.size());
  for (std::size_t f = 0; f < p.frames.size(); ++f) {
    const HFrame& hf = p.frames[f];
    match_of[f].assign(hf.g.size(), -1);
    if (hf.g.empty() || hf.r.empty()) continue;
    Eigen::MatrixXd cost(hf.g.size(), hf.r.size());
    for (std::size_t i = 0; i < hf.g.size(); ++i) {
      for (std::size_t j = 0; j < hf.r.size(); ++j) {
        cost(i, j) = hf.sim[i][j] >= alpha
                         ? -align[hf.g[i]][hf.r[j]] * hf.sim[i][j]
                         : kForbidden;
      }
    }
    const Assignment as = hungarian_match(cost);
    for (std::size_t i = 0; i < hf.g.size(); ++i) {
      const int j = as.pred_to_gt[i];
      if (j >= 0 && hf.sim[i][j] >= alpha) match_of[f][i] = j;
    }
  }
  return match_of;
}

// Single-pair add/remove hill climb on the final objective, so stray
// one-frame matches that poison established associations get dropped.
AlphaScore refine_matching(const HProblem& p,
                           const std::vector<PairList>& pairs_by_frame,
                           std::vector<std::vector<int>>& match_of) {
  PairCounts counts(static_cast<int>(p.g_count.size()),
                    static_cast<int>(p.r_count.size()));
  for (std::size_t f = 0; f < p.frames.size(); ++f) {
    for (std::size_t i = 0; i < match_of[f].size(); ++i) {
      const int j = match_of[f][i];
      if (j >= 0) counts.add(p.frames[f].g[i], p.frames[f].r[j], 1);
    }
  }
  AlphaScore cur = score_counts(counts, p);
  for (int iter = 0; iter < 2000; ++iter) {
    AlphaScore best = cur;
    std::size_t best_f = 0;
    int best_i = -1, best_j = -1;
    for (std::size_t f = 0; f < p.frames.size(); ++f) {
      const HFrame& hf = p.frames[f];
      std::vector<char> ru(p.frames[f].r.size(), 0);
      for (int j : match_of[f]) {
        if (j >= 0) ru[j] = 1;
      }
      for (auto [a, b] : pairs_by_frame[f]) {
        const int cur_j = match_of[f][a];
        AlphaScore s;
        if (cur_j == b) {
          counts.add(hf.g[a], hf.r[b], -1);
          s = score_counts(counts, p);
          counts.add(hf.g[a], hf.r[b], 1);
        } else if (cur_j < 0 && !ru[b]) {
          counts.add(hf.g[a], hf.r[b], 1);
          s = score_counts(counts, p);
          counts.add(hf.g[a], hf.r[b], -1);
        } else {
          continue;
        }
        if (better(s, best)) {
          best = s;
          best_f = f;
          best_i = a;
          best_j = b;
        }
      }
    }
    if (best_i < 0) break;
    const HFrame& hf = p.frames[best_f];
    if (match_of[best_f][best_i] == best_j) {
      counts.add(hf.g[best_i], hf.r[best_j], -1);
      match_of[best_f][best_i] = -1;
    } else {
      counts.add(hf.g[best_i], hf.r[best_j], 1);
      match_of[best_f][best_i] = best_j;
    }
    cur = best;
  }
  return cur;
}

}  // namespace

ClearScores clear_mot(const Sequence& gt, const Sequence& res,
                      double iou_threshold) {
  validate_sequence(gt, "clear_mot: ground truth");
  validate_sequence(res, "clear_mot: result");
  const std::size_t total = gt.total_boxes();
  if (total == 0) {
    throw std::invalid_argument("clear_mot: empty ground truth");
  }
  ClearScores out;
  std::map<int, int> last_match;  // gt id -> last matched result id
  const int last = std::max(gt.num_frames(), res.num_frames());
  for (int f = 1; f <= last; ++f) {
    const auto& gd = gt.at(f);
    const auto& rd = res.at(f);
    std::vector<int> match_of(gd.size(), -1);
    std::vector<char> used(rd.size(), 0);
    // Keep surviving pairs before matching anything new.
    for (std::size_t i = 0; i < gd.size(); ++i) {
      auto it = last_match.find(gd[i].id);
      if (it == last_match.end()) continue;
      for (std::size_t j = 0; j < rd.size(); ++j) {
        if (!used[j] && rd[j].id == it->second &&
            iou(gd[i].box, rd[j].box) >= iou_threshold) {
          match_of[i] = static_cast<int>(j);
          used[j] = 1;
          break;
        }
      }
    }
    std::vector<int> gi, rj;
    for (std::size_t i = 0; i < gd.size(); ++i) {
      if (match_of[i] < 0) gi.push_back(static_cast<int>(i));
    }
    for (std::size_t j = 0; j < rd.size(); ++j) {
      if (!used[j]) rj.push_back(static_cast<int>(j));
    }
    if (!gi.empty() && !rj.empty()) {
      Eigen::MatrixXd cost(gi.size(), rj.size());
      for (std::size_t a = 0; a < gi.size(); ++a) {
        for (std::size_t b = 0; b < rj.size(); ++b) {
          const double v = iou(gd[gi[a]].box, rd[rj[b]].box);
          cost(a, b) = v >= iou_threshold ? 1.0 - v : kForbidden;
        }
      }
      const Assignment as = hungarian_match(cost);
      for (std::size_t a = 0; a < gi.size(); ++a) {
        const int b = as.pred_to_gt[a];
        if (b >= 0 && cost(a, b) < kForbidden) {
          match_of[gi[a]] = rj[b];
          used[rj[b]] = 1;
        }
      }
    }
    for (std::size_t i = 0; i < gd.size(); ++i) {
      if (match_of[i] < 0) {
        ++out.false_negatives;
        continue;
      }
      const int rid = rd[match_of[i]].id;
      auto it = last_match.find(gd[i].id);
      if (it != last_match.end() && it->second != rid) ++out.id_switches;
      last_match[gd[i].id] = rid;
    }
    for (std::size_t j = 0; j < rd.size(); ++j) {
      if (!used[j]) ++out.false_positives;
    }
  }
  out.mota = 1.0 - static_cast<double>(out.false_negatives +
                                       out.false_positives + out.id_switches) /
                       static_cast<double>(total);
  return out;
}

double idf1(const Sequence& gt, const Sequence& res, double iou_threshold) {
  validate_sequence(gt, "idf1: ground truth");
  validate_sequence(res, "idf1: result");
  const std::size_t total_gt = gt.total_boxes();
  const std::size_t total_res = res.total_boxes();
  if (total_gt == 0) return total_res == 0 ? 1.0 : 0.0;
  if (total_res == 0) return 0.0;

  std::unordered_map<int, int> gid, rid;
  for (const auto& [f, dets] : gt.frames) {
    for (const TrackedBox& d : dets) gid.emplace(d.id, gid.size());
  }
  for (const auto& [f, dets] : res.frames) {
    for (const TrackedBox& d : dets) rid.emplace(d.id, rid.size());
  }
  Eigen::MatrixXd benefit = Eigen::MatrixXd::Zero(gid.size(), rid.size());
  const int last = std::max(gt.num_frames(), res.num_frames());
  for (int f = 1; f <= last; ++f) {
    for (const TrackedBox& g : gt.at(f)) {
      for (const TrackedBox& r : res.at(f)) {
        if (iou(g.box, r.box) >= iou_threshold) {
          benefit(gid.at(g.id), rid.at(r.id)) += 1.0;
        }
      }
    }
  }
  const Assignment as = hungarian_match(-benefit);
  double idtp = 0.0;
  for (std::size_t g = 0; g < gid.size(); ++g) {
    if (as.pred_to_gt[g] >= 0) idtp += benefit(g, as.pred_to_gt[g]);
  }
  return 2.0 * idtp / static_cast<double>(total_gt + total_res);
}

HotaScores hota(const Sequence& gt, const Sequence& res) {
  validate_sequence(gt, "hota: ground truth");
  validate_sequence(res, "hota: result");
  if (gt.total_boxes() == 0) {
    throw std::invalid_argument("hota: empty ground truth");
  }
  const HProblem p = build_problem(gt, res);
  HotaScores out;
  for (int k = 0; k < kNumAlphas; ++k) {
    const double alpha = alpha_level(k);
    std::vector<PairList> pairs(p.frames.size());
    long long space = 1;
    for (std::size_t f = 0; f < p.frames.size(); ++f) {
      pairs[f] = eligible_pairs(p.frames[f], alpha);
      if (space <= kExactBudget) {
        const long long n =
            count_matchings(pairs[f], static_cast<int>(p.frames[f].g.size()),
                            static_cast<int>(p.frames[f].r.size()),
                            kExactBudget);
        space = n > kExactBudget / space ? kExactBudget + 1 : space * n;
      }
    }
    AlphaScore s;
    if (space <= kExactBudget) {
      s = solve_exact(p, pairs);
    } else {
      auto match_of = protocol_matching(p, pairs, alpha);
      s = refine_matching(p, pairs, match_of);
    }
    out.hota_alpha[k] = std::sqrt(std::max(0.0, s.hota2));
    out.deta_alpha[k] = s.deta;
    out.assa_alpha[k] = s.assa;
    out.hota += out.hota_alpha[k] / kNumAlphas;
    out.deta += s.deta / kNumAlphas;
    out.assa += s.assa / kNumAlphas;
  }
  return out;
}

MetricsReport evaluate(const Sequence& gt, const Sequence& res) {
  const HotaScores h = hota(gt, res);
  const ClearScores c = clear_mot(gt, res);
  const double f = idf1(gt, res);
  MetricsReport r;
  r.hota = 100.0 * h.hota;
  r.deta = 100.0 * h.deta;
  r.assa = 100.0 * h.assa;
  r.mota = 100.0 * c.mota;
  r.idf1 = 100.0 * f;
  r.id_switches = c.id_switches;
  r.false_positives = c.false_positives;
  r.false_negatives = c.false_negatives;
  r.hota_alpha = h.hota_alpha;
  r.deta_alpha = h.deta_alpha;
  r.assa_alpha = h.assa_alpha;
  return r;
}

std::string report_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["HOTA"] = report.hota;
  j["DetA"] = report.deta;
  j["AssA"] = report.assa;
  j["MOTA"] = report.mota;
  j["IDF1"] = report.idf1;
  j["IDS"] = report.id_switches;
  j["FP"] = report.false_positives;
  j["FN"] = report.false_negatives;
  j["HOTA_alpha"] = report.hota_alpha;
  j["DetA_alpha"] = report.deta_alpha;
  j["AssA_alpha"] = report.assa_alpha;
  return j.dump(2);
}

std::string report_table(
    const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::size_t name_w = 3;
  for (const auto& row : rows) name_w = std::max(name_w, row.first.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w)) << "run" << std::right;
  for (const char* col : {"HOTA", "AssA", "DetA", "MOTA", "IDF1", "IDS"}) {
    os << std::setw(8) << col;
  }
  os << '\n';
  os << std::fixed << std::setprecision(2);
  for (const auto& [name, r] : rows) {
    os << std::left << std::setw(static_cast<int>(name_w)) << name
       << std::right << std::setw(8) << r.hota << std::setw(8) << r.assa
       << std::setw(8) << r.deta << std::setw(8) << r.mota << std::setw(8)
       << r.idf1 << std::setw(8) << r.id_switches << '\n';
  }
  return os.str();
}

}  // namespace langtrack
