// SPDX-License-Identifier: Apache-2.0
#include "langtrack/eval.hpp"

#include <algorithm>
#include <stdexcept>

namespace langtrack {

void append_shifted(Sequence& dst, const Sequence& src, int frame_offset,
                    int id_offset) {
  for (const auto& [frame, boxes] : src.frames) {
    std::vector<TrackedBox>& out = dst.frames[frame + frame_offset];
    for (TrackedBox b : boxes) {
      b.id += id_offset;
      out.push_back(b);
    }
  }
}

int max_track_id(const Sequence& seq) {
  int m = 0;
  for (const auto& [frame, boxes] : seq.frames) {
    for (const TrackedBox& b : boxes) m = std::max(m, b.id);
  }
  return m;
}

EvalOutcome evaluate_model(const TrackModel& model, const TrackerConfig& cfg,
                           const std::vector<SynthSequence>& seqs,
                           const std::string& expected_domain) {
  if (seqs.empty()) throw std::runtime_error("eval: no sequences");
  EvalOutcome out;
  Sequence pooled_gt, pooled_res;
  int frame_offset = 0;
  int gt_id_offset = 0;
  int res_id_offset = 0;
  for (const SynthSequence& seq : seqs) {
    if (seq.domain != expected_domain) {
      throw std::runtime_error("eval: sequence '" + seq.name + "' is tagged '" +
                               seq.domain + "' but evaluation expects '" +
                               expected_domain + "'");
    }
    const std::vector<FrameResult> results =
        run_sequence(model, cfg, seq.frames);
    const Sequence res = results_to_sequence(results, seq.width, seq.height);
    out.per_sequence.emplace_back(seq.name, evaluate(seq.gt, res));
    append_shifted(pooled_gt, seq.gt, frame_offset, gt_id_offset);
    append_shifted(pooled_res, res, frame_offset, res_id_offset);
    frame_offset += static_cast<int>(seq.frames.size());
    gt_id_offset += max_track_id(seq.gt);
    res_id_offset += max_track_id(res);
  }
  out.pooled = evaluate(pooled_gt, pooled_res);
  return out;
}

}  // namespace langtrack
