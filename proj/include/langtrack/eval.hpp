// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "langtrack/metrics.hpp"
#include "langtrack/synth.hpp"
#include "langtrack/tracker.hpp"

#include <string>
#include <utility>
#include <vector>

namespace langtrack {

// Appends src with its frame indices and ids shifted, for pooling several
// sequences into one scoring pass.
void append_shifted(Sequence& dst, const Sequence& src, int frame_offset,
                    int id_offset);

int max_track_id(const Sequence& seq);

struct EvalOutcome {
  MetricsReport pooled;
  std::vector<std::pair<std::string, MetricsReport>> per_sequence;
};

// Tracks every sequence and scores the pooled result against the pooled
// ground truth. Every sequence must carry the expected domain tag; the check
// is what keeps held-out evaluation from silently consuming training data.
EvalOutcome evaluate_model(const TrackModel& model, const TrackerConfig& cfg,
                           const std::vector<SynthSequence>& seqs,
                           const std::string& expected_domain);

}  // namespace langtrack
