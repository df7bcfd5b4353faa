// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "langtrack/model.hpp"
#include "langtrack/mot_io.hpp"

#include <vector>

namespace langtrack {

struct TrackerConfig {
  int n_miss = 5;          // consecutive misses before retirement
  double tau_spawn = 0.7;  // newborn threshold, inclusive
  double tau_keep = 0.6;   // keep-alive threshold, inclusive
};

// n_miss >= 1 and 0 < tau_keep <= tau_spawn < 1; throws otherwise.
void validate_tracker_config(const TrackerConfig& cfg);
TrackerConfig tracker_config_from(const Config& c);
Config tracker_config_to(const TrackerConfig& cfg);

struct TrackQuery {
  int id = 0;
  Eigen::RowVectorXd embedding;
  Box last_box;
  int miss_count = 0;
  int age = 0;  // frames since spawn

  bool active() const { return miss_count == 0; }
};

struct FrameResult {
  struct Row {
    int id = 0;
    Box box;
    double score = 0.0;
  };
  int frame_index = 0;
  std::vector<Row> rows;  // active tracks only: survivors, then newborns
};

// The per-frame state transition, shared by inference and the property
// tests: keep-or-miss every existing track (refreshing box and embedding
// only on keeps), retire the ones whose miss run reaches n_miss, then spawn
// a fresh id for every detect row at or above tau_spawn. Newborns are
// emitted in the same frame. Throws when trk_scores does not line up with
// the current track list.
FrameResult apply_frame_outputs(std::vector<TrackQuery>& tracks, int& next_id,
                                int frame_index,
                                const Eigen::VectorXd& det_scores,
                                const Eigen::MatrixXd& det_boxes,
                                const Eigen::MatrixXd& det_embeddings,
                                const Eigen::VectorXd& trk_scores,
                                const Eigen::MatrixXd& trk_boxes,
                                const Eigen::MatrixXd& trk_embeddings,
                                const TrackerConfig& cfg);

// Online tracker: owns the query state and folds apply_frame_outputs over
// the model's per-frame decoder outputs. Missing tracks stay in the query
// set (they may re-fire) until retirement; only their emission stops.
class Tracker {
 public:
  Tracker(const TrackModel& model, const TrackerConfig& cfg);

  // Frames must arrive with strictly increasing frame_index.
  FrameResult step(const ImageFrame& frame);

  const std::vector<TrackQuery>& tracks() const { return tracks_; }
  int next_id() const { return next_id_; }

 private:
  const TrackModel* model_;
  TrackerConfig cfg_;
  std::vector<TrackQuery> tracks_;
  int next_id_ = 1;
  int last_frame_ = 0;
};

std::vector<FrameResult> run_sequence(const TrackModel& model,
                                      const TrackerConfig& cfg,
                                      const std::vector<ImageFrame>& frames);

// Pixel-space MOT view of the emitted rows.
Sequence results_to_sequence(const std::vector<FrameResult>& results,
                             int img_w, int img_h);

}  // namespace langtrack
