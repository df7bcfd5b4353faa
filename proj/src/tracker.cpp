// SPDX-License-Identifier: Apache-2.0
#include "langtrack/tracker.hpp"

#include <stdexcept>
#include <string>

namespace langtrack {

void validate_tracker_config(const TrackerConfig& cfg) {
  if (cfg.n_miss < 1) throw std::invalid_argument("n_miss must be >= 1");
  if (!(cfg.tau_keep > 0.0) || !(cfg.tau_keep <= cfg.tau_spawn) ||
      !(cfg.tau_spawn < 1.0))
    throw std::invalid_argument("need 0 < tau_keep <= tau_spawn < 1");
}

TrackerConfig tracker_config_from(const Config& c) {
  TrackerConfig t;
  t.n_miss = static_cast<int>(c.integer("tracker.n_miss", t.n_miss));
  t.tau_spawn = c.num("tracker.tau_spawn", t.tau_spawn);
  t.tau_keep = c.num("tracker.tau_keep", t.tau_keep);
  validate_tracker_config(t);
  return t;
}

Config tracker_config_to(const TrackerConfig& cfg) {
  Config c;
  c.set("tracker.n_miss", std::to_string(cfg.n_miss));
  c.set("tracker.tau_spawn", std::to_string(cfg.tau_spawn));
  c.set("tracker.tau_keep", std::to_string(cfg.tau_keep));
  return c;
}

namespace {

Box row_to_box(const Eigen::MatrixXd& rows, int i) {
  return Box{rows(i, 0), rows(i, 1), rows(i, 2), rows(i, 3)};
}

}  // namespace

FrameResult apply_frame_outputs(std::vector<TrackQuery>& tracks, int& next_id,
                                int frame_index,
                                const Eigen::VectorXd& det_scores,
                                const Eigen::MatrixXd& det_boxes,
                                const Eigen::MatrixXd& det_embeddings,
                                const Eigen::VectorXd& trk_scores,
                                const Eigen::MatrixXd& trk_boxes,
                                const Eigen::MatrixXd& trk_embeddings,
                                const TrackerConfig& cfg) {
  validate_tracker_config(cfg);
  if (trk_scores.size() != static_cast<Eigen::Index>(tracks.size()))
    throw std::logic_error("track outputs do not match the live track count");
  FrameResult result;
  result.frame_index = frame_index;

  std::size_t kept = 0;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    TrackQuery q = std::move(tracks[i]);
    const double s = trk_scores(static_cast<Eigen::Index>(i));
    q.age += 1;
    if (s >= cfg.tau_keep) {
      q.miss_count = 0;
      q.embedding = trk_embeddings.row(static_cast<Eigen::Index>(i));
      q.last_box = row_to_box(trk_boxes, static_cast<int>(i));
      result.rows.push_back({q.id, q.last_box, s});
      tracks[kept++] = std::move(q);
    } else {
      q.miss_count += 1;
      if (q.miss_count < cfg.n_miss) tracks[kept++] = std::move(q);
      // else retired: dropped right on the frame the run reaches n_miss
    }
  }
  tracks.resize(kept);

  for (Eigen::Index j = 0; j < det_scores.size(); ++j) {
    if (det_scores(j) < cfg.tau_spawn) continue;
    TrackQuery q;
    q.id = next_id++;
    q.embedding = det_embeddings.row(j);
    q.last_box = row_to_box(det_boxes, static_cast<int>(j));
    q.miss_count = 0;
    q.age = 0;
    result.rows.push_back({q.id, q.last_box, det_scores(j)});
    tracks.push_back(std::move(q));
  }
  return result;
}

Tracker::Tracker(const TrackModel& model, const TrackerConfig& cfg)
    : model_(&model), cfg_(cfg) {
  validate_tracker_config(cfg_);
}

FrameResult Tracker::step(const ImageFrame& frame) {
  if (frame.frame_index <= last_frame_)
    throw std::invalid_argument(
        "frames must arrive in increasing order (got frame " +
        std::to_string(frame.frame_index) + " after " +
        std::to_string(last_frame_) + ")");
  last_frame_ = frame.frame_index;

  const int dim = model_->config().dim;
  Eigen::MatrixXd queries(static_cast<Eigen::Index>(tracks_.size()), dim);
  for (std::size_t i = 0; i < tracks_.size(); ++i)
    queries.row(static_cast<Eigen::Index>(i)) = tracks_[i].embedding;

  ad::Tape t;
  auto fw = model_->forward_frame(t, frame, t.constant(std::move(queries)));
  if (fw.out.n_track != static_cast<int>(tracks_.size()))
    throw std::logic_error("decoder track row count diverged from state");

  const int nd = fw.out.n_detect;
  const int nt = fw.out.n_track;
  const Eigen::MatrixXd& scores = fw.out.scores.value();
  const Eigen::MatrixXd& boxes = fw.out.boxes.value();
  const Eigen::MatrixXd& embeddings = fw.out.embeddings.value();
  return apply_frame_outputs(
      tracks_, next_id_, frame.frame_index, scores.col(0).head(nd),
      boxes.topRows(nd), embeddings.topRows(nd), scores.col(0).tail(nt),
      boxes.bottomRows(nt), embeddings.bottomRows(nt), cfg_);
}

std::vector<FrameResult> run_sequence(const TrackModel& model,
                                      const TrackerConfig& cfg,
                                      const std::vector<ImageFrame>& frames) {
  Tracker tracker(model, cfg);
  std::vector<FrameResult> results;
  results.reserve(frames.size());
  for (const auto& frame : frames) results.push_back(tracker.step(frame));
  return results;
}

Sequence results_to_sequence(const std::vector<FrameResult>& results,
                             int img_w, int img_h) {
  Sequence seq;
  for (const auto& r : results) {
    if (r.rows.empty()) continue;
    std::vector<TrackedBox>& out = seq.frames[r.frame_index];
    for (const auto& row : r.rows)
      out.push_back(TrackedBox{row.id, to_rect(row.box, img_w, img_h),
                               row.score});
  }
  return seq;
}

}  // namespace langtrack
