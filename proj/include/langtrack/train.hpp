// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "langtrack/clips.hpp"
#include "langtrack/model.hpp"
#include "langtrack/tracker.hpp"

#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace langtrack {

// Clip-unrolled training schedule. Field defaults follow the reference
// schedule (200 epochs, decay at 100, clip growth every 50); the "desk"
// preset in train_config_from compresses it proportionally for runs that
// finish in minutes.
struct TrainConfig {
  int epochs = 200;
  double lr = 2e-4;
  double lr_decay = 0.1;
  int lr_decay_epoch = 100;
  int clip_len_base = 2;
  int clip_step_epochs = 50;  // clip length grows by 1 each such span
  int max_clip_len = 6;
  int min_interval = 1;
  int max_interval = 10;
  bool augment = true;
  int steps_per_epoch = 0;  // 0 = one clip per training sequence
  LossWeights weights;
  TrackerConfig tracker;
  std::string domain = "domain_a";  // provenance tag the data must carry
  std::uint64_t seed = 1;
};

// Throws on bad ranges or schedule breakpoints outside [1, epochs].
void validate_train_config(const TrainConfig& cfg);

// train.preset selects the default block: "desk" (40 epochs, decay at 20,
// clip growth every 10) or "paper" (the struct defaults). Explicit train.*
// keys override the preset; loss.* and tracker.* fill the nested configs.
TrainConfig train_config_from(const Config& c);
Config train_config_to(const TrainConfig& cfg);

// Schedule lookups, 1-based epochs.
double lr_at(const TrainConfig& cfg, int epoch);
int clip_len_at(const TrainConfig& cfg, int epoch);

// Teacher-forced unroll of one clip: every frame runs the full model on the
// query set implied by ground truth so far. Detect outputs are matched to
// newborn targets with the same Hungarian assignment the loss uses, and the
// matched rows become next frame's track queries, so gradient flows through
// time via the decoder embeddings.
struct ClipUnroll {
  std::vector<FramePreds> preds;
  std::vector<FrameGt> gts;
  std::vector<std::vector<int>> live_ids;  // query order per frame
};
ClipUnroll run_clip(ad::Tape& t, const TrackModel& model,
                    const ClipSample& clip, const LossWeights& w);

struct StepReport {
  int step = 0;  // completed optimizer steps, 1-based after the call
  int epoch = 0;
  int clip_len = 0;
  double lr = 0.0;
  double loss = 0.0;
  double tracking = 0.0;
  double detection = 0.0;
  int normalizer = 0;
  std::string source;
};

// Single-threaded Adam training over one model. Checkpoints carry the full
// parameter set, optimizer moments, RNG state, and config snapshots, so a
// resumed run replays the exact trajectory of an uninterrupted one.
class Trainer {
 public:
  Trainer(TrackModel& model, const TrainConfig& cfg,
          std::vector<SynthSequence> data, const std::string& out_dir);

  StepReport train_step();

  // Runs the remaining schedule; saves a checkpoint after every breakpoint
  // epoch (lr decay, clip growth) and final.ckpt at the end.
  void run();

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  int global_step() const { return global_step_; }
  // Epoch the next step falls in.
  int epoch() const { return global_step_ / steps_per_epoch_ + 1; }
  const TrainConfig& config() const { return cfg_; }

 private:
  void adam_step(double lr);
  bool params_finite() const;
  void dump_nonfinite(const StepReport& rep, const ClipLossReport& loss,
                      const std::string& reason) const;

  TrackModel* model_;
  TrainConfig cfg_;
  std::vector<SynthSequence> data_;
  std::string out_dir_;
  int steps_per_epoch_ = 1;
  int global_step_ = 0;
  Rng rng_;
  int adam_t_ = 0;
  std::map<std::string, Eigen::MatrixXd> adam_m_, adam_v_;
  std::ofstream log_;
};

// Model reconstruction from a checkpoint alone: config snapshots and the
// phrase list ride in the file's metadata, so inference needs no side files.
struct LoadedModel {
  ModelConfig model_config;
  TrainConfig train_config;
  Trackbook book;
  std::unique_ptr<TrackModel> model;
};
LoadedModel load_model(const std::string& path);

}  // namespace langtrack
