// SPDX-License-Identifier: Apache-2.0
#include "langtrack/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace langtrack {
namespace {

// Shortest decimal form that parses back to the same double.
std::string fmt_num(double x) {
  for (int prec = 6; prec <= 17; ++prec) {
    std::ostringstream os;
    os << std::setprecision(prec) << x;
    if (std::stod(os.str()) == x) return os.str();
  }
  return std::to_string(x);
}

const std::string& meta_at(const TensorFile& f, const std::string& key) {
  const auto it = f.meta().find(key);
  if (it == f.meta().end()) {
    throw std::runtime_error("checkpoint: missing metadata '" + key + "'");
  }
  return it->second;
}

}  // namespace

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw std::runtime_error("train: epochs must be >= 1");
  if (!(cfg.lr > 0)) throw std::runtime_error("train: lr must be positive");
  if (!(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0)) {
    throw std::runtime_error("train: lr_decay must be in (0, 1]");
  }
  if (cfg.lr_decay_epoch < 1 || cfg.lr_decay_epoch > cfg.epochs) {
    throw std::runtime_error("train: lr decay breakpoint outside [1, epochs]");
  }
  if (cfg.clip_len_base < 2) {
    throw std::runtime_error("train: clips need at least 2 frames");
  }
  if (cfg.clip_step_epochs < 1) {
    throw std::runtime_error("train: clip_step_epochs must be >= 1");
  }
  if (cfg.max_clip_len < cfg.clip_len_base) {
    throw std::runtime_error("train: max_clip_len below clip_len_base");
  }
  if (cfg.min_interval < 1 || cfg.max_interval < cfg.min_interval) {
    throw std::runtime_error("train: bad frame interval range");
  }
  if (cfg.steps_per_epoch < 0) {
    throw std::runtime_error("train: steps_per_epoch must be >= 0");
  }
  if (cfg.weights.cls < 0 || cfg.weights.l1 < 0 || cfg.weights.giou < 0) {
    throw std::runtime_error("train: negative loss weight");
  }
  if (cfg.domain.empty()) {
    throw std::runtime_error("train: domain tag must be set");
  }
  validate_tracker_config(cfg.tracker);
}

TrainConfig train_config_from(const Config& c) {
  TrainConfig t;
  const std::string preset = c.str("train.preset", "desk");
  if (preset == "desk") {
    t.epochs = 40;
    t.lr_decay_epoch = 20;
    t.clip_step_epochs = 10;
  } else if (preset != "paper") {
    throw std::runtime_error("train: unknown preset '" + preset + "'");
  }
  t.epochs = static_cast<int>(c.integer("train.epochs", t.epochs));
  t.lr = c.num("train.lr", t.lr);
  t.lr_decay = c.num("train.lr_decay", t.lr_decay);
  t.lr_decay_epoch =
      static_cast<int>(c.integer("train.lr_decay_epoch", t.lr_decay_epoch));
  t.clip_len_base =
      static_cast<int>(c.integer("train.clip_len_base", t.clip_len_base));
  t.clip_step_epochs =
      static_cast<int>(c.integer("train.clip_step_epochs", t.clip_step_epochs));
  t.max_clip_len =
      static_cast<int>(c.integer("train.max_clip_len", t.max_clip_len));
  t.min_interval =
      static_cast<int>(c.integer("train.min_interval", t.min_interval));
  t.max_interval =
      static_cast<int>(c.integer("train.max_interval", t.max_interval));
  t.augment = c.flag("train.augment", t.augment);
  t.steps_per_epoch =
      static_cast<int>(c.integer("train.steps_per_epoch", t.steps_per_epoch));
  t.weights.cls = c.num("loss.cls", t.weights.cls);
  t.weights.l1 = c.num("loss.l1", t.weights.l1);
  t.weights.giou = c.num("loss.giou", t.weights.giou);
  t.tracker = tracker_config_from(c);
  t.domain = c.str("train.domain", t.domain);
  t.seed = static_cast<std::uint64_t>(c.integer("train.seed",
      static_cast<long>(t.seed)));
  return t;
}

Config train_config_to(const TrainConfig& cfg) {
  Config c;
  c.set("train.epochs", std::to_string(cfg.epochs));
  c.set("train.lr", fmt_num(cfg.lr));
  c.set("train.lr_decay", fmt_num(cfg.lr_decay));
  c.set("train.lr_decay_epoch", std::to_string(cfg.lr_decay_epoch));
  c.set("train.clip_len_base", std::to_string(cfg.clip_len_base));
  c.set("train.clip_step_epochs", std::to_string(cfg.clip_step_epochs));
  c.set("train.max_clip_len", std::to_string(cfg.max_clip_len));
  c.set("train.min_interval", std::to_string(cfg.min_interval));
  c.set("train.max_interval", std::to_string(cfg.max_interval));
  c.set("train.augment", cfg.augment ? "true" : "false");
  c.set("train.steps_per_epoch", std::to_string(cfg.steps_per_epoch));
  c.set("loss.cls", fmt_num(cfg.weights.cls));
  c.set("loss.l1", fmt_num(cfg.weights.l1));
  c.set("loss.giou", fmt_num(cfg.weights.giou));
  c.merge(tracker_config_to(cfg.tracker));
  c.set("train.domain", cfg.domain);
  c.set("train.seed", std::to_string(cfg.seed));
  return c;
}

double lr_at(const TrainConfig& cfg, int epoch) {
  return epoch <= cfg.lr_decay_epoch ? cfg.lr : cfg.lr * cfg.lr_decay;
}

int clip_len_at(const TrainConfig& cfg, int epoch) {
  return std::min(cfg.max_clip_len,
                  cfg.clip_len_base + epoch / cfg.clip_step_epochs);
}

ClipUnroll run_clip(ad::Tape& t, const TrackModel& model,
                    const ClipSample& clip, const LossWeights& w) {
  ClipUnroll u;
  u.gts = clip_ground_truth(clip);
  const int nd = model.config().n_detect;
  std::vector<int> live;
  ad::Var queries = model.empty_queries(t);
  for (std::size_t f = 0; f < clip.frames.size(); ++f) {
    u.live_ids.push_back(live);
    TrackModel::FrameForward fwd =
        model.forward_frame(t, clip.frames[f].image, queries);
    const int m = static_cast<int>(live.size());
    FramePreds pred;
    pred.det_scores = ad::slice_rows(fwd.out.scores, 0, nd);
    pred.det_boxes = ad::slice_rows(fwd.out.boxes, 0, nd);
    pred.trk_scores = ad::slice_rows(fwd.out.scores, nd, m);
    pred.trk_boxes = ad::slice_rows(fwd.out.boxes, nd, m);
    pred.trk_ids = live;
    u.preds.push_back(pred);
    if (f + 1 == clip.frames.size()) break;

    // Existing queries roll forward on their refined embeddings; newborn
    // targets enter on the detect rows the matching assigned them.
    std::vector<int> next_rows;
    next_rows.reserve(live.size() + u.gts[f].ids.size());
    for (int i = 0; i < m; ++i) next_rows.push_back(nd + i);
    const FrameGt& gt = u.gts[f];
    std::vector<Box> nb_boxes;
    std::vector<int> nb_ids;
    for (std::size_t j = 0; j < gt.ids.size(); ++j) {
      if (gt.newborn[j]) {
        nb_boxes.push_back(gt.boxes[j]);
        nb_ids.push_back(gt.ids[j]);
      }
    }
    if (!nb_boxes.empty()) {
      const Assignment as = hungarian_match(
          detection_cost(pred.det_scores.value().col(0),
                         pred.det_boxes.value(), nb_boxes, w));
      std::vector<std::pair<int, int>> born;  // (newborn index, detect row)
      for (int p = 0; p < nd; ++p) {
        if (as.pred_to_gt[static_cast<std::size_t>(p)] >= 0) {
          born.emplace_back(as.pred_to_gt[static_cast<std::size_t>(p)], p);
        }
      }
      std::sort(born.begin(), born.end());
      for (const auto& [j, p] : born) {
        live.push_back(nb_ids[static_cast<std::size_t>(j)]);
        next_rows.push_back(p);
      }
    }
    queries = next_rows.empty() ? model.empty_queries(t)
                                : ad::gather_rows(fwd.out.embeddings, next_rows);
  }
  return u;
}

Trainer::Trainer(TrackModel& model, const TrainConfig& cfg,
                 std::vector<SynthSequence> data, const std::string& out_dir)
    : model_(&model),
      cfg_(cfg),
      data_(std::move(data)),
      out_dir_(out_dir),
      rng_(Rng::derive(cfg.seed, "train")) {
  validate_train_config(cfg_);
  if (data_.empty()) {
    throw std::runtime_error("trainer: no training sequences");
  }
  for (const auto& s : data_) {
    if (s.domain != cfg_.domain) {
      throw std::runtime_error("trainer: sequence '" + s.name +
                               "' is tagged '" + s.domain +
                               "' but training expects '" + cfg_.domain + "'");
    }
  }
  steps_per_epoch_ = cfg_.steps_per_epoch > 0 ? cfg_.steps_per_epoch
                                              : static_cast<int>(data_.size());
  std::filesystem::create_directories(out_dir_);
  log_.open(out_dir_ + "/loss_log.jsonl", std::ios::app);
  if (!log_) {
    throw std::runtime_error("trainer: cannot open loss log in " + out_dir_);
  }
}

StepReport Trainer::train_step() {
  StepReport rep;
  rep.step = global_step_ + 1;
  rep.epoch = epoch();
  rep.lr = lr_at(cfg_, rep.epoch);
  rep.clip_len = clip_len_at(cfg_, rep.epoch);
  const SynthSequence& seq =
      data_[static_cast<std::size_t>(global_step_) % data_.size()];
  rep.source = seq.name;

  ClipSample clip = sample_clip(seq, rep.clip_len, cfg_.min_interval,
                                cfg_.max_interval, rng_);
  if (cfg_.augment) clip = augment(clip, rng_);

  ad::Tape t;
  ClipUnroll u;
  ClipLossReport loss;
  try {
    u = run_clip(t, *model_, clip, cfg_.weights);
    loss = clip_loss(t, u.preds, u.gts, cfg_.weights);
  } catch (const std::exception& e) {
    // A NaN in the forward pass surfaces as a matching error before any loss
    // exists; treat it as the same abort when the evidence points that way.
    const bool nonfinite = !params_finite() ||
                           std::string(e.what()).find("finite") !=
                               std::string::npos;
    if (!nonfinite) throw;
    rep.loss = std::numeric_limits<double>::quiet_NaN();
    dump_nonfinite(rep, loss, e.what());
    throw std::runtime_error("trainer: non-finite loss at step " +
                             std::to_string(rep.step) + "; diagnostics in " +
                             out_dir_ + "/nonfinite_dump.txt");
  }
  rep.loss = loss.value;
  rep.tracking = loss.tracking;
  rep.detection = loss.detection;
  rep.normalizer = loss.normalizer;
  if (!std::isfinite(rep.loss)) {
    dump_nonfinite(rep, loss, "loss evaluated non-finite");
    throw std::runtime_error("trainer: non-finite loss at step " +
                             std::to_string(rep.step) + "; diagnostics in " +
                             out_dir_ + "/nonfinite_dump.txt");
  }

  model_->params().zero_grads();
  t.backward(loss.total);
  adam_step(rep.lr);
  ++global_step_;

  nlohmann::ordered_json line{
      {"step", rep.step},         {"epoch", rep.epoch},
      {"clip_len", rep.clip_len}, {"lr", rep.lr},
      {"loss", rep.loss},         {"tracking", rep.tracking},
      {"detection", rep.detection}, {"normalizer", rep.normalizer},
      {"source", rep.source}};
  log_ << line.dump() << "\n";
  log_.flush();
  return rep;
}

void Trainer::run() {
  const int total = cfg_.epochs * steps_per_epoch_;
  while (global_step_ < total) {
    const int ep = epoch();
    train_step();
    if (global_step_ % steps_per_epoch_ != 0) continue;
    const bool lr_breakpoint = ep == cfg_.lr_decay_epoch;
    const bool clip_breakpoint = ep % cfg_.clip_step_epochs == 0;
    if (lr_breakpoint || clip_breakpoint) {
      std::ostringstream name;
      name << out_dir_ << "/epoch_" << std::setw(3) << std::setfill('0') << ep
           << ".ckpt";
      save_checkpoint(name.str());
    }
  }
  save_checkpoint(out_dir_ + "/final.ckpt");
}

void Trainer::adam_step(double lr) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  ++adam_t_;
  const double c1 = 1.0 - std::pow(kBeta1, adam_t_);
  const double c2 = 1.0 - std::pow(kBeta2, adam_t_);
  for (Param* p : model_->params().trainable()) {
    Eigen::MatrixXd& m = adam_m_[p->name];
    Eigen::MatrixXd& v = adam_v_[p->name];
    if (m.size() == 0) {
      m.setZero(p->value.rows(), p->value.cols());
      v.setZero(p->value.rows(), p->value.cols());
    }
    m = kBeta1 * m + (1.0 - kBeta1) * p->grad;
    v.array() = kBeta2 * v.array() + (1.0 - kBeta2) * p->grad.array().square();
    p->value.array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + kEps);
  }
}

bool Trainer::params_finite() const {
  for (const Param* p : model_->params().all()) {
    if (!p->value.allFinite()) return false;
  }
  return true;
}

void Trainer::dump_nonfinite(const StepReport& rep, const ClipLossReport& loss,
                             const std::string& reason) const {
  std::ofstream f(out_dir_ + "/nonfinite_dump.txt");
  f << std::setprecision(17);
  f << "non-finite loss: " << reason << "\n";
  f << "step " << rep.step << " epoch " << rep.epoch << " source "
    << rep.source << " clip_len " << rep.clip_len << "\n";
  f << "loss " << loss.value << " tracking " << loss.tracking << " detection "
    << loss.detection << " normalizer " << loss.normalizer << "\n";
  for (std::size_t i = 0; i < loss.frame_tracking.size(); ++i) {
    f << "frame " << i << " tracking " << loss.frame_tracking[i]
      << " detection " << loss.frame_detection[i] << "\n";
  }
  f << "parameters (frobenius norm, max abs)\n";
  for (const Param* p : model_->params().all()) {
    f << p->name << " " << p->value.norm() << " "
      << p->value.cwiseAbs().maxCoeff() << "\n";
  }
}

void Trainer::save_checkpoint(const std::string& path) const {
  TensorFile f;
  for (const Param* p : model_->params().all()) {
    f.put(p->name, p->value, p->frozen);
  }
  for (const auto& [name, m] : adam_m_) f.put("adam.m." + name, m);
  for (const auto& [name, v] : adam_v_) f.put("adam.v." + name, v);
  f.meta()["format"] = "langtrack-checkpoint-1";
  f.meta()["epoch"] = std::to_string(epoch());
  f.meta()["global_step"] = std::to_string(global_step_);
  f.meta()["adam_t"] = std::to_string(adam_t_);
  f.meta()["rng"] = rng_.save_state();
  f.meta()["train_config"] = train_config_to(cfg_).dump();
  f.meta()["model_config"] = model_config_to(model_->config()).dump();
  std::string phrases;
  for (const std::string& p : model_->book().phrases) phrases += p + "\n";
  f.meta()["trackbook"] = phrases;
  f.meta()["trackbook_version"] = model_->book().version;
  f.save(path);
}

void Trainer::load_checkpoint(const std::string& path) {
  TensorFile f = TensorFile::load(path);
  for (Param* p : model_->params().all()) {
    const Eigen::MatrixXd& v = f.get(p->name);
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols()) {
      throw std::runtime_error("checkpoint: shape mismatch for " + p->name);
    }
    p->value = v;
  }
  adam_m_.clear();
  adam_v_.clear();
  for (const std::string& name : f.names()) {
    if (name.rfind("adam.m.", 0) == 0) {
      adam_m_[name.substr(7)] = f.get(name);
    } else if (name.rfind("adam.v.", 0) == 0) {
      adam_v_[name.substr(7)] = f.get(name);
    }
  }
  adam_t_ = std::stoi(meta_at(f, "adam_t"));
  global_step_ = std::stoi(meta_at(f, "global_step"));
  rng_.load_state(meta_at(f, "rng"));
}

LoadedModel load_model(const std::string& path) {
  TensorFile f = TensorFile::load(path);
  LoadedModel out;
  out.model_config =
      model_config_from(Config::from_text(meta_at(f, "model_config")));
  out.train_config =
      train_config_from(Config::from_text(meta_at(f, "train_config")));
  out.book = parse_trackbook(meta_at(f, "trackbook"));
  out.book.version = meta_at(f, "trackbook_version");
  out.model = std::make_unique<TrackModel>(out.model_config, out.book);
  for (Param* p : out.model->params().all()) {
    const Eigen::MatrixXd& v = f.get(p->name);
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols()) {
      throw std::runtime_error("checkpoint: shape mismatch for " + p->name);
    }
    p->value = v;
  }
  return out;
}

}  // namespace langtrack
