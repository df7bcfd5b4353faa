// SPDX-License-Identifier: Apache-2.0
#include "langtrack/perception.hpp"

#include "langtrack/blocks.hpp"

#include <cmath>
#include <stdexcept>

namespace langtrack {

namespace {

constexpr int kStageChannels[4] = {16, 32, 64, 64};
constexpr int kStageKernel[4] = {4, 3, 3, 3};
constexpr int kStageStride[4] = {4, 2, 2, 2};
constexpr int kStagePad[4] = {0, 1, 1, 1};

int out_extent(int in, int k, int s, int pad) {
  return (in + 2 * pad - k) / s + 1;
}

}  // namespace

Eigen::MatrixXd grid_position_encoding(int h, int w, int dim) {
  if (dim % 4 != 0) {
    throw std::runtime_error("grid position encoding: dim must be divisible by 4");
  }
  const int half = dim / 2;
  const double two_pi = 6.283185307179586;
  Eigen::MatrixXd out(h * w, dim);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int row = y * w + x;
      const double ys = (y + 0.5) / h * two_pi;
      const double xs = (x + 0.5) / w * two_pi;
      for (int i = 0; i < half; ++i) {
        const double denom =
            std::pow(10000.0, 2.0 * (i / 2) / static_cast<double>(half));
        out(row, i) = (i % 2 == 0) ? std::sin(ys / denom) : std::cos(ys / denom);
        out(row, half + i) =
            (i % 2 == 0) ? std::sin(xs / denom) : std::cos(xs / denom);
      }
    }
  }
  return out;
}

Perception::Perception(const PerceptionConfig& cfg, ParamStore& store, Rng& rng,
                       std::string prefix)
    : cfg_(cfg), prefix_(std::move(prefix)), store_(&store) {
  if (cfg_.dim % cfg_.heads != 0) {
    throw std::runtime_error("perception: heads must divide dim");
  }
  if (cfg_.dim % 4 != 0) {
    throw std::runtime_error("perception: dim must be divisible by 4");
  }
  int cin = 3;
  for (int i = 0; i < 4; ++i) {
    const int cout = kStageChannels[i];
    const int k = kStageKernel[i];
    Param& w = store.add(prefix_ + "stage" + std::to_string(i + 1) + ".w",
                         cout, cin * k * k);
    w.value = blocks::gaussian(rng, cout, cin * k * k,
                               1.0 / std::sqrt(static_cast<double>(cin * k * k)));
    store.add(prefix_ + "stage" + std::to_string(i + 1) + ".b", cout, 1);
    cin = cout;
  }
  for (int lv = 3; lv <= 5; ++lv) {
    const int c = kStageChannels[lv - 2];
    Param& p = store.add(prefix_ + "proj" + std::to_string(lv) + ".w",
                         cfg_.dim, c);
    p.value = blocks::gaussian(rng, cfg_.dim, c,
                               1.0 / std::sqrt(static_cast<double>(c)));
  }
  store.add(prefix_ + "levels", 3, cfg_.dim).value =
      blocks::gaussian(rng, 3, cfg_.dim, 0.02);

  for (int i = 0; i < cfg_.n_enc_layers; ++i) {
    const std::string lp = prefix_ + "enc" + std::to_string(i) + ".";
    blocks::add_attention(store, rng, lp + "self.", cfg_.dim);
    blocks::add_feedforward(store, rng, lp + "ff.", cfg_.dim, cfg_.ff_hidden);
    blocks::add_norm(store, lp + "ln1", cfg_.dim);
    blocks::add_norm(store, lp + "ln2", cfg_.dim);
  }

  store.add(prefix_ + "det_queries", cfg_.n_detect, cfg_.dim).value =
      blocks::gaussian(rng, cfg_.n_detect, cfg_.dim, 0.02);
  for (int i = 0; i < cfg_.n_dec_layers; ++i) {
    const std::string lp = prefix_ + "dec" + std::to_string(i) + ".";
    blocks::add_attention(store, rng, lp + "self.", cfg_.dim);
    blocks::add_attention(store, rng, lp + "cross.", cfg_.dim);
    blocks::add_feedforward(store, rng, lp + "ff.", cfg_.dim, cfg_.ff_hidden);
    blocks::add_norm(store, lp + "ln1", cfg_.dim);
    blocks::add_norm(store, lp + "ln2", cfg_.dim);
    blocks::add_norm(store, lp + "ln3", cfg_.dim);
  }

  // Final classifier starts near zero with a pessimistic prior bias, so
  // untrained scores sit well below the spawn threshold.
  store.add(prefix_ + "cls.w", cfg_.dim, 1).value =
      blocks::gaussian(rng, cfg_.dim, 1, 0.01);
  store.add(prefix_ + "cls.b", 1, 1).value(0, 0) = -2.0;
  store.add(prefix_ + "box.w1", cfg_.dim, cfg_.dim).value = blocks::gaussian(
      rng, cfg_.dim, cfg_.dim, 1.0 / std::sqrt(double(cfg_.dim)));
  store.add(prefix_ + "box.b1", 1, cfg_.dim);
  store.add(prefix_ + "box.w2", cfg_.dim, 4).value =
      blocks::gaussian(rng, cfg_.dim, 4, 1.0 / std::sqrt(double(cfg_.dim)));
  store.add(prefix_ + "box.b2", 1, 4);
}

ad::Var Perception::stage(ad::Tape& t, ad::Var x, const std::string& name,
                          int h, int w, int k, int s, int pad, int& ho,
                          int& wo) const {
  ad::Var y = ad::conv2d(x, t.leaf(store_->at(prefix_ + name + ".w")), h, w, k,
                         s, pad);
  y = ad::add_colvec(y, t.leaf(store_->at(prefix_ + name + ".b")));
  ho = out_extent(h, k, s, pad);
  wo = out_extent(w, k, s, pad);
  return ad::relu(y);
}

FeatureMaps Perception::backbone_forward(ad::Tape& t,
                                         const ImageFrame& frame) const {
  if (frame.height <= 0 || frame.width <= 0 || frame.height % 32 != 0 ||
      frame.width % 32 != 0) {
    throw std::runtime_error("backbone: frame size not stride aligned");
  }
  if (frame.pixels.rows() != 3 ||
      frame.pixels.cols() != static_cast<Eigen::Index>(frame.height) *
                                 frame.width) {
    throw std::runtime_error("backbone: pixel buffer shape mismatch");
  }
  FeatureMaps f;
  int h = frame.height, w = frame.width;
  ad::Var x = t.constant(frame.pixels);
  x = stage(t, x, "stage1", h, w, kStageKernel[0], kStageStride[0],
            kStagePad[0], h, w);
  x = stage(t, x, "stage2", h, w, kStageKernel[1], kStageStride[1],
            kStagePad[1], f.h3, f.w3);
  f.c3 = ad::matmul(t.leaf(store_->at(prefix_ + "proj3.w")), x);
  x = stage(t, x, "stage3", f.h3, f.w3, kStageKernel[2], kStageStride[2],
            kStagePad[2], f.h4, f.w4);
  f.c4 = ad::matmul(t.leaf(store_->at(prefix_ + "proj4.w")), x);
  x = stage(t, x, "stage4", f.h4, f.w4, kStageKernel[3], kStageStride[3],
            kStagePad[3], f.h5, f.w5);
  f.c5 = ad::matmul(t.leaf(store_->at(prefix_ + "proj5.w")), x);
  return f;
}

ContextTokens Perception::level_tokens(ad::Tape& t, ad::Var feat, int h, int w,
                                       int level) const {
  ContextTokens tok;
  tok.source = "c" + std::to_string(level);
  ad::Var x = ad::transpose(feat);
  x = ad::add_rowvec(x, ad::slice_rows(t.leaf(store_->at(prefix_ + "levels")),
                                       level - 3, 1));
  x = ad::add(x, t.constant(grid_position_encoding(h, w, cfg_.dim)));
  tok.values = x;
  tok.level.assign(static_cast<size_t>(h) * w, level);
  tok.centers.reserve(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int c = 0; c < w; ++c) {
      tok.centers.emplace_back((y + 0.5) / h, (c + 0.5) / w);
    }
  }
  return tok;
}

ContextTokens Perception::encoder_forward(ad::Tape& t,
                                          const FeatureMaps& f) const {
  ContextTokens c3 = level_tokens(t, f.c3, f.h3, f.w3, 3);
  ContextTokens c4 = level_tokens(t, f.c4, f.h4, f.w4, 4);
  ContextTokens c5 = level_tokens(t, f.c5, f.h5, f.w5, 5);

  ContextTokens out;
  out.source = "enc";
  out.values = ad::concat_rows({c3.values, c4.values, c5.values});
  for (const ContextTokens* part : {&c3, &c4, &c5}) {
    out.level.insert(out.level.end(), part->level.begin(), part->level.end());
    out.centers.insert(out.centers.end(), part->centers.begin(),
                       part->centers.end());
  }
  ParamStore& s = *store_;
  for (int i = 0; i < cfg_.n_enc_layers; ++i) {
    const std::string lp = prefix_ + "enc" + std::to_string(i) + ".";
    ad::Var x = out.values;
    x = blocks::norm(t, s, lp + "ln1",
                     ad::add(x, blocks::attention(t, s, lp + "self.",
                                                  cfg_.heads, x, x)));
    out.values = blocks::norm(
        t, s, lp + "ln2",
        ad::add(x, blocks::feedforward(t, s, lp + "ff.", x)));
  }
  return out;
}

ContextTokens Perception::select_context(ad::Tape& t, const FeatureMaps& f,
                                         const ContextTokens& enc,
                                         const std::string& source) const {
  if (source == "enc") return enc;
  if (source == "c3") return level_tokens(t, f.c3, f.h3, f.w3, 3);
  if (source == "c4") return level_tokens(t, f.c4, f.h4, f.w4, 4);
  if (source == "c5") return level_tokens(t, f.c5, f.h5, f.w5, 5);
  throw std::runtime_error("select_context: unknown source '" + source + "'");
}

DecoderOut Perception::run_decoder(ad::Tape& t, ad::Var queries, int n_track,
                                   const ContextTokens& context) const {
  if (context.values.cols() != cfg_.dim) {
    throw std::runtime_error("decoder: context width mismatch");
  }
  ParamStore& s = *store_;
  ad::Var q = queries;
  for (int i = 0; i < cfg_.n_dec_layers; ++i) {
    const std::string lp = prefix_ + "dec" + std::to_string(i) + ".";
    q = blocks::norm(t, s, lp + "ln1",
                     ad::add(q, blocks::attention(t, s, lp + "self.",
                                                  cfg_.heads, q, q)));
    q = blocks::norm(
        t, s, lp + "ln2",
        ad::add(q, blocks::attention(t, s, lp + "cross.", cfg_.heads, q,
                                     context.values)));
    q = blocks::norm(t, s, lp + "ln3",
                     ad::add(q, blocks::feedforward(t, s, lp + "ff.", q)));
  }
  DecoderOut out;
  out.embeddings = q;
  out.logits = ad::add_rowvec(ad::matmul(q, t.leaf(s.at(prefix_ + "cls.w"))),
                              t.leaf(s.at(prefix_ + "cls.b")));
  out.scores = ad::sigmoid(out.logits);
  ad::Var hidden = ad::relu(
      ad::add_rowvec(ad::matmul(q, t.leaf(s.at(prefix_ + "box.w1"))),
                     t.leaf(s.at(prefix_ + "box.b1"))));
  out.boxes = ad::sigmoid(
      ad::add_rowvec(ad::matmul(hidden, t.leaf(s.at(prefix_ + "box.w2"))),
                     t.leaf(s.at(prefix_ + "box.b2"))));
  out.n_detect = cfg_.n_detect;
  out.n_track = n_track;
  return out;
}

DecoderOut Perception::decoder_forward(ad::Tape& t,
                                       const ContextTokens& context) const {
  return run_decoder(t, t.leaf(store_->at(prefix_ + "det_queries")), 0,
                     context);
}

DecoderOut Perception::decoder_forward(ad::Tape& t, ad::Var track_queries,
                                       const ContextTokens& context) const {
  if (track_queries.cols() != cfg_.dim) {
    throw std::runtime_error("decoder: track query width mismatch");
  }
  ad::Var det = t.leaf(store_->at(prefix_ + "det_queries"));
  ad::Var q = ad::concat_rows({det, track_queries});
  return run_decoder(t, q, static_cast<int>(track_queries.rows()), context);
}

}  // namespace langtrack
