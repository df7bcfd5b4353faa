// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "langtrack/autodiff.hpp"
#include "langtrack/rng.hpp"

#include <string>
#include <utility>
#include <vector>

namespace langtrack {

// One RGB frame, channel-major: pixels is 3 x (height*width) with spatial
// index y*width + x and values in [0,1]. Sizes must be multiples of 32 so
// every backbone stride divides evenly.
struct ImageFrame {
  int height = 0;
  int width = 0;
  int frame_index = 1;
  Eigen::MatrixXd pixels;
};

// Backbone outputs at strides 8/16/32, already projected to the model width.
// Each map is dim x (h*w), channel-major like the input.
struct FeatureMaps {
  ad::Var c3, c4, c5;
  int h3 = 0, w3 = 0;
  int h4 = 0, w4 = 0;
  int h5 = 0, w5 = 0;
};

// Flattened token set for attention consumption, one row per cell, with the
// originating pyramid level and the normalized cell center kept per row.
struct ContextTokens {
  ad::Var values;  // N_c x dim
  std::string source;
  std::vector<int> level;
  std::vector<std::pair<double, double>> centers;  // (cy, cx) in (0,1)
};

// Per-query decoder results in input order: detect queries first, then track
// queries. Boxes are sigmoid-parameterized cxcywh, so always inside (0,1).
struct DecoderOut {
  ad::Var embeddings;  // (n_detect + n_track) x dim
  ad::Var logits;      // pre-sigmoid class scores, column vector
  ad::Var scores;
  ad::Var boxes;       // (n_detect + n_track) x 4
  int n_detect = 0;
  int n_track = 0;
};

struct PerceptionConfig {
  int dim = 64;
  int heads = 4;
  int ff_hidden = 128;
  int n_enc_layers = 2;  // 1 in the lite configuration
  int n_dec_layers = 2;
  int n_detect = 20;
};

// Fixed sine/cosine table over a h x w grid: first half of the columns
// encodes the row coordinate, second half the column coordinate.
Eigen::MatrixXd grid_position_encoding(int h, int w, int dim);

class Perception {
 public:
  Perception(const PerceptionConfig& cfg, ParamStore& store, Rng& rng,
             std::string prefix = "perc.");

  FeatureMaps backbone_forward(ad::Tape& t, const ImageFrame& frame) const;
  ContextTokens encoder_forward(ad::Tape& t, const FeatureMaps& f) const;
  ContextTokens select_context(ad::Tape& t, const FeatureMaps& f,
                               const ContextTokens& enc,
                               const std::string& source) const;

  // Detect-only pass and the joint pass over detect + track queries. The
  // track variant with zero rows produces bit-identical outputs to the
  // detect-only one.
  DecoderOut decoder_forward(ad::Tape& t, const ContextTokens& context) const;
  DecoderOut decoder_forward(ad::Tape& t, ad::Var track_queries,
                             const ContextTokens& context) const;

  const PerceptionConfig& config() const { return cfg_; }

 private:
  ad::Var stage(ad::Tape& t, ad::Var x, const std::string& name, int h, int w,
                int k, int s, int pad, int& ho, int& wo) const;
  ContextTokens level_tokens(ad::Tape& t, ad::Var feat, int h, int w,
                             int level) const;
  DecoderOut run_decoder(ad::Tape& t, ad::Var queries, int n_track,
                         const ContextTokens& context) const;

  PerceptionConfig cfg_;
  std::string prefix_;
  ParamStore* store_;
};

}  // namespace langtrack
