// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "langtrack/config.hpp"
#include "langtrack/perception.hpp"
#include "langtrack/prompting.hpp"
#include "langtrack/text_stack.hpp"
#include "langtrack/trackbook.hpp"

#include <memory>
#include <string>

namespace langtrack {

// Everything the full tracker needs in one place, with the switches the
// ablation studies flip. `prompt_mode` picks what feeds the mixer: "both"
// (adapted visual prompts against adapted sentence keys), "textual" (a
// learned query row against sentence keys), or "visual" (adapted visual
// prompts used directly). `context_source` picks the token set VCP reads.
struct ModelConfig {
  int dim = 64;
  int heads = 4;
  int ff_hidden = 128;
  int n_enc_layers = 2;  // 1 in the lite configuration
  int n_dec_layers = 2;
  int n_detect = 20;
  int text_layers = 2;
  int text_heads = 4;
  int text_ff = 128;
  int max_len = 32;
  int token_len = 15;
  int adapter_hidden = 32;
  std::string template_prefix = "a photo of";
  std::string context_source = "enc";  // c3 | c4 | c5 | enc
  std::string prompt_mode = "both";    // textual | visual | both
  bool use_adapter = true;
  bool use_fusion = true;  // false = identity on q_prev, the ablated baseline
  std::uint64_t seed = 1;
};

ModelConfig model_config_from(const Config& c);
Config model_config_to(const ModelConfig& cfg);

class TrackModel {
 public:
  TrackModel(const ModelConfig& cfg, const Trackbook& book);

  struct FrameForward {
    ContextTokens encoded;  // encoder tokens the decoder consumed
    ad::Var fused;          // M x dim track-query inputs after fusion
    DecoderOut out;
  };

  // One frame of the tracking pipeline: backbone, encoder, then (for M > 0)
  // visual prompting, mixing, fusion, and finally the joint decoder pass.
  FrameForward forward_frame(ad::Tape& t, const ImageFrame& frame,
                             ad::Var track_queries) const;

  // Zero-row track-query matrix for first frames.
  ad::Var empty_queries(ad::Tape& t) const;

  ParamStore& params() const { return *store_; }
  const ModelConfig& config() const { return cfg_; }
  const Trackbook& book() const { return book_; }
  const TextEncoder& text_encoder() const { return *text_; }
  const Vocabulary& vocab() const { return vocab_; }
  const Eigen::MatrixXd& sentence_embeddings() const { return sentences_; }

 private:
  ad::Var describe(ad::Tape& t, ad::Var track_queries,
                   const ContextTokens& context) const;

  ModelConfig cfg_;
  Trackbook book_;
  Vocabulary vocab_;
  Eigen::MatrixXd sentences_;  // K x dim, frozen-encoder output cache
  // behind a pointer so const forward passes can still bind tape leaves
  std::unique_ptr<ParamStore> store_;
  std::unique_ptr<TextEncoder> text_;
  std::unique_ptr<Adapter> adapter_;
  std::unique_ptr<Perception> perc_;
  std::unique_ptr<VisualPrompter> vcp_;
  std::unique_ptr<PromptMixer> vlm_;
  std::unique_ptr<QueryFusion> fuse_;
};

}  // namespace langtrack
