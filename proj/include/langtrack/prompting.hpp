// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "langtrack/autodiff.hpp"
#include "langtrack/rng.hpp"
#include "langtrack/text_stack.hpp"

#include <string>

namespace langtrack {

struct PromptBlockConfig {
  int dim = 64;
  int heads = 4;
  int ff_hidden = 128;
};

// One post-norm transformer-decoder block that turns the previous frame's
// track queries into per-track visual prompts: queries self-attend, then
// cross-attend to the frame's context tokens, then pass a feed-forward.
class VisualPrompter {
 public:
  VisualPrompter(const PromptBlockConfig& cfg, ParamStore& store, Rng& rng,
                 std::string prefix = "vcp.");

  // q_prev: M x D, context: N_c x D (non-empty) -> M x D. M = 0 passes
  // through as an empty matrix.
  ad::Var forward(ad::Tape& t, ad::Var q_prev, ad::Var context) const;

  const PromptBlockConfig& config() const { return cfg_; }

 private:
  PromptBlockConfig cfg_;
  std::string prefix_;
  ParamStore* store_;
};

// Cross-attention block rewriting each adapted visual prompt as a blend of
// adapted sentence embeddings: one pseudo textual description per track.
class PromptMixer {
 public:
  PromptMixer(const PromptBlockConfig& cfg, ParamStore& store, Rng& rng,
              std::string prefix = "vlm.");

  // queries: M x D, kv: K x D with K >= 1 whenever M > 0.
  ad::Var forward(ad::Tape& t, ad::Var queries, ad::Var kv) const;

  const PromptBlockConfig& config() const { return cfg_; }

 private:
  PromptBlockConfig cfg_;
  std::string prefix_;
  ParamStore* store_;
};

// layer_norm(linear([q_prev | description])) producing the next frame's
// track-query inputs. The linear starts as identity on the q_prev half and
// zero on the description half, so an untrained model behaves like the
// language-free one.
class QueryFusion {
 public:
  QueryFusion(int dim, ParamStore& store, std::string prefix = "fuse.");

  ad::Var forward(ad::Tape& t, ad::Var q_prev, ad::Var description) const;

 private:
  int dim_;
  std::string prefix_;
  ParamStore* store_;
};

// Full language pathway for one frame: visual prompts go through the frozen
// text stack, the shared adapter is applied to both modalities, and the mixer
// produces the per-track descriptions. Sentence embeddings come in as a
// precomputed K x D matrix (they only change with the phrase book).
ad::Var describe_tracks(ad::Tape& t, const TextEncoder& enc,
                        const Adapter& adapter, const PromptMixer& mixer,
                        ad::Var visual_prompts,
                        const Eigen::MatrixXd& sentence_embeddings);

}  // namespace langtrack
