// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "langtrack/autodiff.hpp"
#include "langtrack/container.hpp"
#include "langtrack/rng.hpp"
#include "langtrack/trackbook.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace langtrack {

// Pre-LN transformer text encoder with bias-free linears, learned positional
// embeddings, causal within-sentence attention, and EOS pooling. Every
// parameter is frozen; the weights come from a fixed private seed (or from an
// imported weight file) and never change during training.
struct TextEncoderConfig {
  int vocab_size = 3;
  int d_text = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  int max_len = 32;
  int d_visual = 64;  // incoming visual prompt width
  std::uint64_t seed = 0x7e57c0de5eedULL;
};

class TextEncoder {
 public:
  TextEncoder(const TextEncoderConfig& cfg, ParamStore& store,
              std::string prefix = "text.");

  const TextEncoderConfig& config() const { return cfg_; }

  // Hidden state at the EOS position, 1 x d_text.
  ad::Var encode_sentence(ad::Tape& t, const TokenSequence& tokens) const;

  // Visual prompts through the same stack: full (non-causal) self-attention,
  // no positional term, no pooling. Gradients flow through to `prompts`.
  ad::Var encode_visual(ad::Tape& t, ad::Var prompts) const;

  // Single concatenated pass under the block mask; returns the visual rows
  // and the per-sentence EOS rows. Matches the independent passes above.
  std::pair<ad::Var, ad::Var> encode_joint(
      ad::Tape& t, ad::Var prompts,
      const std::vector<TokenSequence>& sentences) const;

  // Convenience for caching: K x d_text matrix of sentence embeddings,
  // computed on a scratch tape (the encoder is frozen, nothing to learn).
  Eigen::MatrixXd encode_sentences(const std::vector<TokenSequence>& all) const;

  static Eigen::MatrixXd causal_mask(int len);
  // Block mask over M visual positions followed by one causal block per
  // sentence; zero everywhere across block boundaries.
  static Eigen::MatrixXd joint_mask(int m, const std::vector<int>& lengths);

  // Bitwise digest over all encoder parameters, in canonical name order.
  std::uint64_t checksum() const;
  const std::vector<std::string>& names() const { return names_; }

  void import_weights(const TensorFile& file);
  TensorFile export_weights() const;

 private:
  ad::Var run_stack(ad::Tape& t, ad::Var x, const Eigen::MatrixXd* mask) const;
  ad::Var sentence_input(ad::Tape& t, const TokenSequence& tokens) const;
  ad::Var visual_input(ad::Tape& t, ad::Var prompts) const;
  Param& param(const std::string& canonical) const;

  TextEncoderConfig cfg_;
  std::string prefix_;
  ParamStore* store_;
  std::vector<std::string> names_;
};

// Trainable residual MLP: relu(x W1) W2 + x, no biases. W2 starts at zero so
// the adapter begins as the identity.
struct AdapterConfig {
  int d = 64;
  int hidden = 32;
};

class Adapter {
 public:
  Adapter(const AdapterConfig& cfg, ParamStore& store, Rng& rng,
          std::string prefix = "adapter.");

  ad::Var apply(ad::Tape& t, ad::Var x) const;

 private:
  AdapterConfig cfg_;
  std::string prefix_;
  ParamStore* store_;
};

}  // namespace langtrack
