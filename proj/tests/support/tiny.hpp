// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <langtrack/model.hpp>
#include <langtrack/synth.hpp>

#include <string>
#include <vector>

namespace testsupport {

// Desk-test model: full pipeline, minimal widths, 32x32 inputs.
inline langtrack::ModelConfig tiny_model_config() {
  langtrack::ModelConfig cfg;
  cfg.dim = 32;
  cfg.heads = 4;
  cfg.ff_hidden = 48;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.n_detect = 6;
  cfg.text_layers = 1;
  cfg.text_heads = 4;
  cfg.text_ff = 48;
  cfg.max_len = 16;
  cfg.token_len = 8;
  cfg.adapter_hidden = 16;
  cfg.seed = 11;
  return cfg;
}

inline langtrack::Trackbook tiny_book() {
  langtrack::Trackbook book;
  book.phrases = {
      "person in red clothes",    "person in blue clothes",
      "person in green clothes",  "person in yellow clothes",
      "person walking alone",     "person riding a bicycle",
      "two people walking together", "person standing still",
  };
  return book;
}

// 32x32 bright-world sequence, two targets.
inline langtrack::SynthSequence tiny_sequence_a(std::uint64_t seed,
                                                const std::string& name,
                                                int frames = 20) {
  langtrack::DomainSpec spec = langtrack::domain_a();
  spec.width = 32;
  spec.height = 32;
  spec.density = 2;
  spec.scale_min = 0.2;
  spec.scale_max = 0.3;
  spec.attributes = {"red", "blue"};
  langtrack::SynthSequence seq = langtrack::synth_generate(spec, frames, seed);
  seq.name = name;
  return seq;
}

// 32x32 dark-world counterpart for held-out evaluation.
inline langtrack::SynthSequence tiny_sequence_b(std::uint64_t seed,
                                                const std::string& name,
                                                int frames = 12) {
  langtrack::DomainSpec spec = langtrack::domain_b();
  spec.width = 32;
  spec.height = 32;
  spec.density = 2;
  spec.scale_min = 0.16;
  spec.scale_max = 0.25;
  spec.attributes = {"red", "blue"};
  langtrack::SynthSequence seq = langtrack::synth_generate(spec, frames, seed);
  seq.name = name;
  return seq;
}

inline langtrack::ImageFrame tiny_frame(int index, std::uint64_t seed) {
  langtrack::DomainSpec spec = langtrack::domain_a();
  spec.width = 32;
  spec.height = 32;
  spec.density = 1;
  spec.scale_min = 0.25;
  spec.scale_max = 0.35;
  langtrack::SynthSequence seq = langtrack::synth_generate(spec, index, seed);
  langtrack::ImageFrame frame = seq.frames.back();
  frame.frame_index = index;
  return frame;
}

}  // namespace testsupport
