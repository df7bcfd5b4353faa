// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "langtrack/eval.hpp"
#include "langtrack/train.hpp"

#include <string>
#include <vector>

namespace langtrack {

struct AblationVariant {
  std::string label;
  ModelConfig model;
};

// Pure enumeration of a study over a base model configuration. Studies:
//   keyfeature  context source fed to visual prompting: c3, c4, c5, enc
//   prompts     description pathway: textual, visual, both
//   adapter     w, wo
//   template    sentence prefix: "-" (none), "a", "a photo of"
//   toklen      token length sweep: 11, 13, 15, 17, 19, 21
// Throws on unknown study names.
std::vector<AblationVariant> study_variants(const std::string& study,
                                            const ModelConfig& base);

struct AblationRow {
  std::string variant;
  MetricsReport report;
};

struct AblationResult {
  std::string study;
  std::vector<AblationRow> rows;
  std::string csv_path;
  std::string plot_path;
};

// variant,hota,assa,deta,mota,idf1,ids with four-decimal percentages.
std::string ablation_csv(const std::vector<AblationRow>& rows);

// Trains every variant from scratch in the lite configuration (one encoder
// layer), scores it on the held-out set, and writes <study>.csv plus
// <study>.svg under out_dir. The eval sequences must share one domain tag
// that differs from the training domain.
AblationResult run_ablation(const std::string& study,
                            const ModelConfig& base_model,
                            const TrainConfig& base_train,
                            const Trackbook& book,
                            const std::vector<SynthSequence>& train_data,
                            const std::vector<SynthSequence>& eval_data,
                            const std::string& out_dir);

}  // namespace langtrack
