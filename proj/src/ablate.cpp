// SPDX-License-Identifier: Apache-2.0
#include "langtrack/ablate.hpp"

#include "langtrack/plots.hpp"

#include <cctype>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace langtrack {
namespace {

std::string sanitize(const std::string& label) {
  std::string out;
  for (char c : label) {
    out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  }
  return out;
}

std::string pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

}  // namespace

std::vector<AblationVariant> study_variants(const std::string& study,
                                            const ModelConfig& base) {
  std::vector<AblationVariant> out;
  const auto push = [&](const std::string& label, auto&& mutate) {
    AblationVariant v{label, base};
    mutate(v.model);
    out.push_back(std::move(v));
  };
  if (study == "keyfeature") {
    for (const char* src : {"c3", "c4", "c5", "enc"}) {
      push(src, [src](ModelConfig& m) { m.context_source = src; });
    }
  } else if (study == "prompts") {
    for (const char* mode : {"textual", "visual", "both"}) {
      push(mode, [mode](ModelConfig& m) { m.prompt_mode = mode; });
    }
  } else if (study == "adapter") {
    push("w", [](ModelConfig& m) { m.use_adapter = true; });
    push("wo", [](ModelConfig& m) { m.use_adapter = false; });
  } else if (study == "template") {
    push("-", [](ModelConfig& m) { m.template_prefix = ""; });
    push("a", [](ModelConfig& m) { m.template_prefix = "a"; });
    push("a photo of",
         [](ModelConfig& m) { m.template_prefix = "a photo of"; });
  } else if (study == "toklen") {
    for (int len : {11, 13, 15, 17, 19, 21}) {
      push(std::to_string(len), [len](ModelConfig& m) {
        m.token_len = len;
        // The sweep owns the token length; the cap just has to admit it.
        m.max_len = std::max(m.max_len, len);
      });
    }
  } else {
    throw std::runtime_error("ablation: unknown study '" + study + "'");
  }
  return out;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "variant,hota,assa,deta,mota,idf1,ids\n";
  for (const AblationRow& r : rows) {
    out += r.variant + "," + pct(r.report.hota) + "," + pct(r.report.assa) +
           "," + pct(r.report.deta) + "," + pct(r.report.mota) + "," +
           pct(r.report.idf1) + "," + std::to_string(r.report.id_switches) +
           "\n";
  }
  return out;
}

AblationResult run_ablation(const std::string& study,
                            const ModelConfig& base_model,
                            const TrainConfig& base_train,
                            const Trackbook& book,
                            const std::vector<SynthSequence>& train_data,
                            const std::vector<SynthSequence>& eval_data,
                            const std::string& out_dir) {
  if (eval_data.empty()) throw std::runtime_error("ablation: no eval data");
  const std::string eval_domain = eval_data.front().domain;
  for (const SynthSequence& s : eval_data) {
    if (s.domain != eval_domain) {
      throw std::runtime_error("ablation: eval set mixes domains '" +
                               eval_domain + "' and '" + s.domain + "'");
    }
  }
  if (eval_domain == base_train.domain) {
    throw std::runtime_error(
        "ablation: eval data shares the training domain '" + eval_domain +
        "'; cross-domain scoring needs held-out sequences");
  }
  std::filesystem::create_directories(out_dir);

  AblationResult result;
  result.study = study;
  for (const AblationVariant& variant : study_variants(study, base_model)) {
    ModelConfig mc = variant.model;
    mc.n_enc_layers = 1;  // lite training, one encoder layer
    TrackModel model(mc, book);
    Trainer trainer(model, base_train, train_data,
                    out_dir + "/" + study + "_" + sanitize(variant.label));
    trainer.run();
    const EvalOutcome ev =
        evaluate_model(model, base_train.tracker, eval_data, eval_domain);
    result.rows.push_back({variant.label, ev.pooled});
  }

  result.csv_path = out_dir + "/" + study + ".csv";
  write_text_file(result.csv_path, ablation_csv(result.rows));

  result.plot_path = out_dir + "/" + study + ".svg";
  if (study == "toklen") {
    Series hota_curve{"HOTA", {}};
    for (const AblationRow& r : result.rows) {
      hota_curve.points.emplace_back(std::stod(r.variant), r.report.hota);
    }
    write_text_file(result.plot_path,
                    svg_line_chart("token length sweep", "token length",
                                   "HOTA", {hota_curve}));
  } else {
    std::vector<std::pair<std::string, double>> bars;
    for (const AblationRow& r : result.rows) {
      bars.emplace_back(r.variant, r.report.hota);
    }
    write_text_file(result.plot_path,
                    svg_bar_chart(study + " study", "HOTA", bars));
  }
  return result;
}

}  // namespace langtrack
