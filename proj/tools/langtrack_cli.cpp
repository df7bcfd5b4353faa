// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <json.hpp>

#include <langtrack/ablate.hpp>
#include <langtrack/eval.hpp>
#include <langtrack/plots.hpp>
#include <langtrack/train.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace langtrack;

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

Config load_config(const std::string& path, std::uint64_t seed_override,
                   bool seed_given, const std::string& preset) {
  Config c;
  if (!path.empty()) c = Config::from_file(path);
  if (!preset.empty()) c.set("train.preset", preset);
  if (seed_given) {
    const std::string s = std::to_string(seed_override);
    c.set("train.seed", s);
    c.set("model.seed", s);
  }
  return c;
}

DomainSpec resolve_domain(const std::string& name) {
  if (name == "domain_a") return domain_a();
  if (name == "domain_b") return domain_b();
  if (std::filesystem::exists(name)) return domain_from_json(slurp(name));
  throw std::runtime_error("unknown domain '" + name +
                           "' (not a builtin name or a spec file)");
}

std::vector<SynthSequence> load_sequences(const std::vector<std::string>& dirs) {
  std::vector<SynthSequence> out;
  for (const std::string& d : dirs) out.push_back(load_sequence(d));
  return out;
}

// Deterministic two-domain split used when ablate gets no data directories.
std::vector<SynthSequence> default_split(bool train, std::uint64_t seed) {
  const DomainSpec spec = train ? domain_a() : domain_b();
  const int frames = train ? 80 : 40;
  std::vector<SynthSequence> out;
  for (int i = 0; i < 2; ++i) {
    const std::string name =
        spec.name + "_" + (train ? "train" : "eval") + std::to_string(i);
    SynthSequence seq = synth_generate(
        spec, frames, Rng::derive(seed, "ablate." + name));
    seq.name = name;
    out.push_back(std::move(seq));
  }
  return out;
}

int cmd_synth(const std::string& domain, int frames, std::uint64_t seed,
              int count, const std::string& out_dir, const std::string& book) {
  const DomainSpec spec = resolve_domain(domain);
  validate_domain(spec, load_trackbook(book));
  for (int i = 0; i < count; ++i) {
    SynthSequence seq = synth_generate(
        spec, frames,
        count == 1 ? seed : Rng::derive(seed, "seq" + std::to_string(i)));
    seq.name = count == 1 ? spec.name : spec.name + "_" + std::to_string(i);
    const std::string dir = out_dir + "/" + seq.name;
    save_sequence(seq, dir);
    std::cout << "wrote " << dir << " (" << frames << " frames, domain "
              << seq.domain << ")\n";
  }
  return 0;
}

int cmd_train(const Config& cfg, const std::vector<std::string>& data,
              const std::string& out_dir, const std::string& book_path) {
  const ModelConfig mc = model_config_from(cfg);
  const TrainConfig tc = train_config_from(cfg);
  const Trackbook book = load_trackbook(book_path);
  TrackModel model(mc, book);
  Trainer trainer(model, tc, load_sequences(data), out_dir);
  trainer.run();
  std::cout << "trained " << trainer.global_step() << " steps; checkpoint "
            << out_dir << "/final.ckpt\n";
  return 0;
}

int cmd_track(const std::string& checkpoint, const std::string& seq_dir,
              const std::string& out_path, const Config& overrides) {
  const LoadedModel loaded = load_model(checkpoint);
  Config tc = tracker_config_to(loaded.train_config.tracker);
  tc.merge(overrides);
  const TrackerConfig cfg = tracker_config_from(tc);
  validate_tracker_config(cfg);
  const SynthSequence seq = load_sequence(seq_dir);
  const std::vector<FrameResult> results =
      run_sequence(*loaded.model, cfg, seq.frames);
  write_mot(results_to_sequence(results, seq.width, seq.height), out_path);
  std::cout << "wrote " << out_path << " (" << results.size() << " frames)\n";
  return 0;
}

int cmd_eval(const std::string& gt_path, const std::string& res_path,
             const std::string& out_path) {
  const Sequence gt = read_mot(gt_path);
  const Sequence res = read_mot(res_path);
  const MetricsReport report = evaluate(gt, res);
  write_text_file(out_path, report_json(report));
  std::cout << report_table({{"result", report}});
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_ablate(const std::string& study, const Config& cfg,
               const std::vector<std::string>& train_dirs,
               const std::vector<std::string>& eval_dirs,
               const std::string& out_dir, const std::string& book_path) {
  const ModelConfig mc = model_config_from(cfg);
  const TrainConfig tc = train_config_from(cfg);
  const Trackbook book = load_trackbook(book_path);
  const std::vector<SynthSequence> train_data =
      train_dirs.empty() ? default_split(true, tc.seed)
                         : load_sequences(train_dirs);
  const std::vector<SynthSequence> eval_data =
      eval_dirs.empty() ? default_split(false, tc.seed)
                        : load_sequences(eval_dirs);
  const AblationResult result = run_ablation(study, mc, tc, book, train_data,
                                             eval_data, out_dir);
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (const AblationRow& r : result.rows) rows.emplace_back(r.variant, r.report);
  std::cout << report_table(rows);
  std::cout << "wrote " << result.csv_path << " and " << result.plot_path
            << "\n";
  return 0;
}

int plot_loss_log(const std::string& path, const std::string& out_path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  Series loss{"loss", {}}, tracking{"tracking", {}}, detection{"detection", {}};
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    const double step = j.at("step").get<double>();
    loss.points.emplace_back(step, j.at("loss").get<double>());
    tracking.points.emplace_back(step, j.at("tracking").get<double>());
    detection.points.emplace_back(step, j.at("detection").get<double>());
  }
  write_text_file(out_path, svg_line_chart("training loss", "step", "loss",
                                           {loss, tracking, detection}));
  return 0;
}

int plot_report(const std::string& path, const std::string& out_path) {
  const nlohmann::json j = nlohmann::json::parse(slurp(path));
  const std::vector<std::pair<std::string, double>> bars = {
      {"HOTA", j.at("HOTA").get<double>()},
      {"AssA", j.at("AssA").get<double>()},
      {"DetA", j.at("DetA").get<double>()},
      {"MOTA", j.at("MOTA").get<double>()},
      {"IDF1", j.at("IDF1").get<double>()},
  };
  write_text_file(out_path, svg_bar_chart("tracking metrics", "percent", bars));
  return 0;
}

int plot_csv(const std::string& path, const std::string& out_path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("empty csv " + path);
  std::vector<std::string> header;
  {
    std::istringstream is(line);
    std::string cell;
    while (std::getline(is, cell, ',')) header.push_back(cell);
  }
  int hota_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "hota") hota_col = static_cast<int>(i);
  }
  if (hota_col < 0) throw std::runtime_error("csv has no hota column");

  std::vector<std::pair<std::string, double>> rows;
  bool numeric = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) <= hota_col) {
      throw std::runtime_error("short csv row: " + line);
    }
    rows.emplace_back(cells[0], std::stod(cells[static_cast<std::size_t>(hota_col)]));
    try {
      std::size_t used = 0;
      std::stod(cells[0], &used);
      numeric = numeric && used == cells[0].size();
    } catch (const std::exception&) {
      numeric = false;
    }
  }
  if (rows.empty()) throw std::runtime_error("csv has no data rows: " + path);
  if (numeric) {
    Series s{"HOTA", {}};
    for (const auto& [name, v] : rows) s.points.emplace_back(std::stod(name), v);
    write_text_file(out_path,
                    svg_line_chart("ablation sweep", header[0], "HOTA", {s}));
  } else {
    write_text_file(out_path, svg_bar_chart("ablation study", "HOTA", rows));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"language-conditioned query tracker"};
  app.require_subcommand(1);

  std::string config_path, preset;
  std::uint64_t seed = 0;
  bool seed_given = false;
  app.add_option("--config", config_path,
                 "key=value config file (dotted keys, see README)");
  app.add_option("--seed", seed, "override train.seed and model.seed")
      ->each([&seed_given](const std::string&) { seed_given = true; });
  app.add_option("--preset", preset, "training schedule preset")
      ->check(CLI::IsMember({"desk", "paper"}));

  std::string book_path = "data/trackbook.txt";
  app.add_option("--book", book_path, "trackbook phrase file");

  auto* synth = app.add_subcommand("synth", "generate a synthetic sequence");
  std::string sy_domain = "domain_a", sy_out = "synth_out";
  int sy_frames = 100, sy_count = 1;
  std::uint64_t sy_seed = 1;
  synth->add_option("--domain", sy_domain, "builtin name or spec json file");
  synth->add_option("--frames", sy_frames)->check(CLI::PositiveNumber);
  synth->add_option("--seed", sy_seed);
  synth->add_option("--count", sy_count, "sequences to generate")
      ->check(CLI::PositiveNumber);
  synth->add_option("--out", sy_out, "output directory");

  auto* train = app.add_subcommand("train", "train a model");
  std::vector<std::string> tr_data;
  std::string tr_out = "train_out";
  train->add_option("--data", tr_data, "sequence directories")->required();
  train->add_option("--out", tr_out, "run directory");

  auto* track = app.add_subcommand("track", "run inference on a sequence");
  std::string tk_ckpt, tk_seq, tk_out = "res.txt";
  track->add_option("--checkpoint", tk_ckpt)->required();
  track->add_option("--seq", tk_seq, "sequence directory")->required();
  track->add_option("--out", tk_out, "result file");

  auto* eval = app.add_subcommand("eval", "score a result file");
  std::string ev_gt, ev_res, ev_out = "report.json";
  eval->add_option("--gt", ev_gt)->required();
  eval->add_option("--res", ev_res)->required();
  eval->add_option("--out", ev_out, "metrics json");

  auto* ablate = app.add_subcommand("ablate", "run an ablation study");
  std::string ab_study, ab_out = "ablate_out";
  std::vector<std::string> ab_train, ab_eval;
  ablate->add_option("--study", ab_study)
      ->required()
      ->check(CLI::IsMember(
          {"keyfeature", "prompts", "adapter", "template", "toklen"}));
  ablate->add_option("--train-data", ab_train,
                     "training sequence directories (default: generated)");
  ablate->add_option("--eval-data", ab_eval,
                     "held-out sequence directories (default: generated)");
  ablate->add_option("--out", ab_out, "output directory");

  auto* plot = app.add_subcommand("plot", "render an svg chart");
  std::string pl_loss, pl_report, pl_csv, pl_out = "plot.svg";
  plot->add_option("--loss-log", pl_loss, "loss_log.jsonl from a run");
  plot->add_option("--report", pl_report, "metrics json from eval");
  plot->add_option("--csv", pl_csv, "ablation table");
  plot->add_option("--out", pl_out, "svg path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const Config cfg = load_config(config_path, seed, seed_given, preset);
    if (*synth) {
      return cmd_synth(sy_domain, sy_frames, sy_seed, sy_count, sy_out,
                       book_path);
    }
    if (*train) return cmd_train(cfg, tr_data, tr_out, book_path);
    if (*track) return cmd_track(tk_ckpt, tk_seq, tk_out, cfg);
    if (*eval) return cmd_eval(ev_gt, ev_res, ev_out);
    if (*ablate) {
      return cmd_ablate(ab_study, cfg, ab_train, ab_eval, ab_out, book_path);
    }
    if (*plot) {
      const int given = (pl_loss.empty() ? 0 : 1) + (pl_report.empty() ? 0 : 1) +
                        (pl_csv.empty() ? 0 : 1);
      if (given != 1) {
        std::cerr << "plot needs exactly one of --loss-log, --report, --csv\n";
        return 2;
      }
      if (!pl_loss.empty()) return plot_loss_log(pl_loss, pl_out);
      if (!pl_report.empty()) return plot_report(pl_report, pl_out);
      return plot_csv(pl_csv, pl_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
