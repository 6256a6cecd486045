// Copyright 2026 The CONFETI Desk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "confeti/cli.hpp"

#include "confeti/config.hpp"
#include "confeti/image_io.hpp"
#include "confeti/report.hpp"
#include "confeti/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace confeti::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Entries = std::vector<std::pair<std::string, std::string>>;

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd, bool config_required) {
    auto* opt = cmd->add_option("--config", config_path, "key=value config file");
    if (config_required) opt->required();
    cmd->add_option("--set", sets, "override one key (key=value), repeatable");
    cmd->add_option("--seed", seed, "shortcut for --set seed=N");
  }

  Entries overrides() const {
    Entries out;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
      out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) out.emplace_back("seed", std::to_string(*seed));
    return out;
  }

  TrainConfig resolve() const {
    Entries file;
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) throw ConfigError("config file not found: " + config_path);
      file = read_kv_file(config_path);
    }
    return resolve_config(file, overrides());
  }
};

void write_echo(const fs::path& dir, const TrainConfig& cfg) {
  fs::create_directories(dir);
  std::ofstream(dir / "resolved_config.cfg") << config_to_text(cfg);
}

train::Benchmark load_or_make(const std::string& data_dir, const TrainConfig& cfg) {
  if (data_dir.empty()) return train::make_benchmark(cfg);
  return train::read_benchmark(data_dir);
}

TrainConfig run_config(const fs::path& run_dir, const ConfigArgs& args) {
  const auto path = run_dir / "resolved_config.cfg";
  if (!fs::exists(path)) throw ConfigError("no resolved_config.cfg in run directory " + run_dir.string());
  return resolve_config(read_kv_file(path), args.overrides());
}

std::string eval_text(const EvalResult& r) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed;
  os << "miou=" << r.miou << "\n";
  for (std::size_t c = 0; c < r.iou.size(); ++c) {
    os << "iou_" << synth::class_name(static_cast<int>(c)) << "=" << r.iou[c] << "\n";
  }
  return os.str();
}

void write_cosine_csv(const fs::path& path, const torch::Tensor& cosine, int k) {
  std::ofstream out(path);
  out << "class";
  for (int c = 0; c < k; ++c) out << "," << synth::class_name(c);
  out << "\n" << std::setprecision(9);
  auto cm = cosine.to(torch::kFloat64);
  for (int r = 0; r < k; ++r) {
    out << synth::class_name(r);
    for (int c = 0; c < k; ++c) out << "," << cm[r][c].item<double>();
    out << "\n";
  }
}

int report_error(std::ostream& err, const std::string& kind, const std::string& msg, int code) {
  std::string line = msg;
  std::replace(line.begin(), line.end(), '\n', ' ');
  err << "error: " << kind << ": " << line << "\n";
  return code;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Domain-adaptive segmentation on a synthetic shapes benchmark"};
  app.require_subcommand(1);
  app.footer(config_help());

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "render the source/target/eval splits as PNGs");
  ConfigArgs gen_args;
  gen_args.attach(gen, false);
  std::string gen_out = "data";
  gen->add_option("--out", gen_out, "output directory");

  // train
  auto* tr = app.add_subcommand("train", "run the configured training schedule");
  ConfigArgs tr_args;
  tr_args.attach(tr, true);
  std::string tr_out = "run", tr_data, tr_style;
  tr->add_option("--out", tr_out, "run directory");
  tr->add_option("--data", tr_data, "dataset directory from gen-data (default: generate in memory)");
  tr->add_option("--style-checkpoint", tr_style, "skip to the second round behind this frozen stylizer");

  // eval
  auto* ev = app.add_subcommand("eval", "score a trained run on the held-out target split");
  ConfigArgs ev_args;
  ev_args.attach(ev, false);
  std::string ev_run, ev_data;
  ev->add_option("--run", ev_run, "run directory")->required();
  ev->add_option("--data", ev_data, "dataset directory (default: regenerate)");

  // stylize
  auto* st = app.add_subcommand("stylize", "write source | stylized image pairs");
  ConfigArgs st_args;
  st_args.attach(st, false);
  std::string st_run, st_out, st_data;
  int st_count = 8;
  st->add_option("--run", st_run, "run directory holding checkpoints/style.pt")->required();
  st->add_option("--out", st_out, "output directory (default: <run>/stylized)");
  st->add_option("--data", st_data, "dataset directory (default: regenerate)");
  st->add_option("--count", st_count, "number of source images")->check(CLI::PositiveNumber);

  // ablate
  auto* ab = app.add_subcommand("ablate", "train every ablation row and tabulate target mIoU");
  ConfigArgs ab_args;
  ab_args.attach(ab, true);
  std::string ab_out = "ablation", ab_data;
  std::vector<std::string> ab_rows;
  ab->add_option("--out", ab_out, "output directory");
  ab->add_option("--data", ab_data, "dataset directory (default: generate in memory)");
  ab->add_option("--rows", ab_rows, "subset of rows (default: all seven)")->delimiter(',');

  // report
  auto* rp = app.add_subcommand("report", "summary and curves from a run's metrics CSV");
  std::string rp_run;
  rp->add_option("--run", rp_run, "run directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what(), kExitUsage);
    err << app.help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      const auto cfg = gen_args.resolve();
      const auto bench = train::make_benchmark(cfg);
      train::write_benchmark(bench, gen_out);
      write_echo(gen_out, cfg);
      out << "wrote " << cfg.n_source << " source, " << cfg.n_target << " target, " << cfg.n_eval
          << " eval images to " << gen_out << "\n";
    } else if (tr->parsed()) {
      const auto cfg = tr_args.resolve();
      const auto bench = load_or_make(tr_data, cfg);
      std::optional<fs::path> style;
      if (!tr_style.empty()) style = fs::path(tr_style);
      auto result = train::run_experiment(cfg, bench, fs::path(tr_out), style);
      report::write_report(tr_out);
      out << "best target miou " << std::fixed << std::setprecision(4) << result.eval.miou << "\n";
    } else if (ev->parsed()) {
      const fs::path run(ev_run);
      const auto cfg = run_config(run, ev_args);
      const auto bench = load_or_make(ev_data, cfg);
      net::SegModel model(cfg.network_config());
      train::load_module(*model, run / "checkpoints" / "student.pt");
      const auto result = train::evaluate(model, bench.eval, cfg.num_classes);
      std::ofstream(run / "eval.txt") << eval_text(result);
      const auto bank_path = run / "checkpoints" / "bank.pt";
      if (fs::exists(bank_path)) {
        proto::PrototypeBank bank(cfg.bank_config());
        bank.load(bank_path.string());
        write_cosine_csv(run / "prototype_cosine.csv", bank.cosine_matrix(), cfg.num_classes);
      }
      out << eval_text(result);
    } else if (st->parsed()) {
      const fs::path run(st_run);
      const auto cfg = run_config(run, st_args);
      const auto style_path = run / "checkpoints" / "style.pt";
      if (!fs::exists(style_path)) throw ConfigError("run has no style checkpoint: " + style_path.string());
      auto style = train::make_style_module(cfg);
      train::load_module(*style, style_path);
      torch::Tensor source;
      if (st_data.empty()) {
        source = synth::generate_pair(cfg.scene_spec(), cfg.domain_shift(), st_count, 1).source.images.data;
      } else {
        source = train::read_benchmark(st_data).data.source.images.data;
        source = source.narrow(0, 0, std::min<std::int64_t>(st_count, source.size(0)));
      }
      torch::Tensor stylized;
      {
        torch::NoGradGuard no_grad;
        stylized = style::stylize(style->generator, source);
      }
      const fs::path dir = st_out.empty() ? run / "stylized" : fs::path(st_out);
      write_echo(dir, cfg);
      std::vector<torch::Tensor> pairs;
      for (std::int64_t i = 0; i < source.size(0); ++i) {
        auto pair = torch::cat({source[i], stylized[i]}, 2);
        std::ostringstream name;
        name << std::setw(5) << std::setfill('0') << i << ".png";
        io::write_rgb_png(dir / name.str(), pair);
        pairs.push_back(pair);
      }
      io::write_rgb_png(dir / "grid.png", torch::cat(pairs, 1));
      out << "wrote " << source.size(0) << " pairs to " << dir.string() << "\n";
    } else if (ab->parsed()) {
      const auto cfg = ab_args.resolve();
      const auto bench = load_or_make(ab_data, cfg);
      const auto rows = ab_rows.empty() ? ablation_rows() : ab_rows;
      for (const auto& r : rows) {
        if (std::find(ablation_rows().begin(), ablation_rows().end(), r) == ablation_rows().end()) {
          throw ConfigError("unknown ablation row '" + r + "'");
        }
      }
      write_echo(ab_out, cfg);
      const auto table = train::run_ablation_suite(cfg, bench, rows, fs::path(ab_out));
      for (const auto& r : table) out << r.name << " " << std::fixed << std::setprecision(4) << r.eval.miou << "\n";
    } else if (rp->parsed()) {
      const auto summary = report::write_report(rp_run);
      out << summary.text();
    }
  } catch (const UsageError& e) {
    return report_error(err, "usage", e.what(), kExitUsage);
  } catch (const ConfigError& e) {
    return report_error(err, "config", e.what(), kExitUsage);
  } catch (const ShapeError& e) {
    return report_error(err, "shape", e.what(), kExitRuntime);
  } catch (const TrainingError& e) {
    return report_error(err, "training", e.what(), kExitRuntime);
  } catch (const std::exception& e) {
    return report_error(err, "runtime", e.what(), kExitRuntime);
  }
  return kExitOk;
}

}  // namespace confeti::cli
