#include "diffrep/pipeline.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <string>
#include <vector>

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string mode;
  std::string loss;
  std::string t_grid;
};

void add_common(CLI::App* cmd, CommonArgs* args, bool with_mode_loss, bool with_grid) {
  cmd->add_option("--config", args->config_path, "experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", args->out_dir, "output directory (overrides config)");
  cmd->add_option("--seed", args->seed, "single seed (overrides the config seed list)")
      ->each([args](const std::string&) { args->seed_set = true; });
  if (with_mode_loss) {
    cmd->add_option("--mode", args->mode,
                    "time selection: reinforced | fixed:T | random | none");
    cmd->add_option("--loss", args->loss, "distillation loss: hint | at | rkd");
  }
  if (with_grid) {
    cmd->add_option("--t-grid", args->t_grid, "comma-separated timestep grid");
  }
}

std::vector<int> parse_int_csv(const std::string& text) {
  std::vector<int> values;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string cell =
        text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      values.push_back(std::stoi(cell));
    } catch (const std::exception&) {
      throw diffrep::ConfigError("bad --t-grid entry '" + cell + "'");
    }
    if (comma == std::string::npos) {
      break;
    }
    pos = comma + 1;
  }
  if (values.empty()) {
    throw diffrep::ConfigError("--t-grid is empty");
  }
  return values;
}

diffrep::ExperimentConfig load_config(const CommonArgs& args, const std::string& command) {
  diffrep::ExperimentConfig cfg = diffrep::ExperimentConfig::load_file(args.config_path);
  if (!args.out_dir.empty()) {
    cfg.out_dir = args.out_dir;
  }
  if (args.seed_set) {
    cfg.seeds = {args.seed};
  }
  if (!args.mode.empty()) {
    const auto [mode, fixed_t] = diffrep::parse_mode(args.mode);
    cfg.distill.mode = mode;
    cfg.distill.fixed_t = fixed_t;
  }
  if (!args.loss.empty()) {
    diffrep::parse_distill_loss(args.loss);
    cfg.distill.loss = args.loss;
  }
  if (!args.t_grid.empty()) {
    const std::vector<int> grid = parse_int_csv(args.t_grid);
    if (command == "probe") {
      cfg.probe.t_grid = grid;
    } else if (command == "linear-dpm") {
      cfg.linear.t_grid = grid;
    } else if (command == "ablate") {
      cfg.ablation_fixed_grid = grid;
    }
  }
  return cfg;
}

void print_summary(const diffrep::RunReport& report, const std::string& out_dir) {
  std::printf("%s: wrote report.json under %s\n", report.kind.c_str(), out_dir.c_str());
  for (const auto& seed : report.seeds) {
    if (seed.test_accuracy >= 0.0) {
      std::printf("  seed %llu: test accuracy %.4f\n",
                  static_cast<unsigned long long>(seed.seed), seed.test_accuracy);
    }
    if (seed.final_mean_t >= 0.0) {
      std::printf("  seed %llu: final mean t %.2f (quantile %.3f)\n",
                  static_cast<unsigned long long>(seed.seed), seed.final_mean_t,
                  seed.final_mean_t_quantile);
    }
  }
  for (const auto& row : report.ablation) {
    std::printf("  %-12s accuracy %.4f +- %.4f\n", row.mode.c_str(), row.mean, row.stddev);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Toy diffusion-model representation analysis and distillation"};
  app.require_subcommand(1);

  CommonArgs train_args, probe_args, linear_args, distill_args, finetune_args, ablate_args;
  std::string report_dir;

  CLI::App* train = app.add_subcommand("train-dpm", "train a toy denoising teacher");
  add_common(train, &train_args, false, false);
  CLI::App* probe = app.add_subcommand("probe", "per-timestep representation diagnostics");
  add_common(probe, &probe_args, false, true);
  CLI::App* linear =
      app.add_subcommand("linear-dpm", "closed-form trade-off curve of the linear model");
  add_common(linear, &linear_args, false, true);
  CLI::App* distill = app.add_subcommand("distill", "stage 1: feature distillation");
  add_common(distill, &distill_args, true, false);
  CLI::App* finetune = app.add_subcommand("finetune", "stage 2: task fine-tuning");
  add_common(finetune, &finetune_args, false, false);
  CLI::App* ablate = app.add_subcommand("ablate", "time-selection ablation grid");
  add_common(ablate, &ablate_args, true, true);
  CLI::App* report_cmd =
      app.add_subcommand("report", "re-emit CSV/SVG files from an existing report.json");
  report_cmd->add_option("--out", report_dir, "directory containing report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) {
      const auto cfg = load_config(train_args, "train-dpm");
      print_summary(diffrep::run_train_dpm(cfg), cfg.out_dir);
    } else if (probe->parsed()) {
      const auto cfg = load_config(probe_args, "probe");
      print_summary(diffrep::run_probe(cfg), cfg.out_dir);
    } else if (linear->parsed()) {
      const auto cfg = load_config(linear_args, "linear-dpm");
      print_summary(diffrep::run_linear_dpm(cfg), cfg.out_dir);
    } else if (distill->parsed()) {
      const auto cfg = load_config(distill_args, "distill");
      print_summary(diffrep::run_distill(cfg), cfg.out_dir);
    } else if (finetune->parsed()) {
      const auto cfg = load_config(finetune_args, "finetune");
      print_summary(diffrep::run_finetune(cfg), cfg.out_dir);
    } else if (ablate->parsed()) {
      const auto cfg = load_config(ablate_args, "ablate");
      print_summary(diffrep::run_ablate(cfg), cfg.out_dir);
    } else if (report_cmd->parsed()) {
      print_summary(diffrep::run_report(report_dir), report_dir);
    }
  } catch (const diffrep::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const diffrep::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
