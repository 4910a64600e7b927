#include "diffrep/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace diffrep {

using nlohmann::json;

std::pair<TimeSelectMode, int> parse_mode(const std::string& text) {
  if (text == "reinforced") {
    return {TimeSelectMode::reinforced, 0};
  }
  if (text == "random") {
    return {TimeSelectMode::random, 0};
  }
  if (text == "none") {
    return {TimeSelectMode::none, 0};
  }
  if (text.rfind("fixed:", 0) == 0) {
    try {
      return {TimeSelectMode::fixed, std::stoi(text.substr(6))};
    } catch (const std::exception&) {
      throw ConfigError("bad fixed timestep in mode '" + text + "'");
    }
  }
  throw ConfigError("unknown time-selection mode '" + text + "'");
}

std::string mode_label(TimeSelectMode mode, int fixed_t) {
  switch (mode) {
    case TimeSelectMode::reinforced:
      return "reinforced";
    case TimeSelectMode::random:
      return "random";
    case TimeSelectMode::none:
      return "none";
    case TimeSelectMode::fixed:
      return "fixed:" + std::to_string(fixed_t);
  }
  return "?";
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& context) {
  if (!j.is_object()) {
    throw ConfigError("expected an object for " + context);
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("unknown key '" + it.key() + "' in " + context);
    }
  }
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("bad value for key '") + key + "'");
    }
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  check_keys(j,
             {"dataset", "schedule", "teacher", "student", "distill", "finetune", "probe",
              "linear_dpm", "seeds", "out_dir", "teacher_checkpoint", "ablation_fixed_grid"},
             "config");
  ExperimentConfig cfg;

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    check_keys(d, {"kind", "classes", "dim", "samples", "spread", "noise", "train_fraction"},
               "dataset");
    read_key(d, "kind", cfg.dataset.kind);
    read_key(d, "classes", cfg.dataset.classes);
    read_key(d, "dim", cfg.dataset.dim);
    read_key(d, "samples", cfg.dataset.samples);
    read_key(d, "spread", cfg.dataset.spread);
    read_key(d, "noise", cfg.dataset.noise);
    read_key(d, "train_fraction", cfg.dataset.train_fraction);
  }
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    check_keys(s, {"steps", "beta_start", "beta_end"}, "schedule");
    read_key(s, "steps", cfg.schedule.steps);
    read_key(s, "beta_start", cfg.schedule.beta_start);
    read_key(s, "beta_end", cfg.schedule.beta_end);
  }
  if (j.contains("teacher")) {
    const json& t = j.at("teacher");
    check_keys(t,
               {"hidden", "time_embed_dim", "mid_block", "attention", "token_count", "epochs",
                "batch_size", "lr", "momentum", "weight_decay", "ema_momentum"},
               "teacher");
    read_key(t, "hidden", cfg.teacher.hidden);
    read_key(t, "time_embed_dim", cfg.teacher.time_embed_dim);
    read_key(t, "mid_block", cfg.teacher.mid_block);
    read_key(t, "attention", cfg.teacher.attention);
    read_key(t, "token_count", cfg.teacher.token_count);
    read_key(t, "epochs", cfg.teacher.epochs);
    read_key(t, "batch_size", cfg.teacher.batch_size);
    read_key(t, "lr", cfg.teacher.lr);
    read_key(t, "momentum", cfg.teacher.momentum);
    read_key(t, "weight_decay", cfg.teacher.weight_decay);
    read_key(t, "ema_momentum", cfg.teacher.ema_momentum);
  }
  if (j.contains("student")) {
    const json& s = j.at("student");
    check_keys(s, {"hidden"}, "student");
    read_key(s, "hidden", cfg.student.hidden);
  }
  if (j.contains("distill")) {
    const json& d = j.at("distill");
    check_keys(d,
               {"loss", "weight", "mode", "epochs", "batch_size", "lr", "momentum",
                "weight_decay", "entropy_weight", "policy_lr", "decoder_lr", "policy_hidden",
                "reward_baseline"},
               "distill");
    read_key(d, "loss", cfg.distill.loss);
    read_key(d, "weight", cfg.distill.weight);
    if (d.contains("mode")) {
      const auto [mode, fixed_t] = parse_mode(d.at("mode").get<std::string>());
      cfg.distill.mode = mode;
      cfg.distill.fixed_t = fixed_t;
    }
    read_key(d, "epochs", cfg.distill.epochs);
    read_key(d, "batch_size", cfg.distill.batch_size);
    read_key(d, "lr", cfg.distill.lr);
    read_key(d, "momentum", cfg.distill.momentum);
    read_key(d, "weight_decay", cfg.distill.weight_decay);
    read_key(d, "entropy_weight", cfg.distill.entropy_weight);
    read_key(d, "policy_lr", cfg.distill.policy_lr);
    read_key(d, "decoder_lr", cfg.distill.decoder_lr);
    read_key(d, "policy_hidden", cfg.distill.policy_hidden);
    read_key(d, "reward_baseline", cfg.distill.reward_baseline);
  }
  if (j.contains("finetune")) {
    const json& f = j.at("finetune");
    check_keys(f, {"epochs", "batch_size", "lr", "momentum", "weight_decay"}, "finetune");
    read_key(f, "epochs", cfg.finetune.epochs);
    read_key(f, "batch_size", cfg.finetune.batch_size);
    read_key(f, "lr", cfg.finetune.lr);
    read_key(f, "momentum", cfg.finetune.momentum);
    read_key(f, "weight_decay", cfg.finetune.weight_decay);
  }
  if (j.contains("probe")) {
    const json& p = j.at("probe");
    check_keys(p, {"t_grid", "attention_samples"}, "probe");
    read_key(p, "t_grid", cfg.probe.t_grid);
    read_key(p, "attention_samples", cfg.probe.attention_samples);
  }
  if (j.contains("linear_dpm")) {
    const json& l = j.at("linear_dpm");
    check_keys(l, {"eigenvalues", "t_grid"}, "linear_dpm");
    read_key(l, "eigenvalues", cfg.linear.eigenvalues);
    read_key(l, "t_grid", cfg.linear.t_grid);
  }
  read_key(j, "seeds", cfg.seeds);
  read_key(j, "out_dir", cfg.out_dir);
  read_key(j, "teacher_checkpoint", cfg.teacher_checkpoint);
  read_key(j, "ablation_fixed_grid", cfg.ablation_fixed_grid);

  if (cfg.seeds.empty()) {
    throw ConfigError("at least one seed is required");
  }
  if (cfg.dataset.kind != "mixture" && cfg.dataset.kind != "bars") {
    throw ConfigError("dataset.kind must be 'mixture' or 'bars'");
  }
  if (cfg.dataset.kind == "bars" && cfg.dataset.dim != 64) {
    throw ConfigError("bars datasets are 8x8 images; set dataset.dim to 64");
  }
  parse_distill_loss(cfg.distill.loss);  // validates the name
  return cfg;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config '" + path + "'");
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in '" + path + "': " + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  return json{
      {"dataset",
       {{"kind", dataset.kind},
        {"classes", dataset.classes},
        {"dim", dataset.dim},
        {"samples", dataset.samples},
        {"spread", dataset.spread},
        {"noise", dataset.noise},
        {"train_fraction", dataset.train_fraction}}},
      {"schedule",
       {{"steps", schedule.steps},
        {"beta_start", schedule.beta_start},
        {"beta_end", schedule.beta_end}}},
      {"teacher",
       {{"hidden", teacher.hidden},
        {"time_embed_dim", teacher.time_embed_dim},
        {"mid_block", teacher.mid_block},
        {"attention", teacher.attention},
        {"token_count", teacher.token_count},
        {"epochs", teacher.epochs},
        {"batch_size", teacher.batch_size},
        {"lr", teacher.lr},
        {"momentum", teacher.momentum},
        {"weight_decay", teacher.weight_decay},
        {"ema_momentum", teacher.ema_momentum}}},
      {"student", {{"hidden", student.hidden}}},
      {"distill",
       {{"loss", distill.loss},
        {"weight", distill.weight},
        {"mode", mode_label(distill.mode, distill.fixed_t)},
        {"epochs", distill.epochs},
        {"batch_size", distill.batch_size},
        {"lr", distill.lr},
        {"momentum", distill.momentum},
        {"weight_decay", distill.weight_decay},
        {"entropy_weight", distill.entropy_weight},
        {"policy_lr", distill.policy_lr},
        {"decoder_lr", distill.decoder_lr},
        {"policy_hidden", distill.policy_hidden},
        {"reward_baseline", distill.reward_baseline}}},
      {"finetune",
       {{"epochs", finetune.epochs},
        {"batch_size", finetune.batch_size},
        {"lr", finetune.lr},
        {"momentum", finetune.momentum},
        {"weight_decay", finetune.weight_decay}}},
      {"probe", {{"t_grid", probe.t_grid}, {"attention_samples", probe.attention_samples}}},
      {"linear_dpm", {{"eigenvalues", linear.eigenvalues}, {"t_grid", linear.t_grid}}},
      {"seeds", seeds},
      {"out_dir", out_dir},
      {"teacher_checkpoint", teacher_checkpoint},
      {"ablation_fixed_grid", ablation_fixed_grid}};
}

std::string ExperimentConfig::hash() const {
  const std::string dump = to_json().dump();
  return hex64(fnv1a(dump.data(), dump.size()));
}

std::vector<int> ExperimentConfig::resolved_ablation_grid() const {
  const int steps = schedule.steps;
  std::vector<int> grid = ablation_fixed_grid;
  if (grid.empty()) {
    for (int g : {0, 1, 5, 10, 20, 30, 50, 99}) {
      grid.push_back(std::min(steps - 1, static_cast<int>(std::llround(g * steps / 100.0))));
    }
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  }
  for (int t : grid) {
    if (t < 0 || t >= steps) {
      throw ConfigError("ablation fixed timestep out of range");
    }
  }
  return grid;
}

std::vector<int> ExperimentConfig::resolved_probe_grid() const {
  const int steps = schedule.steps;
  std::vector<int> grid = probe.t_grid;
  if (grid.empty()) {
    const int points = std::min(12, steps);
    for (int i = 0; i < points; ++i) {
      grid.push_back(static_cast<int>(
          std::llround(static_cast<double>(i) * (steps - 1) / std::max(1, points - 1))));
    }
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  }
  for (int t : grid) {
    if (t < 0 || t >= steps) {
      throw ConfigError("probe timestep out of range");
    }
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

LabeledDataset build_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
  RngStream rng(seed, streams::dataset);
  if (cfg.dataset.kind == "bars") {
    return bars8x8(cfg.dataset.classes, cfg.dataset.samples, cfg.dataset.noise, rng);
  }
  return gaussian_mixture(cfg.dataset.classes, cfg.dataset.dim, cfg.dataset.samples,
                          cfg.dataset.spread, rng);
}

std::pair<LabeledDataset, LabeledDataset> build_split(const ExperimentConfig& cfg,
                                                      std::uint64_t seed) {
  const LabeledDataset ds = build_dataset(cfg, seed);
  RngStream rng(seed, streams::split);
  return split(ds, cfg.dataset.train_fraction, rng);
}

TeacherTrainResult build_teacher(const ExperimentConfig& cfg, const LabeledDataset& train,
                                 std::uint64_t seed) {
  DenoiserArch arch;
  arch.input_dim = train.dim();
  arch.hidden = cfg.teacher.hidden;
  arch.time_embed_dim = cfg.teacher.time_embed_dim;
  arch.mid_block = cfg.teacher.mid_block;
  arch.attention = cfg.teacher.attention;
  arch.token_count = cfg.teacher.token_count;
  const NoiseSchedule schedule = NoiseSchedule::linear(
      cfg.schedule.steps, cfg.schedule.beta_start, cfg.schedule.beta_end);
  TeacherTrainConfig tc;
  tc.epochs = cfg.teacher.epochs;
  tc.batch_size = cfg.teacher.batch_size;
  tc.lr = cfg.teacher.lr;
  tc.momentum = cfg.teacher.momentum;
  tc.weight_decay = cfg.teacher.weight_decay;
  tc.ema_momentum = cfg.teacher.ema_momentum;
  RngStream rng(seed, streams::teacher);
  return train_teacher(arch, schedule, train, tc, rng);
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

Stage1Result run_stage1(const ExperimentConfig& cfg, const Teacher& teacher,
                        const LabeledDataset& train, std::uint64_t seed) {
  const std::uint64_t guard =
      hash_params(teacher.params) ^ (hash_params(teacher.ema_params) * 3);

  const TeacherFeatureSource source(teacher);
  RngStream student_rng(seed, streams::student);
  Stage1Result result{
      make_student(train.dim(), cfg.student.hidden, train.classes, source.feature_dim(),
                   student_rng),
      {},
      {},
      -1.0,
      -1.0};

  const TimeSelectMode mode = cfg.distill.mode;
  if (mode != TimeSelectMode::none && cfg.distill.epochs > 0) {
    const int steps = source.num_timesteps();
    if (mode == TimeSelectMode::fixed &&
        (cfg.distill.fixed_t < 0 || cfg.distill.fixed_t >= steps)) {
      throw ConfigError("fixed timestep must lie in [0, T)");
    }

    DistillConfig dcfg;
    dcfg.loss = parse_distill_loss(cfg.distill.loss);
    dcfg.weight =
        cfg.distill.weight > 0.0 ? cfg.distill.weight : default_distill_weight(dcfg.loss);
    dcfg.lr = cfg.distill.lr;
    dcfg.momentum = cfg.distill.momentum;
    dcfg.weight_decay = cfg.distill.weight_decay;

    TimePolicy policy;
    AuxDecoder decoder;
    JointState joint;
    PolicyStepConfig pcfg;
    if (mode == TimeSelectMode::reinforced) {
      RngStream policy_rng(seed, streams::policy);
      policy = make_policy(train.dim(), cfg.distill.policy_hidden, steps, policy_rng);
      RngStream decoder_rng(seed, streams::decoder);
      decoder = make_decoder(source.feature_dim(), train.classes, decoder_rng);
      pcfg.policy_lr = cfg.distill.policy_lr;
      pcfg.decoder_lr = cfg.distill.decoder_lr;
      pcfg.momentum = cfg.distill.momentum;
      pcfg.weight_decay = cfg.distill.weight_decay;
      pcfg.entropy_weight = cfg.distill.entropy_weight;
      pcfg.reward_baseline = cfg.distill.reward_baseline;
    }

    SgdState distill_state;
    RngStream rng(seed, streams::stage1);
    const int n = train.size();
    std::size_t last_epoch_trace_start = 0;
    for (int epoch = 0; epoch < cfg.distill.epochs; ++epoch) {
      const auto order = rng.permutation(n);
      double epoch_sum = 0.0;
      int batches = 0;
      last_epoch_trace_start = result.trace.size();
      for (int start = 0; start < n; start += cfg.distill.batch_size) {
        const int stop = std::min(n, start + cfg.distill.batch_size);
        Matrix xb(stop - start, train.dim());
        std::vector<int> yb(static_cast<std::size_t>(stop - start));
        for (int i = start; i < stop; ++i) {
          const int src = order[static_cast<std::size_t>(i)];
          xb.row(i - start) = train.x.row(src);
          yb[static_cast<std::size_t>(i - start)] = train.y[static_cast<std::size_t>(src)];
        }
        std::vector<int> t(static_cast<std::size_t>(stop - start));
        switch (mode) {
          case TimeSelectMode::fixed:
            std::fill(t.begin(), t.end(), cfg.distill.fixed_t);
            break;
          case TimeSelectMode::random:
            for (auto& ti : t) {
              ti = static_cast<int>(rng.uniform_int(0, steps));
            }
            break;
          case TimeSelectMode::reinforced: {
            const RewardRecord rec =
                joint_step(policy, decoder, source, xb, yb, pcfg, joint, rng);
            t = rec.chosen_t;
            result.trace.mean_t.push_back(rec.mean_t);
            result.trace.std_t.push_back(rec.std_t);
            result.trace.mean_reward.push_back(rec.mean_reward);
            result.trace.entropy.push_back(rec.entropy);
            break;
          }
          case TimeSelectMode::none:
            break;
        }
        epoch_sum += distill_step(result.student, source, xb, t, dcfg, distill_state);
        ++batches;
      }
      result.epoch_loss.push_back(epoch_sum / std::max(1, batches));
    }

    if (mode == TimeSelectMode::reinforced && result.trace.size() > 0) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t i = last_epoch_trace_start; i < result.trace.size(); ++i) {
        sum += result.trace.mean_t[i];
        ++count;
      }
      result.final_mean_t = sum / static_cast<double>(count);
      result.final_mean_t_quantile =
          steps > 1 ? result.final_mean_t / static_cast<double>(steps - 1) : 0.0;
    }
  }

  if (guard != (hash_params(teacher.params) ^ (hash_params(teacher.ema_params) * 3))) {
    throw std::logic_error("stage 1 mutated the teacher");
  }
  return result;
}

Stage2Result run_stage2(StudentNet& student, const ExperimentConfig& cfg,
                        const LabeledDataset& train, const LabeledDataset& test,
                        std::uint64_t seed) {
  FinetuneConfig fc;
  fc.epochs = cfg.finetune.epochs;
  fc.batch_size = cfg.finetune.batch_size;
  fc.lr = cfg.finetune.lr;
  fc.momentum = cfg.finetune.momentum;
  fc.weight_decay = cfg.finetune.weight_decay;
  RngStream rng(seed, streams::stage2);
  const FinetuneResult r = finetune(student, train, test, fc, rng);
  return Stage2Result{r.epoch_loss, r.train_accuracy, r.test_accuracy};
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const Teacher& teacher) {
  std::vector<std::pair<TimeSelectMode, int>> modes;
  modes.emplace_back(TimeSelectMode::none, 0);
  modes.emplace_back(TimeSelectMode::random, 0);
  for (int t : cfg.resolved_ablation_grid()) {
    modes.emplace_back(TimeSelectMode::fixed, t);
  }
  modes.emplace_back(TimeSelectMode::reinforced, 0);
  return run_ablation(cfg, teacher, modes);
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const Teacher& teacher,
                                      const std::vector<std::pair<TimeSelectMode, int>>& modes) {
  std::vector<AblationRow> rows;
  for (const auto& [mode, fixed_t] : modes) {
    ExperimentConfig variant = cfg;
    variant.distill.mode = mode;
    variant.distill.fixed_t = fixed_t;
    AblationRow row;
    row.mode = mode_label(mode, fixed_t);
    for (std::uint64_t seed : cfg.seeds) {
      const auto [train, test] = build_split(cfg, seed);
      Stage1Result stage1 = run_stage1(variant, teacher, train, seed);
      const Stage2Result stage2 = run_stage2(stage1.student, variant, train, test, seed);
      row.seed_accuracy.push_back(stage2.test_accuracy);
    }
    const double n = static_cast<double>(row.seed_accuracy.size());
    double mean = 0.0;
    for (double a : row.seed_accuracy) {
      mean += a;
    }
    mean /= n;
    double var = 0.0;
    for (double a : row.seed_accuracy) {
      var += (a - mean) * (a - mean);
    }
    row.mean = mean;
    row.stddev = n > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CLI-level runs
// ---------------------------------------------------------------------------

namespace {

RunReport base_report(const ExperimentConfig& cfg, const std::string& kind) {
  RunReport report;
  report.kind = kind;
  report.config = cfg.to_json();
  report.config_hash = cfg.hash();
  return report;
}

class WallClock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

RunReport run_train_dpm(const ExperimentConfig& cfg) {
  WallClock clock;
  RunReport report = base_report(cfg, "train-dpm");
  bool saved = false;
  for (std::uint64_t seed : cfg.seeds) {
    const auto [train, test] = build_split(cfg, seed);
    const TeacherTrainResult r = build_teacher(cfg, train, seed);
    SeedRunReport s;
    s.seed = seed;
    s.stage1_loss = r.epoch_loss;  // teacher loss curve
    report.seeds.push_back(std::move(s));
    if (!saved) {
      save_teacher(r.teacher, cfg.out_dir + "/teacher");
      saved = true;
    }
  }
  report.wall_clock_seconds = clock.seconds();
  emit_report(report, cfg.out_dir);
  return report;
}

RunReport run_probe(const ExperimentConfig& cfg) {
  WallClock clock;
  RunReport report = base_report(cfg, "probe");
  for (std::uint64_t seed : cfg.seeds) {
    const auto [train, test] = build_split(cfg, seed);
    Teacher teacher;
    if (!cfg.teacher_checkpoint.empty()) {
      teacher = load_teacher(cfg.teacher_checkpoint);
    } else {
      teacher = build_teacher(cfg, train, seed).teacher;
    }
    const std::vector<int> grid = cfg.resolved_probe_grid();
    const ProbeReport probe = probe_teacher(teacher, train, grid, cfg.probe.attention_samples);
    SeedRunReport s;
    s.seed = seed;
    s.probe_t = probe.t_grid;
    s.probe_erank = probe.erank;
    s.probe_separability = probe.separability;
    s.probe_attention_off_diagonal = probe.attention_off_diagonal;
    report.seeds.push_back(std::move(s));
    write_probe_csv(probe,
                    cfg.out_dir + "/probe_full_seed" + std::to_string(seed) + ".csv");

    // Leading singular values across the grid.
    const auto top = static_cast<Eigen::Index>(
        std::min<std::size_t>(4, static_cast<std::size_t>(probe.spectra.front().size())));
    std::vector<Series> sigma_series(static_cast<std::size_t>(top));
    for (Eigen::Index k = 0; k < top; ++k) {
      sigma_series[static_cast<std::size_t>(k)].name = "sigma " + std::to_string(k + 1);
      for (std::size_t i = 0; i < probe.t_grid.size(); ++i) {
        sigma_series[static_cast<std::size_t>(k)].x.push_back(probe.t_grid[i]);
        sigma_series[static_cast<std::size_t>(k)].y.push_back(probe.spectra[i][k]);
      }
    }
    write_line_chart(cfg.out_dir + "/sigma_vs_t_seed" + std::to_string(seed) + ".svg",
                     "Leading singular values by timestep", "t", "sigma", sigma_series);
  }
  report.wall_clock_seconds = clock.seconds();
  emit_report(report, cfg.out_dir);
  return report;
}

RunReport run_linear_dpm(const ExperimentConfig& cfg) {
  WallClock clock;
  RunReport report = base_report(cfg, "linear-dpm");

  Matrix sigma;
  if (!cfg.linear.eigenvalues.empty()) {
    const auto L = static_cast<Eigen::Index>(cfg.linear.eigenvalues.size());
    sigma = Matrix::Zero(L, L);
    for (Eigen::Index i = 0; i < L; ++i) {
      sigma(i, i) = cfg.linear.eigenvalues[static_cast<std::size_t>(i)];
    }
  } else {
    const LabeledDataset ds = build_dataset(cfg, cfg.seeds.front());
    sigma = ds.x.transpose() * ds.x / static_cast<double>(ds.size());
    sigma = (sigma + sigma.transpose()) / 2.0;
  }

  const NoiseSchedule schedule = NoiseSchedule::linear(
      cfg.schedule.steps, cfg.schedule.beta_start, cfg.schedule.beta_end);
  std::vector<int> grid = cfg.linear.t_grid;
  if (grid.empty()) {
    for (int t = 1; t <= schedule.steps(); ++t) {
      grid.push_back(t);
    }
  }
  const auto rows = tradeoff_curve(sigma, schedule, grid);
  write_tradeoff_csv(rows, cfg.out_dir + "/tradeoff.csv");

  Series kappa{"kappa", {}, {}};
  Series sigma_top{"sigma max", {}, {}};
  Series sigma_bottom{"sigma min", {}, {}};
  for (const TradeoffRow& row : rows) {
    kappa.x.push_back(row.t);
    kappa.y.push_back(row.condition_number);
    sigma_top.x.push_back(row.t);
    sigma_top.y.push_back(row.sigma[0]);
    sigma_bottom.x.push_back(row.t);
    sigma_bottom.y.push_back(row.sigma[row.sigma.size() - 1]);
  }
  write_line_chart(cfg.out_dir + "/tradeoff.svg",
                   "Optimal-map spectrum along the schedule", "t", "value",
                   {kappa, sigma_top, sigma_bottom});

  report.wall_clock_seconds = clock.seconds();
  emit_report(report, cfg.out_dir);
  return report;
}

RunReport run_distill(const ExperimentConfig& cfg) {
  WallClock clock;
  if (cfg.teacher_checkpoint.empty()) {
    throw ConfigError("distill requires teacher_checkpoint (run train-dpm first)");
  }
  const Teacher teacher = load_teacher(cfg.teacher_checkpoint);
  RunReport report = base_report(cfg, "distill");
  for (std::uint64_t seed : cfg.seeds) {
    const auto [train, test] = build_split(cfg, seed);
    Stage1Result r = run_stage1(cfg, teacher, train, seed);
    save_params(r.student.params,
                cfg.out_dir + "/student_seed" + std::to_string(seed) + ".bin");
    SeedRunReport s;
    s.seed = seed;
    s.stage1_loss = r.epoch_loss;
    s.trace = r.trace;
    s.final_mean_t = r.final_mean_t;
    s.final_mean_t_quantile = r.final_mean_t_quantile;
    report.seeds.push_back(std::move(s));
  }
  report.wall_clock_seconds = clock.seconds();
  emit_report(report, cfg.out_dir);
  return report;
}

RunReport run_finetune(const ExperimentConfig& cfg) {
  WallClock clock;
  RunReport report = base_report(cfg, "finetune");
  for (std::uint64_t seed : cfg.seeds) {
    const auto [train, test] = build_split(cfg, seed);
    const std::string path =
        cfg.out_dir + "/student_seed" + std::to_string(seed) + ".bin";
    if (!std::filesystem::exists(path)) {
      throw ConfigError("missing distilled student '" + path + "' (run distill first)");
    }
    ParamStore loaded = load_params(path);
    const int teacher_width =
        loaded.contains("proj.w") ? static_cast<int>(loaded.at("proj.w").cols()) : 0;
    RngStream student_rng(seed, streams::student);
    StudentNet student = make_student(train.dim(), cfg.student.hidden, train.classes,
                                      teacher_width, student_rng);
    if (loaded.tensor_count() != student.params.tensor_count()) {
      throw ConfigError("student checkpoint does not match the configured architecture");
    }
    student.params = std::move(loaded);
    const Stage2Result r = run_stage2(student, cfg, train, test, seed);
    SeedRunReport s;
    s.seed = seed;
    s.stage2_loss = r.epoch_loss;
    s.train_accuracy = r.train_accuracy;
    s.test_accuracy = r.test_accuracy;
    report.seeds.push_back(std::move(s));
  }
  report.wall_clock_seconds = clock.seconds();
  emit_report(report, cfg.out_dir);
  return report;
}

RunReport run_ablate(const ExperimentConfig& cfg) {
  WallClock clock;
  Teacher teacher;
  if (!cfg.teacher_checkpoint.empty()) {
    teacher = load_teacher(cfg.teacher_checkpoint);
  } else {
    const auto [train, test] = build_split(cfg, cfg.seeds.front());
    teacher = build_teacher(cfg, train, cfg.seeds.front()).teacher;
  }
  RunReport report = base_report(cfg, "ablate");
  report.ablation = run_ablation(cfg, teacher);
  report.wall_clock_seconds = clock.seconds();
  emit_report(report, cfg.out_dir);
  return report;
}

RunReport run_report(const std::string& dir) {
  std::ifstream in(dir + "/report.json");
  if (!in) {
    throw ConfigError("no report.json under '" + dir + "'");
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("report.json parse error: ") + e.what());
  }
  const RunReport report = RunReport::from_json(j);
  emit_report(report, dir);
  return report;
}

}  // namespace diffrep
