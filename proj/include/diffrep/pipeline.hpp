#pragma once

#include "diffrep/datasets.hpp"
#include "diffrep/diffusion.hpp"
#include "diffrep/distill.hpp"
#include "diffrep/linear_dpm.hpp"
#include "diffrep/policy.hpp"
#include "diffrep/probe.hpp"
#include "diffrep/report.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace diffrep {

enum class TimeSelectMode { reinforced, fixed, random, none };

/// "reinforced" | "random" | "none" | "fixed:<t>".
std::pair<TimeSelectMode, int> parse_mode(const std::string& text);
std::string mode_label(TimeSelectMode mode, int fixed_t);

struct DatasetConfig {
  std::string kind = "mixture";  // mixture | bars
  int classes = 4;
  int dim = 16;
  int samples = 2048;
  double spread = 1.0;   // mixture within-class std
  double noise = 0.1;    // bars pixel noise
  double train_fraction = 0.5;
};

struct ScheduleConfig {
  int steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

struct TeacherStageConfig {
  std::vector<int> hidden = {48, 16, 48};
  int time_embed_dim = 16;
  int mid_block = -1;
  bool attention = false;
  int token_count = 0;
  int epochs = 40;
  int batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double ema_momentum = 0.999;
};

struct StudentStageConfig {
  std::vector<int> hidden = {32, 16};
};

struct DistillStageConfig {
  std::string loss = "hint";
  double weight = 0.0;  // 0: default for the loss kind (1 / 1000 / 1)
  TimeSelectMode mode = TimeSelectMode::reinforced;
  int fixed_t = 0;
  int epochs = 40;
  int batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double entropy_weight = 0.1;
  double policy_lr = 0.1;
  double decoder_lr = 0.1;
  std::vector<int> policy_hidden = {32, 32, 32};
  bool reward_baseline = false;
};

struct FinetuneStageConfig {
  int epochs = 40;
  int batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

struct ProbeStageConfig {
  std::vector<int> t_grid;  // zero-based indices; empty: 12 evenly spaced
  int attention_samples = 128;
};

struct LinearStageConfig {
  std::vector<double> eigenvalues;  // empty: use the dataset covariance
  std::vector<int> t_grid;          // levels in [1, T]; empty: every level
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ScheduleConfig schedule;
  TeacherStageConfig teacher;
  StudentStageConfig student;
  DistillStageConfig distill;
  FinetuneStageConfig finetune;
  ProbeStageConfig probe;
  LinearStageConfig linear;
  std::vector<std::uint64_t> seeds = {1};
  std::string out_dir = "runs/out";
  std::string teacher_checkpoint;       // optional
  std::vector<int> ablation_fixed_grid;  // empty: {0,1,5,10,20,30,50,99} scaled to T

  /// Strict parser: unknown keys anywhere are rejected.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load_file(const std::string& path);
  nlohmann::json to_json() const;
  std::string hash() const;

  std::vector<int> resolved_ablation_grid() const;
  std::vector<int> resolved_probe_grid() const;
};

/// Fixed stream-id allocation so every stage draws from its own stream.
namespace streams {
constexpr std::uint64_t dataset = 1;
constexpr std::uint64_t split = 2;
constexpr std::uint64_t teacher = 3;
constexpr std::uint64_t student = 4;
constexpr std::uint64_t stage1 = 5;
constexpr std::uint64_t stage2 = 6;
constexpr std::uint64_t policy = 7;
constexpr std::uint64_t decoder = 8;
constexpr std::uint64_t sample = 9;
}  // namespace streams

LabeledDataset build_dataset(const ExperimentConfig& cfg, std::uint64_t seed);
std::pair<LabeledDataset, LabeledDataset> build_split(const ExperimentConfig& cfg,
                                                      std::uint64_t seed);
TeacherTrainResult build_teacher(const ExperimentConfig& cfg, const LabeledDataset& train,
                                 std::uint64_t seed);

struct Stage1Result {
  StudentNet student;
  std::vector<double> epoch_loss;
  TimeTrace trace;                     // populated in reinforced mode
  double final_mean_t = -1.0;          // mean selected t over the last epoch
  double final_mean_t_quantile = -1.0;
};

/// Distillation under the configured time-selection mode. The teacher is
/// hash-checked before and after; reinforced mode runs one policy/decoder
/// joint update per iteration.
Stage1Result run_stage1(const ExperimentConfig& cfg, const Teacher& teacher,
                        const LabeledDataset& train, std::uint64_t seed);

struct Stage2Result {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

Stage2Result run_stage2(StudentNet& student, const ExperimentConfig& cfg,
                        const LabeledDataset& train, const LabeledDataset& test,
                        std::uint64_t seed);

/// Distill+finetune for every (mode, seed) pair against one shared teacher.
/// The default mode set is {none, random, fixed(t) over the grid, reinforced}.
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const Teacher& teacher);
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const Teacher& teacher,
                                      const std::vector<std::pair<TimeSelectMode, int>>& modes);

// CLI-level runs; each emits report.json and derived files into cfg.out_dir.
RunReport run_train_dpm(const ExperimentConfig& cfg);
RunReport run_probe(const ExperimentConfig& cfg);
RunReport run_linear_dpm(const ExperimentConfig& cfg);
RunReport run_distill(const ExperimentConfig& cfg);
RunReport run_finetune(const ExperimentConfig& cfg);
RunReport run_ablate(const ExperimentConfig& cfg);
/// Re-emits the derived CSV/SVG files from an existing report.json.
RunReport run_report(const std::string& dir);

}  // namespace diffrep
