#pragma once

#include "diffrep/autonet.hpp"
#include "diffrep/datasets.hpp"
#include "diffrep/diffusion.hpp"
#include "diffrep/numeric.hpp"

#include <string>
#include <vector>

namespace diffrep {

enum class DistillLossKind { hint, at, rkd };

DistillLossKind parse_distill_loss(const std::string& name);
std::string to_string(DistillLossKind kind);
/// hint -> 1, at -> 1000, rkd -> 1.
double default_distill_weight(DistillLossKind kind);

/// Classification student. The tapped feature is the last hidden activation;
/// an optional linear projector maps it to the teacher feature width (it is
/// the identity at init when the widths already match).
struct StudentNet {
  MlpSpec spec;  // input -> hidden ... -> classes
  int teacher_width = 0;
  ParamStore params;

  int feature_width() const { return spec.hidden.back(); }
  bool has_projector() const { return teacher_width > 0; }
};

StudentNet make_student(int input_dim, std::vector<int> hidden, int classes,
                        int teacher_width, RngStream& rng);

/// Encoder+head forward; trace.act.back() is the raw student feature.
MlpTrace student_forward(const StudentNet& student, const Matrix& x);
/// Student feature after the projector (identity when none is configured).
Matrix student_projected_features(const StudentNet& student, const MlpTrace& trace);

/// Mean over the batch of the squared L2 feature distance.
double hint_loss(const Matrix& z_student, const Matrix& z_teacher, Matrix* d_student = nullptr);

/// Attention-style transfer for vector features: elementwise squares,
/// L2-normalized per row, compared under squared L2. Scale-invariant in
/// each argument; rejects zero-norm rows.
double at_loss(const Matrix& z_student, const Matrix& z_teacher, Matrix* d_student = nullptr);

/// Distance-wise relational loss: pairwise-distance matrices normalized by
/// their mean nonzero distance, compared under a Huber penalty (delta = 1).
/// Needs a batch of at least 3.
double rkd_loss(const Matrix& z_student, const Matrix& z_teacher, Matrix* d_student = nullptr);

struct DistillConfig {
  DistillLossKind loss = DistillLossKind::hint;
  double weight = 1.0;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// One optimizer step on weight * L_kd between the projected student feature
/// and the teacher feature at the supplied per-sample timesteps. The teacher
/// is never touched. Returns the weighted loss value.
double distill_step(StudentNet& student, const FeatureSource& teacher, const Matrix& x,
                    const std::vector<int>& t, const DistillConfig& config, SgdState& state);

struct FinetuneConfig {
  int epochs = 40;
  int batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

struct FinetuneResult {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

/// Cross-entropy fine-tuning of the whole student; reports held-out accuracy.
FinetuneResult finetune(StudentNet& student, const LabeledDataset& train,
                        const LabeledDataset& test, const FinetuneConfig& config,
                        RngStream& rng);

}  // namespace diffrep
