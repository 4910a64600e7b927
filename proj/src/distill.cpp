#include "diffrep/distill.hpp"

#include <algorithm>
#include <cmath>

namespace diffrep {

DistillLossKind parse_distill_loss(const std::string& name) {
  if (name == "hint") {
    return DistillLossKind::hint;
  }
  if (name == "at") {
    return DistillLossKind::at;
  }
  if (name == "rkd") {
    return DistillLossKind::rkd;
  }
  throw ConfigError("unknown distillation loss '" + name + "'");
}

std::string to_string(DistillLossKind kind) {
  switch (kind) {
    case DistillLossKind::hint:
      return "hint";
    case DistillLossKind::at:
      return "at";
    case DistillLossKind::rkd:
      return "rkd";
  }
  return "?";
}

double default_distill_weight(DistillLossKind kind) {
  return kind == DistillLossKind::at ? 1000.0 : 1.0;
}

StudentNet make_student(int input_dim, std::vector<int> hidden, int classes,
                        int teacher_width, RngStream& rng) {
  if (hidden.empty()) {
    throw std::invalid_argument("student: at least one hidden layer required for the tap");
  }
  StudentNet student;
  student.spec = MlpSpec{input_dim, std::move(hidden), classes};
  student.teacher_width = teacher_width;
  student.params = mlp_init(student.spec, rng);
  if (teacher_width > 0) {
    const int width = student.feature_width();
    Matrix proj;
    if (width == teacher_width) {
      proj = Matrix::Identity(width, width);
    } else {
      const double bound = std::sqrt(6.0 / width);
      proj.resize(width, teacher_width);
      for (int r = 0; r < width; ++r) {
        for (int c = 0; c < teacher_width; ++c) {
          proj(r, c) = bound * (2.0 * rng.uniform() - 1.0);
        }
      }
    }
    student.params.insert("proj.w", std::move(proj));
    student.params.insert("proj.b", Matrix::Zero(1, teacher_width));
  }
  return student;
}

MlpTrace student_forward(const StudentNet& student, const Matrix& x) {
  return mlp_forward(student.params, student.spec, x);
}

Matrix student_projected_features(const StudentNet& student, const MlpTrace& trace) {
  const Matrix& z = trace.act.back();
  if (!student.has_projector()) {
    return z;
  }
  Matrix projected = z * student.params.at("proj.w");
  projected.rowwise() += student.params.at("proj.b").row(0);
  return projected;
}

double hint_loss(const Matrix& z_student, const Matrix& z_teacher, Matrix* d_student) {
  if (z_student.rows() != z_teacher.rows() || z_student.cols() != z_teacher.cols()) {
    throw std::invalid_argument("hint_loss: feature shapes must match");
  }
  if (z_student.rows() == 0) {
    throw std::invalid_argument("hint_loss: empty batch");
  }
  const double n = static_cast<double>(z_student.rows());
  const Matrix diff = z_student - z_teacher;
  if (d_student != nullptr) {
    *d_student = 2.0 * diff / n;
  }
  return diff.squaredNorm() / n;
}

double at_loss(const Matrix& z_student, const Matrix& z_teacher, Matrix* d_student) {
  if (z_student.rows() != z_teacher.rows() || z_student.cols() != z_teacher.cols()) {
    throw std::invalid_argument("at_loss: feature shapes must match");
  }
  const Eigen::Index n = z_student.rows();
  if (n == 0) {
    throw std::invalid_argument("at_loss: empty batch");
  }
  double loss = 0.0;
  if (d_student != nullptr) {
    d_student->setZero(n, z_student.cols());
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd a = z_student.row(i).array().square();
    const Eigen::RowVectorXd b = z_teacher.row(i).array().square();
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) {
      throw std::invalid_argument("at_loss: zero-norm feature row");
    }
    const Eigen::RowVectorXd ah = a / na;
    const Eigen::RowVectorXd bh = b / nb;
    loss += (ah - bh).squaredNorm();
    if (d_student != nullptr) {
      const Eigen::RowVectorXd g = 2.0 * (ah - bh) / static_cast<double>(n);
      const Eigen::RowVectorXd d_a = (g - g.dot(ah) * ah) / na;
      d_student->row(i) = 2.0 * z_student.row(i).cwiseProduct(d_a);
    }
  }
  return loss / static_cast<double>(n);
}

namespace {

double huber(double r) { return std::abs(r) <= 1.0 ? 0.5 * r * r : std::abs(r) - 0.5; }
double huber_grad(double r) { return std::clamp(r, -1.0, 1.0); }

struct PairwiseDistances {
  Matrix dist;      // n x n symmetric, zero diagonal
  double mean = 0;  // mean over nonzero upper-triangle entries
  int nonzero = 0;
};

PairwiseDistances pairwise(const Matrix& z) {
  const Eigen::Index n = z.rows();
  PairwiseDistances out;
  out.dist = Matrix::Zero(n, n);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (z.row(i) - z.row(j)).norm();
      out.dist(i, j) = d;
      out.dist(j, i) = d;
      if (d > 0.0) {
        sum += d;
        ++out.nonzero;
      }
    }
  }
  if (out.nonzero == 0) {
    throw std::invalid_argument("rkd_loss: all pairwise distances are zero");
  }
  out.mean = sum / out.nonzero;
  return out;
}

}  // namespace

double rkd_loss(const Matrix& z_student, const Matrix& z_teacher, Matrix* d_student) {
  const Eigen::Index n = z_student.rows();
  if (n < 3) {
    throw std::invalid_argument("rkd_loss: batch must have at least 3 samples");
  }
  if (z_teacher.rows() != n) {
    throw std::invalid_argument("rkd_loss: batch sizes must match");
  }
  const PairwiseDistances s = pairwise(z_student);
  const PairwiseDistances t = pairwise(z_teacher);
  const double pairs = static_cast<double>(n * (n - 1) / 2);

  double loss = 0.0;
  double weighted_dist_sum = 0.0;  // sum of huber'(r_ij) * d_ij
  Matrix h_grad = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double r = s.dist(i, j) / s.mean - t.dist(i, j) / t.mean;
      loss += huber(r);
      const double hg = huber_grad(r);
      h_grad(i, j) = hg;
      weighted_dist_sum += hg * s.dist(i, j);
    }
  }
  loss /= pairs;

  if (d_student != nullptr) {
    d_student->setZero(n, z_student.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double d = s.dist(i, j);
        if (d == 0.0) {
          continue;
        }
        // Direct term plus the dependence through the normalizing mean.
        const double dl_dd =
            (h_grad(i, j) / s.mean -
             weighted_dist_sum / (s.mean * s.mean * static_cast<double>(s.nonzero))) /
            pairs;
        const Eigen::RowVectorXd dir = (z_student.row(i) - z_student.row(j)) / d;
        d_student->row(i) += dl_dd * dir;
        d_student->row(j) -= dl_dd * dir;
      }
    }
  }
  return loss;
}

double distill_step(StudentNet& student, const FeatureSource& teacher, const Matrix& x,
                    const std::vector<int>& t, const DistillConfig& config, SgdState& state) {
  if (!(config.weight > 0.0)) {
    throw std::invalid_argument("distill_step: loss weight must be positive");
  }
  const Matrix z_teacher = teacher.features(x, t);
  const MlpTrace trace = student_forward(student, x);
  const Matrix& z_raw = trace.act.back();
  const Matrix z_proj = student_projected_features(student, trace);

  Matrix d_proj;
  double loss = 0.0;
  switch (config.loss) {
    case DistillLossKind::hint:
      loss = hint_loss(z_proj, z_teacher, &d_proj);
      break;
    case DistillLossKind::at:
      loss = at_loss(z_proj, z_teacher, &d_proj);
      break;
    case DistillLossKind::rkd:
      loss = rkd_loss(z_proj, z_teacher, &d_proj);
      break;
  }
  loss *= config.weight;
  d_proj *= config.weight;

  Matrix d_raw;
  Matrix d_proj_w, d_proj_b;
  if (student.has_projector()) {
    d_proj_w = z_raw.transpose() * d_proj;
    d_proj_b = d_proj.colwise().sum();
    d_raw = d_proj * student.params.at("proj.w").transpose();
  } else {
    d_raw = d_proj;
  }

  const Matrix d_out = Matrix::Zero(x.rows(), student.spec.output_dim);
  const int tap = static_cast<int>(student.spec.hidden.size()) - 1;
  ParamStore grads =
      mlp_backward(student.params, student.spec, x, trace, d_out, tap, &d_raw);
  if (student.has_projector()) {
    grads.at("proj.w") = d_proj_w;
    grads.at("proj.b") = d_proj_b;
  }
  sgd_step(student.params, grads, config.lr, config.momentum, config.weight_decay, state);
  return loss;
}

FinetuneResult finetune(StudentNet& student, const LabeledDataset& train,
                        const LabeledDataset& test, const FinetuneConfig& config,
                        RngStream& rng) {
  if (train.classes != student.spec.output_dim) {
    throw std::invalid_argument("finetune: class count must match the student head");
  }
  FinetuneResult result;
  SgdState state;
  const int n = train.size();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = rng.permutation(n);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += config.batch_size) {
      const int stop = std::min(n, start + config.batch_size);
      Matrix xb(stop - start, train.dim());
      std::vector<int> yb(static_cast<std::size_t>(stop - start));
      for (int i = start; i < stop; ++i) {
        xb.row(i - start) = train.x.row(order[static_cast<std::size_t>(i)]);
        yb[static_cast<std::size_t>(i - start)] =
            train.y[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
      }
      const MlpTrace trace = student_forward(student, xb);
      Matrix d_logits;
      const double loss = cross_entropy(trace.out, yb, &d_logits);
      if (!std::isfinite(loss)) {
        throw NumericalError("finetune: loss diverged at epoch " + std::to_string(epoch));
      }
      ParamStore grads =
          mlp_backward(student.params, student.spec, xb, trace, d_logits);
      sgd_step(student.params, grads, config.lr, config.momentum, config.weight_decay,
               state);
      epoch_loss += loss;
      ++batches;
    }
    result.epoch_loss.push_back(epoch_loss / std::max(1, batches));
  }
  result.train_accuracy = accuracy(student_forward(student, train.x).out, train.y);
  result.test_accuracy = accuracy(student_forward(student, test.x).out, test.y);
  return result;
}

}  // namespace diffrep
