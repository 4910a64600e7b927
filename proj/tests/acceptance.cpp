// Acceptance suite: one pass/fail line per criterion. Exit code is the
// number of failed criteria.

#include "diffrep/pipeline.hpp"
#include "planted.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

using namespace diffrep;

namespace {

namespace fs = std::filesystem;

int failures = 0;

void run_criterion(int number, const std::string& name,
                   const std::function<bool(std::string&)>& body) {
  const auto start = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = false;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("[%s] criterion %2d: %s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", number,
              name.c_str(), secs, detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!ok) {
    ++failures;
  }
}

Matrix random_psd(RngStream& rng, int size, double lo, double hi) {
  // Rotate a diagonal of eigenvalues drawn uniformly from [lo, hi].
  const Matrix raw = standard_normal(rng, size, size);
  const Matrix q = svd(raw).u;
  Vector lambda(size);
  for (int i = 0; i < size; ++i) {
    lambda[i] = lo + (hi - lo) * rng.uniform();
  }
  const Matrix sigma = q * lambda.asDiagonal() * q.transpose();
  return (sigma + sigma.transpose()) / 2.0;
}

std::string out_root() {
  const auto dir = fs::temp_directory_path() / "diffrep_acceptance";
  fs::create_directories(dir);
  return dir.string();
}

// Shared toy configuration for the pipeline-level criteria. Calibrated so
// the qualitative trends have solid margins at desk scale: the teacher needs
// a few thousand optimizer steps (the 0.999-EMA weights drive probing and
// distillation), and the finetune budget is short enough that the encoder
// initialization matters.
ExperimentConfig toy_config() {
  ExperimentConfig cfg;
  cfg.dataset.kind = "mixture";
  cfg.dataset.classes = 4;
  cfg.dataset.dim = 16;
  cfg.dataset.samples = 1024;
  cfg.dataset.spread = 0.4;
  cfg.dataset.train_fraction = 0.5;
  cfg.schedule.steps = 100;
  cfg.schedule.beta_end = 0.2;  // full noise range at desk-scale T
  cfg.teacher.hidden = {48, 16, 48};
  cfg.teacher.time_embed_dim = 16;
  cfg.teacher.epochs = 1500;
  cfg.teacher.batch_size = 128;
  cfg.teacher.lr = 0.02;
  cfg.student.hidden = {32, 16};
  cfg.distill.loss = "hint";
  cfg.distill.epochs = 150;
  cfg.distill.batch_size = 128;
  cfg.distill.lr = 0.1;
  cfg.distill.policy_hidden = {32, 32, 32};
  cfg.distill.policy_lr = 0.2;
  cfg.distill.decoder_lr = 0.5;
  cfg.finetune.epochs = 8;
  cfg.finetune.batch_size = 128;
  cfg.finetune.lr = 0.05;
  cfg.seeds = {1, 2, 3};
  return cfg;
}

// --------------------------------------------------------------------------
// 1. Monte-Carlo loss agrees with the closed form.
// --------------------------------------------------------------------------
bool criterion_mc_vs_analytic(std::string& detail) {
  RngStream rng(101, 1);
  int agree = 0;
  const int trials = 50;
  for (int trial = 0; trial < trials; ++trial) {
    const int L = static_cast<int>(rng.uniform_int(3, 9));
    const Matrix sigma = random_psd(rng, L, 0.1, 3.0);
    const Matrix p = standard_normal(rng, L, L);
    const double abar = 0.05 + 0.9 * rng.uniform();
    const McLossResult mc = mc_loss(p, sigma, abar, 100000, rng);
    const AnalyticLossResult exact = analytic_loss(p, sigma, abar);
    if (std::abs(mc.estimate - exact.total) <= 3.0 * mc.std_error) {
      ++agree;
    }
  }
  detail = std::to_string(agree) + "/50 within 3 standard errors";
  return agree >= 48;
}

// --------------------------------------------------------------------------
// 2. Gradient descent reaches the closed-form optimum.
// --------------------------------------------------------------------------
bool criterion_optimality(std::string& detail) {
  RngStream rng(102, 2);
  double worst_gap = 0.0;
  double worst_grad = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int L = static_cast<int>(rng.uniform_int(2, 7));
    const Matrix sigma = random_psd(rng, L, 0.1, 3.5);
    const double abar = 0.05 + 0.9 * rng.uniform();
    const Matrix p_star = optimal_composite(sigma, abar);

    Matrix p = 0.1 * standard_normal(rng, L, L);
    for (int step = 0; step < 5000; ++step) {
      p -= 0.05 * analytic_loss_grad(p, sigma, abar);
    }
    worst_gap = std::max(worst_gap, (p - p_star).norm());

    // Central differences of the analytic loss at the claimed optimum.
    Vector flat(L * L);
    for (int r = 0; r < L; ++r) {
      for (int c = 0; c < L; ++c) {
        flat[r * L + c] = p_star(r, c);
      }
    }
    const auto f = [&](const Vector& v) {
      Matrix q(L, L);
      for (int r = 0; r < L; ++r) {
        for (int c = 0; c < L; ++c) {
          q(r, c) = v[r * L + c];
        }
      }
      return analytic_loss(q, sigma, abar).total;
    };
    worst_grad = std::max(worst_grad, central_diff(f, flat, 1e-6).cwiseAbs().maxCoeff());
  }
  detail = "max |P - P*| = " + format_double(worst_gap) +
           ", max |grad| at P* = " + format_double(worst_grad);
  return worst_gap <= 1e-4 && worst_grad < 1e-6;
}

// --------------------------------------------------------------------------
// 3. Condition number decays monotonically along the schedule.
// --------------------------------------------------------------------------
bool criterion_tradeoff_monotone(std::string& detail) {
  RngStream rng(103, 3);
  const NoiseSchedule schedule = NoiseSchedule::linear(1000, 1e-4, 0.02);
  std::vector<int> grid;
  for (int t = 1; t <= 1000; ++t) {
    grid.push_back(t);
  }
  for (int trial = 0; trial < 20; ++trial) {
    const int L = static_cast<int>(rng.uniform_int(2, 7));
    // Distinct eigenvalues in [0.5, 3].
    Vector lambda(L);
    for (int i = 0; i < L; ++i) {
      lambda[i] = 0.5 + 2.5 * (i + rng.uniform()) / L;
    }
    const Matrix raw = standard_normal(rng, L, L);
    const Matrix q = svd(raw).u;
    Matrix sigma = q * lambda.asDiagonal() * q.transpose();
    sigma = (sigma + sigma.transpose()) / 2.0;

    const auto rows = tradeoff_curve(sigma, schedule, grid);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].condition_number > rows[i - 1].condition_number + 1e-12) {
        detail = "monotonicity violated at t=" + std::to_string(rows[i].t);
        return false;
      }
    }
    // Endpoint limits: abar ~ 1 gives lambda_max/lambda_min, abar ~ 0 gives 1.
    const double ratio = lambda.maxCoeff() / lambda.minCoeff();
    if (std::abs(rows.front().condition_number - ratio) > 1e-3 * ratio + 1e-3) {
      detail = "early endpoint off: " + format_double(rows.front().condition_number) +
               " vs " + format_double(ratio);
      return false;
    }
    if (std::abs(rows.back().condition_number - 1.0) > 1e-3) {
      detail = "late endpoint off: " + format_double(rows.back().condition_number);
      return false;
    }
  }
  detail = "20 covariances, full 1000-step schedule";
  return true;
}

// --------------------------------------------------------------------------
// 4. Forward-process marginals match the closed form.
// --------------------------------------------------------------------------
bool criterion_forward_stats(std::string& detail) {
  const NoiseSchedule schedule = NoiseSchedule::linear(100, 1e-4, 0.02);
  RngStream rng(104, 4);
  const int n = 100000;
  const int levels[5] = {5, 25, 50, 75, 100};
  for (int pair = 0; pair < 5; ++pair) {
    const int level = levels[pair];
    const double abar = schedule.alpha_bar(level);
    const int d = 3;
    Matrix x0(1, d);
    for (int c = 0; c < d; ++c) {
      x0(0, c) = 2.0 * rng.uniform() - 1.0;
    }
    Matrix x0_rep(n, d);
    x0_rep.rowwise() = x0.row(0);
    const Matrix eps = standard_normal(rng, n, d);
    const Matrix xt = forward_sample(x0_rep, std::vector<int>(n, level), eps, schedule);

    const Vector mean = xt.colwise().mean();
    const double mean_tol = 4.0 * std::sqrt((1.0 - abar) / n);
    for (int c = 0; c < d; ++c) {
      if (std::abs(mean[c] - std::sqrt(abar) * x0(0, c)) > mean_tol) {
        detail = "mean off at level " + std::to_string(level);
        return false;
      }
    }
    Matrix centered = xt;
    centered.rowwise() -= mean.transpose();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(n);
    for (int a = 0; a < d; ++a) {
      for (int b = 0; b < d; ++b) {
        const double want = a == b ? 1.0 - abar : 0.0;
        if (std::abs(cov(a, b) - want) > 0.05 * (1.0 - abar)) {
          detail = "covariance off at level " + std::to_string(level);
          return false;
        }
      }
    }
  }
  detail = "5 (x0, t) pairs at 1e5 samples";
  return true;
}

// --------------------------------------------------------------------------
// 5. Every trainable loss matches central differences.
// --------------------------------------------------------------------------
bool grad_close(const Vector& got, const Vector& fd, std::string& detail,
                const std::string& what) {
  for (Eigen::Index i = 0; i < got.size(); ++i) {
    if (std::abs(got[i] - fd[i]) > 1e-6 + 1e-4 * std::abs(fd[i])) {
      detail = what + ": coordinate " + std::to_string(i) + " got " +
               format_double(got[i]) + " want " + format_double(fd[i]);
      return false;
    }
  }
  return true;
}

bool criterion_gradients(std::string& detail) {
  RngStream rng(105, 5);

  for (int trial = 0; trial < 20; ++trial) {
    // DDPM loss through a random denoiser (attention on odd trials).
    {
      DenoiserArch arch;
      arch.attention = trial % 2 == 1;
      if (arch.attention) {
        arch.token_count = 2 + trial % 3;
        arch.input_dim = arch.token_count * 3;
      } else {
        arch.input_dim = 3 + trial % 4;
      }
      arch.hidden = {6, 4};
      arch.time_embed_dim = 4;
      const NoiseSchedule schedule = NoiseSchedule::linear(10, 1e-3, 0.1);
      ParamStore params = denoiser_init(arch, rng);
      for (auto& [name, m] : params) {  // exercise the zero-initialized paths
        m += 0.3 * standard_normal(rng, static_cast<int>(m.rows()),
                                   static_cast<int>(m.cols()));
      }
      DiffusionBatch batch;
      batch.x0 = standard_normal(rng, 4, arch.input_dim);
      batch.t = {1, 4, 7, 10};
      batch.eps = standard_normal(rng, 4, arch.input_dim);
      batch.xt = forward_sample(batch.x0, batch.t, batch.eps, schedule);
      ParamStore grads;
      ddpm_loss_at(params, arch, schedule, batch, &grads);
      ParamStore probe = params;
      const auto f = [&](const Vector& v) {
        probe.unflatten(v);
        return ddpm_loss_at(probe, arch, schedule, batch).loss;
      };
      if (!grad_close(grads.flatten(), central_diff(f, params.flatten(), 1e-5), detail,
                      "ddpm")) {
        return false;
      }
    }

    // Feature distillation losses.
    {
      const int n = 5, w = 4;
      const Matrix zs = standard_normal(rng, n, w);
      const Matrix zt = standard_normal(rng, n, w);
      const auto check_loss = [&](const char* what, auto loss_fn) {
        Matrix g;
        loss_fn(zs, zt, &g);
        Vector flat(n * w);
        Eigen::Index pos = 0;
        for (int r = 0; r < n; ++r) {
          for (int c = 0; c < w; ++c) {
            flat[pos++] = zs(r, c);
          }
        }
        const auto f = [&](const Vector& v) {
          Matrix m(n, w);
          Eigen::Index p = 0;
          for (int r = 0; r < n; ++r) {
            for (int c = 0; c < w; ++c) {
              m(r, c) = v[p++];
            }
          }
          return loss_fn(m, zt, nullptr);
        };
        Vector gflat(n * w);
        pos = 0;
        for (int r = 0; r < n; ++r) {
          for (int c = 0; c < w; ++c) {
            gflat[pos++] = g(r, c);
          }
        }
        return grad_close(gflat, central_diff(f, flat, 1e-6), detail, what);
      };
      if (!check_loss("hint", [](const Matrix& a, const Matrix& b, Matrix* g) {
            return hint_loss(a, b, g);
          })) {
        return false;
      }
      if (!check_loss("at", [](const Matrix& a, const Matrix& b, Matrix* g) {
            return at_loss(a, b, g);
          })) {
        return false;
      }
      if (!check_loss("rkd", [](const Matrix& a, const Matrix& b, Matrix* g) {
            return rkd_loss(a, b, g);
          })) {
        return false;
      }
    }

    // Cross-entropy through a student network.
    {
      RngStream srng(500 + trial, 5);
      StudentNet student = make_student(4, {6}, 3, 0, srng);
      const Matrix x = standard_normal(rng, 5, 4);
      std::vector<int> y;
      for (int i = 0; i < 5; ++i) {
        y.push_back(static_cast<int>(rng.uniform_int(0, 3)));
      }
      const MlpTrace trace = student_forward(student, x);
      Matrix d_logits;
      cross_entropy(trace.out, y, &d_logits);
      const ParamStore grads =
          mlp_backward(student.params, student.spec, x, trace, d_logits);
      ParamStore probe = student.params;
      const auto f = [&](const Vector& v) {
        probe.unflatten(v);
        return cross_entropy(mlp_forward(probe, student.spec, x).out, y);
      };
      if (!grad_close(grads.flatten(), central_diff(f, student.params.flatten(), 1e-5),
                      detail, "cross-entropy")) {
        return false;
      }
    }

    // Entropy bonus and the exact policy objective.
    {
      RngStream prng(700 + trial, 5);
      TimePolicy policy = make_policy(3, {5}, 6, prng);
      const Matrix x = standard_normal(rng, 4, 3);
      const Matrix table = standard_normal(rng, 4, 6);

      const ParamStore entropy_grad = exact_grad(policy, x, Matrix::Zero(4, 6), 1.0);
      TimePolicy probe = policy;
      const auto f_entropy = [&](const Vector& v) {
        probe.params.unflatten(v);
        return entropy_bonus(probe, x);
      };
      if (!grad_close(entropy_grad.flatten(),
                      central_diff(f_entropy, policy.params.flatten(), 1e-5), detail,
                      "entropy")) {
        return false;
      }

      const double lh = 0.1;
      const ParamStore jgrad = exact_grad(policy, x, table, lh);
      const auto f_j = [&](const Vector& v) {
        probe.params.unflatten(v);
        const Matrix probs = softmax_rows(policy_logits(probe, x));
        double j = 0.0;
        for (Eigen::Index i = 0; i < 4; ++i) {
          j += probs.row(i).dot(table.row(i));
          for (Eigen::Index a = 0; a < 6; ++a) {
            if (probs(i, a) > 0.0) {
              j -= lh * probs(i, a) * std::log(probs(i, a));
            }
          }
        }
        return j / 4.0;
      };
      if (!grad_close(jgrad.flatten(), central_diff(f_j, policy.params.flatten(), 1e-5),
                      detail, "exact-J")) {
        return false;
      }
    }
  }
  detail = "ddpm/hint/at/rkd/cross-entropy/entropy/exact-J x 20 configs";
  return true;
}

// --------------------------------------------------------------------------
// 6. The sampled policy gradient is unbiased on a T=8 planted problem.
// --------------------------------------------------------------------------
bool criterion_unbiasedness(std::string& detail) {
  const int T = 8, n = 16, dim = 4;
  const int t_star = 5;
  RngStream rng(106, 6);
  const Matrix x = standard_normal(rng, n, dim);
  // Planted reward structure: one good action, small deterministic jitter
  // elsewhere so coordinates are not degenerate.
  Matrix table(n, T);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < T; ++t) {
      table(i, t) = t == t_star ? -0.05 : -1.4 + 0.05 * std::sin(1.0 + i + 3.0 * t);
    }
  }
  TimePolicy policy = make_policy(dim, {}, T, rng);
  const double lh = 0.1;
  const Vector exact = exact_grad(policy, x, table, lh).flatten();

  RngStream draw(107, 7);
  const int reps = 10000;
  Matrix samples(reps, exact.size());
  Vector mean = Vector::Zero(exact.size());
  for (int rep = 0; rep < reps; ++rep) {
    const auto t = sample_time(policy, x, draw);
    Vector r(n);
    for (int i = 0; i < n; ++i) {
      r[i] = table(i, t[static_cast<std::size_t>(i)]);
    }
    const Vector g = reinforce_grad(policy, x, t, r, lh).flatten();
    samples.row(rep) = g.transpose();
    mean += g;
  }
  mean /= static_cast<double>(reps);
  double worst_z = 0.0;
  for (Eigen::Index c = 0; c < mean.size(); ++c) {
    const double sd = std::sqrt((samples.col(c).array() - mean[c]).square().mean());
    const double se = sd / std::sqrt(static_cast<double>(reps));
    if (std::abs(mean[c] - exact[c]) > 3.0 * se + 1e-12) {
      detail = "coordinate " + std::to_string(c) + " off by " +
               format_double(std::abs(mean[c] - exact[c])) + " (se " + format_double(se) +
               ")";
      return false;
    }
    if (se > 0.0) {
      worst_z = std::max(worst_z, std::abs(mean[c] - exact[c]) / se);
    }
  }
  detail = "max |z| = " + format_double(worst_z) + " over " +
           std::to_string(mean.size()) + " coordinates";
  return true;
}

// --------------------------------------------------------------------------
// 7. Reinforced selection converges to the planted timestep.
// --------------------------------------------------------------------------
bool criterion_planted_convergence(std::string& detail) {
  const int T = 16, t_star = 4, dim = 4, classes = 4;
  const planted::PlantedSource teacher(T, t_star);

  // Exhaustive verification that t_star is the unique best action: train a
  // fresh linear decoder per timestep and compare final mean rewards.
  RngStream data_rng(108, 8);
  const Matrix x_all = standard_normal(data_rng, 512, dim);
  const std::vector<int> y_all = planted::sign_labels(x_all);
  {
    double best_reward = -1e300;
    int best_t = -1;
    for (int t = 0; t < T; ++t) {
      const Matrix z = teacher.features(x_all, std::vector<int>(512, t));
      RngStream drng(200 + t, 8);
      AuxDecoder dec = make_decoder(teacher.feature_dim(), classes, drng);
      SgdState opt;
      for (int step = 0; step < 300; ++step) {
        const MlpTrace trace = mlp_forward(dec.params, dec.spec, z);
        Matrix d_logits;
        cross_entropy(trace.out, y_all, &d_logits);
        ParamStore grads = mlp_backward(dec.params, dec.spec, z, trace, d_logits);
        sgd_step(dec.params, grads, 0.5, 0.0, 0.0, opt);
      }
      const double mean_reward = reward(dec, z, y_all).mean();
      if (mean_reward > best_reward) {
        best_reward = mean_reward;
        best_t = t;
      }
    }
    if (best_t != t_star) {
      detail = "exhaustive sweep disagrees: best t = " + std::to_string(best_t);
      return false;
    }
  }

  // Policy training; the modal sampled action must equal t_star on every one
  // of the last 200 of 2000 steps, in at least 2 of 3 seeds.
  int good_seeds = 0;
  std::string per_seed;
  for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
    RngStream init(seed, 9);
    TimePolicy policy = make_policy(dim, {16, 16}, T, init);
    AuxDecoder decoder = make_decoder(teacher.feature_dim(), classes, init);
    PolicyStepConfig cfg;
    cfg.policy_lr = 0.2;
    cfg.decoder_lr = 0.5;
    cfg.momentum = 0.9;
    cfg.entropy_weight = 0.1;
    JointState state;
    RngStream rng(seed, 10);

    int stable = 0;
    for (int step = 0; step < 2000; ++step) {
      Matrix xb(64, dim);
      std::vector<int> yb(64);
      for (int i = 0; i < 64; ++i) {
        const auto idx = static_cast<Eigen::Index>((step * 64 + i) % 512);
        xb.row(i) = x_all.row(idx);
        yb[static_cast<std::size_t>(i)] = y_all[static_cast<std::size_t>(idx)];
      }
      const RewardRecord rec = joint_step(policy, decoder, teacher, xb, yb, cfg, state, rng);
      if (step >= 1800) {
        std::vector<int> counts(T, 0);
        for (int t : rec.chosen_t) {
          ++counts[static_cast<std::size_t>(t)];
        }
        const int mode = static_cast<int>(
            std::max_element(counts.begin(), counts.end()) - counts.begin());
        stable += mode == t_star ? 1 : 0;
      }
    }
    per_seed += " seed" + std::to_string(seed) + ":" + std::to_string(stable) + "/200";
    if (stable == 200) {
      ++good_seeds;
    }
  }
  detail = "seeds with a stable modal action =" + per_seed;
  return good_seeds >= 2;
}

// --------------------------------------------------------------------------
// 8. Effective rank decays between early and late timesteps.
// --------------------------------------------------------------------------
bool criterion_probing_trend(std::string& detail) {
  ExperimentConfig cfg = toy_config();
  cfg.dataset.spread = 0.15;  // strong covariance anisotropy, as in image data
  const int lo = static_cast<int>(std::ceil(0.1 * cfg.schedule.steps));
  const int hi = static_cast<int>(std::ceil(0.9 * cfg.schedule.steps));
  std::string gaps;
  for (std::uint64_t seed : cfg.seeds) {
    const auto [train, test] = build_split(cfg, seed);
    const Teacher teacher = build_teacher(cfg, train, seed).teacher;
    std::vector<int> grid;
    for (int i = 0; i < 11; ++i) {
      grid.push_back(std::min(cfg.schedule.steps - 1, i * cfg.schedule.steps / 10));
    }
    const ProbeReport report = probe_teacher(teacher, train, grid, 128);
    write_probe_csv(report, out_root() + "/probe_trend_seed" + std::to_string(seed) + ".csv");

    const FeatureBatch early = extract_features(teacher, train.x, lo);
    const FeatureBatch late = extract_features(teacher, train.x, hi);
    const double erank_early = effective_rank(early);
    const double erank_late = effective_rank(late);
    gaps += " seed" + std::to_string(seed) + ": " + format_double(erank_late) + " < " +
            format_double(erank_early);
    if (!(erank_late < erank_early)) {
      detail = "no decay for seed " + std::to_string(seed) + ":" + gaps;
      return false;
    }
  }
  detail = "erank(t=" + std::to_string(hi) + ") < erank(t=" + std::to_string(lo) + ") in 3/3;" +
           gaps + "; CSV under " + out_root();
  return true;
}

// --------------------------------------------------------------------------
// 9. Ablation ordering across time-selection modes.
// --------------------------------------------------------------------------
bool criterion_ablation_ordering(std::string& detail) {
  ExperimentConfig cfg = toy_config();
  const auto [train, test] = build_split(cfg, cfg.seeds.front());
  const Teacher teacher = build_teacher(cfg, train, cfg.seeds.front()).teacher;

  const int last = cfg.schedule.steps - 1;
  const auto rows = run_ablation(cfg, teacher,
                                 {{TimeSelectMode::none, 0},
                                  {TimeSelectMode::random, 0},
                                  {TimeSelectMode::fixed, last},
                                  {TimeSelectMode::reinforced, 0}});
  const double none_acc = rows[0].mean;
  const double random_acc = rows[1].mean;
  const double late_acc = rows[2].mean;
  const double reinforced_acc = rows[3].mean;
  detail = "none " + format_double(none_acc) + ", random " + format_double(random_acc) +
           ", fixed:" + std::to_string(last) + " " + format_double(late_acc) +
           ", reinforced " + format_double(reinforced_acc);

  RunReport report;
  report.kind = "ablate";
  report.config = cfg.to_json();
  report.config_hash = cfg.hash();
  report.ablation = rows;
  emit_report(report, out_root() + "/ablation");

  return reinforced_acc >= random_acc && reinforced_acc >= late_acc && late_acc <= none_acc;
}

// --------------------------------------------------------------------------
// 10. Byte-identical reports under identical config and seed.
// --------------------------------------------------------------------------
bool criterion_determinism(std::string& detail) {
  ExperimentConfig cfg = toy_config();
  cfg.dataset.samples = 256;
  cfg.teacher.epochs = 6;
  cfg.distill.epochs = 4;
  cfg.finetune.epochs = 4;
  cfg.distill.mode = TimeSelectMode::reinforced;
  cfg.seeds = {7};
  cfg.out_dir = out_root() + "/det_a";
  const RunReport train_a = run_train_dpm(cfg);
  cfg.teacher_checkpoint = cfg.out_dir + "/teacher";
  const RunReport distill_a = run_distill(cfg);
  const RunReport finetune_a = run_finetune(cfg);

  ExperimentConfig cfg_b = cfg;
  cfg_b.out_dir = out_root() + "/det_b";
  const RunReport train_b = run_train_dpm(cfg_b);
  cfg_b.teacher_checkpoint = cfg_b.out_dir + "/teacher";
  const RunReport distill_b = run_distill(cfg_b);
  const RunReport finetune_b = run_finetune(cfg_b);

  // The out_dir (and checkpoint path) differ between the two runs by
  // construction, so compare with those fields nulled alongside timing.
  const auto key = [](RunReport report) {
    report.config["out_dir"] = "";
    report.config["teacher_checkpoint"] = "";
    report.config_hash = "";
    return report_determinism_key(report);
  };
  if (key(train_a) != key(train_b)) {
    detail = "teacher training reports differ";
    return false;
  }
  if (key(distill_a) != key(distill_b)) {
    detail = "distillation reports differ";
    return false;
  }
  if (key(finetune_a) != key(finetune_b)) {
    detail = "finetune reports differ";
    return false;
  }
  detail = "train/distill/finetune reports identical modulo timing and paths";
  return true;
}

// --------------------------------------------------------------------------
// 11. Attention off-diagonal mass report (soft).
// --------------------------------------------------------------------------
bool criterion_attention_report(std::string& detail) {
  ExperimentConfig cfg;
  cfg.dataset.kind = "bars";
  cfg.dataset.classes = 4;
  cfg.dataset.dim = 64;
  cfg.dataset.samples = 512;
  cfg.dataset.noise = 0.1;
  cfg.schedule.steps = 100;
  cfg.schedule.beta_end = 0.2;
  cfg.teacher.hidden = {64, 32, 64};
  cfg.teacher.time_embed_dim = 16;
  cfg.teacher.attention = true;
  cfg.teacher.token_count = 8;
  cfg.teacher.epochs = 800;
  cfg.teacher.batch_size = 128;
  cfg.teacher.lr = 0.01;
  cfg.seeds = {1, 2};

  const int lo = 10, hi = 90;
  std::string lines;
  for (std::uint64_t seed : cfg.seeds) {
    const auto [train, test] = build_split(cfg, seed);
    const Teacher teacher = build_teacher(cfg, train, seed).teacher;
    const AttentionMass early = attention_mass(teacher, train.x, lo, 128);
    const AttentionMass late = attention_mass(teacher, train.x, hi, 128);
    if (!std::isfinite(early.off_diagonal) || !std::isfinite(late.off_diagonal)) {
      detail = "non-finite attention mass";
      return false;
    }
    lines += " seed" + std::to_string(seed) + ": t=" + std::to_string(lo) + " -> " +
             format_double(early.off_diagonal) + ", t=" + std::to_string(hi) + " -> " +
             format_double(late.off_diagonal) + ";";
  }
  detail = "off-diagonal mass (report only):" + lines;
  return true;
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  run_criterion(1, "Monte-Carlo loss matches the analytic decomposition",
                criterion_mc_vs_analytic);
  run_criterion(2, "gradient descent reaches the closed-form optimum", criterion_optimality);
  run_criterion(3, "condition number decays monotonically", criterion_tradeoff_monotone);
  run_criterion(4, "forward-process marginal statistics", criterion_forward_stats);
  run_criterion(5, "loss gradients match central differences", criterion_gradients);
  run_criterion(6, "reinforce estimator is unbiased (T=8 planted)", criterion_unbiasedness);
  run_criterion(7, "time selection converges to the planted timestep",
                criterion_planted_convergence);
  run_criterion(8, "effective rank decays with timestep", criterion_probing_trend);
  run_criterion(9, "ablation ordering across selection modes", criterion_ablation_ordering);
  run_criterion(10, "identical config and seed reproduce reports", criterion_determinism);
  run_criterion(11, "attention off-diagonal mass report", criterion_attention_report);
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
  } else {
    std::printf("all criteria passed\n");
  }
  return failures;
}
