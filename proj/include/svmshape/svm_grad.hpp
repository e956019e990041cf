#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "svmshape/error.hpp"
#include "svmshape/rng.hpp"
#include "svmshape/svm.hpp"

namespace svmshape {

/// Index partition of the dual variables at the optimum.
struct ActiveSetPartition {
  std::vector<Eigen::Index> free;      // epsilon < alpha < C - epsilon
  std::vector<Eigen::Index> at_lower;  // alpha <= epsilon
  std::vector<Eigen::Index> at_upper;  // alpha >= C - epsilon
  double epsilon = 0.0;

  bool same_sets(const ActiveSetPartition& other) const {
    return free == other.free && at_lower == other.at_lower && at_upper == other.at_upper;
  }
};

inline ActiveSetPartition partition_active_set(const SvmModel& model, double epsilon = -1.0) {
  if (epsilon <= 0.0) epsilon = 1e-6 * model.C;
  if (model.kkt_residual > epsilon / 10.0)
    throw Error(ErrorCode::invalid_spec, "model not solved tightly enough to partition (residual " +
                                             fmt(model.kkt_residual) + " > epsilon/10)");
  ActiveSetPartition part;
  part.epsilon = epsilon;
  for (Eigen::Index i = 0; i < model.size(); ++i) {
    if (model.alpha[i] <= epsilon) part.at_lower.push_back(i);
    else if (model.alpha[i] >= model.C - epsilon) part.at_upper.push_back(i);
    else part.free.push_back(i);
  }
  if (part.free.empty())
    throw Error(ErrorCode::degenerate_active_set, "no free support vectors; bias gradient undefined");
  return part;
}

/// Gradients of sum_q upstream_q * P(q) with respect to the SVM inputs.
struct SvmGradients {
  Eigen::Matrix<double, Eigen::Dynamic, 3> d_support;
  Eigen::VectorXd d_sigma;
  Eigen::Matrix<double, Eigen::Dynamic, 3> d_query;
  bool d_bias_path_included = true;
};

/// Backward pass through the solved QP under a fixed active set: direct kernel
/// terms plus the implicit response of (alpha_free, bias) obtained by
/// differentiating the reduced KKT system. Bounded alphas are constants.
inline SvmGradients backward_discriminant(const SvmModel& model, const PointMatrix& queries,
                                          const Eigen::VectorXd& upstream, double eps = -1.0) {
  const auto part = partition_active_set(model, eps);
  const Eigen::Index n = model.size();
  const Eigen::Index nq = queries.rows();
  if (upstream.size() != nq) throw Error(ErrorCode::shape_mismatch, "upstream size != query count");

  SvmGradients g;
  g.d_support = Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(n, 3);
  g.d_sigma = Eigen::VectorXd::Zero(model.kernel.sigma.size());
  g.d_query = Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(nq, 3);

  // Direct terms, alpha and bias held fixed.
  for (Eigen::Index q = 0; q < nq; ++q) {
    const double u = upstream[q];
    if (u == 0.0) continue;
    const Vec3 query = queries.row(q);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ay = model.alpha[i] * model.labels[i];
      if (ay == 0.0) continue;
      const Vec3 xi = model.support_points.row(i);
      const double kv = kernel_eval(xi, query, model.kernel);
      const Vec3 dk = kernel_grad_a(xi, query, model.kernel, kv);
      g.d_support.row(i) += u * ay * dk;
      g.d_query.row(q) -= u * ay * dk;  // kernel depends on the difference
      g.d_sigma += u * ay * kernel_grad_sigma(xi, query, model.kernel, kv);
    }
  }

  // Implicit terms: H [dalpha_F; db] = d(rhs) - dH [alpha_F; b].
  const Eigen::Index f = static_cast<Eigen::Index>(part.free.size());
  Eigen::MatrixXd H(f + 1, f + 1);
  for (Eigen::Index a = 0; a < f; ++a) {
    const Eigen::Index ia = part.free[a];
    for (Eigen::Index b = 0; b < f; ++b) {
      const Eigen::Index ib = part.free[b];
      H(a, b) = model.labels[ia] * model.labels[ib] *
                kernel_eval(model.support_points.row(ia), model.support_points.row(ib), model.kernel);
    }
    H(a, f) = model.labels[ia];
    H(f, a) = model.labels[ia];
  }
  H(f, f) = 0.0;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(H, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smax = svd.singularValues()[0];
  const double smin = svd.singularValues()[svd.singularValues().size() - 1];
  if (!(smin > 0.0) || smax / smin > 1e12)
    throw Error(ErrorCode::singular_kkt, "reduced KKT matrix is near singular (cond " +
                                             fmt(smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity()) +
                                             ")");

  Eigen::VectorXd v(f + 1);
  for (Eigen::Index a = 0; a < f; ++a) {
    const Eigen::Index ia = part.free[a];
    double acc = 0.0;
    for (Eigen::Index q = 0; q < nq; ++q)
      acc += upstream[q] * kernel_eval(model.support_points.row(ia), queries.row(q), model.kernel);
    v[a] = model.labels[ia] * acc;
  }
  v[f] = upstream.sum();
  const Eigen::VectorXd w = svd.solve(v);

  // w^T (drhs/dtheta - dH/dtheta * [alpha_F; b]) expanded over kernel entries.
  auto accumulate_pair = [&](Eigen::Index i, Eigen::Index j, double coef) {
    if (i == j) return;  // K(x,x) = 1 regardless of theta
    const Vec3 xi = model.support_points.row(i);
    const Vec3 xj = model.support_points.row(j);
    const double kv = kernel_eval(xi, xj, model.kernel);
    const Vec3 dk = kernel_grad_a(xi, xj, model.kernel, kv);
    g.d_support.row(i) += coef * dk;
    g.d_support.row(j) -= coef * dk;
    g.d_sigma += coef * kernel_grad_sigma(xi, xj, model.kernel, kv);
  };
  for (Eigen::Index a = 0; a < f; ++a) {
    const Eigen::Index ia = part.free[a];
    for (const Eigen::Index iu : part.at_upper)
      accumulate_pair(ia, iu, -w[a] * model.labels[ia] * model.labels[iu] * model.C);
    for (Eigen::Index b = 0; b < f; ++b) {
      const Eigen::Index ib = part.free[b];
      accumulate_pair(ia, ib, -w[a] * model.labels[ia] * model.labels[ib] * model.alpha[ib]);
    }
  }
  return g;
}

/// Central-difference validation report for backward_discriminant.
struct GradCheckReport {
  struct Row {
    std::string coordinate;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
    bool flipped = false;
  };
  std::vector<Row> rows;
  double max_rel_err = 0.0;
  std::string worst_coordinate;
  int checked = 0;
  int flipped = 0;
  bool singular_kkt = false;
  double active_set_margin = 0.0;
};

namespace detail {

inline double fd_rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

}  // namespace detail

/// Re-solves the QP for every +-h perturbation of every support/sigma/query
/// coordinate and compares the objective's central difference against the
/// implicit gradient. Coordinates whose perturbation flips the active set are
/// reported but excluded from max_rel_err.
inline GradCheckReport finite_diff_check(const LabeledPointSet& train, const KernelParams& kernel, double C,
                                         const PointMatrix& queries, double h, std::uint64_t seed,
                                         double tol = 1e-10) {
  if (!(h > 0.0)) throw Error(ErrorCode::invalid_spec, "finite difference step must be positive");
  GradCheckReport report;

  const SvmModel base = solve_dual(train, kernel, C, tol);
  const auto base_part = partition_active_set(base);
  double margin = std::numeric_limits<double>::infinity();
  for (const Eigen::Index i : base_part.free)
    margin = std::min({margin, base.alpha[i], C - base.alpha[i]});
  report.active_set_margin = margin;

  const Eigen::Index nq = queries.rows();
  Rng rng(seed);
  Eigen::VectorXd upstream(nq);
  for (Eigen::Index q = 0; q < nq; ++q) upstream[q] = rng.uniform(-1.0, 1.0);

  SvmGradients analytic;
  try {
    analytic = backward_discriminant(base, queries, upstream);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::singular_kkt) {
      report.singular_kkt = true;
      return report;
    }
    throw;
  }

  auto objective = [&](const SvmModel& m) {
    double acc = 0.0;
    for (Eigen::Index q = 0; q < nq; ++q) acc += upstream[q] * discriminant(m, queries.row(q));
    return acc;
  };

  auto record = [&](const std::string& name, double analytic_value, const LabeledPointSet& train_plus,
                    const LabeledPointSet& train_minus, const KernelParams& k_plus, const KernelParams& k_minus) {
    GradCheckReport::Row row;
    row.coordinate = name;
    row.analytic = analytic_value;
    const SvmModel plus = solve_dual(train_plus, k_plus, C, tol);
    const SvmModel minus = solve_dual(train_minus, k_minus, C, tol);
    bool flipped = false;
    try {
      flipped = !partition_active_set(plus).same_sets(base_part) ||
                !partition_active_set(minus).same_sets(base_part);
    } catch (const Error&) {
      flipped = true;  // perturbed solve became degenerate
    }
    row.flipped = flipped;
    row.numeric = (objective(plus) - objective(minus)) / (2.0 * h);
    row.rel_err = detail::fd_rel_err(row.analytic, row.numeric);
    if (flipped) {
      ++report.flipped;
    } else {
      ++report.checked;
      if (row.rel_err > report.max_rel_err) {
        report.max_rel_err = row.rel_err;
        report.worst_coordinate = name;
      }
    }
    report.rows.push_back(row);
  };

  const Eigen::Index n = static_cast<Eigen::Index>(train.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      LabeledPointSet plus = train, minus = train;
      plus.points[static_cast<std::size_t>(i)][c] += h;
      minus.points[static_cast<std::size_t>(i)][c] -= h;
      record("support[" + std::to_string(i) + "]." + "xyz"[c], analytic.d_support(i, c), plus, minus, kernel,
             kernel);
    }
  }
  for (Eigen::Index s = 0; s < kernel.sigma.size(); ++s) {
    KernelParams plus = kernel, minus = kernel;
    plus.sigma[s] += h;
    minus.sigma[s] -= h;
    record("sigma[" + std::to_string(s) + "]", analytic.d_sigma[s], train, train, plus, minus);
  }
  for (Eigen::Index q = 0; q < nq; ++q) {
    for (int c = 0; c < 3; ++c) {
      // Queries do not enter the QP; central difference of the discriminant.
      PointMatrix qp = queries, qm = queries;
      qp(q, c) += h;
      qm(q, c) -= h;
      double plus = 0.0, minus = 0.0;
      for (Eigen::Index t = 0; t < nq; ++t) {
        plus += upstream[t] * discriminant(base, qp.row(t));
        minus += upstream[t] * discriminant(base, qm.row(t));
      }
      GradCheckReport::Row row;
      row.coordinate = "query[" + std::to_string(q) + "]." + "xyz"[c];
      row.analytic = analytic.d_query(q, c);
      row.numeric = (plus - minus) / (2.0 * h);
      row.rel_err = detail::fd_rel_err(row.analytic, row.numeric);
      ++report.checked;
      if (row.rel_err > report.max_rel_err) {
        report.max_rel_err = row.rel_err;
        report.worst_coordinate = row.coordinate;
      }
      report.rows.push_back(row);
    }
  }
  return report;
}

/// Random well-separated instance for gradient checking.
struct GradCheckInstance {
  LabeledPointSet train;
  KernelParams kernel;
  PointMatrix queries;
};

inline GradCheckInstance random_gradcheck_instance(std::uint64_t seed, int n_points = 8, int n_queries = 4,
                                                   KernelMode mode = KernelMode::anisotropic) {
  Rng rng(seed);
  GradCheckInstance inst;
  inst.train.convention = LabelConvention::svm_pm1;
  for (int i = 0; i < n_points; ++i) {
    const Vec3 p(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    // Guarantee both classes; remaining labels random.
    const int label = i == 0 ? 1 : (i == 1 ? -1 : (rng.uniform() < 0.5 ? 1 : -1));
    inst.train.push_back(p, label);
  }
  if (mode == KernelMode::isotropic) {
    inst.kernel = KernelParams::isotropic(rng.uniform(0.3, 1.0));
  } else {
    inst.kernel = KernelParams::anisotropic(
        Vec3(rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0)));
  }
  inst.queries.resize(n_queries, 3);
  for (int q = 0; q < n_queries; ++q)
    inst.queries.row(q) = Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
  return inst;
}

}  // namespace svmshape
