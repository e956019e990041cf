#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include "svmshape/error.hpp"
#include "svmshape/kernel.hpp"
#include "svmshape/point_set.hpp"
#include "svmshape/textio.hpp"

namespace svmshape {

/// Solved dual of the soft-margin kernel SVM
///
///   min_a  1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j) - sum_i a_i
///   s.t.   sum_i a_i y_i = 0,  0 <= a_i <= C
///
/// The discriminant P(q) = sum_i a_i y_i K(x_i, q) + bias is the shape
/// predictor; its zero level set is the represented surface.
struct SvmModel {
  PointMatrix support_points;  // all N training points, including alpha = 0 rows
  Eigen::VectorXi labels;      // +-1
  Eigen::VectorXd alpha;
  double bias = 0.0;
  double C = 1.0;
  KernelParams kernel;
  double kkt_residual = 0.0;

  Eigen::Index size() const { return support_points.rows(); }
};

inline double discriminant(const SvmModel& model, const Vec3& q) {
  double acc = model.bias;
  for (Eigen::Index i = 0; i < model.size(); ++i) {
    if (model.alpha[i] == 0.0) continue;
    acc += model.alpha[i] * model.labels[i] * kernel_eval(model.support_points.row(i), q, model.kernel);
  }
  return acc;
}

inline double dual_objective(const Eigen::MatrixXd& gram, const Eigen::VectorXi& labels,
                             const Eigen::VectorXd& alpha) {
  const Eigen::VectorXd ya = labels.cast<double>().cwiseProduct(alpha);
  return 0.5 * ya.dot(gram * ya) - alpha.sum();
}

namespace detail {

struct SvmProblem {
  PointMatrix points;
  Eigen::VectorXi labels;
  Eigen::MatrixXd gram;
};

inline SvmProblem build_problem(const LabeledPointSet& train, const KernelParams& kernel) {
  if (train.convention != LabelConvention::svm_pm1)
    throw Error(ErrorCode::shape_mismatch, "solver expects svm_pm1 labels");
  train.validate();
  kernel.validate();
  const Eigen::Index n = static_cast<Eigen::Index>(train.size());
  if (n < 2) throw Error(ErrorCode::shape_mismatch, "need at least 2 training points");
  SvmProblem pb;
  pb.points.resize(n, 3);
  pb.labels.resize(n);
  bool has_pos = false, has_neg = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    pb.points.row(i) = train.points[i];
    pb.labels[i] = train.labels[i];
    (train.labels[i] > 0 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) throw Error(ErrorCode::single_class, "training labels are all equal");
  pb.gram = gram_matrix(pb.points, kernel);
  return pb;
}

/// Maximal-violating-pair bookkeeping. G_i = -y_i * grad_i bounds the bias:
/// max over I_up <= b <= min over I_low at the optimum.
struct ViolatingPair {
  Eigen::Index up = -1, low = -1;
  double m = -std::numeric_limits<double>::infinity();
  double M = std::numeric_limits<double>::infinity();
  double gap() const {
    if (up < 0 || low < 0) return 0.0;  // one side empty: any bias beyond the other side works
    return m - M;
  }
};

inline ViolatingPair find_violating_pair(const Eigen::VectorXd& grad, const Eigen::VectorXd& alpha,
                                         const Eigen::VectorXi& labels, double C) {
  ViolatingPair vp;
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    const double g = -labels[i] * grad[i];
    const bool in_up = (labels[i] > 0 && alpha[i] < C) || (labels[i] < 0 && alpha[i] > 0.0);
    const bool in_low = (labels[i] < 0 && alpha[i] < C) || (labels[i] > 0 && alpha[i] > 0.0);
    if (in_up && g > vp.m) {
      vp.m = g;
      vp.up = i;
    }
    if (in_low && g < vp.M) {
      vp.M = g;
      vp.low = i;
    }
  }
  return vp;
}

inline double bias_from_kkt(const Eigen::VectorXd& grad, const Eigen::VectorXd& alpha,
                            const Eigen::VectorXi& labels, double C, const ViolatingPair& vp) {
  double sum = 0.0;
  int free_count = 0;
  const double eps = 1e-8 * C;
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    if (alpha[i] > eps && alpha[i] < C - eps) {
      sum += -labels[i] * grad[i];
      ++free_count;
    }
  }
  if (free_count > 0) return sum / free_count;
  if (vp.up >= 0 && vp.low >= 0) return 0.5 * (vp.m + vp.M);
  if (vp.low >= 0) return vp.M;
  if (vp.up >= 0) return vp.m;
  return 0.0;
}

}  // namespace detail

/// Generalized SMO with maximal-violating-pair selection. Terminates when the
/// KKT gap measured on a freshly recomputed gradient is <= tol.
inline SvmModel solve_dual(const LabeledPointSet& train, const KernelParams& kernel, double C = 1.0,
                           double tol = 1e-8) {
  if (!(C > 0.0)) throw Error(ErrorCode::invalid_spec, "C must be positive");
  auto pb = detail::build_problem(train, kernel);
  const Eigen::Index n = pb.points.rows();
  const Eigen::VectorXd y = pb.labels.cast<double>();

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);  // grad of the dual at alpha = 0
  const long max_steps = 100000;
  long steps = 0;
  detail::ViolatingPair vp;

  const double snap = 1e-14 * C;
  while (steps < max_steps) {
    vp = detail::find_violating_pair(grad, alpha, pb.labels, C);
    if (vp.gap() <= tol) {
      // Incremental gradients drift; accept only if a fresh gradient agrees.
      grad = pb.gram.cwiseProduct(y * y.transpose()) * alpha - Eigen::VectorXd::Ones(n);
      vp = detail::find_violating_pair(grad, alpha, pb.labels, C);
      if (vp.gap() <= tol) break;
    }
    const Eigen::Index i = vp.up, j = vp.low;
    double eta = pb.gram(i, i) + pb.gram(j, j) - 2.0 * pb.gram(i, j);
    if (eta < 1e-12) eta = 1e-12;
    double delta = vp.gap() / eta;
    const double room_i = pb.labels[i] > 0 ? C - alpha[i] : alpha[i];
    const double room_j = pb.labels[j] > 0 ? alpha[j] : C - alpha[j];
    delta = std::min({delta, room_i, room_j});
    if (delta <= 0.0) break;  // no feasible progress left; fresh-gap check below decides

    alpha[i] += pb.labels[i] * delta;
    alpha[j] -= pb.labels[j] * delta;
    for (Eigen::Index k = 0; k < n; ++k) grad[k] += y[k] * delta * (pb.gram(k, i) - pb.gram(k, j));
    // Snap to exact bounds so the active set is unambiguous.
    for (Eigen::Index idx : {i, j}) {
      if (alpha[idx] < snap) alpha[idx] = 0.0;
      if (alpha[idx] > C - snap) alpha[idx] = C;
    }
    ++steps;
  }

  grad = pb.gram.cwiseProduct(y * y.transpose()) * alpha - Eigen::VectorXd::Ones(n);
  vp = detail::find_violating_pair(grad, alpha, pb.labels, C);
  const double equality_residual = std::abs(y.dot(alpha));
  const double residual = std::max(std::max(vp.gap(), 0.0), equality_residual);
  if (residual > tol)
    throw Error(ErrorCode::no_convergence,
                "SMO did not reach tolerance (kkt residual " + fmt(residual) + ")");

  SvmModel model;
  model.support_points = pb.points;
  model.labels = pb.labels;
  model.alpha = alpha;
  model.bias = detail::bias_from_kkt(grad, alpha, pb.labels, C, vp);
  model.C = C;
  model.kernel = kernel;
  model.kkt_residual = residual;
  return model;
}

/// Global optimum by enumerating all 3^N {lower, free, upper} assignments and
/// solving each reduced KKT system. Oracle for solve_dual; N <= 8 only.
inline SvmModel brute_force_dual(const LabeledPointSet& train, const KernelParams& kernel, double C = 1.0) {
  if (!(C > 0.0)) throw Error(ErrorCode::invalid_spec, "C must be positive");
  if (train.size() > 8) throw Error(ErrorCode::too_large, "brute force limited to N <= 8");
  auto pb = detail::build_problem(train, kernel);
  const Eigen::Index n = pb.points.rows();
  const Eigen::VectorXd y = pb.labels.cast<double>();
  const Eigen::MatrixXd Q = pb.gram.cwiseProduct(y * y.transpose());

  double best_obj = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_alpha;
  double best_bias = 0.0;
  bool found = false;

  long total = 1;
  for (Eigen::Index i = 0; i < n; ++i) total *= 3;

  std::vector<int> state(n);
  for (long code = 0; code < total; ++code) {
    long c = code;
    for (Eigen::Index i = 0; i < n; ++i) {
      state[i] = static_cast<int>(c % 3);  // 0 lower, 1 free, 2 upper
      c /= 3;
    }
    std::vector<Eigen::Index> free;
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (state[i] == 1) free.push_back(i);
      if (state[i] == 2) alpha[i] = C;
    }

    double bias = 0.0;
    const Eigen::Index f = static_cast<Eigen::Index>(free.size());
    if (f > 0) {
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(f + 1, f + 1);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(f + 1);
      for (Eigen::Index a = 0; a < f; ++a) {
        for (Eigen::Index b = 0; b < f; ++b) kkt(a, b) = Q(free[a], free[b]);
        kkt(a, f) = y[free[a]];
        kkt(f, a) = y[free[a]];
        double fixed = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
          if (state[i] == 2) fixed += Q(free[a], i) * C;
        rhs[a] = 1.0 - fixed;
      }
      double fixed_y = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (state[i] == 2) fixed_y += y[i] * C;
      rhs[f] = -fixed_y;

      Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
      if (!lu.isInvertible()) continue;
      const Eigen::VectorXd sol = lu.solve(rhs);
      for (Eigen::Index a = 0; a < f; ++a) alpha[free[a]] = sol[a];
      bias = sol[f];
      bool in_box = true;
      for (Eigen::Index a = 0; a < f; ++a) in_box &= sol[a] > -1e-10 && sol[a] < C + 1e-10;
      if (!in_box) continue;
      alpha = alpha.cwiseMax(0.0).cwiseMin(C);
    } else {
      if (std::abs(y.dot(alpha)) > 1e-12) continue;
    }

    // Multiplier signs at the bounds decide feasibility of this partition.
    const Eigen::VectorXd grad = Q * alpha - Eigen::VectorXd::Ones(n);
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    if (f == 0) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double g = -y[i] * grad[i];
        const bool lower_bound = (state[i] == 0 && y[i] > 0) || (state[i] == 2 && y[i] < 0);
        (lower_bound ? lo : hi) = lower_bound ? std::max(lo, g) : std::min(hi, g);
      }
      if (lo > hi + 1e-9) continue;
      bias = lo == -std::numeric_limits<double>::infinity()
                 ? (hi == std::numeric_limits<double>::infinity() ? 0.0 : hi)
                 : (hi == std::numeric_limits<double>::infinity() ? lo : 0.5 * (lo + hi));
    }
    bool feasible = true;
    for (Eigen::Index i = 0; i < n && feasible; ++i) {
      const double stat = grad[i] + bias * y[i];
      if (state[i] == 0) feasible = stat >= -1e-9;
      if (state[i] == 2) feasible = stat <= 1e-9;
    }
    if (!feasible) continue;

    const double obj = dual_objective(pb.gram, pb.labels, alpha);
    if (obj < best_obj - 1e-15) {
      best_obj = obj;
      best_alpha = alpha;
      best_bias = bias;
      found = true;
    }
  }

  if (!found) throw Error(ErrorCode::no_convergence, "no feasible KKT partition found");

  SvmModel model;
  model.support_points = pb.points;
  model.labels = pb.labels;
  model.alpha = best_alpha;
  model.bias = best_bias;
  model.C = C;
  model.kernel = kernel;
  const Eigen::VectorXd grad = Q * best_alpha - Eigen::VectorXd::Ones(n);
  model.kkt_residual =
      std::max(std::max(detail::find_violating_pair(grad, best_alpha, pb.labels, C).gap(), 0.0),
               std::abs(y.dot(best_alpha)));
  return model;
}

// ---------------------------------------------------------------------------
// Model file: version tag, kernel mode, sigma, C, bias, N rows "x y z label alpha".

inline std::string to_text(const SvmModel& m) {
  std::string out = "svmshape-model v1\n";
  out += std::string("kernel=") + (m.kernel.mode == KernelMode::isotropic ? "isotropic" : "anisotropic") + '\n';
  out += "sigma=";
  for (Eigen::Index i = 0; i < m.kernel.sigma.size(); ++i) {
    if (i) out += ' ';
    out += fmt(m.kernel.sigma[i]);
  }
  out += '\n';
  out += "c=" + fmt(m.C) + '\n';
  out += "bias=" + fmt(m.bias) + '\n';
  out += "kkt_residual=" + fmt(m.kkt_residual) + '\n';
  out += "n=" + std::to_string(m.size()) + '\n';
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    out += fmt(m.support_points(i, 0)) + ' ' + fmt(m.support_points(i, 1)) + ' ' + fmt(m.support_points(i, 2)) +
           ' ' + std::to_string(m.labels[i]) + ' ' + fmt(m.alpha[i]) + '\n';
  }
  return out;
}

inline SvmModel svm_model_from_text(const std::string& text) {
  std::istringstream iss(text);
  std::string line;
  if (!std::getline(iss, line) || line.rfind("svmshape-model", 0) != 0)
    throw Error(ErrorCode::io, "not a svmshape model file");
  SvmModel m;
  Eigen::Index n = -1;
  while (std::getline(iss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) break;  // first data row
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "kernel") {
      m.kernel.mode = value == "isotropic" ? KernelMode::isotropic : KernelMode::anisotropic;
    } else if (key == "sigma") {
      const auto tok = split_ws(value);
      m.kernel.sigma.resize(static_cast<Eigen::Index>(tok.size()));
      for (std::size_t i = 0; i < tok.size(); ++i) m.kernel.sigma[static_cast<Eigen::Index>(i)] = parse_double(tok[i]);
    } else if (key == "c") {
      m.C = parse_double(value);
    } else if (key == "bias") {
      m.bias = parse_double(value);
    } else if (key == "kkt_residual") {
      m.kkt_residual = parse_double(value);
    } else if (key == "n") {
      n = static_cast<Eigen::Index>(parse_double(value));
      break;
    }
  }
  if (n < 0) throw Error(ErrorCode::io, "model file misses n=");
  m.support_points.resize(n, 3);
  m.labels.resize(n);
  m.alpha.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::getline(iss, line)) throw Error(ErrorCode::io, "model file truncated");
    const auto tok = split_ws(line);
    if (tok.size() != 5) throw Error(ErrorCode::io, "model row needs 5 fields");
    for (int c = 0; c < 3; ++c) m.support_points(i, c) = parse_double(tok[c]);
    m.labels[i] = static_cast<int>(parse_double(tok[3]));
    m.alpha[i] = parse_double(tok[4]);
  }
  m.kernel.validate();
  return m;
}

inline void save_svm_model(const SvmModel& m, const std::string& path) { write_text_file(path, to_text(m)); }

inline SvmModel load_svm_model(const std::string& path) { return svm_model_from_text(read_text_file(path)); }

}  // namespace svmshape
