#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include "svmshape/error.hpp"
#include "svmshape/svm_grad.hpp"

namespace svmshape {
namespace ad {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense 2-d tensor (scalars are 1x1, row vectors 1xN).
struct Tensor {
  Eigen::Index rows = 0, cols = 0;
  Eigen::VectorXd data;  // row-major

  Tensor() = default;
  Tensor(Eigen::Index r, Eigen::Index c) : rows(r), cols(c), data(Eigen::VectorXd::Zero(r * c)) {}

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }
  static Tensor from(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    Tensor t(m.rows(), m.cols());
    t.map() = m;
    return t;
  }

  Eigen::Map<RowMat> map() { return Eigen::Map<RowMat>(data.data(), rows, cols); }
  Eigen::Map<const RowMat> map() const { return Eigen::Map<const RowMat>(data.data(), rows, cols); }
  Eigen::Index numel() const { return rows * cols; }
  double scalar_value() const { return data[0]; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

enum class OpKind {
  leaf,
  matmul,
  add,
  concat_cols,
  relu,
  softplus,
  sigmoid,
  square,
  scale_const,
  scale_node,
  sum,
  svm,
};

struct SvmNodeData {
  Eigen::VectorXi labels;
  double C = 1.0;
  double tol = 1e-8;
  KernelMode mode = KernelMode::isotropic;
  SvmModel model;  // filled by the forward solve
};

struct Node {
  OpKind kind = OpKind::leaf;
  std::array<int, 3> in{-1, -1, -1};
  Tensor value;
  double cval = 0.0;  // scale_const factor
  bool requires_grad = false;
  std::shared_ptr<SvmNodeData> svm;
};

inline double softplus_scalar(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid_scalar(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Append-only reverse-mode tape. Node ids are indices into the node list, so
/// inputs always precede consumers and the reverse sweep is a single pass.
class Tape {
public:
  bool check_finite = true;

  int leaf(Tensor value, bool requires_grad = true) {
    Node n;
    n.kind = OpKind::leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }
  int constant(Tensor value) { return leaf(std::move(value), false); }

  int matmul(int a, int b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.cols != tb.rows) throw Error(ErrorCode::shape_mismatch, "matmul inner dimensions differ");
    Node n = binary(OpKind::matmul, a, b, Tensor(ta.rows, tb.cols));
    n.value.map() = ta.map() * tb.map();
    return push(std::move(n));
  }

  int add(int a, int b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw Error(ErrorCode::shape_mismatch, "add shapes differ");
    Node n = binary(OpKind::add, a, b, Tensor(ta.rows, ta.cols));
    n.value.data = ta.data + tb.data;
    return push(std::move(n));
  }

  int concat_cols(int a, int b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rows != tb.rows) throw Error(ErrorCode::shape_mismatch, "concat rows differ");
    Node n = binary(OpKind::concat_cols, a, b, Tensor(ta.rows, ta.cols + tb.cols));
    n.value.map().leftCols(ta.cols) = ta.map();
    n.value.map().rightCols(tb.cols) = tb.map();
    return push(std::move(n));
  }

  int relu(int a) { return elementwise(OpKind::relu, a, [](double x) { return x > 0.0 ? x : 0.0; }); }
  int softplus(int a) { return elementwise(OpKind::softplus, a, softplus_scalar); }
  int sigmoid(int a) { return elementwise(OpKind::sigmoid, a, sigmoid_scalar); }
  int square(int a) { return elementwise(OpKind::square, a, [](double x) { return x * x; }); }

  int scale(int a, double c) {
    Node n = binary(OpKind::scale_const, a, -1, Tensor(value(a).rows, value(a).cols));
    n.cval = c;
    n.value.data = c * value(a).data;
    return push(std::move(n));
  }

  /// scalar-node (1x1) times tensor; the only broadcasting form supported.
  int scale_by(int a, int scalar_node) {
    const Tensor& s = value(scalar_node);
    if (s.numel() != 1) throw Error(ErrorCode::shape_mismatch, "scale_by expects a 1x1 scalar node");
    Node n = binary(OpKind::scale_node, a, scalar_node, Tensor(value(a).rows, value(a).cols));
    n.value.data = s.scalar_value() * value(a).data;
    return push(std::move(n));
  }

  int sum(int a) {
    Node n = binary(OpKind::sum, a, -1, Tensor::scalar(value(a).data.sum()));
    return push(std::move(n));
  }

  /// Custom node: solves the dual SVM on the support points (rows of `support`,
  /// labels fixed attributes) and evaluates the discriminant at `queries`.
  /// Output is Q x 1. Backward is the implicit KKT differentiation.
  int svm_discriminant(int support, int sigma, int queries, const Eigen::VectorXi& labels, double C,
                       double tol = 1e-8) {
    const Tensor& ts = value(support);
    const Tensor& tq = value(queries);
    const Tensor& tsig = value(sigma);
    if (ts.cols != 3 || tq.cols != 3) throw Error(ErrorCode::shape_mismatch, "svm expects Nx3 and Qx3 inputs");
    if (labels.size() != ts.rows) throw Error(ErrorCode::shape_mismatch, "svm label count != support rows");

    auto data = std::make_shared<SvmNodeData>();
    data->labels = labels;
    data->C = C;
    data->tol = tol;
    data->mode = tsig.numel() == 1 ? KernelMode::isotropic : KernelMode::anisotropic;

    LabeledPointSet train;
    train.convention = LabelConvention::svm_pm1;
    for (Eigen::Index i = 0; i < ts.rows; ++i)
      train.push_back(ts.map().row(i).transpose(), labels[i]);
    KernelParams kp;
    kp.mode = data->mode;
    kp.sigma = tsig.data;
    data->model = solve_dual(train, kp, C, tol);

    Node n;
    n.kind = OpKind::svm;
    n.in = {support, sigma, queries};
    n.svm = data;
    n.requires_grad = nodes_[support].requires_grad || nodes_[sigma].requires_grad ||
                      nodes_[queries].requires_grad;
    n.value = Tensor(tq.rows, 1);
    for (Eigen::Index q = 0; q < tq.rows; ++q)
      n.value.data[q] = discriminant(data->model, tq.map().row(q).transpose());
    return push(std::move(n));
  }

  const Tensor& value(int id) const { return nodes_[id].value; }
  const Node& node(int id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  /// Exact reverse-mode gradients of a scalar loss for every node.
  std::vector<Tensor> backward(int loss_node) const {
    if (value(loss_node).numel() != 1) throw Error(ErrorCode::shape_mismatch, "loss node must be scalar");
    std::vector<Tensor> grads(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) grads[i] = Tensor(nodes_[i].value.rows, nodes_[i].value.cols);
    grads[loss_node].data[0] = 1.0;

    for (int id = loss_node; id >= 0; --id) {
      const Node& n = nodes_[id];
      if (n.kind == OpKind::leaf) continue;
      const Tensor& g = grads[id];
      if (g.data.isZero(0.0)) continue;
      switch (n.kind) {
        case OpKind::matmul: {
          const Tensor& a = nodes_[n.in[0]].value;
          const Tensor& b = nodes_[n.in[1]].value;
          grads[n.in[0]].map() += g.map() * b.map().transpose();
          grads[n.in[1]].map() += a.map().transpose() * g.map();
          break;
        }
        case OpKind::add:
          grads[n.in[0]].data += g.data;
          grads[n.in[1]].data += g.data;
          break;
        case OpKind::concat_cols: {
          const Eigen::Index ca = nodes_[n.in[0]].value.cols;
          grads[n.in[0]].map() += g.map().leftCols(ca);
          grads[n.in[1]].map() += g.map().rightCols(g.cols - ca);
          break;
        }
        case OpKind::relu: {
          const Tensor& a = nodes_[n.in[0]].value;
          for (Eigen::Index i = 0; i < g.numel(); ++i)
            if (a.data[i] > 0.0) grads[n.in[0]].data[i] += g.data[i];
          break;
        }
        case OpKind::softplus: {
          const Tensor& a = nodes_[n.in[0]].value;
          for (Eigen::Index i = 0; i < g.numel(); ++i)
            grads[n.in[0]].data[i] += g.data[i] * sigmoid_scalar(a.data[i]);
          break;
        }
        case OpKind::sigmoid: {
          for (Eigen::Index i = 0; i < g.numel(); ++i) {
            const double s = n.value.data[i];
            grads[n.in[0]].data[i] += g.data[i] * s * (1.0 - s);
          }
          break;
        }
        case OpKind::square: {
          const Tensor& a = nodes_[n.in[0]].value;
          grads[n.in[0]].data += 2.0 * a.data.cwiseProduct(g.data);
          break;
        }
        case OpKind::scale_const:
          grads[n.in[0]].data += n.cval * g.data;
          break;
        case OpKind::scale_node: {
          const double s = nodes_[n.in[1]].value.scalar_value();
          grads[n.in[0]].data += s * g.data;
          grads[n.in[1]].data[0] += nodes_[n.in[0]].value.data.dot(g.data);
          break;
        }
        case OpKind::sum:
          grads[n.in[0]].data.array() += g.data[0];
          break;
        case OpKind::svm: {
          const int queries = n.in[2];
          const Tensor& tq = nodes_[queries].value;
          PointMatrix qm(tq.rows, 3);
          qm = tq.map();
          const SvmGradients sg = backward_discriminant(n.svm->model, qm, g.data);
          grads[n.in[0]].map() += sg.d_support;
          grads[n.in[1]].data += sg.d_sigma;
          grads[queries].map() += sg.d_query;
          break;
        }
        case OpKind::leaf:
          break;
      }
    }
    return grads;
  }

private:
  Node binary(OpKind kind, int a, int b, Tensor value) {
    Node n;
    n.kind = kind;
    n.in = {a, b};
    n.value = std::move(value);
    n.requires_grad = nodes_[a].requires_grad || (b >= 0 && nodes_[b].requires_grad);
    return n;
  }

  template <typename F>
  int elementwise(OpKind kind, int a, F f) {
    Node n = binary(kind, a, -1, Tensor(value(a).rows, value(a).cols));
    for (Eigen::Index i = 0; i < n.value.numel(); ++i) n.value.data[i] = f(value(a).data[i]);
    return push(std::move(n));
  }

  int push(Node n) {
    if (check_finite && !n.value.data.allFinite())
      throw Error(ErrorCode::numeric, "non-finite values produced by forward op");
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
};

/// tanh built from the primitive op set: 2*sigmoid(2x) - 1.
inline int tanh_graph(Tape& tape, int x) {
  const int s = tape.sigmoid(tape.scale(x, 2.0));
  Tensor minus_one(tape.value(x).rows, tape.value(x).cols);
  minus_one.data.setConstant(-1.0);
  return tape.add(tape.scale(s, 2.0), tape.constant(std::move(minus_one)));
}

}  // namespace ad
}  // namespace svmshape
