#include "scoreis/autodiff.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "scoreis/errors.hpp"

namespace scoreis::ad {

namespace {

std::string shape_str(const std::vector<Index>& shape) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << '}';
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw ContractViolation(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()));
}

Index rows_of(const std::vector<Index>& shape) { return shape.empty() ? 1 : shape[0]; }
Index cols_of(const std::vector<Index>& shape) { return shape.size() == 2 ? shape[1] : 1; }

}  // namespace

Tensor::Tensor() : mat_(Storage::Zero(1, 1)) {}

Tensor::Tensor(std::vector<Index> shape, Storage mat) : shape_(std::move(shape)), mat_(std::move(mat)) {}

Tensor::Tensor(std::vector<Index> shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (shape_.size() > 2) throw ContractViolation("Tensor: rank > 2 is not supported");
  Index n = 1;
  for (Index s : shape_) {
    if (s <= 0) throw ContractViolation("Tensor: shape entries must be positive");
    n *= s;
  }
  if (n != static_cast<Index>(data.size()))
    throw ContractViolation("Tensor: shape " + shape_str(shape_) + " does not match " + std::to_string(data.size()) +
                            " values");
  mat_ = Eigen::Map<const Storage>(data.data(), rows_of(shape_), cols_of(shape_));
  if (!mat_.allFinite()) throw DomainError("Tensor: non-finite entry");
}

Tensor Tensor::scalar(double value) { return Tensor({}, std::vector<double>{value}); }

Tensor Tensor::vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() == 0) throw ContractViolation("Tensor::vector: empty");
  if (!v.allFinite()) throw DomainError("Tensor: non-finite entry");
  return Tensor({v.size()}, Storage(v));
}

Tensor Tensor::matrix(const Storage& m) {
  if (m.size() == 0) throw ContractViolation("Tensor::matrix: empty");
  if (!m.allFinite()) throw DomainError("Tensor: non-finite entry");
  return Tensor({m.rows(), m.cols()}, m);
}

Tensor Tensor::zeros_like(const Tensor& other) {
  return Tensor(other.shape_, Storage::Zero(other.mat_.rows(), other.mat_.cols()));
}

double Tensor::item() const {
  if (rank() != 0) throw ContractViolation("Tensor::item: not a scalar " + shape_str(shape_));
  return mat_(0, 0);
}

Eigen::VectorXd Tensor::as_vector() const { return Eigen::Map<const Eigen::VectorXd>(mat_.data(), mat_.size()); }

const TapeNode& Tape::node(NodeId id) const {
  if (id.index >= nodes_.size()) throw ContractViolation("Tape: unknown node id");
  return nodes_[id.index];
}

NodeId Tape::push(Tensor value, Op op, std::vector<NodeId> parents, double local) {
  if (op != Op::Leaf && !value.mat().allFinite()) throw NumericalError("Tape: operation produced a non-finite value");
  nodes_.push_back(TapeNode{std::move(value), op, std::move(parents), local});
  return NodeId{nodes_.size() - 1};
}

NodeId Tape::leaf(Tensor value) { return push(std::move(value), Op::Leaf, {}); }

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (!x.same_shape(y)) shape_error("add", x, y);
  return push(Tensor(x.shape(), x.mat() + y.mat()), Op::Add, {a, b});
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (!x.same_shape(y)) shape_error("sub", x, y);
  return push(Tensor(x.shape(), x.mat() - y.mat()), Op::Sub, {a, b});
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (!x.same_shape(y)) shape_error("mul", x, y);
  return push(Tensor(x.shape(), x.mat().cwiseProduct(y.mat())), Op::Mul, {a, b});
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.rank() != 2 || y.rank() != 2 || x.shape()[1] != y.shape()[0]) shape_error("matmul", x, y);
  Storage out = x.mat() * y.mat();
  return push(Tensor({x.shape()[0], y.shape()[1]}, std::move(out)), Op::MatMul, {a, b});
}

NodeId Tape::matvec(NodeId m, NodeId v) {
  const Tensor& x = value(m);
  const Tensor& y = value(v);
  if (x.rank() != 2 || y.rank() != 1 || x.shape()[1] != y.shape()[0]) shape_error("matvec", x, y);
  Storage out = x.mat() * y.mat();
  return push(Tensor({x.shape()[0]}, std::move(out)), Op::MatVec, {m, v});
}

NodeId Tape::scale(NodeId a, double factor) {
  const Tensor& x = value(a);
  return push(Tensor(x.shape(), x.mat() * factor), Op::Scale, {a}, factor);
}

NodeId Tape::relu(NodeId a) {
  const Tensor& x = value(a);
  return push(Tensor(x.shape(), x.mat().cwiseMax(0.0)), Op::Relu, {a});
}

NodeId Tape::exp(NodeId a) {
  const Tensor& x = value(a);
  return push(Tensor(x.shape(), x.mat().array().exp().matrix()), Op::Exp, {a});
}

NodeId Tape::log(NodeId a) {
  const Tensor& x = value(a);
  if ((x.mat().array() <= 0.0).any()) throw DomainError("log: non-positive input");
  return push(Tensor(x.shape(), x.mat().array().log().matrix()), Op::Log, {a});
}

NodeId Tape::sum(NodeId a) { return push(Tensor::scalar(value(a).mat().sum()), Op::Sum, {a}); }

NodeId Tape::mean(NodeId a) {
  const Tensor& x = value(a);
  return push(Tensor::scalar(x.mat().sum() / static_cast<double>(x.size())), Op::Mean, {a});
}

NodeId Tape::dot(NodeId a, NodeId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (!x.same_shape(y)) shape_error("dot", x, y);
  return push(Tensor::scalar(x.mat().cwiseProduct(y.mat()).sum()), Op::Dot, {a, b});
}

NodeId Tape::norm_sq(NodeId a) { return push(Tensor::scalar(value(a).mat().squaredNorm()), Op::NormSq, {a}); }

NodeId Tape::broadcast_add(NodeId matrix, NodeId bias) {
  const Tensor& m = value(matrix);
  const Tensor& b = value(bias);
  if (m.rank() != 2 || b.rank() != 1 || m.shape()[1] != b.shape()[0]) shape_error("broadcast_add", m, b);
  Storage out = m.mat().rowwise() + b.mat().transpose().row(0);
  return push(Tensor(m.shape(), std::move(out)), Op::BroadcastAdd, {matrix, bias});
}

Gradients Tape::backward(NodeId root) const {
  if (value(root).rank() != 0) throw ContractViolation("backward: root must be a scalar");

  // Empty storage marks "no gradient yet".
  std::vector<Storage> g(nodes_.size());
  auto accumulate = [&](NodeId id, const auto& expr) {
    Storage& slot = g[id.index];
    if (slot.size() == 0)
      slot = expr;
    else
      slot += expr;
  };

  g[root.index] = Storage::Ones(1, 1);
  for (std::size_t i = root.index + 1; i-- > 0;) {
    if (g[i].size() == 0) continue;
    const TapeNode& n = nodes_[i];
    const Storage& up = g[i];
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        accumulate(n.parents[0], up);
        accumulate(n.parents[1], up);
        break;
      case Op::Sub:
        accumulate(n.parents[0], up);
        accumulate(n.parents[1], -up);
        break;
      case Op::Mul:
        accumulate(n.parents[0], up.cwiseProduct(value(n.parents[1]).mat()));
        accumulate(n.parents[1], up.cwiseProduct(value(n.parents[0]).mat()));
        break;
      case Op::MatMul:
      case Op::MatVec:
        accumulate(n.parents[0], up * value(n.parents[1]).mat().transpose());
        accumulate(n.parents[1], value(n.parents[0]).mat().transpose() * up);
        break;
      case Op::Scale:
        accumulate(n.parents[0], up * n.local);
        break;
      case Op::Relu: {
        const Storage& x = value(n.parents[0]).mat();
        accumulate(n.parents[0], (x.array() > 0.0).select(up.array(), 0.0).matrix());
        break;
      }
      case Op::Exp:
        accumulate(n.parents[0], up.cwiseProduct(n.value.mat()));
        break;
      case Op::Log:
        accumulate(n.parents[0], up.cwiseQuotient(value(n.parents[0]).mat()));
        break;
      case Op::Sum: {
        const Storage& x = value(n.parents[0]).mat();
        accumulate(n.parents[0], Storage::Constant(x.rows(), x.cols(), up(0, 0)));
        break;
      }
      case Op::Mean: {
        const Storage& x = value(n.parents[0]).mat();
        accumulate(n.parents[0], Storage::Constant(x.rows(), x.cols(), up(0, 0) / static_cast<double>(x.size())));
        break;
      }
      case Op::Dot:
        accumulate(n.parents[0], value(n.parents[1]).mat() * up(0, 0));
        accumulate(n.parents[1], value(n.parents[0]).mat() * up(0, 0));
        break;
      case Op::NormSq:
        accumulate(n.parents[0], value(n.parents[0]).mat() * (2.0 * up(0, 0)));
        break;
      case Op::BroadcastAdd:
        accumulate(n.parents[0], up);
        accumulate(n.parents[1], up.colwise().sum().transpose());
        break;
    }
  }

  std::vector<Tensor> out;
  out.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Tensor& v = nodes_[i].value;
    if (g[i].size() == 0)
      out.push_back(Tensor::zeros_like(v));
    else
      out.push_back(Tensor(v.shape(), std::move(g[i])));
  }
  return Gradients(std::move(out));
}

double grad_check(const ScalarField& f, const Tensor& x, double h) {
  Tape tape;
  const NodeId in = tape.leaf(x);
  const NodeId root = f(tape, in);
  const Tensor analytic = tape.backward(root)[in];

  auto eval_at = [&](const Tensor& point) {
    Tape t;
    return t.value(f(t, t.leaf(point))).item();
  };

  double worst = 0.0;
  std::vector<double> probe(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = eval_at(Tensor(x.shape(), probe));
    probe[i] = orig - h;
    const double down = eval_at(Tensor(x.shape(), probe));
    probe[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double a = analytic.data()[i];
    const double err = std::abs(a - fd) / std::max(1.0, std::abs(a));
    if (!std::isfinite(err)) return std::numeric_limits<double>::quiet_NaN();
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace scoreis::ad
