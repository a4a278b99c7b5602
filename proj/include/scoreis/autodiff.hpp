#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace scoreis::ad {

using Index = Eigen::Index;
using Storage = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense real array of rank 0, 1 or 2 with row-major storage.
///
/// Scalars have shape {} and vectors shape {n}; both are kept as a column in
/// `mat()` so that the flat data is always row-major. Every entry is finite.
class Tensor {
 public:
  Tensor();
  Tensor(std::vector<Index> shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(const Eigen::Ref<const Eigen::VectorXd>& v);
  static Tensor matrix(const Storage& m);
  static Tensor zeros_like(const Tensor& other);

  const std::vector<Index>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  Index size() const { return mat_.size(); }
  std::span<const double> data() const { return {mat_.data(), static_cast<std::size_t>(mat_.size())}; }

  const Storage& mat() const { return mat_; }
  Storage& mat() { return mat_; }
  double item() const;  // rank-0 only
  Eigen::VectorXd as_vector() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  Tensor(std::vector<Index> shape, Storage mat);
  friend class Tape;

  std::vector<Index> shape_;
  Storage mat_;
};

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  MatMul,
  MatVec,
  Scale,
  Relu,
  Exp,
  Log,
  Sum,
  Mean,
  Dot,
  NormSq,
  BroadcastAdd,
};

struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

struct TapeNode {
  Tensor value;
  Op op = Op::Leaf;
  std::vector<NodeId> parents;  // always earlier nodes
  double local = 0.0;           // scale factor for Op::Scale
};

/// Per-node gradients returned by Tape::backward, indexed by NodeId.
class Gradients {
 public:
  explicit Gradients(std::vector<Tensor> grads) : grads_(std::move(grads)) {}
  const Tensor& operator[](NodeId id) const { return grads_.at(id.index); }
  std::size_t size() const { return grads_.size(); }

 private:
  std::vector<Tensor> grads_;
};

/// Append-only reverse-mode tape. Rebuilt for every forward pass; single owner.
class Tape {
 public:
  NodeId leaf(Tensor value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId matvec(NodeId m, NodeId v);
  NodeId scale(NodeId a, double factor);
  NodeId relu(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId dot(NodeId a, NodeId b);
  NodeId norm_sq(NodeId a);
  /// matrix (m x n) plus bias vector (n), added to every row.
  NodeId broadcast_add(NodeId matrix, NodeId bias);

  const Tensor& value(NodeId id) const { return node(id).value; }
  const TapeNode& node(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  /// Gradient of a scalar root with respect to every node. Nodes that do not
  /// reach the root get exact zeros.
  Gradients backward(NodeId root) const;

 private:
  NodeId push(Tensor value, Op op, std::vector<NodeId> parents, double local = 0.0);

  std::vector<TapeNode> nodes_;
};

/// Scalar field built on a fresh tape from a leaf holding x.
using ScalarField = std::function<NodeId(Tape&, NodeId)>;

/// max_i |analytic_i - central_difference_i| / max(1, |analytic_i|).
double grad_check(const ScalarField& f, const Tensor& x, double h);

}  // namespace scoreis::ad
