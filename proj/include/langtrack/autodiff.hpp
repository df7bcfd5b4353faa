// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace langtrack {

// A named fp64 parameter. Frozen parameters never receive gradient and are
// skipped by the optimizer.
struct Param {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  bool frozen = false;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Owns parameters by name. Iteration order is insertion order, which keeps
// optimizer traversal and checkpoint layout deterministic.
class ParamStore {
 public:
  Param& add(const std::string& name, int rows, int cols, bool frozen = false);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Param*> all();
  std::vector<const Param*> all() const;
  std::vector<Param*> trainable();

  void zero_grads();
  std::size_t size() const { return params_.size(); }

 private:
  std::vector<std::unique_ptr<Param>> params_;
};

namespace ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid until the tape is cleared.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Eigen::MatrixXd& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

// Reverse-mode tape over Eigen double matrices. Scalars are 1x1 matrices.
class Tape {
 public:
  // Leaf without gradient.
  Var constant(Eigen::MatrixXd v);
  // Leaf whose gradient is readable via grad() after backward().
  Var input(Eigen::MatrixXd v);
  // Leaf bound to a parameter; backward accumulates into p.grad unless frozen.
  Var leaf(Param& p);

  void backward(Var loss);

  const Eigen::MatrixXd& val(Var v) const;
  const Eigen::MatrixXd& grad(Var v) const;
  double scalar(Var v) const;

  void clear();
  std::size_t node_count() const { return nodes_.size(); }

  // Internal node construction; used by the op free functions.
  int emit(Eigen::MatrixXd value, bool needs_grad,
           std::function<void(Tape&, int)> pull);
  Eigen::MatrixXd& grad_buffer(int id);
  bool node_needs_grad(int id) const { return nodes_[id].needs_grad; }
  const Eigen::MatrixXd& node_value(int id) const { return nodes_[id].value; }

 private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    bool needs_grad = false;
    bool grad_alloc = false;
    // Distributes this node's grad into its parents (and bound Param, if any).
    std::function<void(Tape&, int)> pull;
  };
  std::vector<Node> nodes_;
};

// ---- ops -------------------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var neg(Var a);
Var cmul(Var a, Var b);
Var cdiv(Var a, Var b);
Var scale(Var a, double s);
Var add_const(Var a, double c);
Var transpose(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var exp_(Var a);
Var log_(Var a);
Var pow_const(Var a, double p);
Var abs_(Var a);
Var cmin(Var a, Var b);
Var cmax(Var a, Var b);
Var clamp(Var a, double lo, double hi);
Var sum(Var a);
Var mean(Var a);
Var rowsum(Var a);          // M x N -> M x 1
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, int first, int count);
Var slice_cols(Var a, int first, int count);
Var add_rowvec(Var a, Var b);  // A(MxN) + b(1xN) broadcast over rows
Var add_colvec(Var a, Var b);  // A(MxN) + b(Mx1) broadcast over cols

// Row-wise softmax. `allow` (same shape, 0/1) marks the positions a row may
// attend to; disallowed entries get exactly zero weight. Each row must allow
// at least one position.
Var softmax_rows(Var a, const Eigen::MatrixXd* allow = nullptr);

// Row-wise layer normalization with affine gain/bias (both 1 x N).
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);

// Embedding lookup: result row i = table row ids[i].
Var gather_rows(Var table, const std::vector<int>& ids);

// 2-D convolution on channel-major flattened maps. x is Cin x (H*W) with
// column index y*W + x_; w is Cout x (Cin*k*k); output Cout x (Ho*Wo).
Var conv2d(Var x, Var w, int height, int width, int ksize, int stride, int pad);

// Multi-head attention built from the primitives above. q_in: Sq x D,
// k_in/v_in: Sk x D; weights D x D. `allow` is Sq x Sk or null.
Var attention(Var q_in, Var k_in, Var v_in, Var wq, Var wk, Var wv, Var wo,
              int n_heads, const Eigen::MatrixXd* allow = nullptr);

}  // namespace ad
}  // namespace langtrack
