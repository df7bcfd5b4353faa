// SPDX-License-Identifier: Apache-2.0
#include "langtrack/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace langtrack {

Param& ParamStore::add(const std::string& name, int rows, int cols, bool frozen) {
  if (contains(name)) {
    throw std::runtime_error("ParamStore: duplicate parameter '" + name + "'");
  }
  auto p = std::make_unique<Param>();
  p->name = name;
  p->value.setZero(rows, cols);
  p->grad.setZero(rows, cols);
  p->frozen = frozen;
  params_.push_back(std::move(p));
  return *params_.back();
}

Param& ParamStore::at(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw std::runtime_error("ParamStore: unknown parameter '" + name + "'");
}

const Param& ParamStore::at(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw std::runtime_error("ParamStore: unknown parameter '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return true;
  }
  return false;
}

std::vector<Param*> ParamStore::all() {
  std::vector<Param*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Param*> ParamStore::all() const {
  std::vector<const Param*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Param*> ParamStore::trainable() {
  std::vector<Param*> out;
  for (auto& p : params_) {
    if (!p->frozen) out.push_back(p.get());
  }
  return out;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p->zero_grad();
}

namespace ad {

const Eigen::MatrixXd& Var::value() const { return tape->val(*this); }

Var Tape::constant(Eigen::MatrixXd v) {
  const int id = emit(std::move(v), false, nullptr);
  return Var{this, id};
}

Var Tape::input(Eigen::MatrixXd v) {
  const int id = emit(std::move(v), true, nullptr);
  return Var{this, id};
}

Var Tape::leaf(Param& p) {
  Param* pp = &p;
  if (p.frozen) {
    return constant(p.value);
  }
  const int id = emit(p.value, true, [pp](Tape& t, int self) {
    pp->grad += t.grad_buffer(self);
  });
  return Var{this, id};
}

int Tape::emit(Eigen::MatrixXd value, bool needs_grad,
               std::function<void(Tape&, int)> pull) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.pull = std::move(pull);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Eigen::MatrixXd& Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (!n.grad_alloc) {
    n.grad.setZero(n.value.rows(), n.value.cols());
    n.grad_alloc = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::runtime_error("backward: foreign Var");
  const Node& ln = nodes_[loss.id];
  if (ln.value.rows() != 1 || ln.value.cols() != 1) {
    throw std::runtime_error("backward: loss must be scalar");
  }
  grad_buffer(loss.id)(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.grad_alloc || !n.pull) continue;
    n.pull(*this, i);
  }
}

const Eigen::MatrixXd& Tape::val(Var v) const { return nodes_[v.id].value; }

const Eigen::MatrixXd& Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (!n.grad_alloc) {
    static const Eigen::MatrixXd empty;
    if (n.value.size() == 0) return empty;
    throw std::runtime_error("grad: no gradient recorded for this Var");
  }
  return n.grad;
}

double Tape::scalar(Var v) const {
  const Eigen::MatrixXd& m = val(v);
  if (m.rows() != 1 || m.cols() != 1) throw std::runtime_error("scalar: not 1x1");
  return m(0, 0);
}

void Tape::clear() { nodes_.clear(); }

// ---- op helpers ------------------------------------------------------------

namespace {

Tape& tape_of(Var a) { return *a.tape; }

bool any_grad(std::initializer_list<Var> vs) {
  for (Var v : vs) {
    if (v.tape->node_needs_grad(v.id)) return true;
  }
  return false;
}

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::runtime_error("op: Vars on different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  if (a.cols() != b.rows()) throw std::runtime_error("matmul: shape mismatch");
  Eigen::MatrixXd v = a.value() * b.value();
  const int ai = a.id, bi = b.id;
  const bool ng = any_grad({a, b});
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai, bi](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad_buffer(self);
        if (t.node_needs_grad(ai)) t.grad_buffer(ai) += g * t.node_value(bi).transpose();
        if (t.node_needs_grad(bi)) t.grad_buffer(bi) += t.node_value(ai).transpose() * g;
      }));
  return Var{&t, id};
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value() + b.value();
  const int ai = a.id, bi = b.id;
  const bool ng = any_grad({a, b});
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai, bi](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad_buffer(self);
        if (t.node_needs_grad(ai)) t.grad_buffer(ai) += g;
        if (t.node_needs_grad(bi)) t.grad_buffer(bi) += g;
      }));
  return Var{&t, id};
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value() - b.value();
  const int ai = a.id, bi = b.id;
  const bool ng = any_grad({a, b});
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai, bi](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad_buffer(self);
        if (t.node_needs_grad(ai)) t.grad_buffer(ai) += g;
        if (t.node_needs_grad(bi)) t.grad_buffer(bi) -= g;
      }));
  return Var{&t, id};
}

Var neg(Var a) { return scale(a, -1.0); }

Var cmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value().cwiseProduct(b.value());
  const int ai = a.id, bi = b.id;
  const bool ng = any_grad({a, b});
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai, bi](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad_buffer(self);
        if (t.node_needs_grad(ai)) t.grad_buffer(ai) += g.cwiseProduct(t.node_value(bi));
        if (t.node_needs_grad(bi)) t.grad_buffer(bi) += g.cwiseProduct(t.node_value(ai));
      }));
  return Var{&t, id};
}

Var cdiv(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value().cwiseQuotient(b.value());
  const int ai = a.id, bi = b.id;
  const bool ng = any_grad({a, b});
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai, bi](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad_buffer(self);
        const Eigen::MatrixXd& bv = t.node_value(bi);
        if (t.node_needs_grad(ai)) t.grad_buffer(ai) += g.cwiseQuotient(bv);
        if (t.node_needs_grad(bi)) {
          t.grad_buffer(bi) -= g.cwiseProduct(t.node_value(ai))
                                   .cwiseQuotient(bv.cwiseProduct(bv));
        }
      }));
  return Var{&t, id};
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value() * s;
  const int ai = a.id;
  const bool ng = t.node_needs_grad(ai);
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai, s](Tape& t, int self) { t.grad_buffer(ai) += t.grad_buffer(self) * s; }));
  return Var{&t, id};
}

Var add_const(Var a, double c) {
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value().array() + c;
  const int ai = a.id;
  const bool ng = t.node_needs_grad(ai);
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai](Tape& t, int self) { t.grad_buffer(ai) += t.grad_buffer(self); }));
  return Var{&t, id};
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value().transpose();
  const int ai = a.id;
  const bool ng = t.node_needs_grad(ai);
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai](Tape& t, int self) {
        t.grad_buffer(ai) += t.grad_buffer(self).transpose();
      }));
  return Var{&t, id};
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value().cwiseMax(0.0);
  const int ai = a.id;
  const bool ng = t.node_needs_grad(ai);
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai](Tape& t, int self) {
        const Eigen::MatrixXd mask =
            (t.node_value(ai).array() > 0.0).cast<double>();
        t.grad_buffer(ai) += t.grad_buffer(self).cwiseProduct(mask);
      }));
  return Var{&t, id};
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  const int ai = a.id;
  const bool ng = t.node_needs_grad(ai);
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai](Tape& t, int self) {
        const Eigen::ArrayXXd s = t.node_value(self).array();
        t.grad_buffer(ai) +=
            (t.grad_buffer(self).array() * s * (1.0 - s)).matrix();
      }));
  return Var{&t, id};
}

Var exp_(Var a) {
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value().array().exp();
  const int ai = a.id;
  const bool ng = t.node_needs_grad(ai);
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai](Tape& t, int self) {
        t.grad_buffer(ai) +=
            t.grad_buffer(self).cwiseProduct(t.node_value(self));
      }));
  return Var{&t, id};
}

Var log_(Var a) {
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value().array().log();
  const int ai = a.id;
  const bool ng = t.node_needs_grad(ai);
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai](Tape& t, int self) {
        t.grad_buffer(ai) +=
            t.grad_buffer(self).cwiseQuotient(t.node_value(ai));
      }));
  return Var{&t, id};
}

Var pow_const(Var a, double p) {
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value().array().pow(p);
  const int ai = a.id;
  const bool ng = t.node_needs_grad(ai);
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai, p](Tape& t, int self) {
        t.grad_buffer(ai) += (t.grad_buffer(self).array() * p *
                              t.node_value(ai).array().pow(p - 1.0))
                                 .matrix();
      }));
  return Var{&t, id};
}

Var abs_(Var a) {
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value().cwiseAbs();
  const int ai = a.id;
  const bool ng = t.node_needs_grad(ai);
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai](Tape& t, int self) {
        const Eigen::MatrixXd s = t.node_value(ai).array().sign();
        t.grad_buffer(ai) += t.grad_buffer(self).cwiseProduct(s);
      }));
  return Var{&t, id};
}

Var cmin(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value().cwiseMin(b.value());
  const int ai = a.id, bi = b.id;
  const bool ng = any_grad({a, b});
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai, bi](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad_buffer(self);
        const Eigen::MatrixXd take_a =
            (t.node_value(ai).array() <= t.node_value(bi).array()).cast<double>();
        if (t.node_needs_grad(ai)) t.grad_buffer(ai) += g.cwiseProduct(take_a);
        if (t.node_needs_grad(bi)) {
          t.grad_buffer(bi) +=
              g.cwiseProduct((1.0 - take_a.array()).matrix());
        }
      }));
  return Var{&t, id};
}

Var cmax(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value().cwiseMax(b.value());
  const int ai = a.id, bi = b.id;
  const bool ng = any_grad({a, b});
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai, bi](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad_buffer(self);
        const Eigen::MatrixXd take_a =
            (t.node_value(ai).array() >= t.node_value(bi).array()).cast<double>();
        if (t.node_needs_grad(ai)) t.grad_buffer(ai) += g.cwiseProduct(take_a);
        if (t.node_needs_grad(bi)) {
          t.grad_buffer(bi) +=
              g.cwiseProduct((1.0 - take_a.array()).matrix());
        }
      }));
  return Var{&t, id};
}

Var clamp(Var a, double lo, double hi) {
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value().cwiseMax(lo).cwiseMin(hi);
  const int ai = a.id;
  const bool ng = t.node_needs_grad(ai);
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai, lo, hi](Tape& t, int self) {
        const Eigen::ArrayXXd x = t.node_value(ai).array();
        const Eigen::MatrixXd inside =
            ((x >= lo) && (x <= hi)).cast<double>();
        t.grad_buffer(ai) += t.grad_buffer(self).cwiseProduct(inside);
      }));
  return Var{&t, id};
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  Eigen::MatrixXd v(1, 1);
  v(0, 0) = a.value().sum();
  const int ai = a.id;
  const bool ng = t.node_needs_grad(ai);
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai](Tape& t, int self) {
        t.grad_buffer(ai).array() += t.grad_buffer(self)(0, 0);
      }));
  return Var{&t, id};
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var rowsum(Var a) {
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value().rowwise().sum();
  const int ai = a.id;
  const bool ng = t.node_needs_grad(ai);
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad_buffer(self);
        t.grad_buffer(ai) +=
            g * Eigen::MatrixXd::Ones(1, t.node_value(ai).cols());
      }));
  return Var{&t, id};
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::runtime_error("concat_rows: empty");
  Tape& t = tape_of(parts[0]);
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].cols();
  for (Var p : parts) {
    if (p.cols() != cols) throw std::runtime_error("concat_rows: column mismatch");
    rows += p.rows();
  }
  Eigen::MatrixXd v(rows, cols);
  Eigen::Index r = 0;
  bool ng = false;
  std::vector<std::pair<int, std::pair<Eigen::Index, Eigen::Index>>> spans;
  for (Var p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    spans.push_back({p.id, {r, p.rows()}});
    ng = ng || t.node_needs_grad(p.id);
    r += p.rows();
  }
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [spans](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad_buffer(self);
        for (const auto& s : spans) {
          if (t.node_needs_grad(s.first)) {
            t.grad_buffer(s.first) += g.middleRows(s.second.first, s.second.second);
          }
        }
      }));
  return Var{&t, id};
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::runtime_error("concat_cols: empty");
  Tape& t = tape_of(parts[0]);
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts[0].rows();
  for (Var p : parts) {
    if (p.rows() != rows) throw std::runtime_error("concat_cols: row mismatch");
    cols += p.cols();
  }
  Eigen::MatrixXd v(rows, cols);
  Eigen::Index c = 0;
  bool ng = false;
  std::vector<std::pair<int, std::pair<Eigen::Index, Eigen::Index>>> spans;
  for (Var p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    spans.push_back({p.id, {c, p.cols()}});
    ng = ng || t.node_needs_grad(p.id);
    c += p.cols();
  }
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [spans](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad_buffer(self);
        for (const auto& s : spans) {
          if (t.node_needs_grad(s.first)) {
            t.grad_buffer(s.first) += g.middleCols(s.second.first, s.second.second);
          }
        }
      }));
  return Var{&t, id};
}

Var slice_rows(Var a, int first, int count) {
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value().middleRows(first, count);
  const int ai = a.id;
  const bool ng = t.node_needs_grad(ai);
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai, first, count](Tape& t, int self) {
        t.grad_buffer(ai).middleRows(first, count) += t.grad_buffer(self);
      }));
  return Var{&t, id};
}

Var slice_cols(Var a, int first, int count) {
  Tape& t = tape_of(a);
  Eigen::MatrixXd v = a.value().middleCols(first, count);
  const int ai = a.id;
  const bool ng = t.node_needs_grad(ai);
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai, first, count](Tape& t, int self) {
        t.grad_buffer(ai).middleCols(first, count) += t.grad_buffer(self);
      }));
  return Var{&t, id};
}

Var add_rowvec(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  if (b.rows() != 1 || b.cols() != a.cols()) {
    throw std::runtime_error("add_rowvec: b must be 1 x cols(a)");
  }
  Eigen::MatrixXd v = a.value().rowwise() + b.value().row(0);
  const int ai = a.id, bi = b.id;
  const bool ng = any_grad({a, b});
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai, bi](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad_buffer(self);
        if (t.node_needs_grad(ai)) t.grad_buffer(ai) += g;
        if (t.node_needs_grad(bi)) t.grad_buffer(bi) += g.colwise().sum();
      }));
  return Var{&t, id};
}

Var add_colvec(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  if (b.cols() != 1 || b.rows() != a.rows()) {
    throw std::runtime_error("add_colvec: b must be rows(a) x 1");
  }
  Eigen::MatrixXd v = a.value().colwise() + b.value().col(0);
  const int ai = a.id, bi = b.id;
  const bool ng = any_grad({a, b});
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai, bi](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad_buffer(self);
        if (t.node_needs_grad(ai)) t.grad_buffer(ai) += g;
        if (t.node_needs_grad(bi)) t.grad_buffer(bi) += g.rowwise().sum();
      }));
  return Var{&t, id};
}

Var softmax_rows(Var a, const Eigen::MatrixXd* allow) {
  Tape& t = tape_of(a);
  const Eigen::MatrixXd& x = a.value();
  Eigen::MatrixXd v(x.rows(), x.cols());
  const double ninf = -std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = ninf;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (allow && (*allow)(r, c) == 0.0) continue;
      mx = std::max(mx, x(r, c));
    }
    if (mx == ninf) throw std::runtime_error("softmax_rows: fully masked row");
    double denom = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (allow && (*allow)(r, c) == 0.0) {
        v(r, c) = 0.0;
      } else {
        v(r, c) = std::exp(x(r, c) - mx);
        denom += v(r, c);
      }
    }
    v.row(r) /= denom;
  }
  const int ai = a.id;
  const bool ng = t.node_needs_grad(ai);
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ai](Tape& t, int self) {
        const Eigen::MatrixXd& s = t.node_value(self);
        const Eigen::MatrixXd& g = t.grad_buffer(self);
        // dx = s .* (g - rowsum(g .* s)); masked entries have s = 0.
        const Eigen::VectorXd dot = (g.array() * s.array()).rowwise().sum();
        t.grad_buffer(ai) +=
            (s.array() * (g.array().colwise() - dot.array())).matrix();
      }));
  return Var{&t, id};
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  check_same_tape(x, gain);
  check_same_tape(x, bias);
  Tape& t = tape_of(x);
  const Eigen::MatrixXd& xv = x.value();
  const Eigen::Index n = xv.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw std::runtime_error("layer_norm_rows: gain/bias must be 1 x cols(x)");
  }
  Eigen::VectorXd mu = xv.rowwise().mean();
  Eigen::MatrixXd centered = xv.colwise() - mu;
  Eigen::VectorXd var = centered.array().square().rowwise().mean();
  Eigen::VectorXd inv_std = (var.array() + eps).rsqrt();
  Eigen::MatrixXd xhat = centered.array().colwise() * inv_std.array();
  Eigen::MatrixXd v =
      (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
      bias.value().row(0).array();
  const int xi = x.id, gi = gain.id, bi = bias.id;
  const bool ng = any_grad({x, gain, bias});
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [xi, gi, bi, xhat, inv_std, n](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad_buffer(self);
        const Eigen::RowVectorXd gv = t.node_value(gi).row(0);
        if (t.node_needs_grad(gi)) {
          t.grad_buffer(gi) += (g.array() * xhat.array()).colwise().sum().matrix();
        }
        if (t.node_needs_grad(bi)) t.grad_buffer(bi) += g.colwise().sum();
        if (t.node_needs_grad(xi)) {
          // dxhat = g .* gain;  dx = (dxhat - mean(dxhat) - xhat*mean(dxhat.*xhat)) * inv_std
          const Eigen::MatrixXd dxhat = g.array().rowwise() * gv.array();
          const Eigen::VectorXd m1 = dxhat.rowwise().mean();
          const Eigen::VectorXd m2 =
              (dxhat.array() * xhat.array()).rowwise().mean();
          Eigen::MatrixXd dx =
              (dxhat.colwise() - m1).array() -
              (xhat.array().colwise() * m2.array());
          dx = dx.array().colwise() * inv_std.array();
          t.grad_buffer(xi) += dx;
        }
      }));
  return Var{&t, id};
}

Var gather_rows(Var table, const std::vector<int>& ids) {
  Tape& t = tape_of(table);
  const Eigen::MatrixXd& tab = table.value();
  Eigen::MatrixXd v(static_cast<Eigen::Index>(ids.size()), tab.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tab.rows()) {
      throw std::runtime_error("gather_rows: index out of range");
    }
    v.row(static_cast<Eigen::Index>(i)) = tab.row(ids[i]);
  }
  const int ti = table.id;
  const bool ng = t.node_needs_grad(ti);
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [ti, ids](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad_buffer(self);
        Eigen::MatrixXd& tg = t.grad_buffer(ti);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          tg.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
        }
      }));
  return Var{&t, id};
}

Var conv2d(Var x, Var w, int height, int width, int ksize, int stride, int pad) {
  check_same_tape(x, w);
  Tape& t = tape_of(x);
  const Eigen::MatrixXd& xv = x.value();
  const Eigen::MatrixXd& wv = w.value();
  const int cin = static_cast<int>(xv.rows());
  if (xv.cols() != static_cast<Eigen::Index>(height) * width) {
    throw std::runtime_error("conv2d: x cols != H*W");
  }
  if (wv.cols() != static_cast<Eigen::Index>(cin) * ksize * ksize) {
    throw std::runtime_error("conv2d: w cols != Cin*k*k");
  }
  const int ho = (height + 2 * pad - ksize) / stride + 1;
  const int wo = (width + 2 * pad - ksize) / stride + 1;

  // Patch gather table: col index in x for each (patch row, output position),
  // or -1 for zero padding.
  Eigen::MatrixXi gather(ksize * ksize, ho * wo);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      for (int ky = 0; ky < ksize; ++ky) {
        for (int kx = 0; kx < ksize; ++kx) {
          const int iy = oy * stride + ky - pad;
          const int ix = ox * stride + kx - pad;
          gather(ky * ksize + kx, oy * wo + ox) =
              (iy >= 0 && iy < height && ix >= 0 && ix < width) ? iy * width + ix
                                                                : -1;
        }
      }
    }
  }
  Eigen::MatrixXd cols(cin * ksize * ksize, ho * wo);
  for (int c = 0; c < cin; ++c) {
    for (int kk = 0; kk < ksize * ksize; ++kk) {
      for (int o = 0; o < ho * wo; ++o) {
        const int src = gather(kk, o);
        cols(c * ksize * ksize + kk, o) = src >= 0 ? xv(c, src) : 0.0;
      }
    }
  }
  Eigen::MatrixXd v = wv * cols;
  const int xi = x.id, wi = w.id;
  const bool ng = any_grad({x, w});
  const int id = t.emit(std::move(v), ng, !ng ? nullptr : std::function<void(Tape&, int)>(
      [xi, wi, cols, gather, cin, ksize, ho, wo](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad_buffer(self);
        if (t.node_needs_grad(wi)) t.grad_buffer(wi) += g * cols.transpose();
        if (t.node_needs_grad(xi)) {
          const Eigen::MatrixXd gcols = t.node_value(wi).transpose() * g;
          Eigen::MatrixXd& gx = t.grad_buffer(xi);
          for (int c = 0; c < cin; ++c) {
            for (int kk = 0; kk < ksize * ksize; ++kk) {
              for (int o = 0; o < ho * wo; ++o) {
                const int src = gather(kk, o);
                if (src >= 0) gx(c, src) += gcols(c * ksize * ksize + kk, o);
              }
            }
          }
        }
      }));
  return Var{&t, id};
}

Var attention(Var q_in, Var k_in, Var v_in, Var wq, Var wk, Var wv, Var wo,
              int n_heads, const Eigen::MatrixXd* allow) {
  const int d = static_cast<int>(wq.cols());
  if (d % n_heads != 0) throw std::runtime_error("attention: heads must divide dim");
  const int dh = d / n_heads;
  Var q = matmul(q_in, wq);
  Var k = matmul(k_in, wk);
  Var v = matmul(v_in, wv);
  std::vector<Var> head_outs;
  head_outs.reserve(n_heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < n_heads; ++h) {
    Var qh = slice_cols(q, h * dh, dh);
    Var kh = slice_cols(k, h * dh, dh);
    Var vh = slice_cols(v, h * dh, dh);
    Var scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    Var weights = softmax_rows(scores, allow);
    head_outs.push_back(matmul(weights, vh));
  }
  Var cat = n_heads == 1 ? head_outs[0] : concat_cols(head_outs);
  return matmul(cat, wo);
}

}  // namespace ad
}  // namespace langtrack
