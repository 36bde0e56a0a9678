#include "s2p/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "common/error.hpp"

namespace nilm::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstRowVecMap = Eigen::Map<const Eigen::RowVectorXd>;

ConstMatMap view(const Node& n, std::size_t rows, std::size_t cols) {
  return ConstMatMap(n.value.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatMap grad_view(Node& n, std::size_t rows, std::size_t cols) {
  n.ensure_grad();
  return MatMap(n.grad.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

ConstMatMap out_grad(const Node& n, std::size_t rows, std::size_t cols) {
  return ConstMatMap(n.grad.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require(bool cond, const char* what) {
  if (!cond) throw InvalidInput(std::string("shape mismatch: ") + what);
}

}  // namespace

std::size_t shape_size(const Shape& s) noexcept {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape_size(shape)) throw InvalidInput("tensor value count does not match shape");
}

Var parameter(Tensor value) {
  auto v = std::make_shared<Node>();
  v->value = std::move(value);
  v->requires_grad = true;
  return v;
}

Var Graph::record(Tensor value, bool requires_grad) {
  if (consumed_) throw StateError("graph already consumed by backward");
  auto v = std::make_shared<Node>();
  v->value = std::move(value);
  v->requires_grad = requires_grad;
  tape_.push_back(v);
  return v;
}

Var Graph::constant(Tensor value) { return record(std::move(value), false); }

Var Graph::matmul(const Var& a, const Var& b) {
  const std::size_t m = a->value.rows(), k = a->value.cols(), n = b->value.cols();
  require(b->value.rows() == k, "matmul inner dimensions");
  Tensor out({m, n});
  MatMap(out.data.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)).noalias() =
      view(*a, m, k) * view(*b, k, n);
  auto o = record(std::move(out), a->requires_grad || b->requires_grad);
  Node* op = o.get();
  o->backward = [a, b, op, m, k, n] {
    auto dy = out_grad(*op, m, n);
    if (a->requires_grad) grad_view(*a, m, k).noalias() += dy * view(*b, k, n).transpose();
    if (b->requires_grad) grad_view(*b, k, n).noalias() += view(*a, m, k).transpose() * dy;
  };
  return o;
}

Var Graph::add_bias(const Var& a, const Var& bias) {
  const std::size_t m = a->value.rows(), n = a->value.cols();
  require(bias->value.size() == n, "bias length");
  Tensor out = a->value;
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out.data[r * n + c] += bias->value.data[c];
  auto o = record(std::move(out), a->requires_grad || bias->requires_grad);
  Node* op = o.get();
  o->backward = [a, bias, op, m, n] {
    auto dy = out_grad(*op, m, n);
    if (a->requires_grad) grad_view(*a, m, n) += dy;
    if (bias->requires_grad) grad_view(*bias, 1, n) += dy.colwise().sum();
  };
  return o;
}

Var Graph::add(const Var& a, const Var& b) {
  require(a->value.size() == b->value.size(), "add operands");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b->value.data[i];
  auto o = record(std::move(out), a->requires_grad || b->requires_grad);
  Node* op = o.get();
  o->backward = [a, b, op] {
    for (const auto& in : {a, b}) {
      if (!in->requires_grad) continue;
      in->ensure_grad();
      for (std::size_t i = 0; i < op->grad.size(); ++i) in->grad[i] += op->grad[i];
    }
  };
  return o;
}

Var Graph::mul(const Var& a, const Var& b) {
  require(a->value.size() == b->value.size(), "mul operands");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b->value.data[i];
  auto o = record(std::move(out), a->requires_grad || b->requires_grad);
  Node* op = o.get();
  o->backward = [a, b, op] {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < op->grad.size(); ++i) a->grad[i] += op->grad[i] * b->value.data[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < op->grad.size(); ++i) b->grad[i] += op->grad[i] * a->value.data[i];
    }
  };
  return o;
}

Var Graph::sum(const Var& a) {
  double s = 0;
  for (double v : a->value.data) s += v;
  auto o = record(Tensor({1}, std::vector<double>{s}), a->requires_grad);
  Node* op = o.get();
  o->backward = [a, op] {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (auto& g : a->grad) g += op->grad[0];
  };
  return o;
}

Var Graph::relu(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = v > 0 ? v : 0.0;
  auto o = record(std::move(out), a->requires_grad);
  Node* op = o.get();
  o->backward = [a, op] {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < op->grad.size(); ++i)
      if (a->value.data[i] > 0) a->grad[i] += op->grad[i];
  };
  return o;
}

Var Graph::sigmoid(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) {
    if (v >= 0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  auto o = record(std::move(out), a->requires_grad);
  Node* op = o.get();
  o->backward = [a, op] {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < op->grad.size(); ++i) {
      double p = op->value.data[i];
      a->grad[i] += op->grad[i] * p * (1 - p);
    }
  };
  return o;
}

Var Graph::conv1d(const Var& x, const Var& w, const Var& b, std::size_t batch, std::size_t length, std::size_t kernel) {
  require(kernel >= 1 && length >= kernel, "conv kernel longer than sequence");
  require(x->value.rows() == batch * length, "conv input rows");
  const std::size_t c_in = x->value.cols();
  const std::size_t c_out = w->value.cols();
  require(w->value.rows() == kernel * c_in, "conv weight rows");
  require(b->value.size() == c_out, "conv bias length");
  const std::size_t out_len = length - kernel + 1;
  const std::size_t rows = batch * out_len;
  const std::size_t width = kernel * c_in;

  auto col = std::make_shared<std::vector<double>>(rows * width);
  for (std::size_t s = 0; s < batch; ++s)
    for (std::size_t t = 0; t < out_len; ++t) {
      double* dst = col->data() + (s * out_len + t) * width;
      const double* src = x->value.data.data() + (s * length + t) * c_in;
      std::copy(src, src + width, dst);  // kernel consecutive rows are contiguous
    }

  Tensor out({rows, c_out});
  MatMap y(out.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(c_out));
  y.noalias() = ConstMatMap(col->data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(width)) *
                view(*w, width, c_out);
  y.rowwise() += ConstRowVecMap(b->value.data.data(), static_cast<Eigen::Index>(c_out));

  auto o = record(std::move(out), x->requires_grad || w->requires_grad || b->requires_grad);
  Node* op = o.get();
  o->backward = [x, w, b, op, col, batch, length, out_len, rows, width, c_in, c_out] {
    auto dy = out_grad(*op, rows, c_out);
    ConstMatMap cols(col->data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(width));
    if (w->requires_grad) grad_view(*w, width, c_out).noalias() += cols.transpose() * dy;
    if (b->requires_grad) grad_view(*b, 1, c_out) += dy.colwise().sum();
    if (x->requires_grad) {
      RowMat dcol = dy * view(*w, width, c_out).transpose();
      x->ensure_grad();
      for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t t = 0; t < out_len; ++t) {
          const double* src = dcol.data() + (s * out_len + t) * width;
          double* dst = x->grad.data() + (s * length + t) * c_in;
          for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
        }
    }
  };
  return o;
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat of nothing");
  const std::size_t m = parts.front()->value.rows();
  std::size_t n = 0;
  bool needs_grad = false;
  for (const auto& p : parts) {
    require(p->value.rows() == m, "concat row counts");
    n += p->value.cols();
    needs_grad = needs_grad || p->requires_grad;
  }
  Tensor out({m, n});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p->value.cols();
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(p->value.data.data() + r * pc, pc, out.data.data() + r * n + offset);
    offset += pc;
  }
  auto o = record(std::move(out), needs_grad);
  Node* op = o.get();
  o->backward = [parts, op, m, n] {
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t pc = p->value.cols();
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < pc; ++c) p->grad[r * pc + c] += op->grad[r * n + off + c];
      }
      off += pc;
    }
  };
  return o;
}

Var Graph::add_positions(const Var& x, const Var& pos, std::size_t batch, std::size_t length, std::size_t offset) {
  const std::size_t d = x->value.cols();
  require(x->value.rows() == batch * length, "position input rows");
  require(pos->value.cols() == d && pos->value.rows() >= offset + length, "position table");
  Tensor out = x->value;
  for (std::size_t s = 0; s < batch; ++s)
    for (std::size_t t = 0; t < length; ++t)
      for (std::size_t c = 0; c < d; ++c) out.data[(s * length + t) * d + c] += pos->value.data[(offset + t) * d + c];
  auto o = record(std::move(out), x->requires_grad || pos->requires_grad);
  Node* op = o.get();
  o->backward = [x, pos, op, batch, length, offset, d] {
    if (x->requires_grad) {
      x->ensure_grad();
      for (std::size_t i = 0; i < op->grad.size(); ++i) x->grad[i] += op->grad[i];
    }
    if (pos->requires_grad) {
      pos->ensure_grad();
      for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t t = 0; t < length; ++t)
          for (std::size_t c = 0; c < d; ++c) pos->grad[(offset + t) * d + c] += op->grad[(s * length + t) * d + c];
    }
  };
  return o;
}

Var Graph::attention(const Var& q, const Var& k, const Var& v, std::size_t batch, std::size_t length,
                     std::size_t heads, std::vector<double>* probs_out) {
  const std::size_t d = q->value.cols();
  require(heads >= 1 && d % heads == 0, "model width divisible by heads");
  require(q->value.rows() == batch * length && k->value.size() == q->value.size() && v->value.size() == q->value.size(),
          "attention operands");
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto L = static_cast<Eigen::Index>(length);
  const auto DH = static_cast<Eigen::Index>(dh);
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));

  auto probs = std::make_shared<std::vector<double>>(batch * heads * length * length);
  Tensor out({batch * length, d});
  for (std::size_t s = 0; s < batch; ++s)
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t base = s * length * d + h * dh;
      ConstStridedMap Q(q->value.data.data() + base, L, DH, stride);
      ConstStridedMap K(k->value.data.data() + base, L, DH, stride);
      ConstStridedMap V(v->value.data.data() + base, L, DH, stride);
      MatMap P(probs->data() + (s * heads + h) * length * length, L, L);
      P.noalias() = (Q * K.transpose()) * scale;
      for (Eigen::Index i = 0; i < L; ++i) {
        double mx = P.row(i).maxCoeff();
        P.row(i) = (P.row(i).array() - mx).exp();
        P.row(i) /= P.row(i).sum();
      }
      StridedMap O(out.data.data() + base, L, DH, stride);
      O.noalias() = P * V;
    }
  if (probs_out) *probs_out = *probs;

  auto o = record(std::move(out), q->requires_grad || k->requires_grad || v->requires_grad);
  Node* op = o.get();
  o->backward = [q, k, v, op, probs, batch, length, heads, d, dh, scale, L, DH, stride] {
    for (const auto& in : {q, k, v})
      if (in->requires_grad) in->ensure_grad();
    RowMat dP(L, L), dS(L, L);
    for (std::size_t s = 0; s < batch; ++s)
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t base = s * length * d + h * dh;
        ConstStridedMap Q(q->value.data.data() + base, L, DH, stride);
        ConstStridedMap K(k->value.data.data() + base, L, DH, stride);
        ConstStridedMap V(v->value.data.data() + base, L, DH, stride);
        ConstStridedMap dO(op->grad.data() + base, L, DH, stride);
        ConstMatMap P(probs->data() + (s * heads + h) * length * length, L, L);
        dP.noalias() = dO * V.transpose();
        for (Eigen::Index i = 0; i < L; ++i) {
          double dot = P.row(i).dot(dP.row(i));
          dS.row(i) = P.row(i).array() * (dP.row(i).array() - dot);
        }
        if (v->requires_grad) StridedMap(v->grad.data() + base, L, DH, stride).noalias() += P.transpose() * dO;
        if (q->requires_grad) StridedMap(q->grad.data() + base, L, DH, stride).noalias() += (dS * K) * scale;
        if (k->requires_grad) StridedMap(k->grad.data() + base, L, DH, stride).noalias() += (dS.transpose() * Q) * scale;
      }
  };
  return o;
}

Var Graph::layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const std::size_t m = x->value.rows(), n = x->value.cols();
  require(gamma->value.size() == n && beta->value.size() == n, "layer norm parameters");
  auto xhat = std::make_shared<std::vector<double>>(m * n);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  Tensor out({m, n});
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = x->value.data.data() + r * n;
    double mean = 0;
    for (std::size_t c = 0; c < n; ++c) mean += row[c];
    mean /= static_cast<double>(n);
    double var = 0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(n);
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < n; ++c) {
      double xh = (row[c] - mean) * is;
      (*xhat)[r * n + c] = xh;
      out.data[r * n + c] = xh * gamma->value.data[c] + beta->value.data[c];
    }
  }
  auto o = record(std::move(out), x->requires_grad || gamma->requires_grad || beta->requires_grad);
  Node* op = o.get();
  o->backward = [x, gamma, beta, op, xhat, inv_std, m, n] {
    if (gamma->requires_grad) gamma->ensure_grad();
    if (beta->requires_grad) beta->ensure_grad();
    if (x->requires_grad) x->ensure_grad();
    std::vector<double> dxhat(n);
    for (std::size_t r = 0; r < m; ++r) {
      const double* dy = op->grad.data() + r * n;
      const double* xh = xhat->data() + r * n;
      double mean_dxhat = 0, mean_dxhat_xhat = 0;
      for (std::size_t c = 0; c < n; ++c) {
        if (gamma->requires_grad) gamma->grad[c] += dy[c] * xh[c];
        if (beta->requires_grad) beta->grad[c] += dy[c];
        dxhat[c] = dy[c] * gamma->value.data[c];
        mean_dxhat += dxhat[c];
        mean_dxhat_xhat += dxhat[c] * xh[c];
      }
      if (!x->requires_grad) continue;
      mean_dxhat /= static_cast<double>(n);
      mean_dxhat_xhat /= static_cast<double>(n);
      for (std::size_t c = 0; c < n; ++c)
        x->grad[r * n + c] += (*inv_std)[r] * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
    }
  };
  return o;
}

Var Graph::gather_rows(const Var& x, std::size_t batch, std::size_t length, std::size_t index) {
  require(x->value.rows() == batch * length && index < length, "gather index");
  const std::size_t d = x->value.cols();
  Tensor out({batch, d});
  for (std::size_t s = 0; s < batch; ++s)
    std::copy_n(x->value.data.data() + (s * length + index) * d, d, out.data.data() + s * d);
  auto o = record(std::move(out), x->requires_grad);
  Node* op = o.get();
  o->backward = [x, op, batch, length, index, d] {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (std::size_t s = 0; s < batch; ++s)
      for (std::size_t c = 0; c < d; ++c) x->grad[(s * length + index) * d + c] += op->grad[s * d + c];
  };
  return o;
}

Var Graph::bce_mean(const Var& probs, std::span<const double> truth) {
  require(probs->value.size() == truth.size() && !truth.empty(), "loss operands");
  static constexpr double kClamp = 1e-12;
  const auto n = static_cast<double>(truth.size());
  double total = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    double p = probs->value.data[i];
    double y = truth[i];
    if (y > 0) total -= y * std::log(std::max(p, kClamp));
    if (y < 1) total -= (1 - y) * std::log(std::max(1 - p, kClamp));
  }
  auto o = record(Tensor({1}, std::vector<double>{total / n}), probs->requires_grad);
  Node* op = o.get();
  std::vector<double> y(truth.begin(), truth.end());
  o->backward = [probs, op, y = std::move(y), n] {
    if (!probs->requires_grad) return;
    probs->ensure_grad();
    const double g = op->grad[0] / n;
    for (std::size_t i = 0; i < y.size(); ++i) {
      double p = probs->value.data[i];
      double d = 0;
      if (y[i] > 0) d -= y[i] / std::max(p, kClamp);
      if (y[i] < 1) d += (1 - y[i]) / std::max(1 - p, kClamp);
      probs->grad[i] += g * d;
    }
  };
  return o;
}

void Graph::backward(const Var& loss) {
  if (consumed_) throw StateError("backward called twice on one graph");
  if (tape_.empty()) throw StateError("backward without a recorded forward pass");
  if (!loss || loss->value.size() != 1) throw StateError("backward needs a scalar loss");
  if (std::find(tape_.begin(), tape_.end(), loss) == tape_.end())
    throw StateError("loss was not produced by this graph");
  consumed_ = true;
  loss->ensure_grad();
  loss->grad[0] = 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    auto& node = **it;
    if (node.backward && node.requires_grad && node.grad.size() == node.value.size()) node.backward();
  }
  for (auto& node : tape_) node->backward = nullptr;
  tape_.clear();
}

}  // namespace nilm::ad
