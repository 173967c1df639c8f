#pragma once

// Dense forward/backward kernels for the models in this library. Column vectors are
// samples: a batch of n inputs of width d is a d x n matrix.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace metapath::diff {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

/// Trainable tensor with its gradient accumulator.
template <typename Scalar = double>
struct Param {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Param() = default;
  explicit Param(Matrix<Scalar> v) : value(std::move(v)), grad(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

// ---------------------------------------------------------------------------
// linear: y = W x

template <typename Scalar, typename Derived>
Matrix<Scalar> linear(const Param<Scalar>& w, const Eigen::MatrixBase<Derived>& x) {
  if (w.value.cols() != x.rows())
    throw ShapeError("linear: W is " + shape_str(w.value.rows(), w.value.cols()) + ", x is " +
                     shape_str(x.rows(), x.cols()));
  return w.value * x;
}

/// Accumulates dL/dW into `w.grad` and returns dL/dx.
template <typename Scalar, typename DerivedX, typename DerivedG>
Matrix<Scalar> linear_backward(Param<Scalar>& w, const Eigen::MatrixBase<DerivedX>& x,
                               const Eigen::MatrixBase<DerivedG>& dy) {
  if (dy.rows() != w.value.rows() || dy.cols() != x.cols())
    throw ShapeError("linear_backward: dy is " + shape_str(dy.rows(), dy.cols()));
  w.grad.noalias() += dy * x.transpose();
  return w.value.transpose() * dy;
}

// ---------------------------------------------------------------------------
// masked max

template <typename Scalar>
struct MaxResult {
  Scalar value = Scalar(0);
  std::optional<Eigen::Index> arg;
};

/// Max of `values` over `index_set`. An empty set yields (0, none); ties go to the
/// smallest index.
template <typename Derived, typename IndexRange>
MaxResult<typename Derived::Scalar> masked_max(const Eigen::DenseBase<Derived>& values, const IndexRange& index_set) {
  MaxResult<typename Derived::Scalar> out;
  for (auto idx : index_set) {
    const auto k = static_cast<Eigen::Index>(idx);
    const auto v = values(k);
    if (!out.arg || v > out.value || (v == out.value && k < *out.arg)) {
      out.value = v;
      out.arg = k;
    }
  }
  return out;
}

/// Routes the whole incoming gradient to the argmax (nothing for an empty set).
template <typename Scalar, typename Derived>
void masked_max_backward(const MaxResult<Scalar>& r, Scalar dout, Eigen::DenseBase<Derived>& grad) {
  if (r.arg) grad(*r.arg) += dout;
}

// ---------------------------------------------------------------------------
// elementwise activations

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); }).eval();
}

/// `y` is the forward output.
template <typename DerivedY, typename DerivedG>
auto sigmoid_backward(const Eigen::MatrixBase<DerivedY>& y, const Eigen::MatrixBase<DerivedG>& dy) {
  using S = typename DerivedY::Scalar;
  return (dy.array() * y.array() * (S(1) - y.array())).matrix().eval();
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.cwiseMax(S(0)).eval();
}

/// `x` is the forward input; the subgradient at 0 is 0.
template <typename DerivedX, typename DerivedG>
auto relu_backward(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedG>& dy) {
  using S = typename DerivedX::Scalar;
  return (x.array() > S(0)).select(dy, S(0)).eval();
}

// ---------------------------------------------------------------------------
// losses

/// (1/N) sum (pred_i - target_i)^2
template <typename DerivedP, typename DerivedT>
typename DerivedP::Scalar mse_loss(const Eigen::MatrixBase<DerivedP>& pred, const Eigen::MatrixBase<DerivedT>& target) {
  if (pred.size() != target.size()) throw ShapeError("mse_loss: size mismatch");
  if (pred.size() == 0) return 0;
  return (pred - target).squaredNorm() / static_cast<typename DerivedP::Scalar>(pred.size());
}

template <typename DerivedP, typename DerivedT>
auto mse_loss_backward(const Eigen::MatrixBase<DerivedP>& pred, const Eigen::MatrixBase<DerivedT>& target) {
  using S = typename DerivedP::Scalar;
  if (pred.size() != target.size()) throw ShapeError("mse_loss_backward: size mismatch");
  return ((pred - target) * (S(2) / static_cast<S>(std::max<Eigen::Index>(pred.size(), 1)))).eval();
}

template <typename Scalar>
struct CrossEntropy {
  Scalar loss = 0;
  Matrix<Scalar> grad;  // dL/dlogits, same shape as the logits
};

/// Mean softmax cross-entropy over the columns of `logits` (classes x samples).
template <typename Derived>
CrossEntropy<typename Derived::Scalar> softmax_cross_entropy(const Eigen::MatrixBase<Derived>& logits,
                                                             std::span<const int> classes) {
  using S = typename Derived::Scalar;
  if (static_cast<Eigen::Index>(classes.size()) != logits.cols())
    throw ShapeError("softmax_cross_entropy: " + std::to_string(classes.size()) + " labels for " +
                     std::to_string(logits.cols()) + " samples");
  CrossEntropy<S> out;
  out.grad.resize(logits.rows(), logits.cols());
  const auto n = logits.cols();
  if (n == 0) return out;
  for (Eigen::Index c = 0; c < n; ++c) {
    const int y = classes[c];
    if (y < 0 || y >= logits.rows()) throw ShapeError("softmax_cross_entropy: class index out of range");
    const S m = logits.col(c).maxCoeff();
    auto e = (logits.col(c).array() - m).exp();
    const S z = e.sum();
    out.loss += std::log(z) - (logits(y, c) - m);
    out.grad.col(c) = e / z;
    out.grad(y, c) -= S(1);
  }
  out.loss /= static_cast<S>(n);
  out.grad /= static_cast<S>(n);
  return out;
}

// ---------------------------------------------------------------------------
// Adam

template <typename Scalar = double>
struct AdamState {
  Scalar lr = Scalar(0.01);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
  long step = 0;
  std::vector<Matrix<Scalar>> m;
  std::vector<Matrix<Scalar>> v;

  AdamState() = default;
  explicit AdamState(Scalar learning_rate) : lr(learning_rate) {}
};

/// One bias-corrected Adam update from the gradients currently held by `params`.
template <typename Scalar>
void adam_step(std::span<Param<Scalar>* const> params, AdamState<Scalar>& st) {
  if (st.m.empty()) {
    for (const auto* p : params) {
      st.m.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      st.v.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (st.m.size() != params.size()) throw ShapeError("adam_step: parameter count changed");
  ++st.step;
  const Scalar bc1 = Scalar(1) - std::pow(st.beta1, static_cast<Scalar>(st.step));
  const Scalar bc2 = Scalar(1) - std::pow(st.beta2, static_cast<Scalar>(st.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    if (p.grad.rows() != st.m[k].rows() || p.grad.cols() != st.m[k].cols())
      throw ShapeError("adam_step: moment shape mismatch");
    st.m[k] = st.beta1 * st.m[k] + (Scalar(1) - st.beta1) * p.grad;
    st.v[k] = st.beta2 * st.v[k] + (Scalar(1) - st.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= st.lr * (st.m[k].array() / bc1) / ((st.v[k].array() / bc2).sqrt() + st.eps);
  }
}

template <typename Scalar>
void zero_grads(std::span<Param<Scalar>* const> params) {
  for (auto* p : params) p->zero_grad();
}

// ---------------------------------------------------------------------------
// finite-difference gradient check

/// `loss` must recompute the scalar loss from the current parameter values and
/// accumulate analytic gradients into each Param::grad. Returns the largest
/// |analytic - numeric| / max(|analytic|, |numeric|, floor) over every entry.
template <typename Scalar>
Scalar grad_check(const std::function<Scalar()>& loss, std::span<Param<Scalar>* const> params,
                  Scalar epsilon = Scalar(1e-5), Scalar floor = Scalar(1e-3)) {
  zero_grads(params);
  loss();
  std::vector<Matrix<Scalar>> analytic;
  for (auto* p : params) analytic.push_back(p->grad);

  Scalar worst = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& val = params[k]->value;
    for (Eigen::Index i = 0; i < val.size(); ++i) {
      const Scalar orig = val.data()[i];
      val.data()[i] = orig + epsilon;
      const Scalar up = loss();
      val.data()[i] = orig - epsilon;
      const Scalar down = loss();
      val.data()[i] = orig;
      const Scalar numeric = (up - down) / (Scalar(2) * epsilon);
      const Scalar a = analytic[k].data()[i];
      const Scalar denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  zero_grads(params);
  return worst;
}

}  // namespace metapath::diff
