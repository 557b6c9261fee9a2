#include "vampire/nn.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace vampire::nn {

namespace {

std::string shape_of(const Mat& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_same_shape(const Mat& a, const Mat& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_of(a) +
                                " vs " + shape_of(b));
  }
}

}  // namespace

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "softplus") return Activation::softplus;
  if (s == "linear") return Activation::linear;
  throw std::invalid_argument("unknown activation: " + s);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
    case Activation::linear: return "linear";
  }
  throw std::logic_error("invalid activation enum");
}

Mat affine(const Mat& x, const Parameter& W, const Parameter& b) {
  if (x.cols() != W.value.rows()) {
    throw std::invalid_argument("affine: x " + shape_of(x) + " does not conform with W " +
                                shape_of(W.value));
  }
  if (b.value.rows() != 1 || b.value.cols() != W.value.cols()) {
    throw std::invalid_argument("affine: bias " + shape_of(b.value) + " does not match W " +
                                shape_of(W.value));
  }
  return (x * W.value).rowwise() + b.value.row(0);
}

Mat affine_backward(const Mat& x, Parameter& W, Parameter& b, const Mat& gy) {
  if (gy.rows() != x.rows() || gy.cols() != W.value.cols()) {
    throw std::invalid_argument("affine_backward: upstream grad " + shape_of(gy) +
                                " does not match output " + std::to_string(x.rows()) + "x" +
                                std::to_string(W.value.cols()));
  }
  W.grad.noalias() += x.transpose() * gy;
  b.grad.row(0) += gy.colwise().sum();
  return gy * W.value.transpose();
}

void affine_backward_params(const Mat& x, Parameter& W, Parameter& b, const Mat& gy) {
  if (gy.rows() != x.rows() || gy.cols() != W.value.cols()) {
    throw std::invalid_argument("affine_backward_params: upstream grad " + shape_of(gy) +
                                " does not match output " + std::to_string(x.rows()) + "x" +
                                std::to_string(W.value.cols()));
  }
  W.grad.noalias() += x.transpose() * gy;
  b.grad.row(0) += gy.colwise().sum();
}

Mat activate(const Mat& x, Activation kind) {
  switch (kind) {
    case Activation::relu:
      return x.cwiseMax(0.0);
    case Activation::tanh:
      return x.array().tanh().matrix();
    case Activation::softplus:
      // log(1 + e^x), overflow-safe: x + log1p(e^-x) for x > 0.
      return x.unaryExpr([](double v) {
        return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
      });
    case Activation::linear:
      return x;
  }
  throw std::logic_error("invalid activation enum");
}

Mat activate_backward(const Mat& x, Activation kind, const Mat& gy) {
  require_same_shape(x, gy, "activate_backward");
  switch (kind) {
    case Activation::relu:
      return gy.cwiseProduct(x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
    case Activation::tanh: {
      Mat t = x.array().tanh().matrix();
      return gy.cwiseProduct((1.0 - t.array().square()).matrix());
    }
    case Activation::softplus:
      // d softplus / dx = sigmoid(x)
      return gy.cwiseProduct(x.unaryExpr([](double v) {
        return v > 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      }));
    case Activation::linear:
      return gy;
  }
  throw std::logic_error("invalid activation enum");
}

Mat softmax(const Mat& x) {
  Mat y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double mx = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - mx).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return y;
}

Mat softmax_backward(const Mat& y, const Mat& gy) {
  require_same_shape(y, gy, "softmax_backward");
  Mat gx(y.rows(), y.cols());
  for (Index i = 0; i < y.rows(); ++i) {
    const double dot = y.row(i).dot(gy.row(i));
    gx.row(i) = (y.row(i).array() * (gy.row(i).array() - dot)).matrix();
  }
  return gx;
}

Mat log_softmax(const Mat& x) {
  Mat y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double mx = x.row(i).maxCoeff();
    const double lse = std::log((x.row(i).array() - mx).exp().sum());
    y.row(i) = (x.row(i).array() - mx - lse).matrix();
  }
  return y;
}

Mat log_softmax_backward(const Mat& log_y, const Mat& gy) {
  require_same_shape(log_y, gy, "log_softmax_backward");
  Mat gx(log_y.rows(), log_y.cols());
  for (Index i = 0; i < log_y.rows(); ++i) {
    const double total = gy.row(i).sum();
    gx.row(i) = gy.row(i) - total * log_y.row(i).array().exp().matrix();
  }
  return gx;
}

Mat batchnorm(const Mat& x, BatchNorm& state, Mode mode, BatchNormCache* cache) {
  const Index n = x.rows();
  const Index d = x.cols();
  if (d != state.gamma.value.cols()) {
    throw std::invalid_argument("batchnorm: input " + shape_of(x) + " does not match state dim " +
                                std::to_string(state.gamma.value.cols()));
  }
  RowVec mean;
  RowVec inv_std;
  if (mode == Mode::train) {
    if (n < 2) throw std::invalid_argument("batchnorm: train mode requires a batch of at least 2");
    mean = x.colwise().mean();
    Mat centered = x.rowwise() - mean;
    RowVec var = centered.array().square().colwise().mean().matrix();
    inv_std = (var.array() + state.eps).rsqrt().matrix();
    state.running_mean =
        (1.0 - state.momentum) * state.running_mean + state.momentum * mean.transpose();
    state.running_var =
        (1.0 - state.momentum) * state.running_var + state.momentum * var.transpose();
  } else {
    mean = state.running_mean.transpose();
    inv_std = (state.running_var.transpose().array() + state.eps).rsqrt().matrix();
  }
  Mat xhat = x.rowwise() - mean;
  xhat.array().rowwise() *= inv_std.array();
  if (cache != nullptr) {
    cache->xhat = xhat;
    cache->inv_std = inv_std;
  }
  Mat y = xhat;
  y.array().rowwise() *= state.gamma.value.row(0).array();
  y.rowwise() += state.beta.value.row(0);
  return y;
}

Mat batchnorm_eval(const Mat& x, const BatchNorm& state) {
  RowVec inv_std = (state.running_var.transpose().array() + state.eps).rsqrt().matrix();
  Mat y = x.rowwise() - state.running_mean.transpose();
  y.array().rowwise() *= inv_std.array() * state.gamma.value.row(0).array();
  y.rowwise() += state.beta.value.row(0);
  return y;
}

Mat batchnorm_backward(const BatchNormCache& cache, BatchNorm& state, const Mat& gy) {
  require_same_shape(cache.xhat, gy, "batchnorm_backward");
  const double n = static_cast<double>(gy.rows());
  state.beta.grad.row(0) += gy.colwise().sum();
  state.gamma.grad.row(0) += gy.cwiseProduct(cache.xhat).colwise().sum();
  // dx = inv_std/n * (n*dxhat - sum(dxhat) - xhat * sum(dxhat .* xhat))
  Mat dxhat = gy;
  dxhat.array().rowwise() *= state.gamma.value.row(0).array();
  RowVec sum_dxhat = dxhat.colwise().sum();
  RowVec sum_dxhat_xhat = dxhat.cwiseProduct(cache.xhat).colwise().sum();
  Mat dx = n * dxhat;
  dx.rowwise() -= sum_dxhat;
  dx -= (cache.xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
  RowVec scale = cache.inv_std / n;
  dx.array().rowwise() *= scale.array();
  return dx;
}

Mat dropout(const Mat& x, double rate, Rng& rng, Mode mode, DropoutMask* mask) {
  if (rate < 0.0 || rate >= 1.0) {
    throw std::invalid_argument("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::eval || rate == 0.0) {
    if (mask != nullptr) mask->keep_scale = Mat::Ones(x.rows(), x.cols());
    return x;
  }
  const double scale = 1.0 / (1.0 - rate);
  Mat keep(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) keep(i, j) = rng.uniform() >= rate ? scale : 0.0;
  if (mask != nullptr) mask->keep_scale = keep;
  return x.cwiseProduct(keep);
}

Mat dropout_backward(const DropoutMask& mask, const Mat& gy) {
  require_same_shape(mask.keep_scale, gy, "dropout_backward");
  return gy.cwiseProduct(mask.keep_scale);
}

void adam_step(const std::vector<Parameter*>& params, double lr, double beta1, double beta2,
               double eps) {
  for (Parameter* p : params) {
    if (!p->grad.allFinite()) {
      throw std::runtime_error("adam_step: non-finite gradient in parameter '" + p->name + "'");
    }
    p->step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(p->step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(p->step));
    p->m = beta1 * p->m + (1.0 - beta1) * p->grad;
    p->v = beta2 * p->v + (1.0 - beta2) * p->grad.cwiseProduct(p->grad);
    Mat m_hat = p->m / bc1;
    Mat v_hat = p->v / bc2;
    p->value.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + eps);
    p->grad.setZero();
  }
}

double grad_check(const std::function<double(bool)>& f, const std::vector<Parameter*>& params,
                  double h) {
  for (Parameter* p : params) p->zero_grad();
  f(true);
  std::vector<Mat> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    for (Index i = 0; i < p->value.rows(); ++i) {
      for (Index j = 0; j < p->value.cols(); ++j) {
        const double saved = p->value(i, j);
        p->value(i, j) = saved + h;
        const double up = f(false);
        p->value(i, j) = saved - h;
        const double down = f(false);
        p->value(i, j) = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double ga = analytic[pi](i, j);
        const double denom = std::max({std::abs(ga), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(ga - numeric) / denom);
      }
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return max_rel;
}

}  // namespace vampire::nn
