#ifndef VAMPIRE_NN_HPP_
#define VAMPIRE_NN_HPP_

#include <functional>
#include <string>
#include <vector>

#include "vampire/types.hpp"

namespace vampire::nn {

// A learnable array with its gradient and Adam state. All four tensors share
// one shape; grad/m/v start at zero.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  Mat m;
  Mat v;
  long step = 0;

  Parameter() = default;
  Parameter(std::string n, Mat init)
      : name(std::move(n)),
        value(std::move(init)),
        grad(Mat::Zero(value.rows(), value.cols())),
        m(Mat::Zero(value.rows(), value.cols())),
        v(Mat::Zero(value.rows(), value.cols())) {}

  Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(); }
};

enum class Activation { relu, tanh, softplus, linear };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

// y = x * W + b (b broadcast over rows).
Mat affine(const Mat& x, const Parameter& W, const Parameter& b);
// Accumulates dL/dW and dL/db, returns dL/dx.
Mat affine_backward(const Mat& x, Parameter& W, Parameter& b, const Mat& gy);
// Same accumulation without materializing dL/dx (first-layer shortcut).
void affine_backward_params(const Mat& x, Parameter& W, Parameter& b, const Mat& gy);

Mat activate(const Mat& x, Activation kind);
// x is the pre-activation input of the forward pass.
Mat activate_backward(const Mat& x, Activation kind, const Mat& gy);

// Row-wise, max-shifted.
Mat softmax(const Mat& x);
Mat softmax_backward(const Mat& y, const Mat& gy);  // y = softmax(x)
Mat log_softmax(const Mat& x);
Mat log_softmax_backward(const Mat& log_y, const Mat& gy);

// Column-wise batch normalization with learnable gain/shift and running
// statistics (momentum 0.1, eps 1e-5). Train mode uses batch statistics
// (population variance) and updates the running ones; eval mode reads the
// running statistics and leaves them untouched.
struct BatchNorm {
  Parameter gamma;
  Parameter beta;
  Vec running_mean;
  Vec running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  BatchNorm() = default;
  BatchNorm(Index dim, const std::string& prefix)
      : gamma(prefix + ".gamma", Mat::Ones(1, dim)),
        beta(prefix + ".beta", Mat::Zero(1, dim)),
        running_mean(Vec::Zero(dim)),
        running_var(Vec::Ones(dim)) {}
};

struct BatchNormCache {
  Mat xhat;
  RowVec inv_std;
};

Mat batchnorm(const Mat& x, BatchNorm& state, Mode mode, BatchNormCache* cache = nullptr);
// Eval-mode normalization that leaves the state untouched.
Mat batchnorm_eval(const Mat& x, const BatchNorm& state);
// Gradients for a train-mode forward (batch statistics couple the rows).
Mat batchnorm_backward(const BatchNormCache& cache, BatchNorm& state, const Mat& gy);

// Inverted dropout; kept entries are scaled by 1/(1-rate) at train time so
// eval is the identity. The mask is stored for the backward pass.
struct DropoutMask {
  Mat keep_scale;  // 0 or 1/(1-rate) per entry
};

Mat dropout(const Mat& x, double rate, Rng& rng, Mode mode, DropoutMask* mask = nullptr);
Mat dropout_backward(const DropoutMask& mask, const Mat& gy);

// One Adam update with bias correction over all listed parameters; gradients
// are zeroed afterwards. Throws if any gradient entry is non-finite.
void adam_step(const std::vector<Parameter*>& params, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// Central finite differences against the analytic gradient.
// f(true) must run forward + backward and leave gradients in the parameters;
// f(false) must be the pure forward value. Returns the max relative error
// |g_a - g_n| / max(|g_a|, |g_n|, 1e-8) over all coordinates.
double grad_check(const std::function<double(bool)>& f, const std::vector<Parameter*>& params,
                  double h = 1e-5);

}  // namespace vampire::nn

#endif  // VAMPIRE_NN_HPP_
