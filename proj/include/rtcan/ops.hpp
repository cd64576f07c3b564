#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "rtcan/tensor.hpp"

namespace rtcan::ag {

// Differentiable operators. Every op records its backward rule on `tape`
// when tape != nullptr and any input requires a gradient; pass nullptr for
// plain inference. Gradients accumulate additively across fan-out.

// Cross-correlation with zero padding: x[B,Cin,L] * w[Cout,Cin,K] + b[Cout]
// -> [B,Cout,L'], L' = floor((L + 2*pad - K)/stride) + 1.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad, Tape* tape);

// Per-channel normalization over (B,L). Train mode uses batch statistics
// (population variance) and updates the running buffers by EMA; eval mode
// normalizes with the running buffers.
Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& running_mean, Tensor& running_var, bool train,
                   double momentum, double eps, Tape* tape);

// x[B,F] . w[F,G] + b[G]
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape);

enum class Act { relu, sigmoid, softmax_lastdim };

Tensor relu(const Tensor& x, Tape* tape);
Tensor sigmoid(const Tensor& x, Tape* tape);
Tensor softmax_lastdim(const Tensor& x, Tape* tape);
Tensor activation(const Tensor& x, Act kind, Tape* tape);

// Windowed mean over the last dim; global pooling when kernel == L.
Tensor avgpool1d(const Tensor& x, int kernel, int stride, Tape* tape);

// a[B,M,K] . b[B,K,N] -> [B,M,N]
Tensor matmul_batched(const Tensor& a, const Tensor& b, Tape* tape);

Tensor concat(const std::vector<Tensor>& parts, int dim, Tape* tape);
Tensor slice(const Tensor& x, int dim, int start, int len, Tape* tape);

// [B,M,N] -> [B,N,M]
Tensor transpose12(const Tensor& x, Tape* tape);

Tensor add(const Tensor& a, const Tensor& b, Tape* tape);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape);

// out[b,c,t] = x[b,c,t] * w[b,c] (channel gate broadcast over time).
Tensor scale_channels(const Tensor& x, const Tensor& w, Tape* tape);

Tensor reshape(const Tensor& x, std::vector<int> shape, Tape* tape);

Tensor sum(const Tensor& x, Tape* tape);

// Mean over the batch of -log(prob[label]); probs rows must already be
// softmax-normalized. Probabilities are clamped at 1e-12 before the log.
Tensor cross_entropy(const Tensor& probs, const std::vector<int>& labels,
                     Tape* tape);

// Runs the reverse sweep from a scalar loss recorded on `tape`.
void backward(Tape& tape, Tensor& loss);

// p <- p - lr * grad for every parameter, then zero the grads.
void sgd_step(std::vector<Tensor>& params, double lr);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued tensor function; the workhorse gradient oracle.
double finite_diff_check(const std::function<Tensor(Tensor&, Tape&)>& f,
                         Tensor& x, double eps);

}  // namespace rtcan::ag
