#include "rtcan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rtcan::ag {
namespace {

bool want_grad(Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void require(bool ok, const std::string& msg) {
  if (!ok) fail(Err::ShapeMismatch, msg);
}

std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s[i]);
    if (i + 1 < s.size()) out += ",";
  }
  return out + ")";
}

void check_finite(const Tensor& t, const char* what) {
  for (double v : t.vec()) {
    if (!std::isfinite(v)) {
      fail(Err::NonFinite, std::string(what) + " produced a non-finite value");
    }
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad, Tape* tape) {
  require(x.dim() == 3, "conv1d: x must be (B,Cin,L), got " + shape_str(x.shape()));
  require(w.dim() == 3, "conv1d: w must be (Cout,Cin,K)");
  const int B = x.size(0), cin = x.size(1), L = x.size(2);
  const int cout = w.size(0), K = w.size(2);
  require(w.size(1) == cin, "conv1d: w Cin mismatch");
  require(b.dim() == 1 && b.size(0) == cout, "conv1d: bias must be (Cout)");
  require(stride >= 1, "conv1d: stride must be >= 1");
  require(pad >= 0, "conv1d: pad must be >= 0");
  require(K <= L + 2 * pad, "conv1d: kernel longer than padded input");
  const int Lout = (L + 2 * pad - K) / stride + 1;
  require(Lout >= 1, "conv1d: empty output");

  Tensor out = Tensor::zeros({B, cout, Lout});
  {
    const double* xd = x.data();
    const double* wd = w.data();
    const double* bd = b.data();
    double* od = out.data();
    for (int bi = 0; bi < B; ++bi) {
      const double* xb = xd + static_cast<std::ptrdiff_t>(bi) * cin * L;
      double* ob = od + static_cast<std::ptrdiff_t>(bi) * cout * Lout;
      for (int co = 0; co < cout; ++co) {
        double* __restrict__ orow = ob + static_cast<std::ptrdiff_t>(co) * Lout;
        std::fill(orow, orow + Lout, bd[co]);
        for (int ci = 0; ci < cin; ++ci) {
          const double* xrow = xb + static_cast<std::ptrdiff_t>(ci) * L;
          const double* wrow = wd + (static_cast<std::ptrdiff_t>(co) * cin + ci) * K;
          for (int k = 0; k < K; ++k) {
            const double wv = wrow[k];
            const int off = k - pad;
            const int lo = off < 0 ? (-off + stride - 1) / stride : 0;
            const int hi = std::min(Lout - 1, (L - 1 - off) / stride);
            const double* __restrict__ xoff = xrow + off;
            if (stride == 1) {
              for (int l = lo; l <= hi; ++l) orow[l] += wv * xoff[l];
            } else {
              for (int l = lo; l <= hi; ++l) orow[l] += wv * xoff[l * stride];
            }
          }
        }
      }
    }
  }

  if (want_grad(tape, {&x, &w, &b})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), wi = w.impl(), bi_ = b.impl(), oi = out.impl();
    const bool need_x = x.requires_grad(), need_w = w.requires_grad(),
               need_b = b.requires_grad();
    tape->record(out, [=]() {
      if (oi->grad.empty()) return;
      const double* god = oi->grad.data();
      const double* xd = xi->value.data();
      const double* wd = wi->value.data();
      if (need_x && xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      if (need_w && wi->grad.empty()) wi->grad.assign(wi->value.size(), 0.0);
      if (need_b && bi_->grad.empty()) bi_->grad.assign(bi_->value.size(), 0.0);
      for (int bb = 0; bb < B; ++bb) {
        const double* gob = god + static_cast<std::ptrdiff_t>(bb) * cout * Lout;
        const double* xb = xd + static_cast<std::ptrdiff_t>(bb) * cin * L;
        double* gxb = need_x
                          ? xi->grad.data() + static_cast<std::ptrdiff_t>(bb) * cin * L
                          : nullptr;
        for (int co = 0; co < cout; ++co) {
          const double* gorow = gob + static_cast<std::ptrdiff_t>(co) * Lout;
          if (need_b) {
            double acc = 0.0;
            for (int l = 0; l < Lout; ++l) acc += gorow[l];
            bi_->grad[static_cast<std::size_t>(co)] += acc;
          }
          if (!need_x && !need_w) continue;
          for (int ci = 0; ci < cin; ++ci) {
            const double* xrow = xb + static_cast<std::ptrdiff_t>(ci) * L;
            double* gxrow =
                need_x ? gxb + static_cast<std::ptrdiff_t>(ci) * L : nullptr;
            const std::ptrdiff_t wbase =
                (static_cast<std::ptrdiff_t>(co) * cin + ci) * K;
            for (int k = 0; k < K; ++k) {
              const int off = k - pad;
              const int lo = off < 0 ? (-off + stride - 1) / stride : 0;
              const int hi = std::min(Lout - 1, (L - 1 - off) / stride);
              const double wv = need_x ? wd[wbase + k] : 0.0;
              double acc = 0.0;
              const double* __restrict__ go = gorow;
              const double* __restrict__ xoff = xrow + off;
              double* __restrict__ gxoff = gxrow ? gxrow + off : nullptr;
              if (need_x && need_w && stride == 1) {
                for (int l = lo; l <= hi; ++l) {
                  const double g = go[l];
                  gxoff[l] += wv * g;
                  acc += g * xoff[l];
                }
              } else {
                if (need_x) {
                  if (stride == 1) {
                    for (int l = lo; l <= hi; ++l) gxoff[l] += wv * go[l];
                  } else {
                    for (int l = lo; l <= hi; ++l) gxoff[l * stride] += wv * go[l];
                  }
                }
                if (need_w) {
                  if (stride == 1) {
                    for (int l = lo; l <= hi; ++l) acc += go[l] * xoff[l];
                  } else {
                    for (int l = lo; l <= hi; ++l) acc += go[l] * xoff[l * stride];
                  }
                }
              }
              if (need_w) wi->grad[static_cast<std::size_t>(wbase + k)] += acc;
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& running_mean, Tensor& running_var, bool train,
                   double momentum, double eps, Tape* tape) {
  require(x.dim() == 3, "batchnorm1d: x must be (B,C,L)");
  const int B = x.size(0), C = x.size(1), L = x.size(2);
  require(gamma.dim() == 1 && gamma.size(0) == C, "batchnorm1d: gamma must be (C)");
  require(beta.dim() == 1 && beta.size(0) == C, "batchnorm1d: beta must be (C)");
  require(running_mean.numel() == C && running_var.numel() == C,
          "batchnorm1d: running stats must be (C)");
  if (eps <= 0.0) fail(Err::BadParams, "batchnorm1d: eps must be > 0");
  const int M = B * L;

  std::vector<double> mean(static_cast<std::size_t>(C), 0.0);
  std::vector<double> inv_std(static_cast<std::size_t>(C), 0.0);
  if (train) {
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int bb = 0; bb < B; ++bb) {
        const double* row = x.data() + (static_cast<std::ptrdiff_t>(bb) * C + c) * L;
        for (int l = 0; l < L; ++l) s += row[l];
      }
      const double mu = s / M;
      double v = 0.0;
      for (int bb = 0; bb < B; ++bb) {
        const double* row = x.data() + (static_cast<std::ptrdiff_t>(bb) * C + c) * L;
        for (int l = 0; l < L; ++l) v += (row[l] - mu) * (row[l] - mu);
      }
      v /= M;
      mean[static_cast<std::size_t>(c)] = mu;
      inv_std[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(v + eps);
      running_mean.data()[c] = (1.0 - momentum) * running_mean.data()[c] + momentum * mu;
      running_var.data()[c] = (1.0 - momentum) * running_var.data()[c] + momentum * v;
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[static_cast<std::size_t>(c)] = running_mean.data()[c];
      inv_std[static_cast<std::size_t>(c)] =
          1.0 / std::sqrt(running_var.data()[c] + eps);
    }
  }

  Tensor out = Tensor::zeros({B, C, L});
  for (int bb = 0; bb < B; ++bb) {
    for (int c = 0; c < C; ++c) {
      const double* row = x.data() + (static_cast<std::ptrdiff_t>(bb) * C + c) * L;
      double* orow = out.data() + (static_cast<std::ptrdiff_t>(bb) * C + c) * L;
      const double g = gamma.data()[c], bt = beta.data()[c];
      const double mu = mean[static_cast<std::size_t>(c)],
                   is = inv_std[static_cast<std::size_t>(c)];
      for (int l = 0; l < L; ++l) orow[l] = g * (row[l] - mu) * is + bt;
    }
  }

  if (want_grad(tape, {&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = out.impl();
    const bool need_x = x.requires_grad(), need_g = gamma.requires_grad(),
               need_b = beta.requires_grad();
    tape->record(out, [=, mean = std::move(mean), inv_std = std::move(inv_std)]() {
      if (oi->grad.empty()) return;
      const double* god = oi->grad.data();
      const double* xd = xi->value.data();
      if (need_x && xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      if (need_g && gi->grad.empty()) gi->grad.assign(gi->value.size(), 0.0);
      if (need_b && bi->grad.empty()) bi->grad.assign(bi->value.size(), 0.0);
      for (int c = 0; c < C; ++c) {
        const double mu = mean[static_cast<std::size_t>(c)];
        const double is = inv_std[static_cast<std::size_t>(c)];
        const double g = gi->value[static_cast<std::size_t>(c)];
        double sum_go = 0.0, sum_go_xhat = 0.0;
        for (int bb = 0; bb < B; ++bb) {
          const std::ptrdiff_t base = (static_cast<std::ptrdiff_t>(bb) * C + c) * L;
          for (int l = 0; l < L; ++l) {
            const double go = god[base + l];
            sum_go += go;
            sum_go_xhat += go * (xd[base + l] - mu) * is;
          }
        }
        if (need_g) gi->grad[static_cast<std::size_t>(c)] += sum_go_xhat;
        if (need_b) bi->grad[static_cast<std::size_t>(c)] += sum_go;
        if (need_x) {
          if (train) {
            const double mgo = sum_go / M, mgx = sum_go_xhat / M;
            for (int bb = 0; bb < B; ++bb) {
              const std::ptrdiff_t base =
                  (static_cast<std::ptrdiff_t>(bb) * C + c) * L;
              for (int l = 0; l < L; ++l) {
                const double xhat = (xd[base + l] - mu) * is;
                xi->grad[static_cast<std::size_t>(base + l)] +=
                    g * is * (god[base + l] - mgo - xhat * mgx);
              }
            }
          } else {
            const double scale = g * is;
            for (int bb = 0; bb < B; ++bb) {
              const std::ptrdiff_t base =
                  (static_cast<std::ptrdiff_t>(bb) * C + c) * L;
              for (int l = 0; l < L; ++l) {
                xi->grad[static_cast<std::size_t>(base + l)] += scale * god[base + l];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape) {
  require(x.dim() == 2, "dense: x must be (B,F), got " + shape_str(x.shape()));
  require(w.dim() == 2, "dense: w must be (F,G)");
  const int B = x.size(0), F = x.size(1), G = w.size(1);
  require(w.size(0) == F, "dense: inner dims mismatch: x " + shape_str(x.shape()) +
                              " w " + shape_str(w.shape()));
  require(b.dim() == 1 && b.size(0) == G, "dense: bias must be (G)");

  Tensor out = Tensor::zeros({B, G});
  for (int bi = 0; bi < B; ++bi) {
    double* orow = out.data() + static_cast<std::ptrdiff_t>(bi) * G;
    std::copy(b.data(), b.data() + G, orow);
    const double* xrow = x.data() + static_cast<std::ptrdiff_t>(bi) * F;
    for (int f = 0; f < F; ++f) {
      const double xv = xrow[f];
      if (xv == 0.0) continue;
      const double* wrow = w.data() + static_cast<std::ptrdiff_t>(f) * G;
      for (int g = 0; g < G; ++g) orow[g] += xv * wrow[g];
    }
  }

  if (want_grad(tape, {&x, &w, &b})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), wi = w.impl(), bi_ = b.impl(), oi = out.impl();
    const bool need_x = x.requires_grad(), need_w = w.requires_grad(),
               need_b = b.requires_grad();
    tape->record(out, [=]() {
      if (oi->grad.empty()) return;
      const double* god = oi->grad.data();
      if (need_x && xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      if (need_w && wi->grad.empty()) wi->grad.assign(wi->value.size(), 0.0);
      if (need_b && bi_->grad.empty()) bi_->grad.assign(bi_->value.size(), 0.0);
      for (int bb = 0; bb < B; ++bb) {
        const double* gorow = god + static_cast<std::ptrdiff_t>(bb) * G;
        const double* xrow = xi->value.data() + static_cast<std::ptrdiff_t>(bb) * F;
        if (need_b) {
          for (int g = 0; g < G; ++g) bi_->grad[static_cast<std::size_t>(g)] += gorow[g];
        }
        for (int f = 0; f < F; ++f) {
          const double* wrow = wi->value.data() + static_cast<std::ptrdiff_t>(f) * G;
          if (need_x) {
            double acc = 0.0;
            for (int g = 0; g < G; ++g) acc += gorow[g] * wrow[g];
            xi->grad[static_cast<std::size_t>(bb) * F + f] += acc;
          }
          if (need_w) {
            const double xv = xrow[f];
            if (xv == 0.0) continue;
            double* gwrow = wi->grad.data() + static_cast<std::ptrdiff_t>(f) * G;
            for (int g = 0; g < G; ++g) gwrow[g] += xv * gorow[g];
          }
        }
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x, Tape* tape) {
  Tensor out = Tensor::zeros(x.shape());
  const int n = x.numel();
  for (int i = 0; i < n; ++i) out.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  check_finite(out, "relu");
  if (want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, [=]() {
      if (oi->grad.empty()) return;
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      double* __restrict__ gx = xi->grad.data();
      const double* __restrict__ go = oi->grad.data();
      const double* __restrict__ xv = xi->value.data();
      const std::size_t n = xi->value.size();
      for (std::size_t i = 0; i < n; ++i) {
        // gradient at exactly 0 is 0
        gx[i] += xv[i] > 0.0 ? go[i] : 0.0;
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x, Tape* tape) {
  Tensor out = Tensor::zeros(x.shape());
  const int n = x.numel();
  for (int i = 0; i < n; ++i) out.data()[i] = stable_sigmoid(x.data()[i]);
  check_finite(out, "sigmoid");
  if (want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, [=]() {
      if (oi->grad.empty()) return;
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      for (std::size_t i = 0; i < xi->value.size(); ++i) {
        const double y = oi->value[i];
        xi->grad[i] += oi->grad[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

Tensor softmax_lastdim(const Tensor& x, Tape* tape) {
  require(x.dim() >= 1, "softmax: needs at least one dim");
  const int D = x.size(x.dim() - 1);
  const int rows = x.numel() / D;
  Tensor out = Tensor::zeros(x.shape());
  for (int r = 0; r < rows; ++r) {
    const double* xrow = x.data() + static_cast<std::ptrdiff_t>(r) * D;
    double* orow = out.data() + static_cast<std::ptrdiff_t>(r) * D;
    double mx = xrow[0];
    for (int i = 1; i < D; ++i) mx = std::max(mx, xrow[i]);
    double z = 0.0;
    for (int i = 0; i < D; ++i) {
      orow[i] = std::exp(xrow[i] - mx);
      z += orow[i];
    }
    const double inv = 1.0 / z;
    for (int i = 0; i < D; ++i) orow[i] *= inv;
  }
  check_finite(out, "softmax");
  if (want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, [=]() {
      if (oi->grad.empty()) return;
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      for (int r = 0; r < rows; ++r) {
        const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(r) * D;
        double dot = 0.0;
        for (int i = 0; i < D; ++i) dot += oi->grad[base + i] * oi->value[base + i];
        for (int i = 0; i < D; ++i) {
          xi->grad[static_cast<std::size_t>(base + i)] +=
              oi->value[base + i] * (oi->grad[base + i] - dot);
        }
      }
    });
  }
  return out;
}

Tensor activation(const Tensor& x, Act kind, Tape* tape) {
  switch (kind) {
    case Act::relu: return relu(x, tape);
    case Act::sigmoid: return sigmoid(x, tape);
    case Act::softmax_lastdim: return softmax_lastdim(x, tape);
  }
  fail(Err::BadParams, "unknown activation kind");
}

Tensor avgpool1d(const Tensor& x, int kernel, int stride, Tape* tape) {
  require(x.dim() == 3, "avgpool1d: x must be (B,C,L)");
  const int B = x.size(0), C = x.size(1), L = x.size(2);
  require(kernel >= 1 && stride >= 1, "avgpool1d: kernel/stride must be >= 1");
  require(kernel <= L, "avgpool1d: kernel exceeds input length");
  const int Lout = (L - kernel) / stride + 1;
  Tensor out = Tensor::zeros({B, C, Lout});
  const double inv_k = 1.0 / kernel;
  for (int bc = 0; bc < B * C; ++bc) {
    const double* row = x.data() + static_cast<std::ptrdiff_t>(bc) * L;
    double* orow = out.data() + static_cast<std::ptrdiff_t>(bc) * Lout;
    for (int l = 0; l < Lout; ++l) {
      double acc = 0.0;
      const double* win = row + static_cast<std::ptrdiff_t>(l) * stride;
      for (int k = 0; k < kernel; ++k) acc += win[k];
      orow[l] = acc * inv_k;
    }
  }
  if (want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, [=]() {
      if (oi->grad.empty()) return;
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      for (int bc = 0; bc < B * C; ++bc) {
        double* gxrow = xi->grad.data() + static_cast<std::ptrdiff_t>(bc) * L;
        const double* gorow = oi->grad.data() + static_cast<std::ptrdiff_t>(bc) * Lout;
        for (int l = 0; l < Lout; ++l) {
          const double g = gorow[l] * inv_k;
          double* win = gxrow + static_cast<std::ptrdiff_t>(l) * stride;
          for (int k = 0; k < kernel; ++k) win[k] += g;
        }
      }
    });
  }
  return out;
}

Tensor matmul_batched(const Tensor& a, const Tensor& b, Tape* tape) {
  require(a.dim() == 3 && b.dim() == 3, "matmul_batched: inputs must be (B,M,K),(B,K,N)");
  const int B = a.size(0), M = a.size(1), K = a.size(2), N = b.size(2);
  require(b.size(0) == B, "matmul_batched: batch mismatch");
  require(b.size(1) == K, "matmul_batched: inner dims mismatch: a " +
                              shape_str(a.shape()) + " b " + shape_str(b.shape()));
  Tensor out = Tensor::zeros({B, M, N});
  for (int bb = 0; bb < B; ++bb) {
    const double* ab = a.data() + static_cast<std::ptrdiff_t>(bb) * M * K;
    const double* bbp = b.data() + static_cast<std::ptrdiff_t>(bb) * K * N;
    double* ob = out.data() + static_cast<std::ptrdiff_t>(bb) * M * N;
    for (int m = 0; m < M; ++m) {
      const double* arow = ab + static_cast<std::ptrdiff_t>(m) * K;
      double* orow = ob + static_cast<std::ptrdiff_t>(m) * N;
      for (int k = 0; k < K; ++k) {
        const double av = arow[k];
        if (av == 0.0) continue;
        const double* brow = bbp + static_cast<std::ptrdiff_t>(k) * N;
        for (int n = 0; n < N; ++n) orow[n] += av * brow[n];
      }
    }
  }
  if (want_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    const bool need_a = a.requires_grad(), need_b = b.requires_grad();
    tape->record(out, [=]() {
      if (oi->grad.empty()) return;
      if (need_a && ai->grad.empty()) ai->grad.assign(ai->value.size(), 0.0);
      if (need_b && bi->grad.empty()) bi->grad.assign(bi->value.size(), 0.0);
      for (int bb = 0; bb < B; ++bb) {
        const double* go = oi->grad.data() + static_cast<std::ptrdiff_t>(bb) * M * N;
        const double* av = ai->value.data() + static_cast<std::ptrdiff_t>(bb) * M * K;
        const double* bv = bi->value.data() + static_cast<std::ptrdiff_t>(bb) * K * N;
        for (int m = 0; m < M; ++m) {
          const double* gorow = go + static_cast<std::ptrdiff_t>(m) * N;
          // gA[m,k] = sum_n go[m,n] * B[k,n]
          if (need_a) {
            double* garow = ai->grad.data() +
                            static_cast<std::ptrdiff_t>(bb) * M * K +
                            static_cast<std::ptrdiff_t>(m) * K;
            for (int k = 0; k < K; ++k) {
              const double* brow = bv + static_cast<std::ptrdiff_t>(k) * N;
              double acc = 0.0;
              for (int n = 0; n < N; ++n) acc += gorow[n] * brow[n];
              garow[k] += acc;
            }
          }
          // gB[k,n] += A[m,k] * go[m,n]
          if (need_b) {
            const double* arow = av + static_cast<std::ptrdiff_t>(m) * K;
            for (int k = 0; k < K; ++k) {
              const double a_mk = arow[k];
              if (a_mk == 0.0) continue;
              double* gbrow = bi->grad.data() +
                              static_cast<std::ptrdiff_t>(bb) * K * N +
                              static_cast<std::ptrdiff_t>(k) * N;
              for (int n = 0; n < N; ++n) gbrow[n] += a_mk * gorow[n];
            }
          }
        }
      }
    });
  }
  return out;
}

namespace {

// outer x along x mid x inner decomposition around `dim`.
struct DimSplit {
  int outer = 1, mid = 1, inner = 1;
};

DimSplit split_at(const std::vector<int>& shape, int dim) {
  DimSplit s;
  s.mid = shape[static_cast<std::size_t>(dim)];
  for (int i = 0; i < dim; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(dim) + 1; i < shape.size(); ++i) {
    s.inner *= shape[i];
  }
  return s;
}

}  // namespace

Tensor concat(const std::vector<Tensor>& parts, int dim, Tape* tape) {
  require(!parts.empty(), "concat: needs at least one part");
  const auto& first = parts[0].shape();
  require(dim >= 0 && dim < static_cast<int>(first.size()), "concat: bad dim");
  int total = 0;
  for (const auto& p : parts) {
    require(p.dim() == static_cast<int>(first.size()), "concat: rank mismatch");
    for (int d = 0; d < p.dim(); ++d) {
      if (d != dim) {
        require(p.size(d) == first[static_cast<std::size_t>(d)],
                "concat: shapes differ off the concat dim");
      }
    }
    total += p.size(dim);
  }
  std::vector<int> out_shape = first;
  out_shape[static_cast<std::size_t>(dim)] = total;
  Tensor out = Tensor::zeros(out_shape);
  const DimSplit s = split_at(out_shape, dim);
  {
    double* od = out.data();
    for (int o = 0; o < s.outer; ++o) {
      std::ptrdiff_t cursor = static_cast<std::ptrdiff_t>(o) * s.mid * s.inner;
      for (const auto& p : parts) {
        const int pm = p.size(dim);
        const double* pd = p.data() +
                           static_cast<std::ptrdiff_t>(o) * pm * s.inner;
        std::copy(pd, pd + static_cast<std::ptrdiff_t>(pm) * s.inner, od + cursor);
        cursor += static_cast<std::ptrdiff_t>(pm) * s.inner;
      }
    }
  }
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (tape && any) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorData>> pis;
    std::vector<int> mids;
    for (const auto& p : parts) {
      pis.push_back(p.impl());
      mids.push_back(p.size(dim));
    }
    auto oi = out.impl();
    tape->record(out, [=]() {
      if (oi->grad.empty()) return;
      for (int o = 0; o < s.outer; ++o) {
        std::ptrdiff_t cursor = static_cast<std::ptrdiff_t>(o) * s.mid * s.inner;
        for (std::size_t pi = 0; pi < pis.size(); ++pi) {
          const std::ptrdiff_t len =
              static_cast<std::ptrdiff_t>(mids[pi]) * s.inner;
          if (pis[pi]->requires_grad) {
            if (pis[pi]->grad.empty()) pis[pi]->grad.assign(pis[pi]->value.size(), 0.0);
            double* gp = pis[pi]->grad.data() + static_cast<std::ptrdiff_t>(o) * len;
            const double* go = oi->grad.data() + cursor;
            for (std::ptrdiff_t i = 0; i < len; ++i) gp[i] += go[i];
          }
          cursor += len;
        }
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& x, int dim, int start, int len, Tape* tape) {
  require(dim >= 0 && dim < x.dim(), "slice: bad dim");
  require(start >= 0 && len >= 1 && start + len <= x.size(dim), "slice: bad range");
  std::vector<int> out_shape = x.shape();
  out_shape[static_cast<std::size_t>(dim)] = len;
  Tensor out = Tensor::zeros(out_shape);
  const DimSplit s = split_at(x.shape(), dim);
  for (int o = 0; o < s.outer; ++o) {
    const double* src = x.data() +
                        (static_cast<std::ptrdiff_t>(o) * s.mid + start) * s.inner;
    double* dst = out.data() + static_cast<std::ptrdiff_t>(o) * len * s.inner;
    std::copy(src, src + static_cast<std::ptrdiff_t>(len) * s.inner, dst);
  }
  if (want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, [=]() {
      if (oi->grad.empty()) return;
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      for (int o = 0; o < s.outer; ++o) {
        double* gx = xi->grad.data() +
                     (static_cast<std::ptrdiff_t>(o) * s.mid + start) * s.inner;
        const double* go = oi->grad.data() +
                           static_cast<std::ptrdiff_t>(o) * len * s.inner;
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(len) * s.inner; ++i) {
          gx[i] += go[i];
        }
      }
    });
  }
  return out;
}

Tensor transpose12(const Tensor& x, Tape* tape) {
  require(x.dim() == 3, "transpose12: x must be (B,M,N)");
  const int B = x.size(0), M = x.size(1), N = x.size(2);
  Tensor out = Tensor::zeros({B, N, M});
  for (int bb = 0; bb < B; ++bb) {
    const double* xb = x.data() + static_cast<std::ptrdiff_t>(bb) * M * N;
    double* ob = out.data() + static_cast<std::ptrdiff_t>(bb) * M * N;
    for (int m = 0; m < M; ++m) {
      for (int n = 0; n < N; ++n) {
        ob[static_cast<std::ptrdiff_t>(n) * M + m] =
            xb[static_cast<std::ptrdiff_t>(m) * N + n];
      }
    }
  }
  if (want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, [=]() {
      if (oi->grad.empty()) return;
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      for (int bb = 0; bb < B; ++bb) {
        const double* go = oi->grad.data() + static_cast<std::ptrdiff_t>(bb) * M * N;
        double* gx = xi->grad.data() + static_cast<std::ptrdiff_t>(bb) * M * N;
        for (int m = 0; m < M; ++m) {
          for (int n = 0; n < N; ++n) {
            gx[static_cast<std::ptrdiff_t>(m) * N + n] +=
                go[static_cast<std::ptrdiff_t>(n) * M + m];
          }
        }
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  require(a.shape() == b.shape(), "add: shapes differ: " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  for (int i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (want_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    tape->record(out, [=]() {
      if (oi->grad.empty()) return;
      for (auto& pi : {ai, bi}) {
        if (!pi->requires_grad) continue;
        if (pi->grad.empty()) pi->grad.assign(pi->value.size(), 0.0);
        for (std::size_t i = 0; i < pi->grad.size(); ++i) pi->grad[i] += oi->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  require(a.shape() == b.shape(), "mul: shapes differ");
  Tensor out = Tensor::zeros(a.shape());
  for (int i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (want_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    tape->record(out, [=]() {
      if (oi->grad.empty()) return;
      if (ai->requires_grad) {
        if (ai->grad.empty()) ai->grad.assign(ai->value.size(), 0.0);
        for (std::size_t i = 0; i < ai->grad.size(); ++i) {
          ai->grad[i] += oi->grad[i] * bi->value[i];
        }
      }
      if (bi->requires_grad) {
        if (bi->grad.empty()) bi->grad.assign(bi->value.size(), 0.0);
        for (std::size_t i = 0; i < bi->grad.size(); ++i) {
          bi->grad[i] += oi->grad[i] * ai->value[i];
        }
      }
    });
  }
  return out;
}

Tensor scale_channels(const Tensor& x, const Tensor& w, Tape* tape) {
  require(x.dim() == 3, "scale_channels: x must be (B,C,T)");
  require(w.dim() == 2 && w.size(0) == x.size(0) && w.size(1) == x.size(1),
          "scale_channels: w must be (B,C)");
  const int B = x.size(0), C = x.size(1), T = x.size(2);
  Tensor out = Tensor::zeros(x.shape());
  for (int bc = 0; bc < B * C; ++bc) {
    const double wv = w.data()[bc];
    const double* row = x.data() + static_cast<std::ptrdiff_t>(bc) * T;
    double* orow = out.data() + static_cast<std::ptrdiff_t>(bc) * T;
    for (int t = 0; t < T; ++t) orow[t] = wv * row[t];
  }
  if (want_grad(tape, {&x, &w})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), wi = w.impl(), oi = out.impl();
    const bool need_x = x.requires_grad(), need_w = w.requires_grad();
    tape->record(out, [=]() {
      if (oi->grad.empty()) return;
      if (need_x && xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      if (need_w && wi->grad.empty()) wi->grad.assign(wi->value.size(), 0.0);
      for (int bc = 0; bc < B * C; ++bc) {
        const double* go = oi->grad.data() + static_cast<std::ptrdiff_t>(bc) * T;
        if (need_x) {
          const double wv = wi->value[static_cast<std::size_t>(bc)];
          double* gx = xi->grad.data() + static_cast<std::ptrdiff_t>(bc) * T;
          for (int t = 0; t < T; ++t) gx[t] += wv * go[t];
        }
        if (need_w) {
          const double* row = xi->value.data() + static_cast<std::ptrdiff_t>(bc) * T;
          double acc = 0.0;
          for (int t = 0; t < T; ++t) acc += go[t] * row[t];
          wi->grad[static_cast<std::size_t>(bc)] += acc;
        }
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, std::vector<int> shape, Tape* tape) {
  require(shape_numel(shape) == x.numel(), "reshape: element count mismatch");
  Tensor out = Tensor::from(x.vec(), std::move(shape));
  if (want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, [=]() {
      if (oi->grad.empty()) return;
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      for (std::size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& x, Tape* tape) {
  double acc = 0.0;
  for (int i = 0; i < x.numel(); ++i) acc += x.data()[i];
  Tensor out = Tensor::scalar(acc);
  if (want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, [=]() {
      if (oi->grad.empty()) return;
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      const double g = oi->grad[0];
      for (std::size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& probs, const std::vector<int>& labels,
                     Tape* tape) {
  require(probs.dim() == 2, "cross_entropy: probs must be (B,C)");
  const int B = probs.size(0), C = probs.size(1);
  require(static_cast<int>(labels.size()) == B, "cross_entropy: label count mismatch");
  constexpr double kClamp = 1e-12;
  for (int bi = 0; bi < B; ++bi) {
    if (labels[static_cast<std::size_t>(bi)] < 0 ||
        labels[static_cast<std::size_t>(bi)] >= C) {
      fail(Err::BadLabel, "label " + std::to_string(labels[static_cast<std::size_t>(bi)]) +
                              " outside [0," + std::to_string(C) + ")");
    }
    double rowsum = 0.0;
    for (int c = 0; c < C; ++c) rowsum += probs.data()[bi * C + c];
    require(std::abs(rowsum - 1.0) <= 1e-6,
            "cross_entropy: probability rows must sum to 1");
  }
  double loss = 0.0;
  for (int bi = 0; bi < B; ++bi) {
    const double p = probs.data()[bi * C + labels[static_cast<std::size_t>(bi)]];
    loss -= std::log(std::max(p, kClamp));
  }
  loss /= B;
  Tensor out = Tensor::scalar(loss);
  if (want_grad(tape, {&probs})) {
    out.set_requires_grad(true);
    auto pi = probs.impl(), oi = out.impl();
    tape->record(out, [=]() {
      if (oi->grad.empty()) return;
      if (pi->grad.empty()) pi->grad.assign(pi->value.size(), 0.0);
      const double g = oi->grad[0] / B;
      for (int bi = 0; bi < B; ++bi) {
        const std::size_t idx =
            static_cast<std::size_t>(bi) * C +
            static_cast<std::size_t>(labels[static_cast<std::size_t>(bi)]);
        const double p = pi->value[idx];
        if (p > kClamp) pi->grad[idx] -= g / p;
      }
    });
  }
  return out;
}

void backward(Tape& tape, Tensor& loss) { tape.backward(loss); }

void sgd_step(std::vector<Tensor>& params, double lr) {
  for (auto& p : params) {
    if (!p.has_grad()) {
      fail(Err::MissingGrad, "sgd_step: parameter has no gradient");
    }
  }
  for (auto& p : params) {
    auto& g = p.grad();
    for (int i = 0; i < p.numel(); ++i) p.data()[i] -= lr * g[i];
    p.zero_grad();
  }
}

double finite_diff_check(const std::function<Tensor(Tensor&, Tape&)>& f,
                         Tensor& x, double eps) {
  if (eps <= 0.0 || eps > 1e-2) fail(Err::BadParams, "eps must be in (0, 1e-2]");
  std::vector<double> analytic(static_cast<std::size_t>(x.numel()));
  {
    Tape tape;
    x.set_requires_grad(true);
    x.zero_grad();
    Tensor loss = f(x, tape);
    tape.backward(loss);
    analytic = x.grad();
    x.zero_grad();
  }
  double worst = 0.0;
  for (int i = 0; i < x.numel(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + eps;
    Tape tp;
    const double up = f(x, tp).item();
    x.data()[i] = keep - eps;
    Tape tm;
    const double dn = f(x, tm).item();
    x.data()[i] = keep;
    const double numeric = (up - dn) / (2.0 * eps);
    const double a = analytic[static_cast<std::size_t>(i)];
    worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
  }
  return worst;
}

}  // namespace rtcan::ag
