#pragma once

#include <vector>

#include "rtcan/types.hpp"

namespace rtcan::cvx {

// Biexponential impulse response h(t) = exp(-t/tau1) - exp(-t/tau0),
// truncated at `duration` seconds and peak-normalized to 1.
struct BatemanIrf {
  double tau0 = 0.7;      // fast time constant (s)
  double tau1 = 2.0;      // slow time constant (s)
  double duration = 40.0; // truncation horizon (s), >= 5 * tau1
};

struct CvxedaConfig {
  double alpha = 8e-4;          // l1 weight on the phasic term
  double gamma = 1e-2;          // ridge weight on spline coefficients
  double knot_spacing_s = 10.0; // tonic spline knot spacing (s)
  double solver_tol = 1e-6;     // first-order optimality residual
  int max_iter = 20000;
  // The objective as written penalizes the phasic signal Hp; the canonical
  // variant penalizes the driver p directly. Both are exposed.
  bool penalize_driver = false;
};

std::vector<double> sample_irf(const BatemanIrf& irf, double sampling_hz);

// The N x N lower-triangular Toeplitz convolution operator built from the
// sampled kernel: (Hp)[i] = sum_{k<=i} h[k] p[i-k], truncated at the kernel
// length. apply / apply_transpose run in O(N*K).
class PhasicOperator {
 public:
  PhasicOperator(std::vector<double> irf_samples, int n);

  void apply(const double* p, double* out) const;
  void apply_transpose(const double* q, double* out) const;

  std::vector<double> apply(const std::vector<double>& p) const;
  std::vector<double> apply_transpose(const std::vector<double>& q) const;

  // c = H^T 1, the per-coordinate weight that makes ||Hp||_1 = c.p for p>=0.
  std::vector<double> transpose_ones() const;

  int n() const { return n_; }
  const std::vector<double>& kernel() const { return kernel_; }

 private:
  std::vector<double> kernel_;
  int n_;
};

PhasicOperator build_phasic_operator(std::vector<double> irf_samples, int n);

// Cubic B-spline tonic basis on uniform knots plus offset/drift columns:
// tonic = B*lambda + C*d with C = [1, i/N].
struct TonicBasis {
  int n = 0;
  int kb = 0;
  std::vector<double> B;  // n x kb row-major
  std::vector<double> C;  // n x 2 row-major

  std::vector<double> apply(const std::vector<double>& lambda,
                            const std::vector<double>& d) const;
  // rhs accumulation: out_lambda += B^T r, out_d += C^T r
  void apply_transpose(const double* r, double* out_lambda, double* out_d) const;
};

TonicBasis build_tonic_basis(int n, double sampling_hz, double knot_spacing_s);

struct QpSolution {
  std::vector<double> p;
  std::vector<double> lambda;
  std::vector<double> d;
  std::vector<double> objective_trace;  // per accepted iterate, non-increasing
  bool converged = false;
  double residual = 0.0;  // first-order (KKT) residual at the returned point
  int iterations = 0;
};

// Minimizes 1/2 ||Hp + B*lambda + C*d - y||^2 + alpha*||Hp||_1
//           + gamma/2 ||lambda||^2   subject to p >= 0
// by monotone FISTA on p with the tonic coefficients eliminated exactly at
// every step (the inner ridge least-squares is solved by Cholesky). Under
// p >= 0 and a non-negative kernel the l1 term is the linear form
// (H^T 1).p, so the prox step is a shift followed by clamping at zero.
// On max_iter without reaching solver_tol the best iterate is returned
// with converged = false.
QpSolution solve_qp(const std::vector<double>& y, const PhasicOperator& H,
                    const TonicBasis& basis, const CvxedaConfig& cfg);

// Full decomposition of a validated trace: phasic = Hp, tonic = B*lambda +
// C*d (plus the subtracted baseline), residual = origin - phasic - tonic.
// Throws NoConvergence when the solver fails to reach tolerance.
DecomposedEda decompose(const EdaTrace& trace, const BatemanIrf& irf,
                        const CvxedaConfig& cfg);

}  // namespace rtcan::cvx
