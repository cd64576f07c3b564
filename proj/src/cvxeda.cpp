#include "rtcan/cvxeda.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "rtcan/errors.hpp"
#include "rtcan/rng.hpp"
#include "rtcan/signal.hpp"

namespace rtcan::cvx {
namespace {

// Cardinal cubic B-spline, support (-2, 2), partition of unity on shifts.
double bspline3(double u) {
  const double a = std::abs(u);
  if (a >= 2.0) return 0.0;
  if (a <= 1.0) return 2.0 / 3.0 - a * a + a * a * a / 2.0;
  const double b = 2.0 - a;
  return b * b * b / 6.0;
}

// Dense symmetric positive-definite Cholesky (small systems only).
class Cholesky {
 public:
  explicit Cholesky(std::vector<double> a, int m) : l_(std::move(a)), m_(m) {
    for (int j = 0; j < m_; ++j) {
      for (int k = 0; k < j; ++k) {
        const double ljk = l_[idx(j, k)];
        for (int i = j; i < m_; ++i) l_[idx(i, j)] -= l_[idx(i, k)] * ljk;
      }
      const double diag = l_[idx(j, j)];
      if (diag <= 0.0) {
        fail(Err::Degenerate, "tonic normal matrix is not positive definite");
      }
      const double inv = 1.0 / std::sqrt(diag);
      for (int i = j; i < m_; ++i) l_[idx(i, j)] *= inv;
    }
  }

  void solve(std::vector<double>& rhs) const {
    for (int i = 0; i < m_; ++i) {
      double v = rhs[static_cast<std::size_t>(i)];
      for (int k = 0; k < i; ++k) v -= l_[idx(i, k)] * rhs[static_cast<std::size_t>(k)];
      rhs[static_cast<std::size_t>(i)] = v / l_[idx(i, i)];
    }
    for (int i = m_ - 1; i >= 0; --i) {
      double v = rhs[static_cast<std::size_t>(i)];
      for (int k = i + 1; k < m_; ++k) v -= l_[idx(k, i)] * rhs[static_cast<std::size_t>(k)];
      rhs[static_cast<std::size_t>(i)] = v / l_[idx(i, i)];
    }
  }

 private:
  std::size_t idx(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(m_) +
           static_cast<std::size_t>(c);
  }
  std::vector<double> l_;
  int m_;
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::vector<double> sample_irf(const BatemanIrf& irf, double sampling_hz) {
  if (!(irf.tau1 > irf.tau0) || !(irf.tau0 > 0.0)) {
    fail(Err::BadParams, "Bateman IRF needs tau1 > tau0 > 0");
  }
  if (irf.duration < 5.0 * irf.tau1) {
    fail(Err::BadParams, "IRF duration must be >= 5 * tau1");
  }
  if (sampling_hz <= 0.0) fail(Err::BadRate, "sampling_hz must be positive");
  const double dt = 1.0 / sampling_hz;
  const int k_max = static_cast<int>(std::floor(irf.duration * sampling_hz));
  if (k_max < 1) {
    fail(Err::BadParams, "IRF sampling too coarse: no sample before duration");
  }
  std::vector<double> h(static_cast<std::size_t>(k_max) + 1);
  double peak = 0.0;
  for (int k = 0; k <= k_max; ++k) {
    const double t = k * dt;
    h[static_cast<std::size_t>(k)] =
        std::exp(-t / irf.tau1) - std::exp(-t / irf.tau0);
    peak = std::max(peak, h[static_cast<std::size_t>(k)]);
  }
  for (double& v : h) v /= peak;
  return h;
}

PhasicOperator::PhasicOperator(std::vector<double> irf_samples, int n)
    : kernel_(std::move(irf_samples)), n_(n) {
  if (n_ < 2) fail(Err::TooShort, "phasic operator needs N >= 2");
  if (kernel_.empty()) fail(Err::BadParams, "empty IRF kernel");
  if (!all_finite(kernel_)) fail(Err::NonFinite, "IRF kernel not finite");
  if (kernel_[0] < 0.0) fail(Err::BadParams, "IRF kernel must start >= 0");
}

void PhasicOperator::apply(const double* p, double* out) const {
  const int K = static_cast<int>(kernel_.size());
  std::fill(out, out + n_, 0.0);
  for (int j = 0; j < n_; ++j) {
    const double pj = p[j];
    if (pj == 0.0) continue;
    const int kmax = std::min(K, n_ - j);
    double* o = out + j;
    for (int k = 0; k < kmax; ++k) o[k] += kernel_[static_cast<std::size_t>(k)] * pj;
  }
}

void PhasicOperator::apply_transpose(const double* q, double* out) const {
  const int K = static_cast<int>(kernel_.size());
  for (int i = 0; i < n_; ++i) {
    const int kmax = std::min(K, n_ - i);
    const double* qi = q + i;
    double acc = 0.0;
    for (int k = 0; k < kmax; ++k) acc += kernel_[static_cast<std::size_t>(k)] * qi[k];
    out[i] = acc;
  }
}

std::vector<double> PhasicOperator::apply(const std::vector<double>& p) const {
  std::vector<double> out(static_cast<std::size_t>(n_));
  apply(p.data(), out.data());
  return out;
}

std::vector<double> PhasicOperator::apply_transpose(const std::vector<double>& q) const {
  std::vector<double> out(static_cast<std::size_t>(n_));
  apply_transpose(q.data(), out.data());
  return out;
}

std::vector<double> PhasicOperator::transpose_ones() const {
  std::vector<double> ones(static_cast<std::size_t>(n_), 1.0);
  return apply_transpose(ones);
}

PhasicOperator build_phasic_operator(std::vector<double> irf_samples, int n) {
  return PhasicOperator(std::move(irf_samples), n);
}

TonicBasis build_tonic_basis(int n, double sampling_hz, double knot_spacing_s) {
  if (n < 2) fail(Err::TooShort, "tonic basis needs N >= 2");
  if (sampling_hz <= 0.0) fail(Err::BadRate, "sampling_hz must be positive");
  if (knot_spacing_s <= 0.0) fail(Err::BadParams, "knot spacing must be positive");
  const double total_s = n / sampling_hz;
  if (total_s < 2.0 * knot_spacing_s) {
    fail(Err::TooShort, "signal spans " + std::to_string(total_s) +
                            " s, need >= 2 knot spacings");
  }
  const double span = (n - 1) / sampling_hz / knot_spacing_s;
  const int j_lo = -1;
  const int j_hi = static_cast<int>(std::ceil(span)) + 1;
  TonicBasis basis;
  basis.n = n;
  basis.kb = j_hi - j_lo + 1;
  basis.B.assign(static_cast<std::size_t>(n) * basis.kb, 0.0);
  basis.C.assign(static_cast<std::size_t>(n) * 2, 0.0);
  for (int i = 0; i < n; ++i) {
    const double u = i / sampling_hz / knot_spacing_s;
    for (int j = j_lo; j <= j_hi; ++j) {
      basis.B[static_cast<std::size_t>(i) * basis.kb + (j - j_lo)] =
          bspline3(u - j);
    }
    basis.C[static_cast<std::size_t>(i) * 2] = 1.0;
    basis.C[static_cast<std::size_t>(i) * 2 + 1] =
        static_cast<double>(i) / static_cast<double>(n);
  }
  return basis;
}

std::vector<double> TonicBasis::apply(const std::vector<double>& lambda,
                                      const std::vector<double>& d) const {
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const double* brow = B.data() + static_cast<std::size_t>(i) * kb;
    double acc = 0.0;
    for (int j = 0; j < kb; ++j) acc += brow[j] * lambda[static_cast<std::size_t>(j)];
    acc += C[static_cast<std::size_t>(i) * 2] * d[0];
    acc += C[static_cast<std::size_t>(i) * 2 + 1] * d[1];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

void TonicBasis::apply_transpose(const double* r, double* out_lambda,
                                 double* out_d) const {
  std::fill(out_lambda, out_lambda + kb, 0.0);
  out_d[0] = out_d[1] = 0.0;
  for (int i = 0; i < n; ++i) {
    const double ri = r[i];
    if (ri == 0.0) continue;
    const double* brow = B.data() + static_cast<std::size_t>(i) * kb;
    for (int j = 0; j < kb; ++j) out_lambda[j] += brow[j] * ri;
    out_d[0] += C[static_cast<std::size_t>(i) * 2] * ri;
    out_d[1] += C[static_cast<std::size_t>(i) * 2 + 1] * ri;
  }
}

namespace {

// Workspace for the variable-projection objective: for a given driver p the
// tonic coefficients are the exact ridge least-squares minimizers, so the
// outer problem is a smooth quadratic in p plus the linear l1 term and the
// non-negativity bound.
class VarProObjective {
 public:
  VarProObjective(const std::vector<double>& y, const PhasicOperator& H,
                  const TonicBasis& basis, double gamma)
      : y_(y), h_(H), basis_(basis), m_(basis.kb + 2), chol_(normal_matrix(gamma), m_) {}

  struct Eval {
    double smooth = 0.0;             // 1/2 ||fit residual||^2 + gamma/2 ||lambda||^2
    std::vector<double> beta;        // [lambda ; d]
    std::vector<double> fit_residual;  // Hp + G beta - y
  };

  Eval evaluate(const std::vector<double>& p, double gamma) const {
    Eval e;
    const int n = h_.n();
    std::vector<double> hp = h_.apply(p);
    std::vector<double> r(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) r[static_cast<std::size_t>(i)] =
        y_[static_cast<std::size_t>(i)] - hp[static_cast<std::size_t>(i)];
    e.beta.assign(static_cast<std::size_t>(m_), 0.0);
    basis_.apply_transpose(r.data(), e.beta.data(), e.beta.data() + basis_.kb);
    chol_.solve(e.beta);
    std::vector<double> lambda(e.beta.begin(), e.beta.begin() + basis_.kb);
    std::vector<double> d(e.beta.begin() + basis_.kb, e.beta.end());
    std::vector<double> tonic = basis_.apply(lambda, d);
    e.fit_residual.resize(static_cast<std::size_t>(n));
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = hp[static_cast<std::size_t>(i)] +
                       tonic[static_cast<std::size_t>(i)] -
                       y_[static_cast<std::size_t>(i)];
      e.fit_residual[static_cast<std::size_t>(i)] = v;
      sq += v * v;
    }
    e.smooth = 0.5 * sq + 0.5 * gamma * dot(lambda, lambda);
    return e;
  }

  std::vector<double> smooth_gradient(const Eval& e) const {
    return h_.apply_transpose(e.fit_residual);
  }

  // H^T (u - G A^-1 G^T u): one column of the reduced Hessian when u = H e_j.
  std::vector<double> project_and_pullback(const std::vector<double>& u) const {
    std::vector<double> beta(static_cast<std::size_t>(m_), 0.0);
    basis_.apply_transpose(u.data(), beta.data(), beta.data() + basis_.kb);
    chol_.solve(beta);
    std::vector<double> lambda(beta.begin(), beta.begin() + basis_.kb);
    std::vector<double> d(beta.begin() + basis_.kb, beta.end());
    const auto gb = basis_.apply(lambda, d);
    std::vector<double> w(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) w[i] = u[i] - gb[i];
    return h_.apply_transpose(w);
  }

  int kb() const { return basis_.kb; }

 private:
  std::vector<double> normal_matrix(double gamma) const {
    // A = G^T G + diag(gamma on the lambda block), G = [B C].
    const int n = basis_.n;
    std::vector<double> a(static_cast<std::size_t>(m_) * m_, 0.0);
    std::vector<double> col_i(static_cast<std::size_t>(n));
    std::vector<double> col_j(static_cast<std::size_t>(n));
    auto column = [&](int j, std::vector<double>& out) {
      for (int i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] =
            j < basis_.kb
                ? basis_.B[static_cast<std::size_t>(i) * basis_.kb + j]
                : basis_.C[static_cast<std::size_t>(i) * 2 + (j - basis_.kb)];
      }
    };
    for (int i = 0; i < m_; ++i) {
      column(i, col_i);
      for (int j = 0; j <= i; ++j) {
        column(j, col_j);
        double s = dot(col_i, col_j);
        if (i == j && i < basis_.kb) s += gamma;
        a[static_cast<std::size_t>(i) * m_ + j] = s;
        a[static_cast<std::size_t>(j) * m_ + i] = s;
      }
    }
    return a;
  }

  const std::vector<double>& y_;
  const PhasicOperator& h_;
  const TonicBasis& basis_;
  int m_;
  Cholesky chol_;
};

double estimate_operator_norm_sq(const PhasicOperator& H) {
  const int n = H.n();
  Rng rng(0x5eedULL);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.normal();
  double norm_sq = 0.0;
  std::vector<double> hv, hthv;
  for (int it = 0; it < 30; ++it) {
    double nv = std::sqrt(dot(v, v));
    if (nv == 0.0) return 1.0;
    for (double& x : v) x /= nv;
    hv = H.apply(v);
    hthv = H.apply_transpose(hv);
    norm_sq = dot(v, hthv);  // Rayleigh quotient for H^T H
    v = hthv;
  }
  return std::max(norm_sq, 1e-12);
}

// Active-set refinement: with the support fixed, the reduced problem is an
// unconstrained convex quadratic, so one linear solve lands on the exact
// stationary point. FISTA supplies support guesses and globalization; this
// step removes its slow tail near the optimum.
class SupportPolish {
 public:
  SupportPolish(const VarProObjective& obj, const PhasicOperator& h, double gamma,
                const std::vector<double>& lw)
      : obj_(obj), h_(h), gamma_(gamma), lw_(lw), n_(h.n()) {
    // squared column norms of H identify coordinates the operator cannot see
    const auto& k = h.kernel();
    col_norm_sq_.assign(static_cast<std::size_t>(n_), 0.0);
    for (int j = 0; j < n_; ++j) {
      const int kmax = std::min(static_cast<int>(k.size()), n_ - j);
      double s = 0.0;
      for (int q = 0; q < kmax; ++q) s += k[static_cast<std::size_t>(q)] * k[static_cast<std::size_t>(q)];
      col_norm_sq_[static_cast<std::size_t>(j)] = s;
    }
  }

  // Attempts to finish from x with an active-set sweep in the flavor of
  // Lawson-Hanson NNLS: exact Newton solves on the working set, clamped
  // steps to drop coordinates, one most-violating joiner at a time.
  // Returns true when the polished point meets `tol`; x / phi / eval are
  // updated whenever the objective improved.
  bool run(std::vector<double>& x, double& phi, VarProObjective::Eval& eval,
           double tol) {
    // seed the working set with the significant coordinates only; dropped
    // mass rejoins through the dual-violation test below
    double x_peak = 0.0;
    for (double v : x) x_peak = std::max(x_peak, v);
    std::vector<double> p = x;
    std::vector<int> free_set;
    for (int i = 0; i < n_; ++i) {
      if (!visible(i) || x[static_cast<std::size_t>(i)] <= 0.0) continue;
      if (x[static_cast<std::size_t>(i)] >= 1e-4 * x_peak) {
        free_set.push_back(i);
      } else {
        p[static_cast<std::size_t>(i)] = 0.0;
      }
    }
    if (static_cast<int>(free_set.size()) > 400) return false;  // not settled yet
    double phi_p = phi;

    const int max_rounds = 4 * std::max(32, static_cast<int>(free_set.size()));
    for (int round = 0; round < max_rounds; ++round) {
      auto eval_p = obj_.evaluate(p, gamma_);
      auto grad = obj_.smooth_gradient(eval_p);
      for (int i = 0; i < n_; ++i) {
        grad[static_cast<std::size_t>(i)] += lw_[static_cast<std::size_t>(i)];
      }

      if (!free_set.empty()) {
        // Newton step on the working set: M_FF dq = -g_F
        const int f = static_cast<int>(free_set.size());
        std::vector<double> m(static_cast<std::size_t>(f) * f);
        for (int cj = 0; cj < f; ++cj) {
          const auto& col = hessian_column(free_set[static_cast<std::size_t>(cj)]);
          for (int ri = 0; ri < f; ++ri) {
            m[static_cast<std::size_t>(ri) * f + cj] =
                col[static_cast<std::size_t>(free_set[static_cast<std::size_t>(ri)])];
          }
        }
        double diag_scale = 0.0;
        for (int i = 0; i < f; ++i) {
          diag_scale = std::max(diag_scale, m[static_cast<std::size_t>(i) * f + i]);
        }
        for (int i = 0; i < f; ++i) {
          m[static_cast<std::size_t>(i) * f + i] += 1e-12 * std::max(diag_scale, 1.0);
        }
        std::vector<double> dq(static_cast<std::size_t>(f));
        for (int i = 0; i < f; ++i) {
          dq[static_cast<std::size_t>(i)] =
              -grad[static_cast<std::size_t>(free_set[static_cast<std::size_t>(i)])];
        }
        try {
          Cholesky(m, f).solve(dq);
        } catch (const Error&) {
          return false;
        }

        // clamped full Newton step drops every blocked coordinate at once;
        // fall back to the longest feasible step when it does not descend
        bool clamp_hit = false;
        for (int i = 0; i < f && !clamp_hit; ++i) {
          const int j = free_set[static_cast<std::size_t>(i)];
          clamp_hit = p[static_cast<std::size_t>(j)] + dq[static_cast<std::size_t>(i)] < 0.0;
        }
        std::vector<double> clamped = p;
        for (int i = 0; i < f; ++i) {
          auto& pi = clamped[static_cast<std::size_t>(free_set[static_cast<std::size_t>(i)])];
          pi = std::max(0.0, pi + dq[static_cast<std::size_t>(i)]);
          if (pi < 1e-15) pi = 0.0;
        }
        const auto eval_c = obj_.evaluate(clamped, gamma_);
        const double phi_c = eval_c.smooth + dot(lw_, clamped);
        if (phi_c <= phi_p + 1e-12 * (1.0 + std::abs(phi_p))) {
          p = std::move(clamped);
          phi_p = phi_c;
        } else if (clamp_hit) {
          double theta = 1.0;
          for (int i = 0; i < f; ++i) {
            const double pi = p[static_cast<std::size_t>(free_set[static_cast<std::size_t>(i)])];
            const double di = dq[static_cast<std::size_t>(i)];
            if (pi + di < 0.0) theta = std::min(theta, pi / -di);
          }
          for (int i = 0; i < f; ++i) {
            auto& pi = p[static_cast<std::size_t>(free_set[static_cast<std::size_t>(i)])];
            pi = std::max(0.0, pi + theta * dq[static_cast<std::size_t>(i)]);
            if (pi < 1e-15) pi = 0.0;
          }
          const auto eval_t = obj_.evaluate(p, gamma_);
          phi_p = eval_t.smooth + dot(lw_, p);
        } else {
          return false;  // interior Newton step failed to descend
        }
        if (clamp_hit) {
          std::vector<int> next;
          for (int i : free_set) {
            if (p[static_cast<std::size_t>(i)] > 0.0) next.push_back(i);
          }
          free_set = std::move(next);
          continue;  // support changed: re-solve before the KKT check
        }
      }

      // full KKT check, including dual feasibility of the inactive set
      eval_p = obj_.evaluate(p, gamma_);
      grad = obj_.smooth_gradient(eval_p);
      double worst = 0.0;
      double top_violation = 0.0;
      int top_joiner = -1;
      for (int i = 0; i < n_; ++i) {
        const double g = grad[static_cast<std::size_t>(i)] + lw_[static_cast<std::size_t>(i)];
        const double r =
            p[static_cast<std::size_t>(i)] > 0.0 ? std::abs(g) : std::max(0.0, -g);
        worst = std::max(worst, r);
        if (p[static_cast<std::size_t>(i)] == 0.0 && -g > top_violation && visible(i)) {
          top_violation = -g;
          top_joiner = i;
        }
      }
      phi_p = eval_p.smooth + dot(lw_, p);
      if (phi_p <= phi) {
        x = p;
        phi = phi_p;
        eval = eval_p;
      }
      if (worst <= tol) return phi_p <= phi + 1e-12 * (1.0 + std::abs(phi));
      if (top_joiner < 0 || top_violation <= tol) return false;
      free_set.push_back(top_joiner);
      std::sort(free_set.begin(), free_set.end());
      free_set.erase(std::unique(free_set.begin(), free_set.end()), free_set.end());
    }
    return false;
  }

 private:
  bool visible(int j) const { return col_norm_sq_[static_cast<std::size_t>(j)] > 1e-20; }

  // column j of H^T (I - G A^-1 G^T) H, cached across polish attempts
  const std::vector<double>& hessian_column(int j) {
    auto it = column_cache_.find(j);
    if (it != column_cache_.end()) return it->second;
    std::vector<double> ej(static_cast<std::size_t>(n_), 0.0);
    ej[static_cast<std::size_t>(j)] = 1.0;
    const auto hj = h_.apply(ej);
    const auto col = obj_.project_and_pullback(hj);
    return column_cache_.emplace(j, col).first->second;
  }

  const VarProObjective& obj_;
  const PhasicOperator& h_;
  double gamma_;
  const std::vector<double>& lw_;
  int n_;
  std::vector<double> col_norm_sq_;
  std::map<int, std::vector<double>> column_cache_;
};

}  // namespace

QpSolution solve_qp(const std::vector<double>& y, const PhasicOperator& H,
                    const TonicBasis& basis, const CvxedaConfig& cfg) {
  const int n = H.n();
  if (static_cast<int>(y.size()) != n || basis.n != n) {
    fail(Err::ShapeMismatch, "solve_qp: y, operator and basis lengths differ");
  }
  if (!all_finite(y)) fail(Err::NonFinite, "solve_qp: y contains NaN/Inf");
  if (cfg.alpha <= 0.0 || cfg.gamma <= 0.0 || cfg.solver_tol <= 0.0 ||
      cfg.max_iter < 1) {
    fail(Err::BadParams, "solve_qp: config values must be positive");
  }

  const VarProObjective obj(y, H, basis, cfg.gamma);
  // l1 weights: alpha * (H^T 1) for the written form, alpha * 1 for the
  // canonical driver penalty. Either way the penalty is linear on p >= 0.
  std::vector<double> lw = cfg.penalize_driver
                               ? std::vector<double>(static_cast<std::size_t>(n), 1.0)
                               : H.transpose_ones();
  for (double& w : lw) w *= cfg.alpha;

  double step = 1.0 / (1.02 * estimate_operator_norm_sq(H));

  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  std::vector<double> x_prev = x;
  std::vector<double> v = x;
  std::vector<double> z(static_cast<std::size_t>(n));
  double theta = 1.0;

  auto eval_x = obj.evaluate(x, cfg.gamma);
  double phi_x = eval_x.smooth + dot(lw, x);

  QpSolution sol;
  sol.objective_trace.push_back(phi_x);

  auto kkt_residual = [&](const std::vector<double>& point,
                          const std::vector<double>& grad) {
    double res = 0.0;
    for (int i = 0; i < n; ++i) {
      const double g = grad[static_cast<std::size_t>(i)] + lw[static_cast<std::size_t>(i)];
      const double r = point[static_cast<std::size_t>(i)] > 0.0
                           ? std::abs(g)
                           : std::max(0.0, -g);
      res = std::max(res, r);
    }
    return res;
  };

  {
    auto g0 = obj.smooth_gradient(eval_x);
    sol.residual = kkt_residual(x, g0);
    if (sol.residual <= cfg.solver_tol) {
      sol.converged = true;
      sol.p = x;
      sol.lambda.assign(eval_x.beta.begin(), eval_x.beta.begin() + basis.kb);
      sol.d.assign(eval_x.beta.begin() + basis.kb, eval_x.beta.end());
      return sol;
    }
  }

  SupportPolish polish(obj, H, cfg.gamma, lw);

  int iter = 0;
  for (iter = 1; iter <= cfg.max_iter; ++iter) {
    const auto eval_v = obj.evaluate(v, cfg.gamma);
    const auto grad_v = obj.smooth_gradient(eval_v);

    // Proximal step with backtracking; the step 1/||H||^2 is already a
    // valid majorizer for the projected quadratic, so this rarely shrinks.
    VarProObjective::Eval eval_z;
    while (true) {
      for (int i = 0; i < n; ++i) {
        const double cand = v[static_cast<std::size_t>(i)] -
                            step * (grad_v[static_cast<std::size_t>(i)] +
                                    lw[static_cast<std::size_t>(i)]);
        z[static_cast<std::size_t>(i)] = cand > 0.0 ? cand : 0.0;
      }
      eval_z = obj.evaluate(z, cfg.gamma);
      double quad = eval_v.smooth;
      double dist_sq = 0.0;
      for (int i = 0; i < n; ++i) {
        const double dz = z[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(i)];
        quad += grad_v[static_cast<std::size_t>(i)] * dz;
        dist_sq += dz * dz;
      }
      quad += dist_sq / (2.0 * step);
      if (eval_z.smooth <= quad + 1e-12 * (1.0 + std::abs(quad))) break;
      step *= 0.5;
      if (step < 1e-18) break;
    }

    const double phi_z = eval_z.smooth + dot(lw, z);

    // Monotone acceptance (objective trace must never increase).
    const bool accept = phi_z <= phi_x;
    const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    std::vector<double> x_next = accept ? z : x;
    const double phi_next = accept ? phi_z : phi_x;
    for (int i = 0; i < n; ++i) {
      const double xn = x_next[static_cast<std::size_t>(i)];
      v[static_cast<std::size_t>(i)] =
          xn + (theta / theta_next) * (z[static_cast<std::size_t>(i)] - xn) +
          ((theta - 1.0) / theta_next) * (xn - x_prev[static_cast<std::size_t>(i)]);
    }
    x_prev = x;
    x = std::move(x_next);
    phi_x = phi_next;
    theta = accept ? theta_next : 1.0;  // restart momentum on rejection
    sol.objective_trace.push_back(phi_x);

    if (accept) {
      const auto grad_z = obj.smooth_gradient(eval_z);
      sol.residual = kkt_residual(z, grad_z);
      if (sol.residual <= cfg.solver_tol) {
        sol.converged = true;
        break;
      }
    }

    // Periodic exact refinement on the current support.
    if (iter % 50 == 0 || iter == cfg.max_iter) {
      auto eval_x = obj.evaluate(x, cfg.gamma);
      if (polish.run(x, phi_x, eval_x, cfg.solver_tol)) {
        sol.objective_trace.push_back(phi_x);
        const auto grad_x = obj.smooth_gradient(eval_x);
        sol.residual = kkt_residual(x, grad_x);
        sol.converged = sol.residual <= cfg.solver_tol;
        if (sol.converged) break;
      } else {
        sol.objective_trace.push_back(phi_x);
      }
      // polish may have moved x; restart the momentum from it
      x_prev = x;
      v = x;
      theta = 1.0;
    }
  }

  const auto final_eval = obj.evaluate(x, cfg.gamma);
  if (!sol.converged) {
    const auto grad_x = obj.smooth_gradient(final_eval);
    sol.residual = kkt_residual(x, grad_x);
    sol.converged = sol.residual <= cfg.solver_tol;
  }
  sol.p = std::move(x);
  sol.lambda.assign(final_eval.beta.begin(), final_eval.beta.begin() + basis.kb);
  sol.d.assign(final_eval.beta.begin() + basis.kb, final_eval.beta.end());
  sol.iterations = std::min(iter, cfg.max_iter);
  return sol;
}

DecomposedEda decompose(const EdaTrace& trace, const BatemanIrf& irf,
                        const CvxedaConfig& cfg) {
  validate_trace(trace);
  const int n = static_cast<int>(trace.samples.size());
  const auto kernel = sample_irf(irf, trace.sampling_hz);
  const PhasicOperator H(kernel, n);
  const TonicBasis basis = build_tonic_basis(n, trace.sampling_hz, cfg.knot_spacing_s);

  // Anchor at the minimum so the tonic spline never has to chase a large
  // negative baseline; the shift is folded back into the tonic below.
  const double shift = *std::min_element(trace.samples.begin(), trace.samples.end());
  std::vector<double> y(trace.samples);
  for (double& v : y) v -= shift;

  QpSolution sol = solve_qp(y, H, basis, cfg);
  if (!sol.converged) {
    fail(Err::NoConvergence,
         "solver stopped at residual " + std::to_string(sol.residual) + " after " +
             std::to_string(sol.iterations) + " iterations");
  }

  DecomposedEda out;
  out.origin = trace.samples;
  out.driver = sol.p;
  out.phasic = H.apply(sol.p);
  out.tonic = basis.apply(sol.lambda, sol.d);
  for (double& t : out.tonic) t += shift;
  out.residual.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out.residual[static_cast<std::size_t>(i)] =
        out.origin[static_cast<std::size_t>(i)] -
        out.phasic[static_cast<std::size_t>(i)] -
        out.tonic[static_cast<std::size_t>(i)];
  }
  return out;
}

}  // namespace rtcan::cvx
