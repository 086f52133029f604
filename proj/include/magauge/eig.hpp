#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "assemble.hpp"
#include "sparse.hpp"

namespace magauge {

struct ShiftPolicy {
  enum class Mode { Auto, Fixed };
  Mode mode = Mode::Auto;
  double sigma = 0.0;          // Fixed mode
  double neumann_factor = 1e-5;  // Auto mode: sigma = -neumann_factor * rho for pure Neumann pencils

  static ShiftPolicy automatic() { return {}; }
  static ShiftPolicy fixed(double s) { return {Mode::Fixed, s, 1e-5}; }
};

struct EigOptions {
  double tol = 1e-8;
  ShiftPolicy shift;
  int block_size = 0;       // 0: min(3, k)
  int max_subspace = 0;     // 0: max(2k + 4b, k + 24)
  int max_restarts = 200;
  int max_shift_retries = 3;
  std::uint64_t seed = 20240611;
};

struct EigenResult {
  std::vector<double> eigenvalues;               // ascending
  std::vector<Vector<Complex>> eigenvectors;     // full-DOF, M-normalized
  std::vector<double> residuals;                 // ||K x - lambda M x||_2
  std::vector<double> relative_residuals;        // divided by max(|lambda|, |lambda - shift|) ||Mx|| + ||Kx||
  bool converged = false;
  int solves = 0;            // applications of (K - sigma M)^{-1}
  int restarts = 0;
  double shift = 0.0;
  int shift_retries = 0;
  double rho = 0.0;          // trace(K) / trace(M)
  double max_ritz_imag = 0.0;  // largest discarded imaginary part of the Ritz values, relative
  double factor_seconds = 0.0;
  double krylov_seconds = 0.0;
  double total_seconds = 0.0;

  std::size_t size() const { return eigenvalues.size(); }
};

namespace detail {

/// Rotates x so that its largest-modulus coefficient is real and positive.
inline void normalize_phase(Vector<Complex>& x) {
  Eigen::Index imax = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (std::abs(x[i]) > best * (1.0 + 1e-12)) {
      best = std::abs(x[i]);
      imax = i;
    }
  if (best > 0.0) x *= std::conj(x[imax]) / std::abs(x[imax]);
}

/// Eigenvalue scale for relative residuals; |lambda - sigma| keeps it away
/// from zero for null modes since K - sigma M is nonsingular.
inline double residual_scale(double lambda, double sigma) { return std::max(std::abs(lambda), std::abs(lambda - sigma)); }

}  // namespace detail

/// k lowest eigenpairs of K x = lambda M x by shift-invert block Krylov
/// iteration in the M-inner product with full reorthogonalisation, Ritz
/// extraction on K and thick restarts that keep the lowest Ritz vectors.
inline EigenResult lowest_eigenpairs(const HermitianPencil& pencil, int k, EigOptions opt = {}) {
  const auto t_start = std::chrono::steady_clock::now();
  const int n = pencil.size();
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (k > n) throw std::invalid_argument("k exceeds the number of free DOFs");
  const int b = std::min(opt.block_size > 0 ? opt.block_size : std::min(3, k), n);
  const int m_max = std::min(n, opt.max_subspace > 0 ? opt.max_subspace : std::max(2 * k + 4 * b, k + 24));
  const int keep = std::min(m_max - b, k + b);

  EigenResult res;
  const double trace_k = pencil.K.trace().real(), trace_m = pencil.M.trace();
  res.rho = trace_m > 0.0 ? trace_k / trace_m : 1.0;
  const bool pure_neumann = pencil.free_dofs.size() == pencil.num_dofs;
  double sigma = opt.shift.mode == ShiftPolicy::Mode::Fixed ? opt.shift.sigma
                 : pure_neumann ? -opt.shift.neumann_factor * res.rho
                                : 0.0;
  // Below the spectrum K - sigma M is positive definite.
  const FactorKind kind = opt.shift.mode == ShiftPolicy::Mode::Auto ? FactorKind::SymmetricPositive
                                                                     : FactorKind::HermitianIndefinite;

  std::optional<Factorization<Complex>> fact;
  for (int attempt = 0;; ++attempt) {
    try {
      const auto shifted = combine(Complex(1.0), pencil.K, Complex(-sigma), pencil.M);
      fact.emplace(shifted, kind);
      break;
    } catch (const SingularMatrixError& e) {
      if (attempt >= opt.max_shift_retries)
        throw SingularMatrixError(std::string("shift-invert: K - sigma M singular after ") +
                                      std::to_string(attempt) + " shift perturbations: " + e.what(),
                                  e.pivot(), e.magnitude());
      sigma -= 0.01 * std::abs(res.rho);
      ++res.shift_retries;
    }
  }
  res.shift = sigma;
  res.factor_seconds = fact->seconds();
  const auto t_krylov = std::chrono::steady_clock::now();

  using CMat = Block<Complex>;
  CMat Q(n, m_max), MQ(n, m_max), KQ(n, m_max);
  int m = 0;
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal;
  auto random_vector = [&] {
    Vector<Complex> v(n);
    for (int i = 0; i < n; ++i) v[i] = Complex(normal(rng), normal(rng));
    return v;
  };

  // Appends w after M-orthogonalising against the basis (two passes).
  // Returns false when w lies numerically inside the span.
  auto append = [&](Vector<Complex> w) {
    Vector<Complex> mw = pencil.M * w;
    const double norm0 = std::sqrt(std::max(0.0, w.dot(mw).real()));
    if (norm0 == 0.0) return false;
    for (int pass = 0; pass < 2 && m > 0; ++pass) {
      const Vector<Complex> c = MQ.leftCols(m).adjoint() * w;
      w.noalias() -= Q.leftCols(m) * c;
      mw.noalias() -= MQ.leftCols(m) * c;
    }
    mw = pencil.M * w;
    const double nrm = std::sqrt(std::max(0.0, w.dot(mw).real()));
    if (nrm <= 1e-10 * norm0) return false;
    Q.col(m) = w / nrm;
    MQ.col(m) = mw / nrm;
    KQ.col(m) = pencil.K * Vector<Complex>(Q.col(m));
    ++m;
    return true;
  };

  auto apply_s = [&](const CMat& x) {
    res.solves += static_cast<int>(x.cols());
    return fact->solve(CMat(pencil.M * x));
  };

  // Next block to expand from.
  CMat front(n, b);
  for (int j = 0; j < b; ++j) front.col(j) = random_vector();
  for (int j = 0; j < b && m < m_max; ++j)
    if (!append(front.col(j))) append(random_vector());
  front = Q.leftCols(m);

  Eigen::VectorXd theta;
  Block<Complex> Y;
  for (int cycle = 0; cycle <= opt.max_restarts; ++cycle) {
    // Expand the basis with S applied to the current front block.
    while (m < m_max) {
      const CMat w = apply_s(front);
      const int before = m;
      for (Eigen::Index j = 0; j < w.cols() && m < m_max; ++j)
        if (!append(w.col(j))) append(random_vector());
      if (m == before) break;
      front = Q.middleCols(before, m - before);
    }

    // Rayleigh-Ritz on K.
    CMat H = Q.leftCols(m).adjoint() * KQ.leftCols(m);
    double imag = 0.0, scale = 0.0;
    for (int i = 0; i < m; ++i) {
      imag = std::max(imag, std::abs(H(i, i).imag()));
      scale = std::max(scale, std::abs(H(i, i)));
    }
    res.max_ritz_imag = std::max(res.max_ritz_imag, scale > 0.0 ? imag / scale : 0.0);
    H = 0.5 * (H + H.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<CMat> es(H);
    theta = es.eigenvalues();
    Y = es.eigenvectors();

    // Residuals of the k lowest Ritz pairs.
    const int want = std::min(k, m);
    int nconv = 0;
    std::vector<int> unconverged;
    for (int j = 0; j < want; ++j) {
      const Vector<Complex> y = Y.col(j);
      const Vector<Complex> kx = KQ.leftCols(m) * y;
      const Vector<Complex> mx = MQ.leftCols(m) * y;
      const double r = (kx - theta[j] * mx).norm();
      if (r <= opt.tol * (detail::residual_scale(theta[j], sigma) * mx.norm() + kx.norm())) ++nconv;
      else unconverged.push_back(j);
    }
    if (nconv == want && want == k) {
      res.converged = true;
      break;
    }
    if (cycle == opt.max_restarts || m < m_max) break;

    // Thick restart: keep the lowest Ritz vectors, expand from the
    // unconverged wanted ones (padded with the next Ritz vectors).
    ++res.restarts;
    const int kk = std::min(keep, m);
    std::vector<int> seeds = unconverged;
    for (int j = want; static_cast<int>(seeds.size()) < b && j < m; ++j) seeds.push_back(j);
    seeds.resize(std::min<std::size_t>(seeds.size(), static_cast<std::size_t>(b)));
    CMat seed_vecs(n, static_cast<Eigen::Index>(seeds.size()));
    for (std::size_t s = 0; s < seeds.size(); ++s) seed_vecs.col(static_cast<Eigen::Index>(s)) = Q.leftCols(m) * Y.col(seeds[s]);
    const CMat Yk = Y.leftCols(kk);
    const CMat q_new = Q.leftCols(m) * Yk;
    const CMat mq_new = MQ.leftCols(m) * Yk;
    const CMat kq_new = KQ.leftCols(m) * Yk;
    Q.leftCols(kk) = q_new;
    MQ.leftCols(kk) = mq_new;
    KQ.leftCols(kk) = kq_new;
    m = kk;
    front = seed_vecs;
  }

  // Extract, normalise, and report Rayleigh quotients of the final vectors.
  const int got = std::min(k, static_cast<int>(theta.size()));
  struct Pair {
    double lambda;
    Vector<Complex> x;
  };
  std::vector<Pair> pairs;
  for (int j = 0; j < got; ++j) {
    Vector<Complex> x = Q.leftCols(m) * Y.col(j);
    const double mn = std::sqrt(x.dot(pencil.M * x).real());
    x /= mn;
    detail::normalize_phase(x);
    const Vector<Complex> kx = pencil.K * x;
    const Vector<Complex> mx = pencil.M * x;
    const double lambda = x.dot(kx).real() / x.dot(mx).real();
    pairs.push_back({lambda, std::move(x)});
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& c) { return a.lambda < c.lambda; });
  for (auto& p : pairs) {
    const Vector<Complex> kx = pencil.K * p.x;
    const Vector<Complex> mx = pencil.M * p.x;
    const double r = (kx - p.lambda * mx).norm();
    res.eigenvalues.push_back(p.lambda);
    res.residuals.push_back(r);
    res.relative_residuals.push_back(r / (detail::residual_scale(p.lambda, sigma) * mx.norm() + kx.norm()));
    res.eigenvectors.push_back(pencil.expand(p.x));
  }
  const auto t_end = std::chrono::steady_clock::now();
  res.krylov_seconds = std::chrono::duration<double>(t_end - t_krylov).count();
  res.total_seconds = std::chrono::duration<double>(t_end - t_start).count();
  return res;
}

struct ResidualReport {
  std::vector<double> residuals;          // ||K x - lambda M x||_2, recomputed
  Block<Complex> gram;                    // X^H M X
  double max_orthogonality_error = 0.0;   // max |X^H M X - I|
  double max_residual_mismatch = 0.0;     // against EigenResult::residuals
};

/// Recomputes residuals and the M-Gram matrix with an independent
/// element-wise accumulation over the CSR arrays.
inline ResidualReport residual_report(const HermitianPencil& pencil, const EigenResult& result) {
  ResidualReport rep;
  const int n = pencil.size();
  const std::size_t k = result.size();
  std::vector<Vector<Complex>> xs;
  for (const auto& full : result.eigenvectors) xs.push_back(pencil.restrict_to_free(full));
  auto csr_apply = [n](const auto& a, const Vector<Complex>& x) {
    Vector<Complex> y = Vector<Complex>::Zero(n);
    const auto& rp = a.row_ptr();
    const auto& ci = a.col_idx();
    const auto& v = a.values();
    for (int r = 0; r < n; ++r)
      for (int p = rp[r]; p < rp[r + 1]; ++p) y[r] += Complex(v[p]) * x[ci[p]];
    return y;
  };
  std::vector<Vector<Complex>> mxs;
  for (std::size_t j = 0; j < k; ++j) {
    const Vector<Complex> kx = csr_apply(pencil.K, xs[j]);
    const Vector<Complex> mx = csr_apply(pencil.M, xs[j]);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::norm(kx[i] - result.eigenvalues[j] * mx[i]);
    rep.residuals.push_back(std::sqrt(s));
    if (j < result.residuals.size())
      rep.max_residual_mismatch = std::max(rep.max_residual_mismatch, std::abs(rep.residuals.back() - result.residuals[j]));
    mxs.push_back(mx);
  }
  rep.gram = Block<Complex>::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      Complex s{};
      for (int r = 0; r < n; ++r) s += std::conj(xs[i][r]) * mxs[j][r];
      rep.gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s;
      rep.max_orthogonality_error = std::max(rep.max_orthogonality_error, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  return rep;
}

}  // namespace magauge
