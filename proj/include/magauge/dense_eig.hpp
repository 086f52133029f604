#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "assemble.hpp"

namespace magauge {

inline constexpr int kDenseOracleMaxSize = 2000;

namespace detail {

/// Lower Cholesky factor of a real SPD matrix (row-major n x n).
inline std::vector<double> dense_cholesky(std::vector<double> a, int n) {
  for (int j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (int k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0)) throw std::runtime_error("dense oracle: mass matrix is not positive definite");
    const double ljj = std::sqrt(d);
    a[j * n + j] = ljj;
    for (int i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (int k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / ljj;
    }
    for (int k = j + 1; k < n; ++k) a[j * n + k] = 0.0;
  }
  return a;
}

/// Householder reduction of a Hermitian matrix (row-major, full storage) to
/// real symmetric tridiagonal form: diagonal d and off-diagonal e (e[0] unused).
/// Off-diagonal phases are absorbed by a diagonal unitary similarity.
inline void hermitian_tridiagonalize(std::vector<Complex>& a, int n, std::vector<double>& d, std::vector<double>& e) {
  d.assign(n, 0.0);
  e.assign(n, 0.0);
  std::vector<Complex> v(n), p(n);
  for (int k = 0; k + 2 < n; ++k) {
    // Column k below the diagonal: x = a[k+1:, k]
    double xnorm2 = 0.0;
    for (int i = k + 1; i < n; ++i) xnorm2 += std::norm(a[i * n + k]);
    const double xnorm = std::sqrt(xnorm2);
    if (xnorm == 0.0) continue;
    const Complex x0 = a[(k + 1) * n + k];
    const Complex phase = std::abs(x0) > 0.0 ? x0 / std::abs(x0) : Complex(1.0);
    const Complex alpha = -phase * xnorm;
    // v = x - alpha e1, H = I - 2 v v^H / (v^H v)
    for (int i = 0; i < n; ++i) v[i] = 0.0;
    for (int i = k + 1; i < n; ++i) v[i] = a[i * n + k];
    v[k + 1] -= alpha;
    double vnorm2 = 0.0;
    for (int i = k + 1; i < n; ++i) vnorm2 += std::norm(v[i]);
    if (vnorm2 == 0.0) continue;
    const double beta = 2.0 / vnorm2;
    // A <- H A H with H Hermitian: p = beta A v, K = beta/2 v^H p, w = p - K v,
    // A <- A - v w^H - w v^H
    for (int i = k; i < n; ++i) {
      Complex s{};
      for (int j = k + 1; j < n; ++j) s += a[i * n + j] * v[j];
      p[i] = beta * s;
    }
    Complex vp{};
    for (int i = k + 1; i < n; ++i) vp += std::conj(v[i]) * p[i];
    const Complex kk = 0.5 * beta * vp;
    for (int i = k; i < n; ++i) p[i] -= kk * v[i];
    for (int i = k; i < n; ++i)
      for (int j = k; j < n; ++j) a[i * n + j] -= v[i] * std::conj(p[j]) + p[i] * std::conj(v[j]);
  }
  for (int i = 0; i < n; ++i) d[i] = a[i * n + i].real();
  for (int i = 1; i < n; ++i) e[i] = std::abs(a[i * n + i - 1]);
}

/// Eigenvalues of a real symmetric tridiagonal matrix by the implicit QL
/// iteration with Wilkinson-type shifts. e[i] couples i-1 and i; e[0] unused.
inline std::vector<double> tridiagonal_ql(std::vector<double> d, std::vector<double> e) {
  const int n = static_cast<int>(d.size());
  for (int i = 1; i < n; ++i) e[i - 1] = e[i];
  if (n > 0) e[n - 1] = 0.0;
  for (int l = 0; l < n; ++l) {
    int iter = 0;
    int m;
    do {
      for (m = l; m < n - 1; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= std::numeric_limits<double>::epsilon() * dd) break;
      }
      if (m != l) {
        if (++iter > 60) throw std::runtime_error("dense oracle: QL iteration did not converge");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + (g >= 0.0 ? std::abs(r) : -std::abs(r)));
        double s = 1.0, c = 1.0, p = 0.0;
        int i;
        for (i = m - 1; i >= l; --i) {
          double f = s * e[i];
          const double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
        }
        if (r == 0.0 && i >= l) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
  std::sort(d.begin(), d.end());
  return d;
}

}  // namespace detail

/// Full spectrum of the pencil by dense reduction: C = L^{-1} K L^{-H} with
/// M = L L^T, Householder tridiagonalization of C, then implicit QL.
inline std::vector<double> dense_oracle(const HermitianPencil& pencil) {
  const int n = pencil.size();
  if (n > kDenseOracleMaxSize)
    throw std::invalid_argument("dense oracle is limited to " + std::to_string(kDenseOracleMaxSize) + " DOFs, got " +
                                std::to_string(n));
  std::vector<double> mm(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<Complex> c(static_cast<std::size_t>(n) * n, Complex{});
  for (int r = 0; r < n; ++r) {
    for (int p = pencil.M.row_ptr()[r]; p < pencil.M.row_ptr()[r + 1]; ++p) mm[r * n + pencil.M.col_idx()[p]] = pencil.M.values()[p];
    for (int p = pencil.K.row_ptr()[r]; p < pencil.K.row_ptr()[r + 1]; ++p) c[r * n + pencil.K.col_idx()[p]] = pencil.K.values()[p];
  }
  const auto l = detail::dense_cholesky(std::move(mm), n);
  // Z = L^{-1} K (forward substitution on columns), then C = L^{-1} Z^H ... = L^{-1} K L^{-H}.
  auto forward = [&](std::vector<Complex>& a) {
    for (int col = 0; col < n; ++col)
      for (int i = 0; i < n; ++i) {
        Complex s = a[i * n + col];
        for (int k = 0; k < i; ++k) s -= l[i * n + k] * a[k * n + col];
        a[i * n + col] = s / l[i * n + i];
      }
  };
  forward(c);
  // c = L^{-1} K; transpose-conjugate, apply again: (L^{-1} (L^{-1} K)^H)^H = L^{-1} K L^{-H}
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const Complex a = c[i * n + j], b = c[j * n + i];
      c[i * n + j] = std::conj(b);
      c[j * n + i] = std::conj(a);
    }
  forward(c);
  // Symmetrize against roundoff.
  for (int i = 0; i < n; ++i) {
    c[i * n + i] = c[i * n + i].real();
    for (int j = i + 1; j < n; ++j) {
      const Complex avg = 0.5 * (c[i * n + j] + std::conj(c[j * n + i]));
      c[i * n + j] = avg;
      c[j * n + i] = std::conj(avg);
    }
  }
  std::vector<double> d, e;
  detail::hermitian_tridiagonalize(c, n, d, e);
  return detail::tridiagonal_ql(std::move(d), std::move(e));
}

}  // namespace magauge
