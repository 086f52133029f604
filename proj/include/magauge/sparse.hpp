#pragma once

#include <algorithm>
#include <chrono>
#include <complex>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

namespace magauge {

template <class S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
using Block = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
struct Triplet {
  int row;
  int col;
  S value;
};

/// Compressed sparse row matrix. Column indices are strictly increasing within
/// each row and no explicit duplicates are stored.
template <class S>
class SparseMatrix {
 public:
  using Scalar = S;

  SparseMatrix() = default;
  SparseMatrix(int rows, int cols) : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  /// Duplicates are summed in input order, so the result is bit-identical
  /// for identical triplet lists.
  static SparseMatrix from_triplets(int rows, int cols, std::vector<Triplet<S>> triplets) {
    for (const auto& t : triplets)
      if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
        throw std::out_of_range("triplet (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                                ") outside a " + std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
    // Bucket by row (stable), then merge each row through a column workspace:
    // duplicates are summed in input order, so results are deterministic.
    std::vector<std::size_t> start(static_cast<std::size_t>(rows) + 1, 0);
    for (const auto& t : triplets) ++start[t.row + 1];
    std::partial_sum(start.begin(), start.end(), start.begin());
    std::vector<int> cols_of(triplets.size());
    std::vector<S> vals_of(triplets.size());
    {
      std::vector<std::size_t> next(start.begin(), start.end() - 1);
      for (const auto& t : triplets) {
        cols_of[next[t.row]] = t.col;
        vals_of[next[t.row]++] = t.value;
      }
    }
    SparseMatrix m(rows, cols);
    m.col_idx_.reserve(triplets.size());
    m.values_.reserve(triplets.size());
    std::vector<int> slot(static_cast<std::size_t>(cols), -1);
    std::vector<int> row_cols, order;
    std::vector<S> row_sums;
    for (int r = 0; r < rows; ++r) {
      row_cols.clear();
      row_sums.clear();
      for (std::size_t i = start[r]; i < start[r + 1]; ++i) {
        int& sl = slot[cols_of[i]];
        if (sl < 0) {
          sl = static_cast<int>(row_cols.size());
          row_cols.push_back(cols_of[i]);
          row_sums.push_back(vals_of[i]);
        } else {
          row_sums[sl] += vals_of[i];
        }
      }
      order.resize(row_cols.size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](int x, int y) { return row_cols[x] < row_cols[y]; });
      for (int o : order) {
        m.col_idx_.push_back(row_cols[o]);
        m.values_.push_back(row_sums[o]);
        slot[row_cols[o]] = -1;
      }
      m.row_ptr_[r + 1] = static_cast<int>(row_cols.size());
    }
    std::partial_sum(m.row_ptr_.begin(), m.row_ptr_.end(), m.row_ptr_.begin());
    return m;
  }

  static SparseMatrix identity(int n) {
    std::vector<Triplet<S>> t;
    for (int i = 0; i < n; ++i) t.push_back({i, i, S(1)});
    return from_triplets(n, n, std::move(t));
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }
  const std::vector<int>& row_ptr() const { return row_ptr_; }
  const std::vector<int>& col_idx() const { return col_idx_; }
  const std::vector<S>& values() const { return values_; }

  S coeff(int r, int c) const {
    auto first = col_idx_.begin() + row_ptr_[r], last = col_idx_.begin() + row_ptr_[r + 1];
    auto it = std::lower_bound(first, last, c);
    return it != last && *it == c ? values_[it - col_idx_.begin()] : S(0);
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& v : values_) m = std::max(m, static_cast<double>(std::abs(v)));
    return m;
  }

  S trace() const {
    S t(0);
    for (int r = 0; r < std::min(rows_, cols_); ++r) t += coeff(r, r);
    return t;
  }

  /// y = A x
  template <class T>
  Vector<std::common_type_t<S, T>> operator*(const Vector<T>& x) const {
    using R = std::common_type_t<S, T>;
    if (x.size() != cols_) throw std::invalid_argument("matvec dimension mismatch");
    Vector<R> y(rows_);
    for (int r = 0; r < rows_; ++r) {
      R s(0);
      for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += values_[k] * x[col_idx_[k]];
      y[r] = s;
    }
    return y;
  }

  /// y = A^H x
  template <class T>
  Vector<std::common_type_t<S, T>> adjoint_times(const Vector<T>& x) const {
    using R = std::common_type_t<S, T>;
    if (x.size() != rows_) throw std::invalid_argument("adjoint matvec dimension mismatch");
    Vector<R> y = Vector<R>::Zero(cols_);
    for (int r = 0; r < rows_; ++r)
      for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
        if constexpr (std::is_same_v<S, std::complex<double>>)
          y[col_idx_[k]] += std::conj(values_[k]) * x[r];
        else
          y[col_idx_[k]] += values_[k] * x[r];
      }
    return y;
  }

  /// Y = A X for a block of columns.
  template <class T>
  Block<std::common_type_t<S, T>> operator*(const Block<T>& x) const {
    using R = std::common_type_t<S, T>;
    if (x.rows() != cols_) throw std::invalid_argument("matvec dimension mismatch");
    Block<R> y(rows_, x.cols());
    for (int r = 0; r < rows_; ++r)
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        R s(0);
        for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += values_[k] * x(col_idx_[k], j);
        y(r, j) = s;
      }
    return y;
  }

  Eigen::SparseMatrix<S, Eigen::ColMajor, int> to_eigen() const {
    const Eigen::Map<const Eigen::SparseMatrix<S, Eigen::RowMajor, int>> rm(
        rows_, cols_, static_cast<Eigen::Index>(nnz()), row_ptr_.data(), col_idx_.data(), values_.data());
    Eigen::SparseMatrix<S, Eigen::ColMajor, int> cm = rm;
    cm.makeCompressed();
    return cm;
  }

  Block<S> to_dense() const {
    Block<S> d = Block<S>::Zero(rows_, cols_);
    for (int r = 0; r < rows_; ++r)
      for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) d(r, col_idx_[k]) = values_[k];
    return d;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> row_ptr_{0};
  std::vector<int> col_idx_;
  std::vector<S> values_;
};

/// alpha A + beta B over the union pattern.
template <class S, class T>
SparseMatrix<S> combine(S alpha, const SparseMatrix<S>& a, S beta, const SparseMatrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("combine: shape mismatch");
  std::vector<Triplet<S>> t;
  t.reserve(a.nnz() + b.nnz());
  for (int r = 0; r < a.rows(); ++r) {
    for (int k = a.row_ptr()[r]; k < a.row_ptr()[r + 1]; ++k) t.push_back({r, a.col_idx()[k], alpha * a.values()[k]});
    for (int k = b.row_ptr()[r]; k < b.row_ptr()[r + 1]; ++k) t.push_back({r, b.col_idx()[k], beta * S(b.values()[k])});
  }
  return SparseMatrix<S>::from_triplets(a.rows(), a.cols(), std::move(t));
}

/// Largest |A - A^H| entry relative to the largest |A| entry.
template <class S>
double hermitian_defect(const SparseMatrix<S>& a) {
  double worst = 0.0;
  for (int r = 0; r < a.rows(); ++r)
    for (int k = a.row_ptr()[r]; k < a.row_ptr()[r + 1]; ++k) {
      S mirror = a.coeff(a.col_idx()[k], r);
      if constexpr (std::is_same_v<S, std::complex<double>>) mirror = std::conj(mirror);
      worst = std::max(worst, static_cast<double>(std::abs(a.values()[k] - mirror)));
    }
  const double scale = a.max_abs();
  return scale > 0.0 ? worst / scale : worst;
}

// ---------------------------------------------------------------------------
// Direct factorization
// ---------------------------------------------------------------------------

enum class FactorKind { SymmetricPositive, HermitianIndefinite, BorderedIndefinite, General };

inline const char* to_string(FactorKind k) {
  switch (k) {
    case FactorKind::SymmetricPositive: return "symmetric-positive";
    case FactorKind::HermitianIndefinite: return "hermitian-indefinite";
    case FactorKind::BorderedIndefinite: return "bordered-indefinite";
    case FactorKind::General: return "general";
  }
  return "?";
}

class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError(const std::string& what, long pivot, double magnitude)
      : std::runtime_error(what), pivot_(pivot), magnitude_(magnitude) {}
  /// Pivot position in elimination order (-1 when unknown).
  long pivot() const { return pivot_; }
  double magnitude() const { return magnitude_; }

 private:
  long pivot_;
  double magnitude_;
};

struct FactorOptions {
  /// Relative pivot floor: |pivot| < singular_tol * max|a_ij| is singular.
  double singular_tol = 1e-14;
  /// Diagonal preference for the indefinite kind: the diagonal entry is kept
  /// as pivot when |a_jj| >= pivot_threshold * max_i |a_ij| over the column.
  double indefinite_pivot_threshold = 0.1;
};

namespace detail {

template <class S>
class InspectableLU : public Eigen::SparseLU<Eigen::SparseMatrix<S, Eigen::ColMajor, int>, Eigen::COLAMDOrdering<int>> {
  using Base = Eigen::SparseLU<Eigen::SparseMatrix<S, Eigen::ColMajor, int>, Eigen::COLAMDOrdering<int>>;

 public:
  /// Smallest |U_jj| and its elimination position.
  std::pair<double, long> min_pivot() const {
    double best = std::numeric_limits<double>::infinity();
    long where = -1;
    for (Eigen::Index j = 0; j < this->cols(); ++j) {
      double d = 0.0;
      for (typename Base::SCMatrix::InnerIterator it(this->m_Lstore, j); it; ++it)
        if (it.index() == j) {
          d = std::abs(it.value());
          break;
        }
      if (d < best) {
        best = d;
        where = static_cast<long>(j);
      }
    }
    return {best, where};
  }
};

}  // namespace detail

/// Sparse direct factorization with a fill-reducing ordering.
///
/// symmetric-positive: LDL^H with approximate minimum degree ordering.
/// bordered-indefinite: LDL^H of [[K, m], [m^H, 0]] (border last) for a
/// semidefinite K with at most a one-dimensional null space not vanishing at
/// any node. K is ordered by AMD and the border is eliminated just before the
/// last K node, so the leading blocks are definite and no pivoting is needed.
/// hermitian-indefinite and general: supernodal LU with COLAMD column ordering
/// and threshold partial pivoting (diagonal preferred for the indefinite kind).
template <class S>
class Factorization {
 public:
  using EigenMatrix = Eigen::SparseMatrix<S, Eigen::ColMajor, int>;

  Factorization(const SparseMatrix<S>& a, FactorKind kind, FactorOptions opt = {}) : kind_(kind), opt_(opt) {
    if (a.rows() != a.cols()) throw std::invalid_argument("factorize: matrix is not square");
    n_ = a.rows();
    max_entry_ = a.max_abs();
    const auto start = std::chrono::steady_clock::now();
    const EigenMatrix m = a.to_eigen();
    if (kind == FactorKind::BorderedIndefinite) {
      if (n_ < 2) throw std::invalid_argument("factorize(bordered-indefinite): needs at least one row besides the border");
      const int nk = n_ - 1;
      Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> amd;
      const EigenMatrix k_block = m.topLeftCorner(nk, nk);
      Eigen::AMDOrdering<int>()(k_block.template selfadjointView<Eigen::Lower>(), amd);
      // Elimination order: AMD order of K with the border inserted before its last node.
      std::vector<int> order(amd.indices().data(), amd.indices().data() + nk);
      order.insert(order.end() - 1, nk);
      perm_.resize(n_);
      for (int k = 0; k < n_; ++k) perm_.indices()[order[k]] = k;
      EigenMatrix twisted(n_, n_);
      twisted.template selfadjointView<Eigen::Lower>() = m.template selfadjointView<Eigen::Lower>().twistedBy(perm_);
      static_ldlt_ = std::make_unique<Eigen::SimplicialLDLT<EigenMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>>>();
      static_ldlt_->compute(twisted);
      record_pivots(static_ldlt_->vectorD());
      permutation_ = order;
    } else if (kind == FactorKind::SymmetricPositive) {
      ldlt_ = std::make_unique<Eigen::SimplicialLDLT<EigenMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>>();
      ldlt_->compute(m);
      record_pivots(ldlt_->vectorD());
      for (Eigen::Index i = 0; i < ldlt_->permutationP().size(); ++i)
        permutation_.push_back(ldlt_->permutationP().indices()[i]);
    } else {
      lu_ = std::make_unique<detail::InspectableLU<S>>();
      lu_->setPivotThreshold(kind == FactorKind::General ? 1.0 : opt.indefinite_pivot_threshold);
      lu_->analyzePattern(m);
      lu_->factorize(m);
      if (lu_->info() != Eigen::Success) {
        throw SingularMatrixError("factorize(" + std::string(to_string(kind)) + "): " + lu_->lastErrorMessage(), -1, 0.0);
      }
      std::tie(min_pivot_, min_pivot_index_) = lu_->min_pivot();
      for (Eigen::Index i = 0; i < lu_->colsPermutation().size(); ++i)
        permutation_.push_back(lu_->colsPermutation().indices()[i]);
    }
    if (n_ > 0 && !(min_pivot_ >= opt.singular_tol * max_entry_))
      throw SingularMatrixError("factorize(" + std::string(to_string(kind)) + "): pivot " +
                                    std::to_string(min_pivot_index_) + " has magnitude " +
                                    std::to_string(min_pivot_) + " below " +
                                    std::to_string(opt.singular_tol) + " * max|a_ij|",
                                min_pivot_index_, min_pivot_);
    seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }

  int size() const { return n_; }
  FactorKind kind() const { return kind_; }
  double min_pivot() const { return min_pivot_; }
  long min_pivot_index() const { return min_pivot_index_; }
  double max_entry() const { return max_entry_; }
  /// Diagonal-pivot threshold in effect (1 for general, 0 for LDL^H).
  double pivot_threshold() const {
    switch (kind_) {
      case FactorKind::SymmetricPositive: return 0.0;
      case FactorKind::HermitianIndefinite: return opt_.indefinite_pivot_threshold;
      case FactorKind::BorderedIndefinite: return 0.0;
      case FactorKind::General: return 1.0;
    }
    return 0.0;
  }
  /// Fill-reducing permutation (column ordering).
  const std::vector<int>& permutation() const { return permutation_; }
  double seconds() const { return seconds_; }

  template <class Derived>
  Block<S> solve(const Eigen::MatrixBase<Derived>& b) const {
    if (b.rows() != n_) throw std::invalid_argument("solve: dimension mismatch");
    Block<S> rhs = b;
    if (ldlt_) return ldlt_->solve(rhs);
    if (static_ldlt_) {
      const Block<S> y = static_ldlt_->solve(perm_ * rhs);
      return perm_.inverse() * y;
    }
    return lu_->solve(rhs);
  }

  Vector<S> solve(const Vector<S>& b) const {
    Block<S> x = solve(Block<S>(b));
    return x.col(0);
  }

 private:
  FactorKind kind_;
  FactorOptions opt_;
  int n_ = 0;
  double max_entry_ = 0.0;
  double min_pivot_ = 0.0;
  long min_pivot_index_ = -1;
  double seconds_ = 0.0;
  std::vector<int> permutation_;
  std::unique_ptr<Eigen::SimplicialLDLT<EigenMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>> ldlt_;
  std::unique_ptr<detail::InspectableLU<S>> lu_;
  std::unique_ptr<Eigen::SimplicialLDLT<EigenMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>>> static_ldlt_;
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm_;

  template <class D>
  void record_pivots(const D& d) {
    min_pivot_ = d.size() == 0 ? 0.0 : std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < d.size(); ++i)
      if (!(std::abs(d[i]) >= min_pivot_)) {
        min_pivot_ = std::abs(d[i]);
        min_pivot_index_ = static_cast<long>(i);
      }
  }
};

template <class S>
Factorization<S> factorize(const SparseMatrix<S>& a, FactorKind kind, FactorOptions opt = {}) {
  return Factorization<S>(a, kind, opt);
}

}  // namespace magauge
