// Per-domain PCA alignment into a shared width and domain centers.
#pragma once

#include "mdgmix/common.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace mdgmix {

struct AlignedFeatures {
  DomainId domain_id = 0;
  Matrix matrix;  // num_nodes x d
  int d() const { return static_cast<int>(matrix.cols()); }
  std::size_t num_nodes() const { return static_cast<std::size_t>(matrix.rows()); }
};

struct DomainCenter {
  DomainId domain_id = 0;
  Vector vector;
};

struct PcaOptions {
  /// Divide each centered column by its standard deviation before the
  /// eigendecomposition.
  bool standardize = false;
  /// When true the output rows are centered (domain mean removed). When false
  /// the raw rows are projected onto the principal axes, which keeps the domain
  /// mean (and hence the domain center) in the aligned space.
  bool center_output = false;
};

struct PcaFit {
  Vector mean;         // d_k
  Vector scale;        // d_k, ones unless standardized
  Matrix basis;        // d_k x d, orthonormal columns (zero columns for null directions / padding)
  Vector eigenvalues;  // d, descending; zero for padding
};

/// Fits the projection. Eigenvectors are sorted by descending eigenvalue and
/// each is flipped so its largest-magnitude entry is positive. Directions with
/// (numerically) zero variance get a zero basis column.
inline PcaFit pca_fit(const Matrix& raw, int d, const PcaOptions& opts = {}) {
  require(raw.rows() >= 1, "pca: need at least one row");
  require(d >= 1, "pca: target dimension must be >= 1");
  require(raw.allFinite(), "pca: non-finite input entries");
  const Eigen::Index n = raw.rows();
  const Eigen::Index dk = raw.cols();

  PcaFit fit;
  fit.mean = raw.colwise().mean().transpose();
  fit.scale = Vector::Ones(dk);
  fit.basis = Matrix::Zero(dk, d);
  fit.eigenvalues = Vector::Zero(d);
  if (n == 1 || dk == 0) return fit;

  Matrix centered = raw.rowwise() - fit.mean.transpose();
  if (opts.standardize) {
    for (Eigen::Index j = 0; j < dk; ++j) {
      const double sd = std::sqrt(centered.col(j).squaredNorm() / static_cast<double>(n - 1));
      if (sd > 0) fit.scale(j) = sd;
    }
    centered = centered.array().rowwise() / fit.scale.transpose().array();
  }
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  const double max_abs = cov.cwiseAbs().maxCoeff();
  if (max_abs == 0.0) return fit;

  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericalError("pca: eigendecomposition failed");
  const Vector& evals = solver.eigenvalues();  // ascending
  const Matrix& evecs = solver.eigenvectors();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(dk));
  for (Eigen::Index i = 0; i < dk; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return evals(a) > evals(b); });

  const double lambda_max = std::max(evals(order.front()), 0.0);
  const double null_tol = 1e-12 * std::max(lambda_max, max_abs);
  const Eigen::Index keep = std::min<Eigen::Index>(d, dk);
  for (Eigen::Index c = 0; c < keep; ++c) {
    const Eigen::Index src = order[static_cast<std::size_t>(c)];
    if (evals(src) <= null_tol) continue;
    Vector v = evecs.col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    fit.basis.col(c) = v;
    fit.eigenvalues(c) = evals(src);
  }
  return fit;
}

inline Matrix pca_apply(const PcaFit& fit, const Matrix& raw, const PcaOptions& opts = {}) {
  Matrix x = raw;
  if (opts.center_output) x = x.rowwise() - fit.mean.transpose();
  if (opts.standardize) x = x.array().rowwise() / fit.scale.transpose().array();
  return x * fit.basis;
}

/// Projects one domain's raw features to width `d`.
inline AlignedFeatures pca_project(const Matrix& raw, int d, DomainId domain_id = 0, const PcaOptions& opts = {}) {
  const PcaFit fit = pca_fit(raw, d, opts);
  AlignedFeatures out;
  out.domain_id = domain_id;
  if (raw.rows() == 1 || fit.eigenvalues.isZero(0.0))
    out.matrix = Matrix::Zero(raw.rows(), d);
  else
    out.matrix = pca_apply(fit, raw, opts);
  return out;
}

inline DomainCenter domain_center(const AlignedFeatures& aligned) {
  require(aligned.matrix.rows() >= 1, "domain_center: domain has no nodes");
  return {aligned.domain_id, aligned.matrix.colwise().mean().transpose()};
}

}  // namespace mdgmix
