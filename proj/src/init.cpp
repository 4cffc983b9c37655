#include "rbd/init.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace rbd {

namespace {

constexpr Eigen::Index kDenseEigenLimit = 2048;

void fix_sign(Vector& v) {
  const double tol = 1e-12 * v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > tol) {
      if (v[i] < 0.0) v = -v;
      return;
    }
  }
}

// Power iteration on (shift I - M), whose dominant eigenvector is the
// minimal eigenvector of M.
Vector shifted_power_iteration(const Matrix& m) {
  const Eigen::Index d = m.rows();
  Vector v = Vector::Ones(d).normalized();
  // Upper bound for lambda_max via power iteration on M itself.
  double lambda_max = 0.0;
  for (int k = 0; k < 100; ++k) {
    Vector mv = m * v;
    lambda_max = mv.norm();
    if (lambda_max == 0.0) return Vector::Unit(d, 0);
    v = mv / lambda_max;
  }
  const double shift = 1.01 * lambda_max;
  v = Vector::LinSpaced(d, 1.0, 2.0).normalized();
  const long cap = 10 * static_cast<long>(d);
  for (long k = 0; k < cap; ++k) {
    Vector next = shift * v - m * v;
    next.normalize();
    const double change = std::min((next - v).norm(), (next + v).norm());
    v = next;
    if (change < 1e-10) break;
  }
  return v;
}

}  // namespace

std::vector<std::size_t> select_inliers(const Vector& y) {
  const auto m = static_cast<std::size_t>(y.size());
  if (m == 0) throw DimensionError("select_inliers: empty observation vector");
  std::vector<double> mags(m);
  for (std::size_t i = 0; i < m; ++i) mags[i] = std::abs(y[static_cast<Eigen::Index>(i)]);
  std::vector<double> sorted = mags;
  const std::size_t k = (m + 1) / 2 - 1;  // zero-based ceil(m/2)-th order statistic
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
  const double med = sorted[k];
  std::vector<std::size_t> sel;
  for (std::size_t i = 0; i < m; ++i)
    if (mags[i] <= med) sel.push_back(i);
  return sel;
}

DirectionMatrices direction_matrices(const MeasurementOperator& op,
                                     const std::vector<std::size_t>& selected) {
  const RowMatrix l = to_dense(op.left());
  const RowMatrix r = to_dense(op.right());
  const double inv_m = 1.0 / static_cast<double>(op.measurements());
  DirectionMatrices dm{Matrix::Zero(l.cols(), l.cols()), Matrix::Zero(r.cols(), r.cols())};
  for (std::size_t i : selected) {
    const auto row = static_cast<Eigen::Index>(i);
    dm.left.selfadjointView<Eigen::Lower>().rankUpdate(l.row(row).transpose(), inv_m);
    dm.right.selfadjointView<Eigen::Lower>().rankUpdate(r.row(row).transpose(), inv_m);
  }
  dm.left = dm.left.selfadjointView<Eigen::Lower>();
  dm.right = dm.right.selfadjointView<Eigen::Lower>();
  return dm;
}

Vector min_eigenvector(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) throw DimensionError("min_eigenvector: matrix must be square");
  const Matrix sym = 0.5 * (m + m.transpose());
  Vector v;
  if (sym.rows() <= kDenseEigenLimit) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.info() != Eigen::Success) throw NumericError("symmetric eigensolver failed");
    v = es.eigenvectors().col(0);
  } else {
    v = shifted_power_iteration(sym);
  }
  if (!v.allFinite()) throw NumericError("min_eigenvector: non-finite eigenvector");
  v.normalize();
  fix_sign(v);
  return v;
}

double lad_scalar_loss(const Vector& y, const Vector& a, double beta) {
  return (y - beta * a).lpNorm<1>() / static_cast<double>(y.size());
}

double lad_scalar_fit(const Vector& y, const Vector& a) {
  if (y.size() != a.size()) throw DimensionError("lad_scalar_fit: length mismatch");
  struct Kink {
    double ratio;
    double weight;
  };
  std::vector<Kink> kinks;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (a[i] != 0.0) kinks.push_back({y[i] / a[i], std::abs(a[i])});
  if (kinks.empty()) throw NumericError("lad_scalar_fit: all coefficients are zero");
  std::sort(kinks.begin(), kinks.end(), [](const Kink& l, const Kink& r) { return l.ratio < r.ratio; });
  const double total = std::accumulate(kinks.begin(), kinks.end(), 0.0,
                                       [](double s, const Kink& k) { return s + k.weight; });
  // The slope of G to the right of kink j is (2 * cum_j - total) / m.
  double cum = 0.0;
  for (const Kink& k : kinks) {
    cum += k.weight;
    if (2.0 * cum >= total) return k.ratio;
  }
  return kinks.back().ratio;
}

InitEstimate spectral_initialize(const ProblemInstance& inst) {
  if (inst.m() < 2) throw DimensionError("spectral_initialize needs at least two measurements");
  InitEstimate est;
  est.selected = select_inliers(inst.y);
  const DirectionMatrices dm = direction_matrices(inst.op, est.selected);
  est.w_dir = min_eigenvector(dm.left);
  est.x_dir = min_eigenvector(dm.right);
  const Vector a = bilinear_forward(inst.op, est.w_dir, est.x_dir);
  est.m_hat = lad_scalar_fit(inst.y, a);
  const double root = std::sqrt(std::abs(est.m_hat));
  est.w0 = (est.m_hat < 0.0 ? -root : root) * est.w_dir;
  est.x0 = root * est.x_dir;
  return est;
}

double direction_error(const Vector& w_dir, const Vector& x_dir, const GroundTruth& truth) {
  const Vector u = truth.w_bar.normalized();
  const Vector v = truth.x_bar.normalized();
  // ||p q^T - s u v^T||_F^2 = |p|^2|q|^2 + 1 - 2 s <p,u><q,v>
  const double cross = w_dir.dot(u) * x_dir.dot(v);
  const double base = w_dir.squaredNorm() * x_dir.squaredNorm() + 1.0;
  return std::sqrt(std::max(0.0, base - 2.0 * std::abs(cross)));
}

}  // namespace rbd
