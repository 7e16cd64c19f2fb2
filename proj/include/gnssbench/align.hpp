#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gnssbench/error.hpp"
#include "gnssbench/geodesy.hpp"
#include "gnssbench/stats.hpp"
#include "gnssbench/sync.hpp"

namespace gnssbench {

// =============================================================================
// Model selection
// =============================================================================

/// Unknown sets. Full15 solves the 3x3 rotation block (unconstrained), body
/// lever arm and global offset; NoGlobalOffset pins the global offset to zero;
/// TranslationOnly additionally pins the rotation to identity.
enum class AlignmentModel { Full15, NoGlobalOffset, TranslationOnly };

inline std::string_view to_string(AlignmentModel m) {
  switch (m) {
  case AlignmentModel::Full15: return "full15";
  case AlignmentModel::NoGlobalOffset: return "no-global-offset";
  case AlignmentModel::TranslationOnly: return "translation-only";
  }
  return "full15";
}

inline AlignmentModel parse_alignment_model(std::string_view s) {
  if (s == "full15") return AlignmentModel::Full15;
  if (s == "no-global-offset") return AlignmentModel::NoGlobalOffset;
  if (s == "translation-only") return AlignmentModel::TranslationOnly;
  throw Error(ErrorKind::Domain, "unknown alignment model '" + std::string(s) + "'");
}

inline int unknown_count(AlignmentModel m) {
  switch (m) {
  case AlignmentModel::Full15: return 15;
  case AlignmentModel::NoGlobalOffset: return 12;
  case AlignmentModel::TranslationOnly: return 3;
  }
  return 15;
}

enum class RotationSource { Raw, Orthonormalized };

inline constexpr std::size_t kMinAlignmentPairs = 5;
inline constexpr std::size_t kRecommendedAlignmentPairs = 200;
inline constexpr double kRankTolerance = 1e-8;
inline constexpr double kConditionWarning = 1e6;

// =============================================================================
// Results
// =============================================================================

struct AlignmentSolution {
  AlignmentModel model = AlignmentModel::Full15;
  RotationMatrix3 r_eval_ref;        // raw least-squares block
  RotationMatrix3 r_orthonormalized; // nearest proper rotation to the raw block
  LocalVector y_body;                // body axes
  LocalVector y_eval;                // NED
  std::size_t n_points = 0;
  double rms_residual = 0.0;         // per-component RMS of Az - b
  std::vector<double> singular_values; // descending, one per unknown
  double condition_number = 0.0;
  std::vector<double> standard_errors; // per unknown, model ordering
  std::vector<std::string> warnings;

  /// Full 15-vector [vec(R) row-major; y_body; y_eval], with pinned entries
  /// filled in for reduced models.
  Eigen::Matrix<double, 15, 1> parameters() const {
    Eigen::Matrix<double, 15, 1> z;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        z(3 * i + j) = r_eval_ref.m(i, j);
    z.segment<3>(9) = y_body.vec();
    z.segment<3>(12) = y_eval.vec();
    return z;
  }
};

/// Thrown when the design matrix loses rank; carries the diagnostics needed
/// to explain which parameters are confounded.
class RankDeficientError : public Error {
public:
  RankDeficientError(const std::string &what, std::vector<double> singular_values,
                     int null_dimension, std::string direction_class)
      : Error(ErrorKind::RankDeficient, what), singular_values_(std::move(singular_values)),
        null_dimension_(null_dimension), direction_class_(std::move(direction_class)) {}

  const std::vector<double> &singular_values() const { return singular_values_; }
  int null_dimension() const { return null_dimension_; }
  const std::string &direction_class() const { return direction_class_; }

private:
  std::vector<double> singular_values_;
  int null_dimension_;
  std::string direction_class_;
};

struct ErrorSample {
  double t = 0.0;
  LocalVector epsilon_ned;
  double longitudinal = 0.0; // body x, forward
  double lateral = 0.0;      // body y, right
  double vertical = 0.0;     // body z, down
  double horizontal = 0.0;
};

// =============================================================================
// Pair selection and system assembly
// =============================================================================

/// Keeps pairs whose reference is confident (sigma_h strictly below
/// sigma_max) and whose evaluated receiver has a valid fix.
inline std::vector<PairedEpoch> select_confident_pairs(std::span<const PairedEpoch> pairs,
                                                       double sigma_max = 0.10) {
  if (!(sigma_max > 0.0))
    throw Error(ErrorKind::Domain, "sigma_max must be positive");
  std::vector<PairedEpoch> out;
  for (const PairedEpoch &p : pairs)
    if (p.ref.sigma_h < sigma_max && p.eval.has_fix())
      out.push_back(p);
  return out;
}

/// Writes the three rows of pair `p` into `a` starting at `row`, with the
/// right-hand side into `b`.
template <class MatA, class VecB>
void write_pair_rows(const PairedEpoch &p, AlignmentModel model, Eigen::Index row, MatA &a,
                     VecB &b) {
  const Eigen::Matrix3d r_body = euler_to_rotation(p.ref.attitude).m;
  const Eigen::Vector3d x_eval = p.eval_ned.vec();
  const Eigen::Vector3d x_ref = p.ref_ned.vec();
  switch (model) {
  case AlignmentModel::Full15:
  case AlignmentModel::NoGlobalOffset:
    for (int i = 0; i < 3; ++i) {
      a.row(row + i).template head<9>().setZero();
      a.row(row + i).template segment<3>(3 * i) = x_eval.transpose();
    }
    a.template block<3, 3>(row, 9) = r_body;
    if (model == AlignmentModel::Full15)
      a.template block<3, 3>(row, 12).setIdentity();
    b.template segment<3>(row) = x_ref;
    break;
  case AlignmentModel::TranslationOnly:
    a.template block<3, 3>(row, 0) = r_body;
    b.template segment<3>(row) = x_ref - x_eval;
    break;
  }
}

struct LinearSystem {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  AlignmentModel model = AlignmentModel::Full15;
};

inline void require_pair_count(std::size_t n) {
  if (n < kMinAlignmentPairs)
    throw Error(ErrorKind::InsufficientData,
                "alignment needs at least " + std::to_string(kMinAlignmentPairs) +
                    " pairs, got " + std::to_string(n));
}

/// Stacks [X_eval,i | R_body,i | I] z = x_ref,i for every pair (reduced
/// models drop the pinned columns).
inline LinearSystem build_system(std::span<const PairedEpoch> pairs,
                                 AlignmentModel model = AlignmentModel::Full15) {
  require_pair_count(pairs.size());
  const Eigen::Index rows = 3 * static_cast<Eigen::Index>(pairs.size());
  LinearSystem sys{Eigen::MatrixXd(rows, unknown_count(model)), Eigen::VectorXd(rows), model};
  for (std::size_t i = 0; i < pairs.size(); ++i)
    write_pair_rows(pairs[i], model, 3 * static_cast<Eigen::Index>(i), sys.a, sys.b);
  return sys;
}

// =============================================================================
// Least squares
// =============================================================================

/// Reduces a tall system [A | b] to a (k+1)x(k+1) upper-triangular factor by
/// blocked Householder QR, so memory stays O(k^2) however many rows stream
/// through. R (top-left k x k) has the singular values of A; the last
/// diagonal entry is the residual norm.
class LeastSquaresAccumulator {
public:
  explicit LeastSquaresAccumulator(int unknowns, Eigen::Index block_rows = 3072)
      : k_(unknowns), block_rows_(block_rows),
        r_(Eigen::MatrixXd::Zero(unknowns + 1, unknowns + 1)),
        pending_(block_rows, unknowns + 1) {}

  void add_rows(const Eigen::Ref<const Eigen::MatrixXd> &a,
                const Eigen::Ref<const Eigen::VectorXd> &b) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      pending_.row(fill_).head(k_) = a.row(i);
      pending_(fill_, k_) = b(i);
      if (++fill_ == block_rows_)
        flush();
    }
    rows_ += a.rows();
  }

  /// Direct row-triplet entry used by the streaming pair path.
  Eigen::Block<Eigen::MatrixXd> reserve_rows3() {
    if (fill_ + 3 > block_rows_)
      flush();
    auto block = pending_.block(fill_, 0, 3, k_ + 1);
    fill_ += 3;
    rows_ += 3;
    return block;
  }

  Eigen::Index rows() const { return rows_; }

  struct Factor {
    Eigen::MatrixXd r; // k x k upper triangular
    Eigen::VectorXd c; // first k entries of Q^T b
    double residual_norm = 0.0;
    Eigen::Index rows = 0;
  };

  Factor finish() {
    flush();
    Factor f;
    f.r = r_.topLeftCorner(k_, k_).triangularView<Eigen::Upper>();
    f.c = r_.col(k_).head(k_);
    f.residual_norm = std::abs(r_(k_, k_));
    f.rows = rows_;
    return f;
  }

private:
  void flush() {
    if (fill_ == 0)
      return;
    Eigen::MatrixXd stack(k_ + 1 + fill_, k_ + 1);
    stack.topRows(k_ + 1) = r_;
    stack.bottomRows(fill_) = pending_.topRows(fill_);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(stack);
    r_ = qr.matrixQR().topRows(k_ + 1).triangularView<Eigen::Upper>();
    fill_ = 0;
  }

  int k_;
  Eigen::Index block_rows_;
  Eigen::MatrixXd r_;
  Eigen::MatrixXd pending_;
  Eigen::Index fill_ = 0;
  Eigen::Index rows_ = 0;
};

/// Nearest proper rotation (orthogonal Procrustes, det forced to +1).
inline RotationMatrix3 nearest_rotation(const Eigen::Matrix3d &m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return {svd.matrixU() * d * svd.matrixV().transpose()};
}

namespace detail {

/// Block label of each unknown, in model column order.
inline std::vector<int> block_of_unknown(AlignmentModel model) {
  // 0 rotation, 1 lever arm, 2 global offset
  std::vector<int> blocks;
  if (model != AlignmentModel::TranslationOnly)
    blocks.insert(blocks.end(), 9, 0);
  blocks.insert(blocks.end(), 3, 1);
  if (model == AlignmentModel::Full15)
    blocks.insert(blocks.end(), 3, 2);
  return blocks;
}

/// Names the parameter family spanning the numerical null space.
inline std::string classify_null_space(const Eigen::MatrixXd &null_vectors,
                                       AlignmentModel model) {
  const std::vector<int> blocks = block_of_unknown(model);
  double energy[3] = {0.0, 0.0, 0.0};
  for (Eigen::Index c = 0; c < null_vectors.cols(); ++c)
    for (Eigen::Index r = 0; r < null_vectors.rows(); ++r)
      energy[blocks[static_cast<std::size_t>(r)]] += null_vectors(r, c) * null_vectors(r, c);
  const double total = energy[0] + energy[1] + energy[2];
  if (energy[0] >= 0.99 * total)
    return "rotation (evaluated positions lack 3-D spread)";
  if (energy[1] + energy[2] >= 0.99 * total)
    return energy[2] > 0.0 ? "lever-arm/global-offset (no attitude diversity)"
                           : "lever-arm (no attitude diversity)";
  return "mixed rotation/offset";
}

} // namespace detail

/// Least-squares solve of an assembled (or streamed) system. The factor's SVD
/// yields the minimum-norm solution, singular values, condition number and
/// parameter standard errors without forming A^T A.
inline AlignmentSolution solve_factor(const LeastSquaresAccumulator::Factor &f,
                                      AlignmentModel model) {
  const int k = unknown_count(model);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(f.r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd s = svd.singularValues();
  std::vector<double> sv(s.data(), s.data() + s.size());

  const double smax = s(0);
  int null_dim = 0;
  for (int i = 0; i < k; ++i)
    if (!(s(i) > kRankTolerance * smax))
      ++null_dim;
  if (null_dim > 0) {
    const Eigen::MatrixXd null_vectors = svd.matrixV().rightCols(null_dim);
    const std::string cls = detail::classify_null_space(null_vectors, model);
    throw RankDeficientError("design matrix rank " + std::to_string(k - null_dim) + " < " +
                                 std::to_string(k) + " (relative tolerance 1e-8); confounded: " +
                                 cls,
                             std::move(sv), null_dim, cls);
  }

  const Eigen::VectorXd z =
      svd.matrixV() * (svd.matrixU().transpose() * f.c).cwiseQuotient(s);

  AlignmentSolution sol;
  sol.model = model;
  sol.n_points = static_cast<std::size_t>(f.rows / 3);
  sol.singular_values = std::move(sv);
  sol.condition_number = smax / s(k - 1);
  sol.rms_residual = f.residual_norm / std::sqrt(static_cast<double>(f.rows));

  const double dof = static_cast<double>(f.rows - k);
  const double sigma2 = dof > 0.0 ? f.residual_norm * f.residual_norm / dof : 0.0;
  const Eigen::MatrixXd vs = svd.matrixV() * s.cwiseInverse().asDiagonal();
  for (int i = 0; i < k; ++i)
    sol.standard_errors.push_back(std::sqrt(sigma2 * vs.row(i).squaredNorm()));

  int col = 0;
  if (model == AlignmentModel::TranslationOnly) {
    sol.r_eval_ref = RotationMatrix3::identity();
  } else {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        sol.r_eval_ref.m(i, j) = z(col++);
  }
  sol.y_body = {z(col), z(col + 1), z(col + 2)};
  col += 3;
  if (model == AlignmentModel::Full15)
    sol.y_eval = {z(col), z(col + 1), z(col + 2)};
  sol.r_orthonormalized = nearest_rotation(sol.r_eval_ref.m);

  if (sol.condition_number > kConditionWarning)
    sol.warnings.push_back("ill-conditioned design matrix: condition number " +
                           std::to_string(sol.condition_number) + " exceeds 1e6");
  if (sol.n_points < kRecommendedAlignmentPairs)
    sol.warnings.push_back("only " + std::to_string(sol.n_points) +
                           " pairs; at least 200 recommended");
  return sol;
}

inline AlignmentSolution solve_alignment(const Eigen::MatrixXd &a, const Eigen::VectorXd &b,
                                         AlignmentModel model = AlignmentModel::Full15) {
  if (a.cols() != unknown_count(model) || a.rows() != b.size() || a.rows() % 3 != 0)
    throw Error(ErrorKind::Domain, "system shape does not match the alignment model");
  require_pair_count(static_cast<std::size_t>(a.rows() / 3));
  LeastSquaresAccumulator acc(unknown_count(model));
  acc.add_rows(a, b);
  return solve_factor(acc.finish(), model);
}

inline AlignmentSolution solve_alignment(const LinearSystem &sys) {
  return solve_alignment(sys.a, sys.b, sys.model);
}

/// Streams pairs straight into the accumulator; equivalent to
/// solve_alignment(build_system(pairs)) without materializing A.
inline AlignmentSolution solve_alignment(std::span<const PairedEpoch> pairs,
                                         AlignmentModel model = AlignmentModel::Full15) {
  require_pair_count(pairs.size());
  const int k = unknown_count(model);
  LeastSquaresAccumulator acc(k);
  Eigen::Matrix<double, 3, Eigen::Dynamic> a3(3, k);
  Eigen::Vector3d b3;
  for (const PairedEpoch &p : pairs) {
    write_pair_rows(p, model, 0, a3, b3);
    auto rows = acc.reserve_rows3();
    rows.leftCols(k) = a3;
    rows.col(k) = b3;
  }
  return solve_factor(acc.finish(), model);
}

/// Smallest arc of the heading circle containing every pair's yaw [rad].
inline double heading_span(std::span<const PairedEpoch> pairs) {
  if (pairs.empty())
    return 0.0;
  std::vector<double> yaw;
  yaw.reserve(pairs.size());
  for (const PairedEpoch &p : pairs)
    yaw.push_back(wrap_pi(p.ref.attitude.yaw));
  std::sort(yaw.begin(), yaw.end());
  double largest_gap = yaw.front() + 2.0 * std::numbers::pi - yaw.back();
  for (std::size_t i = 1; i < yaw.size(); ++i)
    largest_gap = std::max(largest_gap, yaw[i] - yaw[i - 1]);
  return 2.0 * std::numbers::pi - largest_gap;
}

// =============================================================================
// Residuals
// =============================================================================

/// Projects an NED error into body axes with the transpose of the body-to-NED
/// attitude rotation.
inline ErrorSample project_to_body(double t, const LocalVector &epsilon,
                                   const EulerAttitude &attitude) {
  const LocalVector body = transpose_apply(euler_to_rotation(attitude), epsilon);
  ErrorSample e;
  e.t = t;
  e.epsilon_ned = epsilon;
  e.longitudinal = body.north;
  e.lateral = body.east;
  e.vertical = body.down;
  e.horizontal = std::hypot(e.lateral, e.longitudinal);
  return e;
}

/// eps_i = x_ref,i - (R x_eval,i + R_body,i y_body + y_eval), then projected
/// into the vehicle frame.
inline std::vector<ErrorSample> compute_residuals(std::span<const PairedEpoch> pairs,
                                                  const AlignmentSolution &sol,
                                                  RotationSource source = RotationSource::Raw) {
  const Eigen::Matrix3d r =
      source == RotationSource::Raw ? sol.r_eval_ref.m : sol.r_orthonormalized.m;
  const Eigen::Vector3d y_body = sol.y_body.vec();
  const Eigen::Vector3d y_eval = sol.y_eval.vec();
  std::vector<ErrorSample> out;
  out.reserve(pairs.size());
  for (const PairedEpoch &p : pairs) {
    const Eigen::Matrix3d r_body = euler_to_rotation(p.ref.attitude).m;
    const Eigen::Vector3d eps =
        p.ref_ned.vec() - (r * p.eval_ned.vec() + r_body * y_body + y_eval);
    out.push_back(project_to_body(p.t, LocalVector::from(eps), p.ref.attitude));
  }
  return out;
}

// =============================================================================
// Accuracy table
// =============================================================================

struct ErrorTable {
  std::array<double, 3> percentiles = kReportPercentiles;
  std::array<double, 3> lateral{};
  std::array<double, 3> longitudinal{};
  std::array<double, 3> horizontal{};
  std::array<double, 3> vertical{};
  std::size_t n = 0;
};

/// Percentiles of |lateral|, |longitudinal|, horizontal and |vertical|.
inline ErrorTable error_summary(std::span<const ErrorSample> samples) {
  if (samples.empty())
    throw Error(ErrorKind::EmptyReport, "error summary needs at least one sample");
  std::vector<double> lat, lon, hor, ver;
  lat.reserve(samples.size());
  lon.reserve(samples.size());
  hor.reserve(samples.size());
  ver.reserve(samples.size());
  for (const ErrorSample &s : samples) {
    lat.push_back(std::abs(s.lateral));
    lon.push_back(std::abs(s.longitudinal));
    hor.push_back(s.horizontal);
    ver.push_back(std::abs(s.vertical));
  }
  ErrorTable t;
  t.n = samples.size();
  const EmpiricalDistribution dl(std::move(lat)), dn(std::move(lon)), dh(std::move(hor)),
      dv(std::move(ver));
  for (std::size_t i = 0; i < t.percentiles.size(); ++i) {
    t.lateral[i] = percentile(dl, t.percentiles[i]);
    t.longitudinal[i] = percentile(dn, t.percentiles[i]);
    t.horizontal[i] = percentile(dh, t.percentiles[i]);
    t.vertical[i] = percentile(dv, t.percentiles[i]);
  }
  return t;
}

} // namespace gnssbench
