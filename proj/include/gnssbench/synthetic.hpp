#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "gnssbench/align.hpp"
#include "gnssbench/epochs.hpp"
#include "gnssbench/geodesy.hpp"
#include "gnssbench/stats.hpp"
#include "gnssbench/sync.hpp"

namespace gnssbench::synthetic {

/// Ground-truth transform used by the forward model
/// x_ref = R x_eval + R_body y_body + y_eval.
struct Truth {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d y_body = Eigen::Vector3d::Zero();
  Eigen::Vector3d y_eval = Eigen::Vector3d::Zero();

  Eigen::Matrix<double, 15, 1> parameters() const {
    Eigen::Matrix<double, 15, 1> z;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        z(3 * i + j) = rotation(i, j);
    z.segment<3>(9) = y_body;
    z.segment<3>(12) = y_eval;
    return z;
  }
};

/// Random truth: rotation from Euler angles within +-max_rotation_deg,
/// offsets with every component in +-max_offset/sqrt(3) (norm <= max_offset).
inline Truth random_truth(std::mt19937_64 &rng, double max_rotation_deg = 5.0,
                          double max_offset = 10.0) {
  std::uniform_real_distribution<double> ang(-deg_to_rad(max_rotation_deg),
                                             deg_to_rad(max_rotation_deg));
  const double c = max_offset / std::sqrt(3.0);
  std::uniform_real_distribution<double> off(-c, c);
  Truth t;
  t.rotation = euler_to_rotation({ang(rng), ang(rng), ang(rng)}).m;
  t.y_body = {off(rng), off(rng), off(rng)};
  t.y_eval = {off(rng), off(rng), off(rng)};
  return t;
}

struct RouteConfig {
  std::size_t n = 1000;
  double rate_hz = 10.0;
  double speed = 15.0;              // m/s
  double heading_start_deg = -30.0;
  double heading_span_deg = 180.0;  // total heading sweep along the route
  bool constant_attitude = false;   // freezes attitude; positions still curve
  double altitude_amplitude = 20.0; // m, keeps eval positions three-dimensional
  double noise_sigma = 0.0;         // isotropic noise on the reference position
  GeodeticPosition anchor{37.6, -122.4, 12.0};
  double start_time = 1530000000.0;
};

/// One synthetic epoch in the local frame.
struct RouteSample {
  double t = 0.0;
  Eigen::Vector3d ref_ned;
  Eigen::Vector3d eval_ned;
  EulerAttitude attitude;
};

/// Curving, undulating drive. Heading sweeps linearly through the configured
/// span with a small wiggle; pitch and roll oscillate so the lever-arm down
/// component stays separable from the global offset.
inline std::vector<RouteSample> generate_route(const RouteConfig &cfg, const Truth &truth,
                                               std::mt19937_64 &rng) {
  std::vector<RouteSample> out;
  out.reserve(cfg.n);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma > 0.0 ? cfg.noise_sigma : 1.0);
  const double dt = 1.0 / cfg.rate_hz;
  const double n = static_cast<double>(std::max<std::size_t>(cfg.n, 2) - 1);
  Eigen::Vector3d pos = Eigen::Vector3d::Zero();
  const EulerAttitude frozen{deg_to_rad(cfg.heading_start_deg + 20.0), deg_to_rad(1.5),
                             deg_to_rad(-2.0)};
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const double u = static_cast<double>(i) / n;
    const double heading =
        deg_to_rad(cfg.heading_start_deg + cfg.heading_span_deg * u) + 0.15 * std::sin(12.0 * u);
    const double track_heading =
        deg_to_rad(cfg.heading_start_deg + 120.0 * u) + 0.3 * std::sin(9.0 * u);
    const double course = cfg.constant_attitude ? track_heading : heading;
    if (i > 0) {
      pos.x() += cfg.speed * dt * std::cos(course);
      pos.y() += cfg.speed * dt * std::sin(course);
    }
    pos.z() = -cfg.altitude_amplitude * std::sin(2.0 * std::numbers::pi * 1.7 * u);

    RouteSample s;
    s.t = cfg.start_time + static_cast<double>(i) * dt;
    s.attitude = cfg.constant_attitude
                     ? frozen
                     : EulerAttitude{wrap_pi(heading),
                                     deg_to_rad(4.0) * std::sin(2.0 * std::numbers::pi * 3.1 * u),
                                     deg_to_rad(3.0) * std::sin(2.0 * std::numbers::pi * 5.3 * u)};
    s.ref_ned = pos;
    const Eigen::Matrix3d r_body = euler_to_rotation(s.attitude).m;
    s.eval_ned = truth.rotation.transpose() * (pos - r_body * truth.y_body - truth.y_eval);
    // The first sample anchors the local frame, so it stays noise-free.
    if (cfg.noise_sigma > 0.0 && i > 0)
      s.ref_ned += Eigen::Vector3d(noise(rng), noise(rng), noise(rng));
    out.push_back(s);
  }
  return out;
}

/// Paired epochs straight from the route, bypassing files.
inline std::vector<PairedEpoch> to_pairs(const std::vector<RouteSample> &route) {
  std::vector<PairedEpoch> pairs;
  pairs.reserve(route.size());
  for (const RouteSample &s : route) {
    PairedEpoch p;
    p.t = s.t;
    p.ref.t = s.t;
    p.ref.attitude = s.attitude;
    p.ref.sigma_h = 0.02;
    p.ref.mode = PositionMode::RtkFixed;
    p.ref.num_sats = 14;
    p.eval.t = s.t;
    p.eval.position_valid = true;
    p.eval.fix_quality = 1;
    p.eval.num_sats = 16;
    p.eval.hdop = 0.7;
    p.ref_ned = LocalVector::from(s.ref_ned);
    p.eval_ned = LocalVector::from(s.eval_ned);
    pairs.push_back(p);
  }
  return pairs;
}

// =============================================================================
// Receiver metadata generators
// =============================================================================

/// Categorical mode draw with the given marginals (indexed like kAllModes).
class ModeSampler {
public:
  explicit ModeSampler(const ModeFractions &weights)
      : dist_(weights.begin(), weights.end()) {}
  PositionMode operator()(std::mt19937_64 &rng) { return kAllModes[dist_(rng)]; }

private:
  std::discrete_distribution<std::size_t> dist_;
};

/// Correction-age draw with cumulative shares below 2, 10 and 120 s; the
/// remainder is stale, or absent with probability `absent`.
struct CorrectionAgeConfig {
  double below_2 = 0.960;
  double below_10 = 0.973;
  double below_120 = 0.983;
  double absent = 0.0; // share of the stale tail with no age at all
};

inline std::optional<double> sample_correction_age(const CorrectionAgeConfig &c,
                                                   std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(rng);
  if (x < c.below_2)
    return 2.0 * u(rng);
  if (x < c.below_10)
    return 2.0 + 8.0 * u(rng);
  if (x < c.below_120)
    return 10.0 + 110.0 * u(rng);
  if (u(rng) < c.absent)
    return std::nullopt;
  return 120.0 + 600.0 * u(rng);
}

/// Reported sigma_h typical of each mode.
inline double sigma_for_mode(PositionMode m) {
  switch (m) {
  case PositionMode::RtkFixed: return 0.02;
  case PositionMode::RtkFloat: return 0.3;
  case PositionMode::DiffCode: return 0.8;
  case PositionMode::Sps: return 2.0;
  case PositionMode::None: return 10.0;
  }
  return 10.0;
}

inline int gga_quality_for_mode(PositionMode m) {
  switch (m) {
  case PositionMode::RtkFixed: return 4;
  case PositionMode::RtkFloat: return 5;
  case PositionMode::DiffCode: return 2;
  case PositionMode::Sps: return 1;
  case PositionMode::None: return 0;
  }
  return 0;
}

struct FixtureConfig {
  RouteConfig route;
  std::optional<ModeFractions> ref_modes; // all RtkFixed when unset
  std::optional<CorrectionAgeConfig> ref_ages;
  std::uint64_t seed = 1;
};

struct Fixture {
  Truth truth;
  std::vector<RefEpoch> refs;
  std::vector<EvalEpoch> evals;
  LocalFrame frame{GeodeticPosition{}};
  std::vector<RouteSample> route;
};

/// Complete reference/eval epoch streams for the route, geodetic positions
/// derived through the anchor frame.
inline Fixture make_fixture(const FixtureConfig &cfg, std::optional<Truth> truth = {}) {
  std::mt19937_64 rng(cfg.seed);
  Fixture fx;
  fx.truth = truth ? *truth : random_truth(rng);
  fx.frame = LocalFrame(cfg.route.anchor);
  fx.route = generate_route(cfg.route, fx.truth, rng);

  std::optional<ModeSampler> modes;
  if (cfg.ref_modes)
    modes.emplace(*cfg.ref_modes);
  std::uniform_int_distribution<int> ref_sats(4, 14), eval_sats(10, 22);
  std::uniform_real_distribution<double> hdop(0.5, 2.5);

  fx.refs.reserve(fx.route.size());
  fx.evals.reserve(fx.route.size());
  for (const RouteSample &s : fx.route) {
    RefEpoch r;
    r.t = s.t;
    r.position = fx.frame.to_geodetic(LocalVector::from(s.ref_ned));
    r.attitude = s.attitude;
    r.mode = modes ? (*modes)(rng) : PositionMode::RtkFixed;
    r.sigma_h = sigma_for_mode(r.mode);
    r.num_sats = ref_sats(rng);
    r.hdop = hdop(rng);
    r.corr_age = cfg.ref_ages ? sample_correction_age(*cfg.ref_ages, rng)
                              : std::optional<double>(1.0);
    fx.refs.push_back(r);

    EvalEpoch e;
    e.t = s.t;
    e.position = fx.frame.to_geodetic(LocalVector::from(s.eval_ned));
    e.position_valid = true;
    e.num_sats = eval_sats(rng);
    e.hdop = std::round(hdop(rng) * 10.0) / 10.0;
    e.fix_quality = 1;
    fx.evals.push_back(e);
  }
  return fx;
}

/// |N(0, sigma^2)| draws, for half-normal accuracy fixtures.
inline std::vector<double> half_normal_samples(std::size_t n, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<double> out(n);
  for (double &v : out)
    v = std::abs(g(rng));
  return out;
}

} // namespace gnssbench::synthetic
