#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "gnssbench/epochs.hpp"
#include "gnssbench/error.hpp"
#include "gnssbench/geodesy.hpp"

namespace gnssbench {

/// An evaluation fix with the reference state interpolated to its timestamp.
/// Both positions are expressed in the run's shared NED frame.
struct PairedEpoch {
  double t = 0.0;
  RefEpoch ref;
  EvalEpoch eval;
  LocalVector ref_ned;
  LocalVector eval_ned; // zero when the eval fix has no valid position
};

struct SyncOptions {
  double max_gap = 0.5;
  // Timestamps closer than this are the same instant; covers the rounding
  // introduced by text formats carrying Unix time.
  double node_tolerance = 1e-6;
};

struct SyncResult {
  std::vector<PairedEpoch> pairs;
  std::size_t dropped_gap = 0;       // bracket wider than max_gap
  std::size_t dropped_outside = 0;   // outside the reference time span
  std::size_t dropped_duplicate = 0; // repeated eval timestamp
  std::vector<std::string> warnings;
};

/// Interpolates an angle along the shorter arc; result wrapped to [-pi, pi).
inline double interpolate_angle(double a0, double a1, double w) {
  return wrap_pi(a0 + w * wrap_pi(a1 - a0));
}

inline std::optional<GeodeticPosition> first_valid_position(const std::vector<RefEpoch> &refs) {
  for (const RefEpoch &r : refs)
    if (is_valid(r.position))
      return r.position;
  return std::nullopt;
}

/// Pairs each eval epoch with the reference interpolated to its time.
/// Position (in NED), sigma_h and attitude are interpolated linearly;
/// categorical metadata comes from the nearer bracket node.
inline SyncResult synchronize(const std::vector<RefEpoch> &refs,
                              const std::vector<EvalEpoch> &evals, const LocalFrame &frame,
                              const SyncOptions &options = {}) {
  if (!(options.max_gap > 0.0))
    throw Error(ErrorKind::Domain, "max_gap must be positive");
  SyncResult out;
  if (refs.empty() || evals.empty())
    return out;

  std::vector<LocalVector> ref_ned;
  ref_ned.reserve(refs.size());
  for (const RefEpoch &r : refs)
    ref_ned.push_back(frame.to_ned(r.position));

  out.pairs.reserve(evals.size());
  const double tol = options.node_tolerance;
  std::size_t k = 0; // first ref with t > eval.t - tol
  std::optional<double> last_t;
  for (const EvalEpoch &e : evals) {
    if (last_t && e.t <= *last_t) {
      ++out.dropped_duplicate;
      continue;
    }
    last_t = e.t;
    while (k < refs.size() && refs[k].t <= e.t - tol)
      ++k;
    if (k == refs.size()) {
      ++out.dropped_outside;
      continue;
    }

    PairedEpoch p;
    p.t = e.t;
    p.eval = e;
    if (e.position_valid)
      p.eval_ned = frame.to_ned(e.position);

    if (std::abs(refs[k].t - e.t) <= tol) {
      p.ref = refs[k];
      p.ref_ned = ref_ned[k];
      out.pairs.push_back(p);
      continue;
    }
    if (k == 0) {
      ++out.dropped_outside;
      continue;
    }
    const RefEpoch &r0 = refs[k - 1];
    const RefEpoch &r1 = refs[k];
    if (r1.t - r0.t > options.max_gap) {
      ++out.dropped_gap;
      continue;
    }
    const double w = (e.t - r0.t) / (r1.t - r0.t);
    const RefEpoch &nearer = w <= 0.5 ? r0 : r1;

    p.ref = nearer;
    p.ref.t = e.t;
    p.ref_ned = ref_ned[k - 1] + w * (ref_ned[k] - ref_ned[k - 1]);
    p.ref.position = {r0.position.latitude + w * (r1.position.latitude - r0.position.latitude),
                      r0.position.longitude +
                          w * wrap_pi(deg_to_rad(r1.position.longitude - r0.position.longitude)) *
                              (180.0 / std::numbers::pi),
                      r0.position.altitude + w * (r1.position.altitude - r0.position.altitude)};
    if (p.ref.position.longitude >= 180.0)
      p.ref.position.longitude -= 360.0;
    else if (p.ref.position.longitude < -180.0)
      p.ref.position.longitude += 360.0;
    p.ref.sigma_h = r0.sigma_h + w * (r1.sigma_h - r0.sigma_h);
    p.ref.attitude = {interpolate_angle(r0.attitude.yaw, r1.attitude.yaw, w),
                      r0.attitude.pitch + w * (r1.attitude.pitch - r0.attitude.pitch),
                      interpolate_angle(r0.attitude.roll, r1.attitude.roll, w)};
    out.pairs.push_back(p);
  }

  if (out.pairs.empty())
    out.warnings.push_back("no overlap between reference and evaluation time spans");
  return out;
}

/// Convenience overload anchoring NED at the first valid reference epoch.
inline SyncResult synchronize(const std::vector<RefEpoch> &refs,
                              const std::vector<EvalEpoch> &evals, double max_gap = 0.5) {
  const auto anchor = first_valid_position(refs);
  if (!anchor) {
    SyncResult out;
    if (!evals.empty())
      out.warnings.push_back("no valid reference position to anchor the local frame");
    return out;
  }
  return synchronize(refs, evals, LocalFrame(*anchor), SyncOptions{max_gap});
}

} // namespace gnssbench
