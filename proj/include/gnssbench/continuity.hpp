#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gnssbench/detail/text.hpp"
#include "gnssbench/epochs.hpp"
#include "gnssbench/error.hpp"

namespace gnssbench {

// =============================================================================
// Predicates
// =============================================================================

/// Per-epoch service condition. Absent inputs never satisfy a predicate.
struct Predicate {
  enum class Kind { MinSats, MaxHdop, ModeIn, MaxLateralError };

  Kind kind = Kind::MinSats;
  double threshold = 0.0;
  std::uint32_t mode_mask = 0; // bit i set => kAllModes[i] accepted

  static Predicate min_sats(int k) { return {Kind::MinSats, static_cast<double>(k), 0}; }
  static Predicate max_hdop(double x) { return {Kind::MaxHdop, x, 0}; }
  static Predicate max_lateral_error(double m) { return {Kind::MaxLateralError, m, 0}; }
  static Predicate mode_in(std::initializer_list<PositionMode> modes) {
    Predicate p{Kind::ModeIn, 0.0, 0};
    for (PositionMode m : modes)
      p.mode_mask |= 1u << static_cast<unsigned>(m);
    return p;
  }

  bool operator()(const ServiceEpoch &e) const {
    switch (kind) {
    case Kind::MinSats:
      return e.num_sats && *e.num_sats >= threshold;
    case Kind::MaxHdop:
      return e.hdop && *e.hdop <= threshold;
    case Kind::ModeIn:
      return e.mode && (mode_mask >> static_cast<unsigned>(*e.mode) & 1u);
    case Kind::MaxLateralError:
      return e.lateral_error && std::abs(*e.lateral_error) < threshold;
    }
    return false;
  }

  std::string label() const {
    switch (kind) {
    case Kind::MinSats:
      return "sats>=" + std::to_string(static_cast<int>(threshold));
    case Kind::MaxHdop: {
      std::string s = "hdop<=";
      detail::append_double(s, threshold);
      return s;
    }
    case Kind::MaxLateralError: {
      std::string s = "lateral<";
      detail::append_double(s, threshold);
      return s;
    }
    case Kind::ModeIn: {
      std::string s = "mode_in{";
      bool first = true;
      for (PositionMode m : kAllModes)
        if (mode_mask >> static_cast<unsigned>(m) & 1u) {
          s += first ? "" : "|";
          s += to_string(m);
          first = false;
        }
      return s + "}";
    }
    }
    return {};
  }
};

/// Satellite-count columns of the visibility continuity table.
inline std::vector<Predicate> satellite_predicates() {
  return {Predicate::min_sats(4), Predicate::min_sats(6), Predicate::min_sats(8),
          Predicate::min_sats(10), Predicate::min_sats(12)};
}

/// HDOP columns of the geometry continuity table.
inline std::vector<Predicate> hdop_predicates() {
  return {Predicate::max_hdop(0.6), Predicate::max_hdop(1.0), Predicate::max_hdop(1.5),
          Predicate::max_hdop(3.0), Predicate::max_hdop(5.0)};
}

/// Position-mode columns: each class accepts its own mode and every more
/// accurate one, so "Sps" means any GNSS fix.
inline std::vector<Predicate> mode_predicates() {
  using M = PositionMode;
  return {Predicate::mode_in({M::RtkFixed}), Predicate::mode_in({M::RtkFixed, M::RtkFloat}),
          Predicate::mode_in({M::RtkFixed, M::RtkFloat, M::DiffCode}),
          Predicate::mode_in({M::RtkFixed, M::RtkFloat, M::DiffCode, M::Sps})};
}

inline const std::vector<double> &default_windows() {
  static const std::vector<double> w = {4.0, 7.0, 15.0, 30.0};
  return w;
}

// =============================================================================
// Condition series
// =============================================================================

struct ConditionSeries {
  std::vector<double> timestamps;
  std::vector<bool> flags;
  double nominal_dt = 1.0;

  std::size_t size() const { return timestamps.size(); }
  bool empty() const { return timestamps.empty(); }
};

/// Lower median of consecutive timestamp differences; 1 s for fewer than two
/// samples.
inline double nominal_interval(std::span<const double> t) {
  if (t.size() < 2)
    return 1.0;
  std::vector<double> d(t.size() - 1);
  for (std::size_t i = 1; i < t.size(); ++i)
    d[i - 1] = t[i] - t[i - 1];
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>((d.size() - 1) / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

inline ConditionSeries make_series(std::vector<double> timestamps, std::vector<bool> flags) {
  if (timestamps.size() != flags.size())
    throw Error(ErrorKind::Domain, "condition series timestamps and flags differ in length");
  for (std::size_t i = 1; i < timestamps.size(); ++i)
    if (!(timestamps[i] > timestamps[i - 1]))
      throw Error(ErrorKind::Domain, "condition series timestamps must be strictly ascending");
  ConditionSeries s;
  s.nominal_dt = nominal_interval(timestamps);
  s.timestamps = std::move(timestamps);
  s.flags = std::move(flags);
  return s;
}

inline ConditionSeries make_condition(std::span<const ServiceEpoch> epochs,
                                      const Predicate &predicate) {
  std::vector<double> t;
  std::vector<bool> f;
  t.reserve(epochs.size());
  f.reserve(epochs.size());
  for (const ServiceEpoch &e : epochs) {
    t.push_back(e.t);
    f.push_back(predicate(e));
  }
  return make_series(std::move(t), std::move(f));
}

// =============================================================================
// Continuity loss
// =============================================================================

struct LossCounts {
  std::size_t trials = 0; // satisfied starts whose window fits in the record
  std::size_t losses = 0; // trials that saw a failure inside the window

  std::optional<double> probability() const {
    if (trials == 0)
      return std::nullopt;
    return static_cast<double>(losses) / static_cast<double>(trials);
  }
};

/// Sliding-origin estimator: every satisfied epoch i with t_i + window <=
/// t_last is a trial, lost when some epoch in (t_i, t_i + window] fails.
/// Linear time via the index of the next failing epoch.
inline LossCounts continuity_loss_counts(const ConditionSeries &s, double window) {
  if (!(window > 0.0))
    throw Error(ErrorKind::Domain, "continuity window must be positive");
  LossCounts c;
  const std::size_t n = s.size();
  if (n == 0)
    return c;
  const double t_last = s.timestamps.back();
  std::size_t next_false = n; // first failing index > i
  for (std::size_t i = n; i-- > 0;) {
    if (s.flags[i] && s.timestamps[i] + window <= t_last) {
      ++c.trials;
      if (next_false < n && s.timestamps[next_false] <= s.timestamps[i] + window)
        ++c.losses;
    }
    if (!s.flags[i])
      next_false = i;
  }
  return c;
}

inline std::optional<double> continuity_loss_probability(const ConditionSeries &s,
                                                         double window) {
  return continuity_loss_counts(s, window).probability();
}

struct ContinuityTable {
  std::vector<double> windows;
  std::vector<std::string> predicates;
  std::vector<std::vector<std::optional<double>>> cells; // [window][predicate]
};

inline ContinuityTable continuity_table(std::span<const ServiceEpoch> epochs,
                                        const std::vector<Predicate> &predicates,
                                        const std::vector<double> &windows = default_windows()) {
  ContinuityTable table;
  table.windows = windows;
  table.cells.assign(windows.size(), std::vector<std::optional<double>>(predicates.size()));
  for (std::size_t p = 0; p < predicates.size(); ++p) {
    table.predicates.push_back(predicates[p].label());
    const ConditionSeries s = make_condition(epochs, predicates[p]);
    for (std::size_t w = 0; w < windows.size(); ++w)
      table.cells[w][p] = continuity_loss_probability(s, windows[w]);
  }
  return table;
}

// =============================================================================
// Outages
// =============================================================================

struct OutageRecord {
  double t_start = 0.0;
  double t_end = 0.0;
  double duration = 0.0; // t_end - t_start + nominal_dt
};

struct DataGap {
  double t_before = 0.0;
  double t_after = 0.0;
  double excluded = 0.0; // gap length beyond one nominal interval
};

struct OutageAnalysis {
  std::vector<OutageRecord> outages;
  std::vector<DataGap> gaps;
  double outage_time = 0.0;
  double in_service_time = 0.0;
  double excluded_time = 0.0;
  double span = 0.0; // t_last - t_first + nominal_dt
};

inline constexpr double kGapFactor = 10.0;

/// Maximal failing runs. A sample interval longer than 10 nominal intervals
/// is missing data: it closes any open run and is accounted separately, so
/// log gaps never become outages. Runs of either polarity are charged
/// t_end - t_start + nominal_dt, which makes outage + in-service + excluded
/// equal the span for regularly sampled series.
inline OutageAnalysis extract_outages(const ConditionSeries &s) {
  OutageAnalysis out;
  const std::size_t n = s.size();
  if (n == 0)
    return out;
  const double dt = s.nominal_dt;
  out.span = s.timestamps.back() - s.timestamps.front() + dt;

  std::size_t run_start = 0;
  auto close_run = [&](std::size_t last) {
    const double duration = s.timestamps[last] - s.timestamps[run_start] + dt;
    if (s.flags[run_start]) {
      out.in_service_time += duration;
    } else {
      out.outages.push_back({s.timestamps[run_start], s.timestamps[last], duration});
      out.outage_time += duration;
    }
  };
  for (std::size_t i = 1; i < n; ++i) {
    const double gap = s.timestamps[i] - s.timestamps[i - 1];
    if (gap > kGapFactor * dt) {
      close_run(i - 1);
      out.gaps.push_back({s.timestamps[i - 1], s.timestamps[i], gap - dt});
      out.excluded_time += gap - dt;
      run_start = i;
    } else if (s.flags[i] != s.flags[i - 1]) {
      close_run(i - 1);
      run_start = i;
    }
  }
  close_run(n - 1);
  return out;
}

} // namespace gnssbench
