#ifndef WISEDB_GOAL_HPP
#define WISEDB_GOAL_HPP

#include <map>
#include <string>

#include "wisedb/catalog.hpp"
#include "wisedb/common.hpp"

namespace wisedb {

enum class MetricKind { kMaxLatency, kPerQuery, kAverage, kPercentile };

inline const char* metric_name(MetricKind k) {
  switch (k) {
    case MetricKind::kMaxLatency: return "max_latency";
    case MetricKind::kPerQuery: return "per_query";
    case MetricKind::kAverage: return "average";
    case MetricKind::kPercentile: return "percentile";
  }
  return "?";
}

// One of the four SLA metric variants R plus the violation fee.
// Only the fields of the active variant are meaningful:
//   kMaxLatency:  deadline
//   kPerQuery:    per_template_deadline
//   kAverage:     target
//   kPercentile:  fraction (y) and deadline (x)
struct PerformanceGoal {
  MetricKind kind = MetricKind::kMaxLatency;
  Money penalty_rate = 0;  // dollars per second of violation
  Seconds deadline = 0;
  Seconds target = 0;
  double fraction = 1.0;
  std::map<int, Seconds> per_template_deadline;

  void validate() const {
    if (penalty_rate < 0) throw ValidationError("penalty rate must be >= 0");
    switch (kind) {
      case MetricKind::kMaxLatency:
        if (!(deadline > 0)) throw ValidationError("max-latency deadline must be positive");
        break;
      case MetricKind::kPerQuery:
        if (per_template_deadline.empty())
          throw ValidationError("per-query goal needs per-template deadlines");
        for (auto& [t, d] : per_template_deadline) {
          (void)t;
          if (!(d > 0)) throw ValidationError("per-query deadline must be positive");
        }
        break;
      case MetricKind::kAverage:
        if (!(target > 0)) throw ValidationError("average target must be positive");
        break;
      case MetricKind::kPercentile:
        if (!(fraction > 0 && fraction <= 1))
          throw ValidationError("percentile fraction must be in (0,1]");
        if (!(deadline > 0)) throw ValidationError("percentile deadline must be positive");
        break;
    }
  }

  Seconds per_query_deadline(int template_id) const {
    auto it = per_template_deadline.find(template_id);
    if (it == per_template_deadline.end())
      throw ValidationError("no per-query deadline for template " + std::to_string(template_id));
    return it->second;
  }
};

// Monotonic metrics: appending a query to the most recent VM can never
// decrease the incurred penalty. Only these admit the Eq.-3 heuristic.
inline bool is_monotonic(const PerformanceGoal& g) {
  return g.kind == MetricKind::kMaxLatency || g.kind == MetricKind::kPerQuery;
}

// Linearly shiftable: delaying all starts by n is equivalent to tightening
// every deadline by n.
inline bool is_linearly_shiftable(const PerformanceGoal& g) {
  return g.kind == MetricKind::kMaxLatency || g.kind == MetricKind::kPerQuery;
}

// Tightens each constraint g toward the strictest feasible value t:
// g' = t + (g - t) * (1 - p). p=0 keeps the goal, p=1 lands on t.
inline PerformanceGoal tighten_goal(const PerformanceGoal& goal, double p, Seconds strictest) {
  if (!(p >= 0 && p <= 1)) throw ValidationError("tightening fraction must be in [0,1]");
  auto squeeze = [&](Seconds g) {
    if (strictest > g) throw ValidationError("strictest value exceeds current constraint");
    return strictest + (g - strictest) * (1 - p);
  };
  PerformanceGoal out = goal;
  switch (goal.kind) {
    case MetricKind::kMaxLatency: out.deadline = squeeze(goal.deadline); break;
    case MetricKind::kPerQuery:
      for (auto& [t, d] : out.per_template_deadline) {
        (void)t;
        d = squeeze(d);
      }
      break;
    case MetricKind::kAverage: out.target = squeeze(goal.target); break;
    case MetricKind::kPercentile: out.deadline = squeeze(goal.deadline); break;
  }
  return out;
}

// Subtracts n seconds from every deadline. Valid only for linearly
// shiftable metrics.
inline PerformanceGoal shift_goal(const PerformanceGoal& goal, Seconds n) {
  if (!is_linearly_shiftable(goal))
    throw ValidationError(std::string("goal of kind ") + metric_name(goal.kind) +
                          " is not linearly shiftable");
  if (n < 0) throw ValidationError("shift must be >= 0");
  PerformanceGoal out = goal;
  if (goal.kind == MetricKind::kMaxLatency) {
    out.deadline = goal.deadline - n;
  } else {
    for (auto& [t, d] : out.per_template_deadline) {
      (void)t;
      d -= n;
    }
  }
  return out;
}

// Advisory check used by adaptive modeling: same variant with every
// constraint at most as loose.
inline bool is_tighter_or_equal(const PerformanceGoal& tighter, const PerformanceGoal& base) {
  if (tighter.kind != base.kind) return false;
  switch (base.kind) {
    case MetricKind::kMaxLatency: return tighter.deadline <= base.deadline;
    case MetricKind::kAverage: return tighter.target <= base.target;
    case MetricKind::kPercentile:
      return tighter.fraction == base.fraction && tighter.deadline <= base.deadline;
    case MetricKind::kPerQuery: {
      if (tighter.per_template_deadline.size() != base.per_template_deadline.size()) return false;
      for (auto& [t, d] : base.per_template_deadline) {
        auto it = tighter.per_template_deadline.find(t);
        if (it == tighter.per_template_deadline.end() || it->second > d) return false;
      }
      return true;
    }
  }
  return false;
}

inline bool same_goal(const PerformanceGoal& a, const PerformanceGoal& b) {
  return a.kind == b.kind && a.penalty_rate == b.penalty_rate && a.deadline == b.deadline &&
         a.target == b.target && a.fraction == b.fraction &&
         a.per_template_deadline == b.per_template_deadline;
}

}  // namespace wisedb

#endif  // WISEDB_GOAL_HPP
