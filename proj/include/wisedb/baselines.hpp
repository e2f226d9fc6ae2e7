#ifndef WISEDB_BASELINES_HPP
#define WISEDB_BASELINES_HPP

#include <algorithm>
#include <deque>
#include <vector>

#include "wisedb/catalog.hpp"
#include "wisedb/goal.hpp"
#include "wisedb/schedule.hpp"

namespace wisedb {
namespace detail {

// Shared first-fit machinery: place each query on the first VM (in
// provisioning order) where it adds no penalty, else rent a new VM of the
// first supporting type. The penalty check for the workload-level metrics
// (average, percentile) is "does not increase the current penalty".
class FirstFitPlacer {
 public:
  FirstFitPlacer(const TemplateCatalog& catalog, const PerformanceGoal& goal)
      : catalog_(&catalog), goal_(&goal) {}

  void place(const Query& q) {
    for (std::size_t i = 0; i < schedule_.vms.size(); ++i) {
      if (!catalog_->supports(schedule_.vms[i].vm_type_id, q.template_id)) continue;
      if (penalty_delta(int(i), q) <= 1e-12) {
        append(int(i), q);
        return;
      }
    }
    // No penalty-free slot: a fresh VM of the first supporting type (the
    // minimal-violation fallback when even a bare run misses its deadline).
    for (const VMType& type : catalog_->vm_types()) {
      if (!catalog_->supports(type.id, q.template_id)) continue;
      schedule_.vms.push_back(VMInstance{type.id, {}});
      busy_.push_back(0);
      append(int(schedule_.vms.size()) - 1, q);
      return;
    }
    throw ValidationError("template " + std::to_string(q.template_id) +
                          " not supported by any VM type");
  }

  Schedule take() { return std::move(schedule_); }

  // Latency used for the FFD/FFI sort: first supporting type in id order.
  Seconds sort_latency(const Query& q) const {
    for (const VMType& type : catalog_->vm_types())
      if (catalog_->supports(type.id, q.template_id))
        return catalog_->effective_latency(q, type.id);
    throw ValidationError("template " + std::to_string(q.template_id) +
                          " not supported by any VM type");
  }

 private:
  Money penalty_delta(int vm, const Query& q) const {
    Seconds eff = catalog_->effective_latency(q, schedule_.vms[vm].vm_type_id);
    Seconds f = busy_[vm] + eff;
    const Money rate = goal_->penalty_rate;
    switch (goal_->kind) {
      case MetricKind::kMaxLatency:
        return rate * std::max(0.0, f - goal_->deadline);
      case MetricKind::kPerQuery:
        return rate * std::max(0.0, f - goal_->per_query_deadline(q.template_id));
      case MetricKind::kAverage:
        return rate * (average_excess(*goal_, finish_sum_ + f, n_ + 1) -
                       average_excess(*goal_, finish_sum_, n_));
      case MetricKind::kPercentile:
        return rate * (percentile_excess(*goal_, sorted_finishes_, n_, f) -
                       percentile_excess(*goal_, sorted_finishes_, n_, -1));
    }
    return 0;
  }

  void append(int vm, const Query& q) {
    Seconds eff = catalog_->effective_latency(q, schedule_.vms[vm].vm_type_id);
    busy_[vm] += eff;
    Seconds f = busy_[vm];
    finish_sum_ += f;
    n_++;
    sorted_finishes_.insert(
        std::upper_bound(sorted_finishes_.begin(), sorted_finishes_.end(), f), f);
    schedule_.vms[vm].queue.push_back(q);
  }

  const TemplateCatalog* catalog_;
  const PerformanceGoal* goal_;
  Schedule schedule_;
  std::vector<Seconds> busy_;
  double finish_sum_ = 0;
  std::size_t n_ = 0;
  std::vector<Seconds> sorted_finishes_;
};

inline Workload sorted_by_latency(const Workload& w, const TemplateCatalog& catalog,
                                  const PerformanceGoal& goal, bool decreasing) {
  FirstFitPlacer placer(catalog, goal);
  Workload out = w;
  std::stable_sort(out.begin(), out.end(), [&](const Query& a, const Query& b) {
    Seconds la = placer.sort_latency(a), lb = placer.sort_latency(b);
    if (la != lb) return decreasing ? la > lb : la < lb;
    return a.instance_id < b.instance_id;
  });
  return out;
}

}  // namespace detail

// First-fit decreasing.
inline Schedule ffd(const Workload& w, const TemplateCatalog& catalog,
                    const PerformanceGoal& goal) {
  detail::FirstFitPlacer placer(catalog, goal);
  for (const Query& q : detail::sorted_by_latency(w, catalog, goal, true)) placer.place(q);
  return placer.take();
}

// First-fit increasing.
inline Schedule ffi(const Workload& w, const TemplateCatalog& catalog,
                    const PerformanceGoal& goal) {
  detail::FirstFitPlacer placer(catalog, goal);
  for (const Query& q : detail::sorted_by_latency(w, catalog, goal, false)) placer.place(q);
  return placer.take();
}

// Nine shortest remaining, then the largest remaining, repeated; built for
// percentile goals where the costliest queries should land in the allowed
// miss margin.
inline Schedule pack9(const Workload& w, const TemplateCatalog& catalog,
                      const PerformanceGoal& goal) {
  detail::FirstFitPlacer placer(catalog, goal);
  Workload asc = detail::sorted_by_latency(w, catalog, goal, false);
  std::deque<Query> left(asc.begin(), asc.end());
  while (!left.empty()) {
    for (int i = 0; i < 9 && !left.empty(); ++i) {
      placer.place(left.front());
      left.pop_front();
    }
    if (!left.empty()) {
      placer.place(left.back());
      left.pop_back();
    }
  }
  return placer.take();
}

}  // namespace wisedb

#endif  // WISEDB_BASELINES_HPP
