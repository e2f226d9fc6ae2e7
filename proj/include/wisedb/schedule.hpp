#ifndef WISEDB_SCHEDULE_HPP
#define WISEDB_SCHEDULE_HPP

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <vector>

#include "wisedb/catalog.hpp"
#include "wisedb/goal.hpp"

namespace wisedb {

// One rented VM: a type and the queue of queries it executes in order.
struct VMInstance {
  int vm_type_id = 0;
  std::vector<Query> queue;
};

// A (possibly partial) schedule: the list of VMs in provisioning order.
struct Schedule {
  std::vector<VMInstance> vms;

  std::size_t query_count() const {
    std::size_t n = 0;
    for (const auto& vm : vms) n += vm.queue.size();
    return n;
  }
};

inline void validate_schedule(const Schedule& s, const TemplateCatalog& catalog) {
  std::unordered_map<int, int> seen;
  for (const auto& vm : s.vms) {
    catalog.vm_type_by_id(vm.vm_type_id);  // throws on unknown type
    for (const auto& q : vm.queue) {
      if (!catalog.has_template(q.template_id))
        throw ValidationError("schedule references unknown template " +
                              std::to_string(q.template_id));
      if (!catalog.supports(vm.vm_type_id, q.template_id))
        throw ValidationError("VM type " + std::to_string(vm.vm_type_id) +
                              " does not support template " + std::to_string(q.template_id));
      if (q.extra_wait < 0) throw ValidationError("negative extra_wait");
      if (++seen[q.instance_id] > 1)
        throw ValidationError("query instance " + std::to_string(q.instance_id) +
                              " appears twice in schedule");
    }
  }
}

struct QueryTiming {
  Seconds start = 0;
  Seconds finish = 0;
};

// Serial execution per VM: the k-th query starts when its predecessors on
// the same VM are done. Effective latency (base latency + extra_wait) is
// what occupies the queue slot.
inline std::unordered_map<int, QueryTiming> completion_times(const Schedule& s,
                                                             const TemplateCatalog& catalog) {
  validate_schedule(s, catalog);
  std::unordered_map<int, QueryTiming> out;
  out.reserve(s.query_count());
  for (const auto& vm : s.vms) {
    Seconds t = 0;
    for (const auto& q : vm.queue) {
      Seconds l = catalog.effective_latency(q, vm.vm_type_id);
      out[q.instance_id] = QueryTiming{t, t + l};
      t += l;
    }
  }
  return out;
}

namespace detail {

// Excess of the (m+1)-th largest finish over the percentile deadline,
// optionally with one extra finish `added` (pass added < 0 for none).
// `sorted` is ascending with `n` entries; rank arithmetic, no copy.
inline Seconds percentile_excess(const PerformanceGoal& goal, const std::vector<Seconds>& sorted,
                                 std::size_t n, Seconds added) {
  std::size_t total = n + (added >= 0 ? 1 : 0);
  if (total == 0) return 0;
  std::size_t m = std::size_t(std::floor((1.0 - goal.fraction) * double(total) + 1e-9));
  if (m >= total) return 0;
  std::size_t idx = total - 1 - m;  // ascending index of descending rank m
  Seconds value;
  if (added < 0) {
    value = sorted[idx];
  } else {
    std::size_t pos = std::upper_bound(sorted.begin(), sorted.end(), added) - sorted.begin();
    if (idx < pos) value = sorted[idx];
    else if (idx == pos) value = added;
    else value = sorted[idx - 1];
  }
  return std::max(0.0, value - goal.deadline);
}

inline Seconds average_excess(const PerformanceGoal& goal, double finish_sum, std::size_t n) {
  if (n == 0) return 0;
  return std::max(0.0, finish_sum / double(n) - goal.target);
}

// Penalty from the finished-queries view of a schedule. `finishes` holds
// per-query finish times; `tpl` the matching template ids.
inline Money penalty_from_finishes(const PerformanceGoal& goal,
                                   const std::vector<Seconds>& finishes,
                                   const std::vector<int>& tpls) {
  const Money rate = goal.penalty_rate;
  switch (goal.kind) {
    case MetricKind::kMaxLatency: {
      Seconds violation = 0;
      for (Seconds f : finishes) violation += std::max(0.0, f - goal.deadline);
      return rate * violation;
    }
    case MetricKind::kPerQuery: {
      Seconds violation = 0;
      for (std::size_t i = 0; i < finishes.size(); ++i)
        violation += std::max(0.0, finishes[i] - goal.per_query_deadline(tpls[i]));
      return rate * violation;
    }
    case MetricKind::kAverage: {
      if (finishes.empty()) return 0;
      double sum = 0;
      for (Seconds f : finishes) sum += f;
      return rate * std::max(0.0, sum / double(finishes.size()) - goal.target);
    }
    case MetricKind::kPercentile: {
      if (finishes.empty()) return 0;
      // m misses are free; the (m+1)-th largest finish must make the
      // deadline x.
      std::size_t n = finishes.size();
      std::size_t m = std::size_t(std::floor((1.0 - goal.fraction) * double(n) + 1e-9));
      if (m >= n) return 0;
      std::vector<Seconds> sorted = finishes;
      std::sort(sorted.begin(), sorted.end(), std::greater<>());
      return rate * std::max(0.0, sorted[m] - goal.deadline);
    }
  }
  return 0;
}

}  // namespace detail

// Penalty(R, S): proportional to the violation period. Partial schedules
// are evaluated over their assigned queries only.
inline Money penalty(const PerformanceGoal& goal, const Schedule& s,
                     const TemplateCatalog& catalog) {
  auto times = completion_times(s, catalog);
  std::vector<Seconds> finishes;
  std::vector<int> tpls;
  finishes.reserve(times.size());
  tpls.reserve(times.size());
  for (const auto& vm : s.vms)
    for (const auto& q : vm.queue) {
      finishes.push_back(times.at(q.instance_id).finish);
      tpls.push_back(q.template_id);
    }
  return detail::penalty_from_finishes(goal, finishes, tpls);
}

struct CostBreakdown {
  Money provisioning = 0;
  Money processing = 0;
  Money penalty = 0;
  Money total = 0;
};

// Eq.-1 total: per-VM startup fees plus metered execution plus penalty.
inline CostBreakdown total_cost(const PerformanceGoal& goal, const Schedule& s,
                                const TemplateCatalog& catalog) {
  validate_schedule(s, catalog);
  CostBreakdown out;
  for (const auto& vm : s.vms) {
    const VMType& type = catalog.vm_type_by_id(vm.vm_type_id);
    out.provisioning += type.startup_cost;
    for (const auto& q : vm.queue)
      out.processing += type.rent_rate * catalog.effective_latency(q, vm.vm_type_id);
  }
  out.penalty = penalty(goal, s, catalog);
  out.total = out.provisioning + out.processing + out.penalty;
  return out;
}

}  // namespace wisedb

#endif  // WISEDB_SCHEDULE_HPP
