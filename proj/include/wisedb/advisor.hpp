#ifndef WISEDB_ADVISOR_HPP
#define WISEDB_ADVISOR_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "wisedb/catalog.hpp"
#include "wisedb/goal.hpp"
#include "wisedb/learn.hpp"
#include "wisedb/search.hpp"
#include "wisedb/walk.hpp"

namespace wisedb {

namespace detail {

// Bounded uniform draw via rejection; uniform_int_distribution is
// implementation-defined, this keeps sampled workloads stable everywhere.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                        std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

// Index-parallel map with deterministic output slots.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 0) workers = int(std::thread::hardware_concurrency());
  workers = std::max(1, std::min<int>(workers, int(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

// Uniform direct sampling of the query templates: N workloads of m queries
// each, i.i.d. across samples under the seed.
inline std::vector<Workload> sample_workloads(const TemplateCatalog& catalog, int n, int m,
                                              std::uint64_t seed) {
  if (catalog.num_templates() == 0) throw ValidationError("catalog has no templates");
  if (m < 1) throw ValidationError("workload size must be positive");
  std::vector<Workload> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(mix_seed(seed, std::uint64_t(i)));
    Workload w;
    w.reserve(std::size_t(m));
    for (int q = 0; q < m; ++q) {
      std::size_t t = detail::uniform_below(rng, catalog.num_templates());
      w.push_back(Query{catalog.templates()[t].id, q + 1, 0, 0});
    }
    out[std::size_t(i)] = std::move(w);
  }
  return out;
}

struct TrainingSpec {
  TemplateCatalog catalog;
  PerformanceGoal goal;
  int num_samples = 3000;       // N
  int queries_per_sample = 18;  // m
  std::uint64_t seed = 0;
  TreeParams tree;
  int cost_vector_queries = 1000;
  SearchLimits limits;
  int workers = 0;

  void validate() const {
    if (num_samples < 1) throw ValidationError("need at least one sample workload");
    if (queries_per_sample < 2) throw ValidationError("sample workloads need >= 2 queries");
    goal.validate();
  }
};

// A trained scheduling strategy: the decision tree, its goal, the
// per-template average cost vector, and the training-time material
// (sample workloads + recorded search costs) that makes adaptation cheap.
struct Strategy {
  DecisionTree tree;
  PerformanceGoal goal;
  std::uint64_t catalog_fingerprint = 0;
  std::vector<int> template_ids;
  std::vector<Money> cost_vector;  // parallel to template_ids
  std::vector<Workload> retained_samples;
  std::vector<RecordedCosts> recorded;  // parallel to retained_samples; rebuildable
  TreeParams tree_params;
  std::uint64_t seed = 0;
  int cost_vector_queries = 1000;
  SearchLimits limits;
  int workers = 0;

  void check_catalog(const TemplateCatalog& catalog) const {
    if (catalog.fingerprint() != catalog_fingerprint)
      throw ValidationError("strategy was trained for a different catalog");
  }
};

namespace detail {

// Average cost of each template over one large tree-scheduled workload.
// Every VM's startup+processing+penalty is attributed to its queries
// pro-rata by effective latency; workload-level penalties are first
// apportioned to VMs by their share of total effective latency.
inline std::vector<Money> compute_cost_vector(const DecisionTree& tree,
                                              const PerformanceGoal& goal,
                                              const TemplateCatalog& catalog, int queries,
                                              std::uint64_t seed) {
  std::vector<Money> sums(catalog.num_templates(), 0);
  std::vector<std::size_t> counts(catalog.num_templates(), 0);
  Workload w = sample_workloads(catalog, 1, queries, mix_seed(seed, 0xC057u)).front();
  Schedule s = tree_walk_schedule(tree, goal, catalog, w);

  Money global_penalty = penalty(goal, s, catalog);
  bool per_query_metric = is_monotonic(goal);
  Seconds total_eff = 0;
  for (const auto& vm : s.vms)
    for (const auto& q : vm.queue) total_eff += catalog.effective_latency(q, vm.vm_type_id);

  auto times = completion_times(s, catalog);
  for (const auto& vm : s.vms) {
    const VMType& type = catalog.vm_type_by_id(vm.vm_type_id);
    Seconds vm_eff = 0;
    for (const auto& q : vm.queue) vm_eff += catalog.effective_latency(q, vm.vm_type_id);
    if (vm_eff <= 0) continue;

    Money vm_cost = type.startup_cost + type.rent_rate * vm_eff;
    if (per_query_metric) {
      for (const auto& q : vm.queue) {
        Seconds f = times.at(q.instance_id).finish;
        Seconds d = goal.kind == MetricKind::kMaxLatency
                        ? goal.deadline
                        : goal.per_query_deadline(q.template_id);
        vm_cost += goal.penalty_rate * std::max(0.0, f - d);
      }
    } else if (total_eff > 0) {
      vm_cost += global_penalty * (vm_eff / total_eff);
    }
    for (const auto& q : vm.queue) {
      Seconds eff = catalog.effective_latency(q, vm.vm_type_id);
      int t = catalog.template_index(q.template_id);
      sums[t] += vm_cost * (eff / vm_eff);
      counts[t]++;
    }
  }
  std::vector<Money> out(catalog.num_templates(), 0);
  for (std::size_t t = 0; t < out.size(); ++t)
    if (counts[t] > 0) out[t] = sums[t] / double(counts[t]);
  return out;
}

}  // namespace detail

// The offline pipeline: sample workloads, search each one to optimality,
// harvest (features, decision) pairs, fit the tree, and price templates.
inline Strategy train(const TrainingSpec& spec) {
  spec.validate();
  const TemplateCatalog& catalog = spec.catalog;
  HeuristicKind kind = is_monotonic(spec.goal) ? HeuristicKind::kMonotonic : HeuristicKind::kNull;

  std::vector<Workload> workloads =
      sample_workloads(catalog, spec.num_samples, spec.queries_per_sample, spec.seed);
  std::vector<SearchResult> results(workloads.size());
  std::vector<RecordedCosts> recorded(workloads.size());
  detail::parallel_for(workloads.size(), spec.workers, [&](std::size_t i) {
    try {
      results[i] = astar(workloads[i], catalog, spec.goal, kind, spec.limits, nullptr, nullptr,
                         &recorded[i]);
    } catch (const ResourceCapError& e) {
      throw ResourceCapError("sample " + std::to_string(i) + ": " + e.what());
    }
  });

  std::vector<TrainingSample> samples;
  for (const auto& r : results) {
    auto harvested = harvest(r.path, catalog, spec.goal);
    samples.insert(samples.end(), harvested.begin(), harvested.end());
  }

  Strategy out;
  TreeParams tp = spec.tree;
  if (tp.seed == 0) tp.seed = spec.seed;
  out.tree = DecisionTree::fit(samples, tp);
  out.goal = spec.goal;
  out.catalog_fingerprint = catalog.fingerprint();
  for (const auto& t : catalog.templates()) out.template_ids.push_back(t.id);
  out.cost_vector = detail::compute_cost_vector(out.tree, spec.goal, catalog,
                                                spec.cost_vector_queries, spec.seed);
  out.retained_samples = std::move(workloads);
  out.recorded = std::move(recorded);
  out.tree_params = tp;
  out.seed = spec.seed;
  out.cost_vector_queries = spec.cost_vector_queries;
  out.limits = spec.limits;
  out.workers = spec.workers;
  return out;
}

// Re-runs the base searches to repopulate recorded costs (they are not part
// of the serialized bundle).
inline void ensure_recorded_costs(Strategy& strategy, const TemplateCatalog& catalog) {
  if (strategy.recorded.size() == strategy.retained_samples.size()) return;
  strategy.check_catalog(catalog);
  HeuristicKind kind =
      is_monotonic(strategy.goal) ? HeuristicKind::kMonotonic : HeuristicKind::kNull;
  strategy.recorded.assign(strategy.retained_samples.size(), RecordedCosts{});
  detail::parallel_for(strategy.retained_samples.size(), strategy.workers, [&](std::size_t i) {
    astar(strategy.retained_samples[i], catalog, strategy.goal, kind, strategy.limits, nullptr,
          nullptr, &strategy.recorded[i]);
  });
}

// Adapts a trained strategy to a strictly tighter goal of the same variant
// by re-searching the retained sample graphs with reweighted edges and the
// adaptive heuristic, then refitting the tree.
inline Strategy adapt(const Strategy& strategy, const TemplateCatalog& catalog,
                      const PerformanceGoal& tighter) {
  strategy.check_catalog(catalog);
  if (tighter.kind != strategy.goal.kind)
    throw ValidationError("adapt requires the same metric variant");
  if (same_goal(tighter, strategy.goal)) return strategy;
  if (!is_tighter_or_equal(tighter, strategy.goal))
    throw ValidationError("adapt only tightens; train a looser base first");

  Strategy base = strategy;
  ensure_recorded_costs(base, catalog);

  std::vector<SearchResult> results(base.retained_samples.size());
  std::vector<RecordedCosts> recorded(base.retained_samples.size());
  detail::parallel_for(base.retained_samples.size(), base.workers, [&](std::size_t i) {
    results[i] = astar(base.retained_samples[i], catalog, tighter, HeuristicKind::kAdaptive,
                       base.limits, &base.recorded[i], &base.goal, &recorded[i]);
  });

  std::vector<TrainingSample> samples;
  for (const auto& r : results) {
    auto harvested = harvest(r.path, catalog, tighter);
    samples.insert(samples.end(), harvested.begin(), harvested.end());
  }

  Strategy out = std::move(base);
  out.goal = tighter;
  out.tree = DecisionTree::fit(samples, out.tree_params);
  out.recorded = std::move(recorded);
  out.cost_vector = detail::compute_cost_vector(out.tree, tighter, catalog,
                                                out.cost_vector_queries, out.seed);
  return out;
}

// 1-D earth mover's distance between two cost vectors over the template
// axis: both are normalized to unit mass, ground distance is one per
// template slot.
inline double emd(const std::vector<Money>& a, const std::vector<Money>& b) {
  if (a.size() != b.size()) throw ValidationError("EMD requires equal-length vectors");
  double sa = 0, sb = 0;
  for (double x : a) {
    if (x < 0) throw ValidationError("EMD requires nonnegative entries");
    sa += x;
  }
  for (double x : b) {
    if (x < 0) throw ValidationError("EMD requires nonnegative entries");
    sb += x;
  }
  if (sa == 0 || sb == 0) return 0;
  double carry = 0, dist = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    carry += a[i] / sa - b[i] / sb;
    dist += std::abs(carry);
  }
  return dist;
}

// Expected cost of a workload given per-template instance counts.
inline Money estimate_cost(const Strategy& strategy, const std::map<int, int>& counts) {
  Money total = 0;
  for (const auto& [tpl, count] : counts) {
    if (count < 0) throw ValidationError("negative template count");
    auto it = std::find(strategy.template_ids.begin(), strategy.template_ids.end(), tpl);
    if (it == strategy.template_ids.end())
      throw ValidationError("unknown template " + std::to_string(tpl));
    total += double(count) * strategy.cost_vector[it - strategy.template_ids.begin()];
  }
  return total;
}

namespace detail {

// The formula t + (g - t) * (1 - p); negative p loosens, used only for
// ladder construction.
inline PerformanceGoal ladder_goal(const PerformanceGoal& goal, double p, Seconds strictest) {
  PerformanceGoal out = goal;
  auto squeeze = [&](Seconds g) { return strictest + (g - strictest) * (1 - p); };
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

}  // namespace detail

// Builds a ladder of n_tiers goals (loosest to strictest, the user goal as
// the median), trains the median fully, adapts outward, and prunes tiers by
// smallest adjacent EMD until k strategies remain.
inline std::vector<Strategy> recommend(const TrainingSpec& spec, int n_tiers, int k,
                                       Seconds strictest) {
  if (k < 1) throw ValidationError("need at least one tier");
  if (k > n_tiers) throw ValidationError("cannot keep more tiers than generated");
  spec.validate();

  const int mid = (n_tiers - 1) / 2;
  std::vector<PerformanceGoal> goals(static_cast<std::size_t>(n_tiers));
  for (int i = 0; i < n_tiers; ++i) {
    double p = i == mid ? 0.0
               : i > mid ? double(i - mid) / double(n_tiers - mid)
                         : double(i - mid) / double(mid + 1);
    goals[std::size_t(i)] = detail::ladder_goal(spec.goal, p, strictest);
  }

  std::vector<Strategy> tiers(static_cast<std::size_t>(n_tiers));
  TrainingSpec median_spec = spec;
  tiers[std::size_t(mid)] = train(median_spec);
  for (int i = mid + 1; i < n_tiers; ++i)
    tiers[std::size_t(i)] = adapt(tiers[std::size_t(i - 1)], spec.catalog, goals[std::size_t(i)]);
  if (mid > 0) {
    TrainingSpec loosest_spec = spec;
    loosest_spec.goal = goals[0];
    tiers[0] = train(loosest_spec);
    for (int i = 1; i < mid; ++i)
      tiers[std::size_t(i)] = adapt(tiers[std::size_t(i - 1)], spec.catalog, goals[std::size_t(i)]);
  }

  std::vector<std::size_t> keep(tiers.size());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
  while (keep.size() > std::size_t(k)) {
    std::size_t drop = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < keep.size(); ++i) {
      double d = emd(tiers[keep[i]].cost_vector, tiers[keep[i + 1]].cost_vector);
      if (d < best) {
        best = d;
        drop = i + 1;  // the stricter of the closest pair goes
      }
    }
    keep.erase(keep.begin() + drop);
  }

  std::vector<Strategy> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(std::move(tiers[i]));
  return out;
}

}  // namespace wisedb

#endif  // WISEDB_ADVISOR_HPP
