#ifndef WISEDB_SEARCH_HPP
#define WISEDB_SEARCH_HPP

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wisedb/baselines.hpp"
#include "wisedb/catalog.hpp"
#include "wisedb/goal.hpp"
#include "wisedb/graph.hpp"
#include "wisedb/schedule.hpp"

namespace wisedb {

enum class HeuristicKind { kMonotonic, kNull, kAdaptive };

// g-costs of every vertex closed by a finished search, plus the optimal
// goal cost. Fuel for the adaptive heuristic h'.
struct RecordedCosts {
  std::unordered_map<std::string, Money> g_by_key;
  Money goal_cost = 0;

  const Money* lookup(const std::string& key) const {
    auto it = g_by_key.find(key);
    return it == g_by_key.end() ? nullptr : &it->second;
  }
};

struct SearchLimits {
  std::size_t max_expanded = 5'000'000;
};

struct SearchStep {
  Vertex vertex;  // state before the action
  Action action;
};

struct SearchResult {
  Schedule schedule;
  std::vector<SearchStep> path;
  Money cost = 0;
  std::size_t expanded = 0;
};

// Eq. 3: cheapest conceivable processing cost of the unassigned queries,
// ignoring start-up fees and penalties.
inline Money h_monotonic(const Vertex& v, const TemplateCatalog& catalog) {
  Money h = 0;
  for (std::size_t t = 0; t < v.unassigned.size(); ++t)
    if (v.unassigned[t] > 0)
      h += double(v.unassigned[t]) *
           catalog.min_processing_cost(catalog.templates()[t].id);
  return h;
}

// h'(v): reuse of the previous search's g-costs. For monotonic goals the
// base heuristic still applies underneath; for the rest the recorded bound
// stands alone, floored at zero.
inline Money h_adaptive(const Vertex& v, const RecordedCosts& rec,
                        const TemplateCatalog& catalog, const PerformanceGoal& goal) {
  const Money* g = rec.lookup(v.key);
  if (is_monotonic(goal)) {
    Money base = h_monotonic(v, catalog);
    return g ? std::max(base, rec.goal_cost - *g) : base;
  }
  return g ? std::max(0.0, rec.goal_cost - *g) : 0.0;
}

namespace detail {

// Builds the canonical action sequence of a complete schedule (each VM
// provisioned, then its queue placed in order) and replays it through the
// graph, yielding a SearchResult whose path telescopes to the schedule.
inline SearchResult replay_schedule(const Schedule& s, const TemplateCatalog& catalog,
                                    const PerformanceGoal& goal, const Workload& workload) {
  SchedulingContext ctx(catalog, goal);
  Vertex v = ctx.start_vertex(workload);
  SearchResult out;
  for (const auto& vm : s.vms) {
    Action provision{Action::Kind::kProvision, vm.vm_type_id};
    out.path.push_back(SearchStep{v, provision});
    v = ctx.apply(v, provision).vertex;
    for (const auto& q : vm.queue) {
      Action place{Action::Kind::kPlace, q.template_id};
      out.path.push_back(SearchStep{v, place});
      v = ctx.apply(v, place).vertex;
    }
  }
  out.schedule = v.partial;
  out.cost = total_cost(goal, out.schedule, catalog).total;
  return out;
}

struct OpenEntry {
  Money f = 0;
  Money h = 0;
  std::uint64_t seq = 0;
  std::uint32_t node = 0;
  Money g = 0;
};
struct OpenOrder {
  bool operator()(const OpenEntry& a, const OpenEntry& b) const {
    if (a.f != b.f) return a.f > b.f;
    if (a.h != b.h) return a.h > b.h;
    return a.seq > b.seq;
  }
};

}  // namespace detail

// A* over the reduced scheduling graph.
//
// Monotonic goals (optionally with h') terminate at the first goal pop:
// weights are non-negative and the heuristics are admissible. Goals with
// possibly negative placement deltas (average, percentile) are drained
// branch-and-bound style instead: first-goal-pop is unsound there, so the
// frontier is exhausted under a certified lower bound
//   g(v) + h_eq3(v) - penalty(v) <= any completion cost through v,
// seeded with a greedy incumbent.
inline SearchResult astar(const Workload& workload, const TemplateCatalog& catalog,
                          const PerformanceGoal& goal, HeuristicKind kind,
                          const SearchLimits& limits = {},
                          const RecordedCosts* recorded = nullptr,
                          const PerformanceGoal* base_goal = nullptr,
                          RecordedCosts* record_out = nullptr) {
  const bool adaptive = kind == HeuristicKind::kAdaptive;
  if (kind == HeuristicKind::kMonotonic && !is_monotonic(goal))
    throw ValidationError("monotonic heuristic requested for a non-monotonic goal");
  if (adaptive && !base_goal)
    throw ValidationError("adaptive search needs the base goal");
  static const RecordedCosts kEmptyRecord;
  const RecordedCosts& rec = recorded ? *recorded : kEmptyRecord;

  // Adaptive mode computes edge weights under the tightened goal via the
  // reweighting rule: primary carries the base goal, secondary the new one.
  const PerformanceGoal& weight_goal = goal;
  SchedulingContext ctx = adaptive ? SchedulingContext(catalog, *base_goal, &goal)
                                   : SchedulingContext(catalog, goal);

  const bool monotone_mode = is_monotonic(goal);

  struct Node {
    Vertex v;
    int parent = -1;
    Action act{};
    Money g = 0;
    std::string key;
    bool expanded = false;
  };
  std::deque<Node> arena;
  std::unordered_map<std::string_view, std::pair<Money, std::uint32_t>> best_g;
  std::priority_queue<detail::OpenEntry, std::vector<detail::OpenEntry>, detail::OpenOrder> open;
  std::uint64_t seq = 0;

  auto order_h = [&](const Vertex& v) -> Money {
    switch (kind) {
      case HeuristicKind::kMonotonic: return h_monotonic(v, catalog);
      case HeuristicKind::kNull: return 0;
      case HeuristicKind::kAdaptive: return h_adaptive(v, rec, catalog, goal);
    }
    return 0;
  };
  auto accumulated_penalty = [&](const Vertex& v) -> Money {
    return adaptive ? v.pen_secondary : v.pen_primary;
  };
  // Admissible bound on any completion cost through v, valid for every
  // metric (future penalties of a complete schedule are >= 0).
  auto certified_bound = [&](const Vertex& v, Money g) -> Money {
    return g + h_monotonic(v, catalog) - accumulated_penalty(v);
  };

  Money incumbent_cost = std::numeric_limits<Money>::infinity();
  Schedule incumbent_schedule;
  bool incumbent_from_goal = false;
  int incumbent_node = -1;
  if (!monotone_mode) {
    incumbent_schedule = ffi(workload, catalog, goal);
    incumbent_cost = total_cost(goal, incumbent_schedule, catalog).total;
  }
  auto prune_margin = [&]() {
    return 1e-12 + 1e-12 * std::abs(incumbent_cost);
  };

  {
    Vertex start = ctx.start_vertex(workload);
    Money h = order_h(start);
    arena.push_back(Node{std::move(start), -1, Action{}, 0, "", false});
    arena.back().key = arena.back().v.key;
    best_g.emplace(std::string_view(arena.back().key), std::make_pair(0.0, 0u));
    open.push(detail::OpenEntry{h, h, seq++, 0, 0});
  }

  std::size_t expanded = 0;
  auto reconstruct = [&](int goal_node) -> SearchResult {
    std::vector<std::pair<int, Action>> chain;
    for (int n = goal_node; arena[n].parent >= 0; n = arena[n].parent)
      chain.push_back({arena[n].parent, arena[n].act});
    std::reverse(chain.begin(), chain.end());
    // Vertices were stripped when expanded; replay to rebuild the path.
    SearchResult out;
    Vertex v = ctx.start_vertex(workload);
    for (auto& [parent, act] : chain) {
      (void)parent;
      out.path.push_back(SearchStep{v, act});
      v = ctx.apply(v, act).vertex;
    }
    out.schedule = v.partial;
    out.cost = total_cost(weight_goal, out.schedule, catalog).total;
    out.expanded = expanded;
    return out;
  };

  while (!open.empty()) {
    detail::OpenEntry top = open.top();
    open.pop();
    Node& node = arena[top.node];
    auto bg = best_g.find(std::string_view(node.key));
    if (bg == best_g.end() || bg->second.second != top.node ||
        top.g > bg->second.first + 1e-15)
      continue;  // stale entry
    if (node.expanded && !(top.g < node.g)) continue;

    if (++expanded > limits.max_expanded)
      throw ResourceCapError("search expanded more than " +
                             std::to_string(limits.max_expanded) + " vertices");
    node.g = top.g;
    if (record_out) record_out->g_by_key[node.key] = node.g;

    if (node.v.is_goal()) {
      if (monotone_mode) {
        SearchResult out = reconstruct(int(top.node));
        if (record_out) record_out->goal_cost = out.cost;
        return out;
      }
      if (node.g < incumbent_cost) {
        incumbent_cost = node.g;
        incumbent_from_goal = true;
        incumbent_node = int(top.node);
      }
      continue;
    }
    if (!monotone_mode && certified_bound(node.v, node.g) >= incumbent_cost - prune_margin())
      continue;

    auto edges = ctx.successors(node.v);
    // The vertex is no longer needed once its successors exist; drop the
    // heavy state, keep the key.
    Vertex expanded_vertex = std::move(node.v);
    node.v = Vertex{};
    node.expanded = true;

    for (auto& e : edges) {
      Money w = adaptive ? e.weight_secondary : e.weight;
      Money child_g = node.g + w;
      if (adaptive) e.vertex.g = child_g;  // apply() accumulated the primary weight
      if (!monotone_mode &&
          certified_bound(e.vertex, child_g) >= incumbent_cost - prune_margin())
        continue;
      auto it = best_g.find(std::string_view(e.vertex.key));
      if (it != best_g.end()) {
        Money old = it->second.first;
        if (child_g >= old * (1 - 1e-12) - 1e-15) continue;  // not strictly better
        Node& child = arena[it->second.second];
        child.v = std::move(e.vertex);
        child.parent = int(top.node);
        child.act = e.action;
        it->second.first = child_g;
        Money h = order_h(child.v);
        open.push(detail::OpenEntry{child_g + h, h, seq++, it->second.second, child_g});
      } else {
        arena.push_back(Node{std::move(e.vertex), int(top.node), e.action, child_g, "", false});
        Node& child = arena.back();
        child.key = child.v.key;
        std::uint32_t idx = std::uint32_t(arena.size() - 1);
        best_g.emplace(std::string_view(child.key), std::make_pair(child_g, idx));
        Money h = order_h(child.v);
        open.push(detail::OpenEntry{child_g + h, h, seq++, idx, child_g});
      }
    }
  }

  if (monotone_mode)
    throw InfeasibleError("no complete schedule reachable");
  SearchResult out;
  if (incumbent_from_goal) {
    out = reconstruct(incumbent_node);
  } else {
    out = detail::replay_schedule(incumbent_schedule, catalog, weight_goal, workload);
    out.expanded = expanded;
  }
  if (out.cost < -1e-9)
    throw ValidationError("negative total schedule cost; cost model violated");
  if (record_out) record_out->goal_cost = out.cost;
  return out;
}

// Exhaustive oracle: enumerates every partition of the workload into
// non-empty ordered queues with every supporting VM type assignment, and
// takes the Eq.-1 minimum. Independent of the graph machinery.
inline SearchResult brute_force_optimal(const Workload& workload,
                                        const TemplateCatalog& catalog,
                                        const PerformanceGoal& goal,
                                        std::size_t size_cap = 8) {
  if (workload.empty()) throw ValidationError("workload is empty");
  if (workload.size() > size_cap)
    throw ValidationError("brute force capped at " + std::to_string(size_cap) + " queries");

  Workload sorted = workload;
  std::sort(sorted.begin(), sorted.end(),
            [](const Query& a, const Query& b) { return a.instance_id < b.instance_id; });
  // Same-template instances are enumerated as interchangeable.
  {
    std::map<int, const Query*> first_of;
    for (const Query& q : sorted) {
      auto [it, fresh] = first_of.emplace(q.template_id, &q);
      if (!fresh && (it->second->extra_wait != q.extra_wait ||
                     it->second->arrival_time != q.arrival_time))
        throw ValidationError("brute force requires homogeneous instances per template");
    }
  }

  Money best = std::numeric_limits<Money>::infinity();
  Schedule best_schedule;
  Schedule current;

  // Recursion over the queries not yet assigned (by index into `sorted`).
  // The block containing the lowest remaining query is chosen, ordered, and
  // typed; this enumerates each set of queues exactly once.
  std::vector<int> remaining(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) remaining[i] = int(i);

  auto evaluate = [&]() {
    CostBreakdown cb = total_cost(goal, current, catalog);
    if (cb.total < best) {
      best = cb.total;
      best_schedule = current;
    }
  };

  std::vector<int> subset;
  std::function<void(std::vector<int>&)> recurse = [&](std::vector<int>& rem) {
    if (rem.empty()) {
      evaluate();
      return;
    }
    int pivot = rem.front();
    std::vector<int> tail(rem.begin() + 1, rem.end());
    // All subsets of `tail` joined with the pivot form the next queue.
    const std::size_t k = tail.size();
    for (std::uint64_t mask = 0; mask < (1ull << k); ++mask) {
      std::vector<int> block{pivot};
      std::vector<int> rest;
      for (std::size_t i = 0; i < k; ++i)
        (mask >> i) & 1 ? block.push_back(tail[i]) : rest.push_back(tail[i]);

      // Distinct template sequences only; instances of one template are
      // interchangeable and get consumed in instance-id order.
      std::vector<int> tpl_seq(block.size());
      for (std::size_t i = 0; i < block.size(); ++i)
        tpl_seq[i] = sorted[block[i]].template_id;
      std::sort(tpl_seq.begin(), tpl_seq.end());
      do {
        for (const VMType& type : catalog.vm_types()) {
          bool ok = true;
          for (int t : tpl_seq)
            if (!catalog.supports(type.id, t)) { ok = false; break; }
          if (!ok) continue;
          // materialize the queue: next unused instance per template
          std::map<int, std::vector<const Query*>> pool;
          for (int qi : block) pool[sorted[qi].template_id].push_back(&sorted[qi]);
          for (auto& [t, v] : pool) {
            (void)t;
            std::sort(v.begin(), v.end(), [](const Query* a, const Query* b) {
              return a->instance_id < b->instance_id;
            });
          }
          VMInstance vm{type.id, {}};
          std::map<int, std::size_t> used;
          for (int t : tpl_seq) vm.queue.push_back(*pool[t][used[t]++]);
          current.vms.push_back(std::move(vm));
          recurse(rest);
          current.vms.pop_back();
        }
      } while (std::next_permutation(tpl_seq.begin(), tpl_seq.end()));
    }
  };
  recurse(remaining);

  SearchResult out = detail::replay_schedule(best_schedule, catalog, goal, workload);
  return out;
}

}  // namespace wisedb

#endif  // WISEDB_SEARCH_HPP
