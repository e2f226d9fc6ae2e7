#ifndef WISEDB_GRAPH_HPP
#define WISEDB_GRAPH_HPP

#include <algorithm>
#include <cassert>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "wisedb/catalog.hpp"
#include "wisedb/goal.hpp"
#include "wisedb/schedule.hpp"

namespace wisedb {

// An edge of the scheduling graph: rent a new VM of some type, or place one
// instance of a template onto the most recently provisioned VM.
struct Action {
  enum class Kind { kProvision, kPlace };
  Kind kind = Kind::kProvision;
  int id = 0;  // VM type id or template id

  bool operator==(const Action& o) const { return kind == o.kind && id == o.id; }
};

// Dense label used by the decision tree: placements first (by template
// order), then provisions (by VM type order).
inline int action_ordinal(const Action& a, const TemplateCatalog& catalog) {
  if (a.kind == Action::Kind::kPlace) return catalog.template_index(a.id);
  return int(catalog.num_templates()) + catalog.vm_type_index(a.id);
}

inline std::string action_name(const Action& a) {
  return (a.kind == Action::Kind::kPlace ? "place_t" : "provision_vm") + std::to_string(a.id);
}

// Placements sort before provisions, ids ascending: the catalog-free
// equivalent of action_ordinal, used for deterministic tie-breaking.
inline bool action_less(const Action& a, const Action& b) {
  if (a.kind != b.kind) return a.kind == Action::Kind::kPlace;
  return a.id < b.id;
}

// A vertex of the scheduling graph: a partial schedule plus the multiset of
// unassigned queries, with incrementally maintained cost summaries so that
// successor weights need no full recomputation.
struct Vertex {
  Schedule partial;
  std::vector<int> unassigned;  // counts by template index
  int unassigned_total = 0;

  // Cost of the partial schedule under the goal whose weights the current
  // search accumulates.
  Money g = 0;

  // Penalty of `partial` under the context's primary / secondary goal.
  Money pen_primary = 0;
  Money pen_secondary = 0;

  // Goal-independent summaries of the completion times.
  Seconds head_busy = 0;  // sum of effective latencies on the head VM
  double finish_sum = 0;
  std::size_t finish_count = 0;
  std::vector<Seconds> sorted_finishes;  // ascending; kept iff ctx.track_finishes

  std::vector<int> head_counts;  // per-template-index counts on the head VM
  int head_total = 0;
  bool has_vm = false;

  // Canonical identity: VM order is interchangeable for frozen (non-head)
  // queues, so they are kept sorted; the head queue stays distinct because
  // only it can still grow.
  std::vector<std::string> frozen_keys;
  std::string head_key;
  std::string key;

  bool is_goal() const { return unassigned_total == 0; }
  const VMInstance* head() const { return has_vm ? &partial.vms.back() : nullptr; }
};

// Shared state for one workload's graph: catalog bindings, goal(s), and the
// concrete query instances behind the per-template counters.
class SchedulingContext {
 public:
  SchedulingContext(const TemplateCatalog& catalog, const PerformanceGoal& primary,
                    const PerformanceGoal* secondary = nullptr, bool maintain_keys = true)
      : catalog_(&catalog), primary_(&primary), secondary_(secondary),
        maintain_keys_(maintain_keys) {
    // No positivity validation here: linearly shifted goals may carry
    // non-positive deadlines mid-flight and stay semantically sound.
    if (secondary && secondary->kind != primary.kind)
      throw ValidationError("goal variants differ between base and reweighted goal");
    track_finishes_ = primary.kind == MetricKind::kPercentile ||
                      (secondary && secondary->kind == MetricKind::kPercentile);
    bind_goal(primary, primary_deadlines_);
    if (secondary) bind_goal(*secondary, secondary_deadlines_);
  }

  const TemplateCatalog& catalog() const { return *catalog_; }
  const PerformanceGoal& primary() const { return *primary_; }
  const PerformanceGoal* secondary() const { return secondary_; }
  bool track_finishes() const { return track_finishes_; }
  bool maintain_keys() const { return maintain_keys_; }

  // The start vertex: nothing scheduled, everything unassigned.
  Vertex start_vertex(const Workload& workload) {
    if (workload.empty()) throw ValidationError("workload is empty");
    const std::size_t nt = catalog_->num_templates();
    instances_.assign(nt, {});
    for (const Query& q : workload) instances_[catalog_->template_index(q.template_id)].push_back(q);
    for (auto& list : instances_)
      std::sort(list.begin(), list.end(), [](const Query& a, const Query& b) {
        return a.instance_id < b.instance_id;
      });

    Vertex v;
    v.unassigned.assign(nt, 0);
    v.head_counts.assign(nt, 0);
    for (std::size_t t = 0; t < nt; ++t) {
      v.unassigned[t] = int(instances_[t].size());
      v.unassigned_total += v.unassigned[t];
    }
    if (maintain_keys_) v.key = assemble_key(v);
    return v;
  }

  // A vertex whose schedule is already partially fixed (online scheduling:
  // the running queues are immutable). `busy` gives each VM's remaining
  // occupancy; penalties of the fixed prefix are sunk and tracked as zero.
  Vertex prefix_vertex(const Schedule& fixed, const std::vector<Seconds>& busy,
                       const Workload& batch) {
    Vertex v = start_vertex(batch);
    if (fixed.vms.empty()) return v;
    v.partial = fixed;
    v.has_vm = true;
    const std::size_t nt = catalog_->num_templates();
    for (std::size_t i = 0; i < fixed.vms.size(); ++i) {
      // Spread each VM's remaining busy time so serial sums stay correct:
      // all position weight sits on the last fixed query.
      std::string k = encode_queue(fixed.vms[i]);
      if (i + 1 < fixed.vms.size()) {
        v.frozen_keys.insert(
            std::lower_bound(v.frozen_keys.begin(), v.frozen_keys.end(), k), k);
      } else {
        v.head_key = k;
        v.head_busy = busy[i];
        v.head_counts.assign(nt, 0);
        for (const Query& q : fixed.vms[i].queue)
          v.head_counts[catalog_->template_index(q.template_id)]++;
        v.head_total = int(fixed.vms[i].queue.size());
      }
      if (track_finishes_) {
        Seconds t = 0;
        for (std::size_t j = 0; j + 1 < fixed.vms[i].queue.size(); ++j)
          v.sorted_finishes.push_back(t);
        if (!fixed.vms[i].queue.empty()) v.sorted_finishes.push_back(busy[i]);
      }
      v.finish_count += fixed.vms[i].queue.size();
      v.finish_sum += busy[i];  // remaining-time frame; sunk work counts zero
    }
    if (track_finishes_) std::sort(v.sorted_finishes.begin(), v.sorted_finishes.end());
    if (maintain_keys_) v.key = assemble_key(v);
    return v;
  }

  struct Edge {
    Action action;
    Vertex vertex;
    Money weight = 0;            // under the primary goal (Eq. 2)
    Money weight_secondary = 0;  // under the secondary goal, when present
  };

  // Reduced successor generation: one placement edge per distinct
  // unassigned template supported by the head VM, plus provision edges only
  // while the head VM is non-empty. Placements by template order first,
  // then provisions by VM type order.
  std::vector<Edge> successors(const Vertex& v) const {
    std::vector<Edge> out;
    if (v.is_goal()) return out;
    if (v.has_vm) {
      const int head_type = v.partial.vms.back().vm_type_id;
      const int head_idx = catalog_->vm_type_index(head_type);
      for (std::size_t t = 0; t < v.unassigned.size(); ++t) {
        if (v.unassigned[t] <= 0) continue;
        if (!catalog_->supports_by_index(head_idx, int(t))) continue;
        out.push_back(make_place(v, int(t)));
      }
    }
    if (!v.has_vm || !v.partial.vms.back().queue.empty()) {
      for (const VMType& type : catalog_->vm_types()) out.push_back(make_provision(v, type));
    }
    return out;
  }

  Edge apply(const Vertex& v, const Action& a) const {
    check_applicable(v, a);
    if (a.kind == Action::Kind::kProvision) return make_provision(v, catalog_->vm_type_by_id(a.id));
    return make_place(v, catalog_->template_index(a.id));
  }

  // Mutating apply for long walks; returns the primary edge weight.
  Money apply_in_place(Vertex& v, const Action& a) const {
    check_applicable(v, a);
    Money w2 = 0;
    if (a.kind == Action::Kind::kProvision)
      return do_provision(v, catalog_->vm_type_by_id(a.id), &w2);
    return do_place(v, catalog_->template_index(a.id), &w2);
  }

  // Weight of the hypothetical placement edge for a template at v, using
  // the template's base latency: the cost-of-X feature. Infinite when no VM
  // exists or the head does not support the template.
  Money hypothetical_place_cost(const Vertex& v, int template_idx,
                                const PerformanceGoal& goal) const {
    if (!v.has_vm) return kInfiniteCost;
    int head_idx = catalog_->vm_type_index(v.partial.vms.back().vm_type_id);
    if (!catalog_->supports_by_index(head_idx, template_idx)) return kInfiniteCost;
    const VMType& type = catalog_->vm_types()[head_idx];
    Seconds l = catalog_->latency_by_index(template_idx, head_idx);
    Seconds f = v.head_busy + l;
    Money delta = penalty_delta(goal, v, f, template_idx);
    return l * type.rent_rate + delta;
  }

  // New weight of an edge when the goal tightens from R to R2: start-up
  // edges keep their cost, placement edges absorb the extra penalty.
  static Money reweight(const Vertex& u, const Action& action, Money old_weight,
                        const PerformanceGoal& goal, const PerformanceGoal& tighter,
                        const TemplateCatalog& catalog) {
    if (tighter.kind != goal.kind)
      throw ValidationError("reweight requires the same metric variant");
    if (action.kind == Action::Kind::kProvision) return old_weight;
    SchedulingContext ctx(catalog, goal, &tighter, /*maintain_keys=*/false);
    Edge e = ctx.apply(u, action);
    return old_weight + (e.weight_secondary - e.weight);
  }

  const std::vector<Query>& instances(int template_idx) const { return instances_[template_idx]; }

 private:
  void bind_goal(const PerformanceGoal& g, std::vector<Seconds>& deadlines) {
    if (g.kind != MetricKind::kPerQuery) return;
    deadlines.resize(catalog_->num_templates());
    for (std::size_t t = 0; t < catalog_->num_templates(); ++t)
      deadlines[t] = g.per_query_deadline(catalog_->templates()[t].id);
  }

  // Penalty change from appending one query finishing at `f` to the head VM.
  Money penalty_delta(const PerformanceGoal& goal, const Vertex& v, Seconds f,
                      int template_idx) const {
    const Money rate = goal.penalty_rate;
    switch (goal.kind) {
      case MetricKind::kMaxLatency:
        return rate * std::max(0.0, f - goal.deadline);
      case MetricKind::kPerQuery: {
        const std::vector<Seconds>* d = nullptr;
        if (&goal == primary_) d = &primary_deadlines_;
        else if (&goal == secondary_) d = &secondary_deadlines_;
        Seconds dl = (d && !d->empty())
                         ? (*d)[template_idx]
                         : goal.per_query_deadline(catalog_->templates()[template_idx].id);
        return rate * std::max(0.0, f - dl);
      }
      case MetricKind::kAverage: {
        double old_pen = detail::average_excess(goal, v.finish_sum, v.finish_count);
        double new_pen = detail::average_excess(goal, v.finish_sum + f, v.finish_count + 1);
        return rate * (new_pen - old_pen);
      }
      case MetricKind::kPercentile: {
        double old_pen = detail::percentile_excess(goal, v.sorted_finishes, v.finish_count, -1);
        double new_pen = detail::percentile_excess(goal, v.sorted_finishes, v.finish_count, f);
        return rate * (new_pen - old_pen);
      }
    }
    return 0;
  }

  void check_applicable(const Vertex& v, const Action& a) const {
    if (a.kind == Action::Kind::kProvision) {
      catalog_->vm_type_by_id(a.id);  // throws on unknown type
      return;
    }
    int t = catalog_->template_index(a.id);
    if (v.unassigned[t] <= 0)
      throw ValidationError("no unassigned instance of template " + std::to_string(a.id));
    if (!v.has_vm) throw ValidationError("placement with no provisioned VM");
    int head_idx = catalog_->vm_type_index(v.partial.vms.back().vm_type_id);
    if (!catalog_->supports_by_index(head_idx, t))
      throw ValidationError("head VM does not support template " + std::to_string(a.id));
  }

  // Mutates v by appending the next unassigned instance of template t to
  // the head VM; returns the primary weight, secondary via out-param.
  Money do_place(Vertex& v, int t, Money* w2) const {
    const int head_idx = catalog_->vm_type_index(v.partial.vms.back().vm_type_id);
    const VMType& type = catalog_->vm_types()[head_idx];
    int placed = int(instances_[t].size()) - v.unassigned[t];
    Query q = instances_[t][placed];
    Seconds eff = catalog_->latency_by_index(t, head_idx) + q.extra_wait;
    Seconds f = v.head_busy + eff;

    Money dp = penalty_delta(*primary_, v, f, t);
    Money ds = secondary_ ? penalty_delta(*secondary_, v, f, t) : 0;
    Money w = eff * type.rent_rate + dp;
    *w2 = eff * type.rent_rate + ds;

    v.partial.vms.back().queue.push_back(q);
    v.unassigned[t]--;
    v.unassigned_total--;
    v.g += w;
    v.pen_primary += dp;
    v.pen_secondary += ds;
    v.head_busy += eff;
    v.finish_sum += f;
    v.finish_count++;
    if (track_finishes_)
      v.sorted_finishes.insert(
          std::upper_bound(v.sorted_finishes.begin(), v.sorted_finishes.end(), f), f);
    v.head_counts[t]++;
    v.head_total++;
    if (maintain_keys_) {
      append_to_queue_key(v.head_key, t);
      v.key = assemble_key(v);
    }
    return w;
  }

  Money do_provision(Vertex& v, const VMType& type, Money* w2) const {
    *w2 = type.startup_cost;
    std::string old_head_key = v.head_key;
    bool had_vm = v.has_vm;
    v.partial.vms.push_back(VMInstance{type.id, {}});
    v.g += type.startup_cost;
    v.head_busy = 0;
    std::fill(v.head_counts.begin(), v.head_counts.end(), 0);
    v.head_total = 0;
    if (maintain_keys_) {
      if (had_vm)
        v.frozen_keys.insert(
            std::lower_bound(v.frozen_keys.begin(), v.frozen_keys.end(), old_head_key),
            old_head_key);
      v.head_key = queue_key_prefix(catalog_->vm_type_index(type.id));
      v.key = assemble_key(v);
    }
    v.has_vm = true;
    return type.startup_cost;
  }

  Edge make_place(const Vertex& v, int t) const {
    Edge e;
    e.action = Action{Action::Kind::kPlace, catalog_->templates()[t].id};
    e.vertex = v;
    e.weight = do_place(e.vertex, t, &e.weight_secondary);
    return e;
  }

  Edge make_provision(const Vertex& v, const VMType& type) const {
    Edge e;
    e.action = Action{Action::Kind::kProvision, type.id};
    e.vertex = v;
    e.weight = do_provision(e.vertex, type, &e.weight_secondary);
    return e;
  }

  // Queue encodings use bytes >= 3 so the separators \x01 and \x02 stay
  // unambiguous.
  static void append_code(std::string& s, int value) {
    s.push_back(char(value / 200 + 3));
    s.push_back(char(value % 200 + 3));
  }
  static std::string queue_key_prefix(int vm_type_idx) {
    std::string s;
    append_code(s, vm_type_idx);
    return s;
  }
  void append_to_queue_key(std::string& key, int template_idx) const {
    append_code(key, template_idx);
  }
  std::string encode_queue(const VMInstance& vm) const {
    std::string s = queue_key_prefix(catalog_->vm_type_index(vm.vm_type_id));
    for (const Query& q : vm.queue) append_code(s, catalog_->template_index(q.template_id));
    return s;
  }
  static std::string assemble_key(const Vertex& v) {
    std::string s = v.head_key;
    s.push_back('\x01');
    for (const std::string& f : v.frozen_keys) {
      s += f;
      s.push_back('\x02');
    }
    return s;
  }

  const TemplateCatalog* catalog_;
  const PerformanceGoal* primary_;
  const PerformanceGoal* secondary_;
  bool maintain_keys_;
  bool track_finishes_;
  std::vector<Seconds> primary_deadlines_;
  std::vector<Seconds> secondary_deadlines_;
  std::vector<std::vector<Query>> instances_;  // per template index, by instance id
};

// Spec-shaped conveniences.
inline Vertex start_vertex(const Workload& workload, const TemplateCatalog& catalog) {
  PerformanceGoal dummy;
  dummy.kind = MetricKind::kMaxLatency;
  dummy.deadline = 1;
  SchedulingContext ctx(catalog, dummy);
  return ctx.start_vertex(workload);
}

inline Money reweight(const Vertex& u, const Action& action, Money old_weight,
                      const PerformanceGoal& goal, const PerformanceGoal& tighter,
                      const TemplateCatalog& catalog) {
  return SchedulingContext::reweight(u, action, old_weight, goal, tighter, catalog);
}

// DOT dump of the reachable reduced graph, for debugging small instances.
inline void dump_dot(const Workload& workload, const TemplateCatalog& catalog,
                     const PerformanceGoal& goal, std::ostream& os,
                     std::size_t max_nodes = 500) {
  SchedulingContext ctx(catalog, goal);
  std::vector<Vertex> frontier{ctx.start_vertex(workload)};
  std::map<std::string, int> ids{{frontier.front().key, 0}};
  auto label = [&](const Vertex& v) {
    std::string s;
    for (const auto& vm : v.partial.vms) {
      s += "[";
      for (const auto& q : vm.queue) s += "T" + std::to_string(q.template_id) + " ";
      s += "]";
    }
    return s.empty() ? "start" : s;
  };
  os << "digraph scheduling {\n";
  os << "  n0 [label=\"" << label(frontier.front()) << "\"];\n";
  std::size_t next_id = 1;
  for (std::size_t i = 0; i < frontier.size() && ids.size() < max_nodes; ++i) {
    Vertex v = frontier[i];
    for (auto& e : ctx.successors(v)) {
      auto [it, fresh] = ids.emplace(e.vertex.key, int(next_id));
      if (fresh) {
        os << "  n" << next_id << " [label=\"" << label(e.vertex) << "\""
           << (e.vertex.is_goal() ? ", shape=doublecircle" : "") << "];\n";
        ++next_id;
        frontier.push_back(e.vertex);
      }
      os << "  n" << ids[v.key] << " -> n" << it->second << " [label=\"" << action_name(e.action)
         << " $" << e.weight << "\"];\n";
    }
  }
  os << "}\n";
}

}  // namespace wisedb

#endif  // WISEDB_GRAPH_HPP
