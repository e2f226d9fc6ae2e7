#ifndef WISEDB_WALK_HPP
#define WISEDB_WALK_HPP

#include <limits>

#include "wisedb/catalog.hpp"
#include "wisedb/features.hpp"
#include "wisedb/goal.hpp"
#include "wisedb/graph.hpp"
#include "wisedb/learn.hpp"

namespace wisedb {

struct WalkStats {
  std::size_t tree_walks = 0;
};

namespace detail {

// Cheapest provisioning choice for one instance of a template:
// argmin over supporting types of f_s + l * f_r, ties to the lower id.
inline Action best_provision_for(const TemplateCatalog& catalog, int template_idx) {
  int best_type = -1;
  Money best_cost = std::numeric_limits<Money>::infinity();
  for (std::size_t v = 0; v < catalog.num_vm_types(); ++v) {
    if (!catalog.supports_by_index(int(v), template_idx)) continue;
    const VMType& type = catalog.vm_types()[v];
    Money c = type.startup_cost + catalog.latency_by_index(template_idx, int(v)) * type.rent_rate;
    if (c < best_cost) {
      best_cost = c;
      best_type = type.id;
    }
  }
  if (best_type < 0)
    throw InfeasibleError("template " + std::to_string(catalog.templates()[template_idx].id) +
                          " not supported by any VM type");
  return Action{Action::Kind::kProvision, best_type};
}

// Available template with the cheapest hypothetical placement on the head
// VM; -1 when the head supports none of the available templates.
inline int cheapest_placeable(const SchedulingContext& ctx, const Vertex& v,
                              const PerformanceGoal& goal) {
  int best = -1;
  Money best_cost = std::numeric_limits<Money>::infinity();
  for (std::size_t t = 0; t < v.unassigned.size(); ++t) {
    if (v.unassigned[t] <= 0) continue;
    Money c = ctx.hypothetical_place_cost(v, int(t), goal);
    if (c >= kInfiniteCost) continue;
    if (c < best_cost) {
      best_cost = c;
      best = int(t);
    }
  }
  return best;
}

// Template whose cheapest-possible processing is lowest among the
// available ones; the anchor for provisioning fallbacks.
inline int cheapest_available(const TemplateCatalog& catalog, const Vertex& v) {
  int best = -1;
  Money best_cost = std::numeric_limits<Money>::infinity();
  for (std::size_t t = 0; t < v.unassigned.size(); ++t) {
    if (v.unassigned[t] <= 0) continue;
    Money c = catalog.min_processing_cost(catalog.templates()[t].id);
    if (c < best_cost) {
      best_cost = c;
      best = int(t);
    }
  }
  return best;
}

// The prediction may be stale or impossible at this vertex (no such
// unassigned template, no VM yet, unsupported head, provision onto an
// empty head). This ladder maps it to a feasible action so that a batch of
// n queries never needs more than 2n parses: a provision is always
// followed by a placement.
inline Action make_feasible(const SchedulingContext& ctx, const Vertex& v, Action a,
                            const PerformanceGoal& goal) {
  const TemplateCatalog& catalog = ctx.catalog();

  if (a.kind == Action::Kind::kPlace) {
    int t = catalog.has_template(a.id) ? catalog.template_index(a.id) : -1;
    bool available = t >= 0 && v.unassigned[t] > 0;
    if (v.has_vm) {
      int head_idx = catalog.vm_type_index(v.partial.vms.back().vm_type_id);
      if (available && catalog.supports_by_index(head_idx, t)) return a;
      int alt = cheapest_placeable(ctx, v, goal);
      if (alt >= 0) return Action{Action::Kind::kPlace, catalog.templates()[alt].id};
      int anchor = available ? t : cheapest_available(catalog, v);
      return best_provision_for(catalog, anchor);
    }
    int anchor = available ? t : cheapest_available(catalog, v);
    return best_provision_for(catalog, anchor);
  }

  // Provision prediction.
  bool head_empty = v.has_vm && v.partial.vms.back().queue.empty();
  if (head_empty) {
    int alt = cheapest_placeable(ctx, v, goal);
    if (alt >= 0) return Action{Action::Kind::kPlace, catalog.templates()[alt].id};
    return best_provision_for(catalog, cheapest_available(catalog, v));
  }
  // Keep the predicted type only if something available can run on it.
  bool usable = false;
  if (catalog.vm_types().size() == 1) {
    usable = true;
  } else {
    int type_idx = -1;
    for (std::size_t i = 0; i < catalog.num_vm_types(); ++i)
      if (catalog.vm_types()[i].id == a.id) type_idx = int(i);
    if (type_idx >= 0) {
      for (std::size_t t = 0; t < v.unassigned.size() && !usable; ++t)
        usable = v.unassigned[t] > 0 && catalog.supports_by_index(type_idx, int(t));
    }
  }
  if (usable) return a;
  return best_provision_for(catalog, cheapest_available(catalog, v));
}

}  // namespace detail

// Batch scheduling by repeated tree parsing. Terminates with a complete
// schedule in at most 2n parses.
inline Vertex tree_walk_from(const SchedulingContext& ctx, Vertex v, const DecisionTree& tree,
                             const PerformanceGoal& goal, WalkStats* stats = nullptr) {
  while (!v.is_goal()) {
    FeatureVector fv = extract(ctx, v, goal);
    Action a = tree.predict(fv);
    if (stats) stats->tree_walks++;
    a = detail::make_feasible(ctx, v, a, goal);
    ctx.apply_in_place(v, a);
  }
  return v;
}

inline Schedule tree_walk_schedule(const DecisionTree& tree, const PerformanceGoal& goal,
                                   const TemplateCatalog& catalog, const Workload& workload,
                                   WalkStats* stats = nullptr) {
  if (workload.empty()) return Schedule{};
  SchedulingContext ctx(catalog, goal, nullptr, /*maintain_keys=*/false);
  Vertex v = ctx.start_vertex(workload);
  return tree_walk_from(ctx, std::move(v), tree, goal, stats).partial;
}

}  // namespace wisedb

#endif  // WISEDB_WALK_HPP
