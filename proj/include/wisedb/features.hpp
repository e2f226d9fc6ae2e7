#ifndef WISEDB_FEATURES_HPP
#define WISEDB_FEATURES_HPP

#include <string>
#include <vector>

#include "wisedb/catalog.hpp"
#include "wisedb/goal.hpp"
#include "wisedb/graph.hpp"
#include "wisedb/search.hpp"

namespace wisedb {

// Layout: [wait_time, then per template (id order): proportion, supports,
// cost, have]. Length is 1 + 4*|T|, fixed per catalog. Booleans encode as
// 0/1; impossible placements carry the numeric infinity sentinel.
using FeatureVector = std::vector<double>;

inline std::size_t feature_vector_length(const TemplateCatalog& catalog) {
  return 1 + 4 * catalog.num_templates();
}

inline std::vector<std::string> feature_names(const TemplateCatalog& catalog) {
  std::vector<std::string> names{"wait_time"};
  for (const QueryTemplate& t : catalog.templates()) {
    std::string suffix = "_t" + std::to_string(t.id);
    names.push_back("proportion" + suffix);
    names.push_back("supports" + suffix);
    names.push_back("cost" + suffix);
    names.push_back("have" + suffix);
  }
  return names;
}

// The decision-relevant view of a vertex. cost-of-X is the hypothetical
// placement-edge weight regardless of availability; have-X carries the
// availability bit separately. The context overload avoids rebuilding goal
// bindings in hot loops (the tree walk extracts once per parse).
inline FeatureVector extract(const SchedulingContext& ctx, const Vertex& v,
                             const PerformanceGoal& goal) {
  const TemplateCatalog& catalog = ctx.catalog();
  const std::size_t nt = catalog.num_templates();
  FeatureVector fv(1 + 4 * nt, 0.0);
  fv[0] = v.head_busy;

  int head_type_idx = -1;
  if (v.has_vm) head_type_idx = catalog.vm_type_index(v.partial.vms.back().vm_type_id);

  for (std::size_t t = 0; t < nt; ++t) {
    double proportion = v.head_total > 0 ? double(v.head_counts[t]) / double(v.head_total) : 0.0;
    bool supports = head_type_idx >= 0 && catalog.supports_by_index(head_type_idx, int(t));
    Money cost = ctx.hypothetical_place_cost(v, int(t), goal);
    bool have = v.unassigned[t] > 0;
    fv[1 + 4 * t + 0] = proportion;
    fv[1 + 4 * t + 1] = supports ? 1.0 : 0.0;
    fv[1 + 4 * t + 2] = cost;
    fv[1 + 4 * t + 3] = have ? 1.0 : 0.0;
  }
  return fv;
}

inline FeatureVector extract(const Vertex& v, const TemplateCatalog& catalog,
                             const PerformanceGoal& goal) {
  SchedulingContext ctx(catalog, goal, nullptr, /*maintain_keys=*/false);
  return extract(ctx, v, goal);
}

struct TrainingSample {
  FeatureVector features;
  Action label;
};

// One (features, decision) pair per edge of an optimal path.
inline std::vector<TrainingSample> harvest(const std::vector<SearchStep>& path,
                                           const TemplateCatalog& catalog,
                                           const PerformanceGoal& goal) {
  std::vector<TrainingSample> samples;
  samples.reserve(path.size());
  for (const SearchStep& step : path)
    samples.push_back(TrainingSample{extract(step.vertex, catalog, goal), step.action});
  return samples;
}

}  // namespace wisedb

#endif  // WISEDB_FEATURES_HPP
