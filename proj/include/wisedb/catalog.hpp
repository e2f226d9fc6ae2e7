#ifndef WISEDB_CATALOG_HPP
#define WISEDB_CATALOG_HPP

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wisedb/common.hpp"

namespace wisedb {

// A rentable VM configuration. `supports` lists the template ids the type
// can execute.
struct VMType {
  int id = 0;
  Money startup_cost = 0;  // f_s, charged once per provisioned VM
  Money rent_rate = 0;     // f_r, dollars per second of execution
  std::vector<int> supports;
};

// A query class. Instances of one template share latency characteristics.
// `latency` maps VM type id -> execution seconds on that type.
// `per_query_deadline` is consulted only by the per-query goal.
struct QueryTemplate {
  int id = 0;
  std::map<int, Seconds> latency;
  std::optional<Seconds> per_query_deadline;
};

// One query instance. `extra_wait` is nonzero only for online queries that
// have been sitting in the queue; it folds into the effective latency.
struct Query {
  int template_id = 0;
  int instance_id = 0;
  Seconds arrival_time = 0;
  Seconds extra_wait = 0;
};

using Workload = std::vector<Query>;

// Immutable workload specification: the template set T plus the available
// VM types. Validates invariants at construction and precomputes dense
// lookups used by the scheduling graph.
class TemplateCatalog {
 public:
  TemplateCatalog() = default;

  TemplateCatalog(std::vector<VMType> vm_types, std::vector<QueryTemplate> templates)
      : vm_types_(std::move(vm_types)), templates_(std::move(templates)) {
    std::sort(vm_types_.begin(), vm_types_.end(),
              [](const VMType& a, const VMType& b) { return a.id < b.id; });
    std::sort(templates_.begin(), templates_.end(),
              [](const QueryTemplate& a, const QueryTemplate& b) { return a.id < b.id; });
    validate();
    build_index();
  }

  const std::vector<VMType>& vm_types() const { return vm_types_; }
  const std::vector<QueryTemplate>& templates() const { return templates_; }
  std::size_t num_vm_types() const { return vm_types_.size(); }
  std::size_t num_templates() const { return templates_.size(); }

  int template_index(int template_id) const {
    auto it = template_index_.find(template_id);
    if (it == template_index_.end())
      throw ValidationError("unknown template id " + std::to_string(template_id));
    return it->second;
  }
  bool has_template(int template_id) const {
    return template_index_.count(template_id) > 0;
  }
  int vm_type_index(int vm_type_id) const {
    auto it = vm_type_index_.find(vm_type_id);
    if (it == vm_type_index_.end())
      throw ValidationError("unknown VM type id " + std::to_string(vm_type_id));
    return it->second;
  }
  const QueryTemplate& template_by_id(int template_id) const {
    return templates_[template_index(template_id)];
  }
  const VMType& vm_type_by_id(int vm_type_id) const {
    return vm_types_[vm_type_index(vm_type_id)];
  }

  bool supports(int vm_type_id, int template_id) const {
    return supports_[vm_type_index(vm_type_id)][template_index(template_id)] != 0;
  }

  // l(q^x, i); throws if the type does not support the template.
  Seconds latency(int template_id, int vm_type_id) const {
    int t = template_index(template_id);
    int v = vm_type_index(vm_type_id);
    if (!supports_[v][t])
      throw ValidationError("VM type " + std::to_string(vm_type_id) +
                            " does not support template " + std::to_string(template_id));
    return latency_[t][v];
  }

  // Effective latency folds the online wait into the runtime.
  Seconds effective_latency(const Query& q, int vm_type_id) const {
    return latency(q.template_id, vm_type_id) + q.extra_wait;
  }

  // Index-based accessors for the search hot path.
  bool supports_by_index(int vm_type_idx, int template_idx) const {
    return supports_[vm_type_idx][template_idx] != 0;
  }
  Seconds latency_by_index(int template_idx, int vm_type_idx) const {
    return latency_[template_idx][vm_type_idx];
  }

  // Cheapest possible processing cost for one instance of the template,
  // over all supporting types (the Eq.-3 summand).
  Money min_processing_cost(int template_id) const {
    return min_processing_[template_index(template_id)];
  }

  // Lowest-id VM type; the reference for latency-based template matching.
  const VMType& reference_vm_type() const { return vm_types_.front(); }

  // Stable content hash; strategies refuse to run against a different
  // catalog than they were trained on.
  std::uint64_t fingerprint() const { return fingerprint_; }

 private:
  void validate() {
    if (vm_types_.empty()) throw ValidationError("catalog has no VM types");
    if (templates_.empty()) throw ValidationError("catalog has no templates");
    for (std::size_t i = 1; i < vm_types_.size(); ++i)
      if (vm_types_[i].id == vm_types_[i - 1].id)
        throw ValidationError("duplicate VM type id " + std::to_string(vm_types_[i].id));
    for (std::size_t i = 1; i < templates_.size(); ++i)
      if (templates_[i].id == templates_[i - 1].id)
        throw ValidationError("duplicate template id " + std::to_string(templates_[i].id));
    for (const auto& v : vm_types_) {
      if (v.startup_cost < 0) throw ValidationError("negative startup cost");
      if (v.rent_rate <= 0) throw ValidationError("rent rate must be positive");
      if (v.supports.empty())
        throw ValidationError("VM type " + std::to_string(v.id) + " supports no templates");
      for (int t : v.supports) {
        auto it = std::find_if(templates_.begin(), templates_.end(),
                               [t](const QueryTemplate& q) { return q.id == t; });
        if (it == templates_.end())
          throw ValidationError("VM type " + std::to_string(v.id) +
                                " supports unknown template " + std::to_string(t));
        if (!it->latency.count(v.id))
          throw ValidationError("template " + std::to_string(t) +
                                " has no latency for supporting VM type " + std::to_string(v.id));
      }
    }
    for (const auto& t : templates_) {
      for (const auto& [vm_id, lat] : t.latency) {
        if (!(lat > 0)) throw ValidationError("template latency must be positive");
        (void)vm_id;
      }
      if (t.per_query_deadline && !(*t.per_query_deadline > 0))
        throw ValidationError("per-query deadline must be positive");
    }
  }

  void build_index() {
    for (std::size_t i = 0; i < templates_.size(); ++i) template_index_[templates_[i].id] = int(i);
    for (std::size_t i = 0; i < vm_types_.size(); ++i) vm_type_index_[vm_types_[i].id] = int(i);

    latency_.assign(templates_.size(), std::vector<Seconds>(vm_types_.size(), -1));
    supports_.assign(vm_types_.size(), std::vector<char>(templates_.size(), 0));
    for (std::size_t v = 0; v < vm_types_.size(); ++v) {
      for (int t_id : vm_types_[v].supports) {
        int t = template_index_[t_id];
        supports_[v][t] = 1;
        latency_[t][v] = templates_[t].latency.at(vm_types_[v].id);
      }
    }
    min_processing_.assign(templates_.size(), kInfiniteCost);
    for (std::size_t t = 0; t < templates_.size(); ++t) {
      for (std::size_t v = 0; v < vm_types_.size(); ++v) {
        if (supports_[v][t])
          min_processing_[t] =
              std::min(min_processing_[t], vm_types_[v].rent_rate * latency_[t][v]);
      }
      if (min_processing_[t] >= kInfiniteCost)
        throw ValidationError("template " + std::to_string(templates_[t].id) +
                              " is not schedulable on any VM type");
    }

    std::uint64_t h = 1469598103934665603ull;
    auto mix_double = [&h](double d) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(d));
      std::memcpy(&bits, &d, sizeof(bits));
      h = fnv1a64(bits, h);
    };
    for (const auto& v : vm_types_) {
      h = fnv1a64(std::uint64_t(v.id), h);
      mix_double(v.startup_cost);
      mix_double(v.rent_rate);
      for (int s : v.supports) h = fnv1a64(std::uint64_t(s), h);
    }
    for (const auto& t : templates_) {
      h = fnv1a64(std::uint64_t(t.id), h);
      for (const auto& [vm, lat] : t.latency) {
        h = fnv1a64(std::uint64_t(vm), h);
        mix_double(lat);
      }
      mix_double(t.per_query_deadline.value_or(-1));
    }
    fingerprint_ = h;
  }

  std::vector<VMType> vm_types_;
  std::vector<QueryTemplate> templates_;
  std::map<int, int> template_index_;
  std::map<int, int> vm_type_index_;
  std::vector<std::vector<Seconds>> latency_;   // [template idx][vm type idx]
  std::vector<std::vector<char>> supports_;     // [vm type idx][template idx]
  std::vector<Money> min_processing_;           // [template idx]
  std::uint64_t fingerprint_ = 0;
};

inline std::map<int, int> workload_counts(const Workload& w) {
  std::map<int, int> counts;
  for (const Query& q : w) counts[q.template_id]++;
  return counts;
}

}  // namespace wisedb

#endif  // WISEDB_CATALOG_HPP
