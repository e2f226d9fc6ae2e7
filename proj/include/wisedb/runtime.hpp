#ifndef WISEDB_RUNTIME_HPP
#define WISEDB_RUNTIME_HPP

#include <algorithm>
#include <cmath>
#include <list>
#include <map>
#include <memory>
#include <vector>

#include "wisedb/advisor.hpp"
#include "wisedb/catalog.hpp"
#include "wisedb/goal.hpp"
#include "wisedb/schedule.hpp"
#include "wisedb/walk.hpp"

namespace wisedb {

// Batch scheduling with a trained strategy: O(h) per decision, at most 2n
// tree parses.
inline Schedule schedule_batch(const Strategy& strategy, const Workload& workload,
                               const TemplateCatalog& catalog, WalkStats* stats = nullptr) {
  strategy.check_catalog(catalog);
  for (const Query& q : workload)
    if (!catalog.has_template(q.template_id))
      throw ValidationError("unknown template " + std::to_string(q.template_id) +
                            "; map unknown queries to templates first");
  return tree_walk_schedule(strategy.tree, strategy.goal, catalog, workload, stats);
}

// The template whose latency on the reference VM type (lowest id) is
// closest to the observed one; ties to the lower template id.
inline int map_unknown(Seconds raw_latency, const TemplateCatalog& catalog) {
  if (!(raw_latency > 0)) throw ValidationError("latency must be positive");
  const VMType& ref = catalog.reference_vm_type();
  int best = -1;
  Seconds best_dist = std::numeric_limits<Seconds>::infinity();
  for (const QueryTemplate& t : catalog.templates()) {
    auto it = t.latency.find(ref.id);
    if (it == t.latency.end()) continue;
    Seconds d = std::abs(it->second - raw_latency);
    if (d < best_dist) {
      best_dist = d;
      best = t.id;
    }
  }
  if (best < 0) throw ValidationError("no template has a latency on the reference VM type");
  return best;
}

struct OnlineOptions {
  bool use_shift = true;       // linear shifting for shiftable metrics
  bool use_cache = true;       // omega-keyed model reuse
  Seconds omega_tolerance = 1.0;
  std::size_t cache_capacity = 256;
  int retrain_samples = 50;        // N for models trained at cache misses
  int retrain_queries_per_sample = 5;  // m for those models
};

// Non-preemptive online scheduling: every arrival re-schedules the queries
// that have not started yet as one batch. Models are reused through the
// omega cache and, for shiftable metrics, derived by shifting the base
// model's goal instead of retraining on augmented templates.
class OnlineScheduler {
 public:
  struct PlannedQuery {
    Query query;          // original arrival/template; extra_wait = start - arrival
    Seconds start = 0;
    Seconds finish = 0;
  };
  struct PlannedVM {
    int vm_type_id = 0;
    std::vector<PlannedQuery> queue;
  };
  struct ArrivalOutcome {
    bool cache_hit = false;
    bool used_shift = false;
    long long bucket = 0;
    std::size_t batch_size = 0;
  };

  OnlineScheduler(Strategy base, const TemplateCatalog& catalog, OnlineOptions options = {})
      : base_(std::move(base)), catalog_(catalog), opts_(options) {
    base_.check_catalog(catalog_);
    if (!(opts_.omega_tolerance > 0)) throw ValidationError("omega tolerance must be positive");
  }

  // Age of the oldest planned-but-unstarted query.
  Seconds omega(Seconds now) const {
    Seconds oldest = std::numeric_limits<Seconds>::infinity();
    for (const auto& vm : plan_)
      for (const auto& pq : vm.queue)
        if (pq.start >= now) oldest = std::min(oldest, pq.query.arrival_time);
    return std::isinf(oldest) ? 0 : now - oldest;
  }

  ArrivalOutcome arrive(const Query& arriving, Seconds now) {
    if (now < clock_) throw ValidationError("clock regression in online arrival");
    clock_ = now;

    // Freeze started queries; everything else rejoins the batch.
    Workload pending;
    for (auto& vm : plan_) {
      auto it = std::find_if(vm.queue.begin(), vm.queue.end(),
                             [&](const PlannedQuery& pq) { return pq.start >= now; });
      for (auto p = it; p != vm.queue.end(); ++p) pending.push_back(p->query);
      vm.queue.erase(it, vm.queue.end());
    }
    Seconds w = 0;
    if (!pending.empty()) {
      Seconds oldest = pending.front().arrival_time;
      for (const Query& q : pending) oldest = std::min(oldest, q.arrival_time);
      w = now - oldest;
    }
    for (Query& q : pending) q.extra_wait = now - q.arrival_time;

    Query fresh = arriving;
    fresh.arrival_time = now;
    fresh.extra_wait = 0;
    if (!catalog_.has_template(fresh.template_id))
      throw ValidationError("unknown template " + std::to_string(fresh.template_id));
    Workload batch = pending;
    batch.push_back(fresh);

    ArrivalOutcome outcome;
    outcome.batch_size = batch.size();
    outcome.bucket = llround(w / opts_.omega_tolerance);
    const Seconds omega_q = double(outcome.bucket) * opts_.omega_tolerance;

    std::shared_ptr<const Model> model;
    if (opts_.use_shift && is_linearly_shiftable(base_.goal)) {
      outcome.used_shift = true;
      model = shift_model(outcome.bucket, omega_q, &outcome.cache_hit);
    } else {
      model = reuse_or_retrain(outcome.bucket, batch, &outcome.cache_hit);
    }

    schedule_with(*model, batch, now);
    return outcome;
  }

  const std::vector<PlannedVM>& plan() const { return plan_; }

  // Ground-truth trace accounting: startup fees, metered actual runtimes,
  // and the penalty over per-query latencies (finish minus arrival).
  CostBreakdown trace_cost() const {
    CostBreakdown out;
    std::vector<Seconds> latencies;
    std::vector<int> tpls;
    for (const auto& vm : plan_) {
      const VMType& type = catalog_.vm_type_by_id(vm.vm_type_id);
      out.provisioning += type.startup_cost;
      for (const auto& pq : vm.queue) {
        out.processing += type.rent_rate * catalog_.latency(pq.query.template_id, vm.vm_type_id);
        latencies.push_back(pq.finish - pq.query.arrival_time);
        tpls.push_back(pq.query.template_id);
      }
    }
    out.penalty = detail::penalty_from_finishes(base_.goal, latencies, tpls);
    out.total = out.provisioning + out.processing + out.penalty;
    return out;
  }

  std::size_t cache_hits() const { return hits_; }
  std::size_t models_trained() const { return trained_; }

 private:
  struct Model {
    TemplateCatalog catalog;   // base or augmented
    Strategy strategy;
    bool augmented = false;
    // For augmented catalogs: (base template, quantized wait) -> template id
    std::map<std::pair<int, long long>, int> wait_template;
  };

  std::shared_ptr<const Model> base_model() {
    if (!base_model_) {
      auto m = std::make_shared<Model>();
      m->catalog = catalog_;
      m->strategy = base_;
      base_model_ = std::move(m);
    }
    return base_model_;
  }

  std::shared_ptr<const Model> shift_model(long long bucket, Seconds omega_q, bool* hit) {
    if (bucket == 0) return base_model();
    if (opts_.use_cache) {
      if (auto cached = cache_lookup(bucket)) {
        *hit = true;
        hits_++;
        return cached;
      }
    }
    auto m = std::make_shared<Model>();
    m->catalog = catalog_;
    m->strategy = adapt(base_, catalog_, shift_goal(base_.goal, omega_q));
    trained_++;
    if (opts_.use_cache) cache_insert(bucket, m);
    return m;
  }

  std::shared_ptr<const Model> reuse_or_retrain(long long bucket, const Workload& batch,
                                                bool* hit) {
    if (opts_.use_cache) {
      if (auto cached = cache_lookup(bucket)) {
        *hit = true;
        hits_++;
        return cached;
      }
    }
    auto m = std::make_shared<Model>();
    m->augmented = true;

    // One augmented template per (base template, distinct quantized wait):
    // same structure, latency raised by the wait.
    std::vector<QueryTemplate> templates = catalog_.templates();
    std::vector<VMType> vm_types = catalog_.vm_types();
    int next_id = 0;
    for (const auto& t : templates) next_id = std::max(next_id, t.id + 1);
    std::map<std::pair<int, long long>, int> mapping;
    for (const Query& q : batch) {
      long long wq = llround(q.extra_wait / opts_.omega_tolerance);
      if (wq <= 0) continue;
      auto key = std::make_pair(q.template_id, wq);
      if (mapping.count(key)) continue;
      const QueryTemplate& base_tpl = catalog_.template_by_id(q.template_id);
      QueryTemplate aug = base_tpl;
      aug.id = next_id++;
      for (auto& [vm, lat] : aug.latency) {
        (void)vm;
        lat += double(wq) * opts_.omega_tolerance;
      }
      templates.push_back(aug);
      for (VMType& v : vm_types)
        if (std::find(v.supports.begin(), v.supports.end(), q.template_id) != v.supports.end())
          v.supports.push_back(aug.id);
      mapping[key] = aug.id;
    }
    m->catalog = TemplateCatalog(std::move(vm_types), std::move(templates));
    m->wait_template = std::move(mapping);

    PerformanceGoal goal = base_.goal;
    if (goal.kind == MetricKind::kPerQuery) {
      // Augmented instances keep their base template's deadline.
      for (const auto& [key, id] : m->wait_template)
        goal.per_template_deadline[id] = goal.per_query_deadline(key.first);
    }

    TrainingSpec spec;
    spec.catalog = m->catalog;
    spec.goal = goal;
    spec.num_samples = opts_.retrain_samples;
    spec.queries_per_sample = opts_.retrain_queries_per_sample;
    spec.seed = mix_seed(base_.seed, std::uint64_t(bucket) + 0x0427u);
    spec.tree = base_.tree_params;
    spec.cost_vector_queries = std::min(base_.cost_vector_queries, 200);
    spec.limits = base_.limits;
    spec.workers = base_.workers;
    m->strategy = train(spec);
    trained_++;
    if (opts_.use_cache) cache_insert(bucket, m);
    return m;
  }

  // Schedules the batch with the chosen model from the prefix of running
  // queues, then folds the walk's placements back into the wall-clock plan.
  void schedule_with(const Model& model, const Workload& batch, Seconds now) {
    // Decision copies of the batch queries, in the model's catalog.
    Workload decision;
    decision.reserve(batch.size());
    for (const Query& q : batch) {
      Query d = q;
      if (model.augmented) {
        long long wq = llround(q.extra_wait / opts_.omega_tolerance);
        if (wq > 0) {
          auto it = model.wait_template.find({q.template_id, wq});
          d.template_id = it != model.wait_template.end()
                              ? it->second
                              : map_unknown(catalog_.latency(q.template_id,
                                                             catalog_.reference_vm_type().id) +
                                                q.extra_wait,
                                            model.catalog);
        }
      }
      d.extra_wait = 0;  // waits live in the goal shift or the template latency
      decision.push_back(d);
    }

    // Fixed prefix: the started queries of each VM and its remaining busy
    // time from `now`.
    Schedule fixed;
    std::vector<Seconds> busy;
    for (const auto& vm : plan_) {
      VMInstance f{vm.vm_type_id, {}};
      Seconds free_at = now;
      for (const auto& pq : vm.queue) {
        f.queue.push_back(pq.query);
        free_at = std::max(free_at, pq.finish);
      }
      fixed.vms.push_back(std::move(f));
      busy.push_back(free_at - now);
    }

    SchedulingContext ctx(model.catalog, model.strategy.goal, nullptr, /*maintain_keys=*/false);
    Vertex v = fixed.vms.empty() ? ctx.start_vertex(decision)
                                 : ctx.prefix_vertex(fixed, busy, decision);
    Vertex done = tree_walk_from(ctx, std::move(v), model.strategy.tree, model.strategy.goal);

    std::map<int, const Query*> by_instance;
    for (const Query& q : batch) by_instance[q.instance_id] = &q;

    const std::size_t old_vms = plan_.size();
    for (std::size_t i = 0; i < done.partial.vms.size(); ++i) {
      const VMInstance& vm = done.partial.vms[i];
      std::size_t skip = 0;
      Seconds at = now;
      if (i < old_vms) {
        skip = plan_[i].queue.size();
        for (const auto& pq : plan_[i].queue) at = std::max(at, pq.finish);
      } else {
        plan_.push_back(PlannedVM{vm.vm_type_id, {}});
      }
      for (std::size_t j = skip; j < vm.queue.size(); ++j) {
        const Query* original = by_instance.at(vm.queue[j].instance_id);
        Seconds l = catalog_.latency(original->template_id, vm.vm_type_id);
        PlannedQuery pq;
        pq.query = *original;
        pq.query.extra_wait = at - original->arrival_time;
        pq.start = at;
        pq.finish = at + l;
        plan_[i].queue.push_back(pq);
        at = pq.finish;
      }
    }
  }

  std::shared_ptr<const Model> cache_lookup(long long bucket) {
    auto it = cache_.find(bucket);
    if (it == cache_.end()) return nullptr;
    lru_.splice(lru_.begin(), lru_, it->second.first);
    return it->second.second;
  }
  void cache_insert(long long bucket, std::shared_ptr<const Model> model) {
    lru_.push_front(bucket);
    cache_[bucket] = {lru_.begin(), std::move(model)};
    while (cache_.size() > opts_.cache_capacity) {
      cache_.erase(lru_.back());
      lru_.pop_back();
    }
  }

  Strategy base_;
  TemplateCatalog catalog_;
  OnlineOptions opts_;
  Seconds clock_ = 0;
  std::vector<PlannedVM> plan_;
  std::shared_ptr<const Model> base_model_;
  std::list<long long> lru_;
  std::map<long long, std::pair<std::list<long long>::iterator, std::shared_ptr<const Model>>>
      cache_;
  std::size_t hits_ = 0;
  std::size_t trained_ = 0;
};

}  // namespace wisedb

#endif  // WISEDB_RUNTIME_HPP
