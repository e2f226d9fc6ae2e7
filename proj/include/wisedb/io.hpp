#ifndef WISEDB_IO_HPP
#define WISEDB_IO_HPP

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wisedb/advisor.hpp"
#include "wisedb/catalog.hpp"
#include "wisedb/goal.hpp"
#include "wisedb/runtime.hpp"
#include "wisedb/schedule.hpp"

namespace wisedb {
namespace io {

using json = nlohmann::ordered_json;

namespace detail {

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
  }
}

inline json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return j;
}

}  // namespace detail

struct Config {
  TemplateCatalog catalog;
  PerformanceGoal goal;
};

inline json goal_to_json(const PerformanceGoal& g) {
  json j;
  j["variant"] = metric_name(g.kind);
  json params = json::object();
  switch (g.kind) {
    case MetricKind::kMaxLatency: params["deadline_s"] = g.deadline; break;
    case MetricKind::kAverage: params["target_s"] = g.target; break;
    case MetricKind::kPercentile:
      params["fraction"] = g.fraction;
      params["deadline_s"] = g.deadline;
      break;
    case MetricKind::kPerQuery: {
      json d = json::object();
      for (const auto& [t, dl] : g.per_template_deadline) d[std::to_string(t)] = dl;
      params["per_template_deadline_s"] = std::move(d);
      break;
    }
  }
  j["params"] = std::move(params);
  j["penalty_usd_per_s"] = g.penalty_rate;
  return j;
}

inline PerformanceGoal goal_from_json(const json& j) {
  detail::check_keys(j, {"variant", "params", "penalty_usd_per_s"}, "goal");
  PerformanceGoal g;
  std::string variant = j.at("variant").get<std::string>();
  const json& params = j.contains("params") ? j.at("params") : json::object();
  if (variant == "max_latency") {
    g.kind = MetricKind::kMaxLatency;
    detail::check_keys(params, {"deadline_s"}, "goal.params");
    g.deadline = params.at("deadline_s").get<double>();
  } else if (variant == "per_query") {
    g.kind = MetricKind::kPerQuery;
    detail::check_keys(params, {"per_template_deadline_s"}, "goal.params");
    if (params.contains("per_template_deadline_s"))
      for (auto it = params.at("per_template_deadline_s").begin();
           it != params.at("per_template_deadline_s").end(); ++it)
        g.per_template_deadline[std::stoi(it.key())] = it.value().get<double>();
  } else if (variant == "average") {
    g.kind = MetricKind::kAverage;
    detail::check_keys(params, {"target_s"}, "goal.params");
    g.target = params.at("target_s").get<double>();
  } else if (variant == "percentile") {
    g.kind = MetricKind::kPercentile;
    detail::check_keys(params, {"fraction", "deadline_s"}, "goal.params");
    g.fraction = params.at("fraction").get<double>();
    g.deadline = params.at("deadline_s").get<double>();
  } else {
    throw ConfigError("unknown goal variant \"" + variant + "\"");
  }
  g.penalty_rate = j.at("penalty_usd_per_s").get<double>();
  return g;
}

// Strict config parsing: unknown keys are rejected, rent converts from
// per-hour to per-second once here.
inline Config config_from_json(const json& j) {
  detail::check_keys(j, {"vm_types", "templates", "goal"}, "config");
  std::vector<VMType> vm_types;
  for (const json& v : j.at("vm_types")) {
    detail::check_keys(v, {"id", "startup_cost_usd", "rent_usd_per_hour", "supports"},
                       "vm_types[]");
    VMType t;
    t.id = v.at("id").get<int>();
    t.startup_cost = v.at("startup_cost_usd").get<double>();
    t.rent_rate = v.at("rent_usd_per_hour").get<double>() / 3600.0;
    for (const json& s : v.at("supports")) t.supports.push_back(s.get<int>());
    vm_types.push_back(std::move(t));
  }
  std::vector<QueryTemplate> templates;
  for (const json& v : j.at("templates")) {
    detail::check_keys(v, {"id", "latency_s_by_vmtype", "deadline_s"}, "templates[]");
    QueryTemplate t;
    t.id = v.at("id").get<int>();
    for (auto it = v.at("latency_s_by_vmtype").begin(); it != v.at("latency_s_by_vmtype").end();
         ++it)
      t.latency[std::stoi(it.key())] = it.value().get<double>();
    if (v.contains("deadline_s")) t.per_query_deadline = v.at("deadline_s").get<double>();
    templates.push_back(std::move(t));
  }

  Config cfg;
  cfg.catalog = TemplateCatalog(std::move(vm_types), std::move(templates));
  PerformanceGoal goal = goal_from_json(j.at("goal"));
  if (goal.kind == MetricKind::kPerQuery && goal.per_template_deadline.empty()) {
    for (const QueryTemplate& t : cfg.catalog.templates()) {
      if (!t.per_query_deadline)
        throw ConfigError("per-query goal: template " + std::to_string(t.id) +
                          " has no deadline_s");
      goal.per_template_deadline[t.id] = *t.per_query_deadline;
    }
  }
  goal.validate();
  cfg.goal = goal;
  return cfg;
}

inline Config load_config(const std::string& path) {
  return config_from_json(detail::parse_file(path));
}

// ------------------------- workload CSV -------------------------
// Rows: arrival_time_s,template_id[,raw_latency_s]. A present raw latency
// re-buckets the query to the closest template at load time.

struct WorkloadRow {
  Seconds arrival = 0;
  int template_id = 0;
  std::optional<Seconds> raw_latency;
};

inline void save_workload(const std::vector<WorkloadRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "arrival_time_s,template_id,raw_latency_s\n";
  for (const auto& r : rows) {
    out << r.arrival << ',' << r.template_id << ',';
    if (r.raw_latency) out << *r.raw_latency;
    out << '\n';
  }
}

inline std::vector<WorkloadRow> load_workload_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty workload file");
  if (line != "arrival_time_s,template_id,raw_latency_s")
    throw ConfigError(path + ": bad workload header");
  std::vector<WorkloadRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
      throw ConfigError(path + ":" + std::to_string(lineno) + ": bad row");
    std::getline(ss, c, ',');
    WorkloadRow r;
    try {
      r.arrival = std::stod(a);
      r.template_id = std::stoi(b);
      if (!c.empty()) r.raw_latency = std::stod(c);
    } catch (const std::exception&) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": bad row");
    }
    rows.push_back(r);
  }
  return rows;
}

// Materializes rows into queries. Rows with a raw latency are assigned to
// the closest template; `misassigned` counts rows whose re-bucketed
// template differs from the stated one.
inline Workload resolve_workload(const std::vector<WorkloadRow>& rows,
                                 const TemplateCatalog& catalog,
                                 std::size_t* misassigned = nullptr) {
  Workload w;
  std::size_t wrong = 0;
  int next_instance = 1;
  for (const auto& r : rows) {
    Query q;
    q.arrival_time = r.arrival;
    q.instance_id = next_instance++;
    if (r.raw_latency) {
      q.template_id = map_unknown(*r.raw_latency, catalog);
      if (q.template_id != r.template_id) wrong++;
    } else {
      q.template_id = r.template_id;
      catalog.template_by_id(q.template_id);  // throws on unknown
    }
    w.push_back(q);
  }
  if (misassigned) *misassigned = wrong;
  return w;
}

// ------------------------- schedule CSV -------------------------

inline void save_schedule_csv(const Schedule& s, const TemplateCatalog& catalog,
                              const PerformanceGoal& goal, const std::string& path) {
  auto times = completion_times(s, catalog);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "query,vm_index,vm_type,start_s,finish_s,violation_s\n";
  for (std::size_t i = 0; i < s.vms.size(); ++i) {
    for (const Query& q : s.vms[i].queue) {
      const auto& t = times.at(q.instance_id);
      Seconds bound = 0;
      switch (goal.kind) {
        case MetricKind::kMaxLatency: bound = goal.deadline; break;
        case MetricKind::kPerQuery: bound = goal.per_query_deadline(q.template_id); break;
        case MetricKind::kAverage: bound = goal.target; break;
        case MetricKind::kPercentile: bound = goal.deadline; break;
      }
      out << q.instance_id << ',' << i << ',' << s.vms[i].vm_type_id << ',' << t.start << ','
          << t.finish << ',' << std::max(0.0, t.finish - bound) << '\n';
    }
  }
}

// ------------------------- strategy bundle -------------------------
// Versioned JSON: tree + goal + cost vector + fingerprint, with the
// retained sample workloads as template-id lists. Recorded search costs are
// rebuilt on demand rather than stored.

inline json strategy_to_json(const Strategy& s) {
  json j;
  j["format"] = 1;
  j["goal"] = goal_to_json(s.goal);
  j["catalog_fingerprint"] = s.catalog_fingerprint;
  j["template_ids"] = s.template_ids;
  j["cost_vector_usd"] = s.cost_vector;
  j["tree"] = s.tree.to_json();
  json training;
  training["seed"] = s.seed;
  training["cost_vector_queries"] = s.cost_vector_queries;
  training["tree_min_leaf"] = s.tree_params.min_leaf;
  training["tree_max_depth"] = s.tree_params.max_depth;
  training["tree_gain_ratio"] = s.tree_params.gain_ratio;
  training["tree_pruning"] = s.tree_params.reduced_error_pruning;
  training["tree_seed"] = s.tree_params.seed;
  training["max_expanded"] = s.limits.max_expanded;
  j["training"] = std::move(training);
  json samples = json::array();
  for (const Workload& w : s.retained_samples) {
    json one = json::array();
    for (const Query& q : w) one.push_back(q.template_id);
    samples.push_back(std::move(one));
  }
  j["retained_samples"] = std::move(samples);
  return j;
}

inline Strategy strategy_from_json(const json& j) {
  detail::check_keys(j,
                     {"format", "goal", "catalog_fingerprint", "template_ids", "cost_vector_usd",
                      "tree", "training", "retained_samples"},
                     "strategy");
  if (j.at("format").get<int>() != 1) throw ConfigError("unsupported strategy format");
  Strategy s;
  s.goal = goal_from_json(j.at("goal"));
  s.catalog_fingerprint = j.at("catalog_fingerprint").get<std::uint64_t>();
  s.template_ids = j.at("template_ids").get<std::vector<int>>();
  s.cost_vector = j.at("cost_vector_usd").get<std::vector<Money>>();
  s.tree = DecisionTree::from_json(j.at("tree"));
  const json& training = j.at("training");
  s.seed = training.at("seed").get<std::uint64_t>();
  s.cost_vector_queries = training.at("cost_vector_queries").get<int>();
  s.tree_params.min_leaf = training.at("tree_min_leaf").get<std::size_t>();
  s.tree_params.max_depth = training.at("tree_max_depth").get<int>();
  s.tree_params.gain_ratio = training.at("tree_gain_ratio").get<bool>();
  s.tree_params.reduced_error_pruning = training.at("tree_pruning").get<bool>();
  s.tree_params.seed = training.at("tree_seed").get<std::uint64_t>();
  s.limits.max_expanded = training.at("max_expanded").get<std::size_t>();
  for (const json& one : j.at("retained_samples")) {
    Workload w;
    int instance = 1;
    for (const json& t : one) w.push_back(Query{t.get<int>(), instance++, 0, 0});
    s.retained_samples.push_back(std::move(w));
  }
  return s;
}

inline void save_strategy(const Strategy& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << strategy_to_json(s).dump(2) << '\n';
}

inline Strategy load_strategy(const std::string& path) {
  return strategy_from_json(detail::parse_file(path));
}

}  // namespace io
}  // namespace wisedb

#endif  // WISEDB_IO_HPP
