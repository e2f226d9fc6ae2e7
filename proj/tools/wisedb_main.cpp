// wisedb command-line harness: workload generation, training, adaptation,
// strategy recommendation, batch/online scheduling, and the benchmark
// suites. All commands are deterministic under --seed.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wisedb/advisor.hpp"
#include "wisedb/baselines.hpp"
#include "wisedb/io.hpp"
#include "wisedb/runtime.hpp"
#include "wisedb/search.hpp"
#include "wisedb/stats.hpp"

namespace {

using namespace wisedb;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitResourceCap = 4;

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// "--goal max:900", "per_query", "average:600", "percentile:0.9:600".
PerformanceGoal parse_goal_override(const std::string& text, const TemplateCatalog& catalog,
                                    Money penalty_rate) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.empty()) throw ConfigError("empty goal override");
  PerformanceGoal g;
  g.penalty_rate = penalty_rate;
  try {
    if (parts[0] == "max" || parts[0] == "max_latency") {
      if (parts.size() != 2) throw ConfigError("expected max:<deadline_s>");
      g.kind = MetricKind::kMaxLatency;
      g.deadline = std::stod(parts[1]);
    } else if (parts[0] == "per_query") {
      if (parts.size() != 1) throw ConfigError("per_query takes deadlines from templates");
      g.kind = MetricKind::kPerQuery;
      for (const QueryTemplate& t : catalog.templates()) {
        if (!t.per_query_deadline)
          throw ConfigError("template " + std::to_string(t.id) + " has no deadline_s");
        g.per_template_deadline[t.id] = *t.per_query_deadline;
      }
    } else if (parts[0] == "average") {
      if (parts.size() != 2) throw ConfigError("expected average:<target_s>");
      g.kind = MetricKind::kAverage;
      g.target = std::stod(parts[1]);
    } else if (parts[0] == "percentile") {
      if (parts.size() != 3) throw ConfigError("expected percentile:<fraction>:<deadline_s>");
      g.kind = MetricKind::kPercentile;
      g.fraction = std::stod(parts[1]);
      g.deadline = std::stod(parts[2]);
    } else {
      throw ConfigError("unknown goal variant \"" + parts[0] + "\"");
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad number in goal override \"" + text + "\"");
  }
  g.validate();
  return g;
}

// The strictest sensible constraint for the tightening formula: the
// longest base latency for workload-level metrics, the shortest for the
// per-template variant (one scalar must stay below every deadline).
Seconds default_strictest(const TemplateCatalog& catalog, const PerformanceGoal& goal) {
  Seconds longest = 0, shortest = std::numeric_limits<Seconds>::infinity();
  int ref = catalog.reference_vm_type().id;
  for (const QueryTemplate& t : catalog.templates()) {
    auto it = t.latency.find(ref);
    if (it == t.latency.end()) continue;
    longest = std::max(longest, it->second);
    shortest = std::min(shortest, it->second);
  }
  return goal.kind == MetricKind::kPerQuery ? shortest : longest;
}

struct CommonOpts {
  std::string config_path;
  std::string goal_override;
  std::uint64_t seed = 0;
  int workers = 0;
};

io::Config load_config_with_goal(const CommonOpts& opts) {
  io::Config cfg = io::load_config(opts.config_path);
  if (!opts.goal_override.empty())
    cfg.goal = parse_goal_override(opts.goal_override, cfg.catalog, cfg.goal.penalty_rate);
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool goal_flag = true) {
  cmd->add_option("--config", opts.config_path, "config JSON path")->required();
  if (goal_flag)
    cmd->add_option("--goal", opts.goal_override,
                    "goal override: max:<s> | per_query | average:<s> | percentile:<y>:<s>");
  cmd->add_option("--seed", opts.seed, "deterministic seed");
  cmd->add_option("--workers", opts.workers, "worker threads (0 = hardware)");
}

// ------------------------- gen -------------------------

std::vector<std::size_t> skewed_counts(std::size_t n, std::size_t k, double skew) {
  auto counts_for = [&](double lambda) {
    std::vector<double> probs(k, (1 - lambda) / double(k));
    probs[0] += lambda;
    std::vector<std::size_t> counts(k, 0);
    std::size_t assigned = 0;
    std::vector<std::pair<double, std::size_t>> remainders;
    for (std::size_t i = 0; i < k; ++i) {
      double exact = probs[i] * double(n);
      counts[i] = std::size_t(std::floor(exact));
      assigned += counts[i];
      remainders.push_back({exact - std::floor(exact), i});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) counts[remainders[i % k].second]++;
    return counts;
  };
  if (skew <= 0) return counts_for(0);
  if (chi2_confidence(counts_for(1)) < skew - 0.02)
    throw InfeasibleError("requested skew unreachable for this workload size");
  double lo = 0, hi = 1;
  for (int iter = 0; iter < 60; ++iter) {
    double mid = (lo + hi) / 2;
    (chi2_confidence(counts_for(mid)) < skew ? lo : hi) = mid;
  }
  return counts_for(hi);
}

int cmd_gen(const CommonOpts& opts, std::size_t n, double skew, const std::string& out) {
  io::Config cfg = load_config_with_goal(opts);
  if (skew < 0 || skew > 1) throw ConfigError("skew must be in [0,1]");
  std::vector<io::WorkloadRow> rows;
  if (n > 0) {
    auto counts = skewed_counts(n, cfg.catalog.num_templates(), skew);
    std::vector<int> tpls;
    for (std::size_t i = 0; i < counts.size(); ++i)
      for (std::size_t c = 0; c < counts[i]; ++c)
        tpls.push_back(cfg.catalog.templates()[i].id);
    std::mt19937_64 rng(mix_seed(opts.seed, 0x6e6u));
    std::shuffle(tpls.begin(), tpls.end(), rng);
    for (int t : tpls) rows.push_back(io::WorkloadRow{0, t, std::nullopt});
  }
  io::save_workload(rows, out);
  std::vector<std::size_t> written(cfg.catalog.num_templates(), 0);
  for (const auto& r : rows) written[cfg.catalog.template_index(r.template_id)]++;
  std::cout << "wrote " << rows.size() << " queries to " << out;
  if (n > 0) std::cout << ", chi2 confidence " << chi2_confidence(written);
  std::cout << "\n";
  return kExitOk;
}

// ------------------------- noise -------------------------

int cmd_noise(const CommonOpts& opts, const std::string& in, double sigma,
              const std::string& out) {
  io::Config cfg = load_config_with_goal(opts);
  if (sigma < 0) throw ConfigError("sigma must be >= 0");
  auto rows = io::load_workload_rows(in);
  std::mt19937_64 rng(mix_seed(opts.seed, 0x401feu));
  std::normal_distribution<double> noise(0.0, 1.0);
  int ref = cfg.catalog.reference_vm_type().id;
  for (auto& r : rows) {
    Seconds base = cfg.catalog.latency(r.template_id, ref);
    double factor = sigma == 0 ? 1.0 : 1.0 + sigma * noise(rng);
    r.raw_latency = std::max(base * factor, 1e-6);
  }
  io::save_workload(rows, out);
  std::size_t misassigned = 0;
  io::resolve_workload(rows, cfg.catalog, &misassigned);
  std::cout << "wrote " << rows.size() << " noised queries to " << out << ", misassignment rate "
            << (rows.empty() ? 0.0 : double(misassigned) / double(rows.size())) << "\n";
  return kExitOk;
}

// ------------------------- train -------------------------

struct TreeOpts {
  std::size_t min_leaf = 1;
  int max_depth = 1 << 20;
  std::string criterion = "gain";
  bool prune = false;
};

void add_tree_opts(CLI::App* cmd, TreeOpts& t) {
  cmd->add_option("--tree-min-leaf", t.min_leaf, "minimum samples per node");
  cmd->add_option("--tree-max-depth", t.max_depth, "maximum tree depth");
  cmd->add_option("--tree-criterion", t.criterion, "split criterion: gain | gini")
      ->check(CLI::IsMember({"gain", "gini"}));
  cmd->add_flag("--tree-prune", t.prune, "reduced-error pruning");
}

TreeParams tree_params_from(const TreeOpts& t, std::uint64_t seed) {
  TreeParams p;
  p.min_leaf = t.min_leaf;
  p.max_depth = t.max_depth;
  p.gain_ratio = t.criterion == "gain";
  p.reduced_error_pruning = t.prune;
  p.seed = seed;
  return p;
}

int cmd_train(const CommonOpts& opts, int samples, int per_sample, int cost_vector_queries,
              std::size_t max_expanded, const TreeOpts& tree_opts, const std::string& out) {
  io::Config cfg = load_config_with_goal(opts);
  TrainingSpec spec;
  spec.catalog = cfg.catalog;
  spec.goal = cfg.goal;
  spec.num_samples = samples;
  spec.queries_per_sample = per_sample;
  spec.seed = opts.seed;
  spec.tree = tree_params_from(tree_opts, opts.seed);
  spec.cost_vector_queries = cost_vector_queries;
  spec.limits.max_expanded = max_expanded;
  spec.workers = opts.workers;
  double t0 = now_ms();
  Strategy s = train(spec);
  io::save_strategy(s, out);
  std::cout << "trained " << metric_name(spec.goal.kind) << " strategy on " << samples << "x"
            << per_sample << " samples in " << (now_ms() - t0) << " ms; tree height "
            << s.tree.height() << "; saved to " << out << "\n";
  return kExitOk;
}

// ------------------------- adapt -------------------------

int cmd_adapt(const CommonOpts& opts, const std::string& strategy_path, double tighten_p,
              double strictest_opt, const std::string& out) {
  io::Config cfg = load_config_with_goal(opts);
  Strategy base = io::load_strategy(strategy_path);
  base.workers = opts.workers;
  base.check_catalog(cfg.catalog);

  PerformanceGoal target;
  if (!opts.goal_override.empty()) {
    target = cfg.goal;
  } else {
    if (tighten_p < 0 || tighten_p > 1)
      throw ConfigError("--tighten-p must be in [0,1] (or pass --goal)");
    Seconds strictest =
        strictest_opt >= 0 ? strictest_opt : default_strictest(cfg.catalog, base.goal);
    target = tighten_goal(base.goal, tighten_p, strictest);
  }
  double t0 = now_ms();
  ensure_recorded_costs(base, cfg.catalog);
  Strategy adapted = adapt(base, cfg.catalog, target);
  io::save_strategy(adapted, out);
  std::cout << "adapted strategy in " << (now_ms() - t0) << " ms; saved to " << out << "\n";
  return kExitOk;
}

// ------------------------- recommend -------------------------

std::map<int, int> parse_counts(const std::string& text) {
  std::map<int, int> counts;
  if (text.empty()) return counts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto pos = item.find(':');
    if (pos == std::string::npos) throw ConfigError("counts must look like tpl:count,...");
    counts[std::stoi(item.substr(0, pos))] = std::stoi(item.substr(pos + 1));
  }
  return counts;
}

std::string goal_summary(const PerformanceGoal& g) {
  std::ostringstream os;
  switch (g.kind) {
    case MetricKind::kMaxLatency: os << "max " << g.deadline << "s"; break;
    case MetricKind::kAverage: os << "avg " << g.target << "s"; break;
    case MetricKind::kPercentile:
      os << 100 * g.fraction << "% in " << g.deadline << "s";
      break;
    case MetricKind::kPerQuery: {
      os << "per-query";
      for (const auto& [t, d] : g.per_template_deadline) os << " t" << t << ":" << d << "s";
      break;
    }
  }
  return os.str();
}

int cmd_recommend(const CommonOpts& opts, int tiers, int keep, double strictest_opt, int samples,
                  int per_sample, const std::string& counts_text, const std::string& out_dir) {
  io::Config cfg = load_config_with_goal(opts);
  TrainingSpec spec;
  spec.catalog = cfg.catalog;
  spec.goal = cfg.goal;
  spec.num_samples = samples;
  spec.queries_per_sample = per_sample;
  spec.seed = opts.seed;
  spec.tree.seed = opts.seed;
  spec.workers = opts.workers;
  Seconds strictest =
      strictest_opt >= 0 ? strictest_opt : default_strictest(cfg.catalog, cfg.goal);

  auto strategies = recommend(spec, tiers, keep, strictest);
  std::map<int, int> counts = parse_counts(counts_text);

  std::cout << "tier,goal,cost_vector_usd" << (counts.empty() ? "" : ",estimate_usd") << "\n";
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    const Strategy& s = strategies[i];
    std::cout << i << ",\"" << goal_summary(s.goal) << "\",\"";
    for (std::size_t t = 0; t < s.cost_vector.size(); ++t)
      std::cout << (t ? " " : "") << s.cost_vector[t];
    std::cout << "\"";
    if (!counts.empty()) std::cout << "," << estimate_cost(s, counts);
    std::cout << "\n";
    if (!out_dir.empty()) {
      std::filesystem::create_directories(out_dir);
      io::save_strategy(s, out_dir + "/strategy_tier" + std::to_string(i) + ".json");
    }
  }
  return kExitOk;
}

// ------------------------- schedule -------------------------

int cmd_schedule(const CommonOpts& opts, const std::string& workload_path,
                 const std::string& method, const std::string& strategy_path,
                 std::size_t max_expanded, const std::string& out,
                 const std::string& dump_dot_path) {
  io::Config cfg = load_config_with_goal(opts);
  auto rows = io::load_workload_rows(workload_path);
  std::size_t misassigned = 0;
  Workload w = io::resolve_workload(rows, cfg.catalog, &misassigned);
  if (w.empty()) throw InfeasibleError("workload is empty");

  PerformanceGoal goal = cfg.goal;
  Schedule s;
  std::size_t expanded = 0;
  double t0 = now_ms();
  if (method == "tree") {
    if (strategy_path.empty()) throw ConfigError("--method=tree needs --strategy");
    Strategy strat = io::load_strategy(strategy_path);
    strat.check_catalog(cfg.catalog);
    goal = strat.goal;
    WalkStats stats;
    s = schedule_batch(strat, w, cfg.catalog, &stats);
  } else if (method == "astar") {
    SearchLimits limits;
    limits.max_expanded = max_expanded;
    auto res = astar(w, cfg.catalog, goal,
                     is_monotonic(goal) ? HeuristicKind::kMonotonic : HeuristicKind::kNull,
                     limits);
    s = res.schedule;
    expanded = res.expanded;
  } else if (method == "ffd") {
    s = ffd(w, cfg.catalog, goal);
  } else if (method == "ffi") {
    s = ffi(w, cfg.catalog, goal);
  } else if (method == "pack9") {
    s = pack9(w, cfg.catalog, goal);
  } else {
    throw ConfigError("unknown method \"" + method + "\"");
  }
  double wall = now_ms() - t0;

  if (!dump_dot_path.empty()) {
    std::ofstream dot(dump_dot_path);
    if (!dot) throw ConfigError("cannot write " + dump_dot_path);
    dump_dot(w, cfg.catalog, goal, dot);
  }
  if (!out.empty()) io::save_schedule_csv(s, cfg.catalog, goal, out);

  CostBreakdown cb = total_cost(goal, s, cfg.catalog);
  std::cout << "method=" << method << " queries=" << w.size() << " vms=" << s.vms.size()
            << " misassigned=" << misassigned << "\n";
  std::cout << "provisioning_usd=" << cb.provisioning << " processing_usd=" << cb.processing
            << " penalty_usd=" << cb.penalty << " total_usd=" << cb.total << " wall_ms=" << wall;
  if (expanded) std::cout << " expanded=" << expanded;
  std::cout << "\n";
  return kExitOk;
}

// ------------------------- online -------------------------

int cmd_online(const CommonOpts& opts, const std::string& strategy_path, const std::string& trace,
               const std::string& mode, double epsilon, const std::string& out) {
  io::Config cfg = load_config_with_goal(opts);
  Strategy base = io::load_strategy(strategy_path);
  base.workers = opts.workers;
  base.check_catalog(cfg.catalog);

  OnlineOptions oo;
  if (mode == "shift") {
    oo.use_shift = true;
    oo.use_cache = false;
  } else if (mode == "reuse") {
    oo.use_shift = false;
    oo.use_cache = true;
  } else if (mode == "shift+reuse") {
    oo.use_shift = true;
    oo.use_cache = true;
  } else if (mode == "none") {
    oo.use_shift = false;
    oo.use_cache = false;
  } else {
    throw ConfigError("unknown online mode \"" + mode + "\"");
  }
  oo.omega_tolerance = epsilon;

  auto rows = io::load_workload_rows(trace);
  Workload queries = io::resolve_workload(rows, cfg.catalog);
  std::stable_sort(queries.begin(), queries.end(),
                   [](const Query& a, const Query& b) { return a.arrival_time < b.arrival_time; });

  OnlineScheduler sched(base, cfg.catalog, oo);
  double t0 = now_ms();
  for (const Query& q : queries) sched.arrive(q, q.arrival_time);
  double wall = now_ms() - t0;

  if (!out.empty()) {
    std::ofstream os(out);
    if (!os) throw ConfigError("cannot write " + out);
    os << "query,vm_index,vm_type,start_s,finish_s,violation_s\n";
    const auto& plan = sched.plan();
    for (std::size_t i = 0; i < plan.size(); ++i)
      for (const auto& pq : plan[i].queue) {
        Seconds latency = pq.finish - pq.query.arrival_time;
        Seconds bound = 0;
        switch (base.goal.kind) {
          case MetricKind::kMaxLatency: bound = base.goal.deadline; break;
          case MetricKind::kPerQuery:
            bound = base.goal.per_query_deadline(pq.query.template_id);
            break;
          case MetricKind::kAverage: bound = base.goal.target; break;
          case MetricKind::kPercentile: bound = base.goal.deadline; break;
        }
        os << pq.query.instance_id << ',' << i << ',' << plan[i].vm_type_id << ',' << pq.start
           << ',' << pq.finish << ',' << std::max(0.0, latency - bound) << '\n';
      }
  }

  CostBreakdown cb = sched.trace_cost();
  std::cout << "mode=" << mode << " queries=" << queries.size() << " vms=" << sched.plan().size()
            << " cache_hits=" << sched.cache_hits() << " models_trained="
            << sched.models_trained() << "\n";
  std::cout << "provisioning_usd=" << cb.provisioning << " processing_usd=" << cb.processing
            << " penalty_usd=" << cb.penalty << " total_usd=" << cb.total << " wall_ms=" << wall
            << "\n";
  return kExitOk;
}

// ------------------------- bench -------------------------

struct BenchRow {
  std::string metric;
  std::string method;
  std::size_t workload_size = 0;
  std::uint64_t seed = 0;
  Money cost = 0;
  Money optimal_cost = 0;
  std::size_t expanded = 0;
  double wall_ms = 0;
};

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "metric,method,workload_size,seed,cost_usd,optimal_cost_usd,pct_over_optimal,expanded,"
         "wall_ms\n";
  for (const auto& r : rows) {
    double pct = r.optimal_cost > 0 ? 100.0 * (r.cost - r.optimal_cost) / r.optimal_cost : 0.0;
    out << r.metric << ',' << r.method << ',' << r.workload_size << ',' << r.seed << ',' << r.cost
        << ',' << r.optimal_cost << ',' << pct << ',' << r.expanded << ',' << r.wall_ms << '\n';
  }
}

std::vector<PerformanceGoal> bench_goals(const TemplateCatalog& catalog, Money rate) {
  Seconds longest = 0, total = 0;
  int ref = catalog.reference_vm_type().id;
  for (const QueryTemplate& t : catalog.templates()) {
    longest = std::max(longest, t.latency.at(ref));
    total += t.latency.at(ref);
  }
  Seconds avg = total / double(catalog.num_templates());
  PerformanceGoal max_goal;
  max_goal.kind = MetricKind::kMaxLatency;
  max_goal.deadline = 2.5 * longest;
  max_goal.penalty_rate = rate;
  PerformanceGoal pq_goal;
  pq_goal.kind = MetricKind::kPerQuery;
  pq_goal.penalty_rate = rate;
  for (const QueryTemplate& t : catalog.templates())
    pq_goal.per_template_deadline[t.id] = 3.0 * t.latency.at(ref);
  PerformanceGoal avg_goal;
  avg_goal.kind = MetricKind::kAverage;
  avg_goal.target = 2.5 * avg;
  avg_goal.penalty_rate = rate;
  PerformanceGoal pct_goal;
  pct_goal.kind = MetricKind::kPercentile;
  pct_goal.fraction = 0.9;
  pct_goal.deadline = 2.5 * avg;
  pct_goal.penalty_rate = rate;
  return {max_goal, pq_goal, avg_goal, pct_goal};
}

Workload random_workload(const TemplateCatalog& catalog, std::size_t n, std::uint64_t seed) {
  return sample_workloads(catalog, 1, int(n), seed).front();
}

int cmd_bench(const CommonOpts& opts, const std::string& suite, const std::string& out_dir) {
  io::Config cfg = load_config_with_goal(opts);
  std::filesystem::create_directories(out_dir);
  const TemplateCatalog& catalog = cfg.catalog;
  auto goals = bench_goals(catalog, cfg.goal.penalty_rate > 0 ? cfg.goal.penalty_rate : 0.01);
  bool all = suite == "all";

  auto train_for = [&](const PerformanceGoal& g, int n_samples, int m) {
    TrainingSpec spec;
    spec.catalog = catalog;
    spec.goal = g;
    spec.num_samples = n_samples;
    spec.queries_per_sample = m;
    spec.seed = opts.seed;
    spec.tree.seed = opts.seed;
    spec.cost_vector_queries = 500;
    spec.workers = opts.workers;
    return train(spec);
  };

  if (all || suite == "optimality") {
    std::vector<BenchRow> rows;
    for (const auto& goal : goals) {
      Strategy strat = train_for(goal, 150, 8);
      for (std::size_t size : {10u, 15u}) {
        for (std::uint64_t s = 0; s < 5; ++s) {
          Workload w = random_workload(catalog, size, mix_seed(opts.seed, 100 + s));
          double t0 = now_ms();
          auto opt = astar(w, catalog, goal,
                           is_monotonic(goal) ? HeuristicKind::kMonotonic : HeuristicKind::kNull);
          double t_opt = now_ms() - t0;
          rows.push_back(BenchRow{metric_name(goal.kind), "optimal", size, s, opt.cost, opt.cost,
                                  opt.expanded, t_opt});
          t0 = now_ms();
          Schedule tree_s = schedule_batch(strat, w, catalog);
          rows.push_back(BenchRow{metric_name(goal.kind), "wisedb", size, s,
                                  total_cost(goal, tree_s, catalog).total, opt.cost, 0,
                                  now_ms() - t0});
          for (auto [name, fn] : {std::pair<const char*, Schedule (*)(
                                      const Workload&, const TemplateCatalog&,
                                      const PerformanceGoal&)>{"ffd", ffd},
                                  {"ffi", ffi},
                                  {"pack9", pack9}}) {
            t0 = now_ms();
            Schedule b = fn(w, catalog, goal);
            rows.push_back(BenchRow{metric_name(goal.kind), name, size, s,
                                    total_cost(goal, b, catalog).total, opt.cost, 0,
                                    now_ms() - t0});
          }
        }
      }
    }
    write_bench_csv(out_dir + "/optimality.csv", rows);
    std::cout << "wrote " << out_dir << "/optimality.csv\n";
  }

  if (all || suite == "training") {
    std::vector<BenchRow> rows;
    for (std::size_t nt = 2; nt <= catalog.num_templates(); ++nt) {
      std::vector<QueryTemplate> tpls(catalog.templates().begin(),
                                      catalog.templates().begin() + nt);
      std::vector<VMType> types = catalog.vm_types();
      for (VMType& v : types) {
        std::vector<int> kept;
        for (int t : v.supports)
          if (std::any_of(tpls.begin(), tpls.end(),
                          [t](const QueryTemplate& q) { return q.id == t; }))
            kept.push_back(t);
        v.supports = kept;
      }
      TemplateCatalog sub(types, tpls);
      for (const auto& goal : bench_goals(sub, 0.01)) {
        TrainingSpec spec;
        spec.catalog = sub;
        spec.goal = goal;
        spec.num_samples = 100;
        spec.queries_per_sample = 8;
        spec.seed = opts.seed;
        spec.workers = opts.workers;
        double t0 = now_ms();
        train(spec);
        rows.push_back(
            BenchRow{metric_name(goal.kind), "train", nt, opts.seed, 0, 0, 0, now_ms() - t0});
      }
    }
    write_bench_csv(out_dir + "/training.csv", rows);
    std::cout << "wrote " << out_dir << "/training.csv\n";
  }

  if (all || suite == "adaptive") {
    std::vector<BenchRow> rows;
    for (const auto& goal : goals) {
      Strategy base = train_for(goal, 120, 8);
      Seconds strictest = default_strictest(catalog, goal);
      for (double p : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}) {
        PerformanceGoal tighter = tighten_goal(goal, p, strictest);
        double t0 = now_ms();
        Strategy adapted = adapt(base, catalog, tighter);
        double t_adapt = now_ms() - t0;
        rows.push_back(BenchRow{metric_name(goal.kind), "adapt", std::size_t(p * 100), opts.seed,
                                0, 0, 0, t_adapt});
        TrainingSpec spec;
        spec.catalog = catalog;
        spec.goal = tighter;
        spec.num_samples = 120;
        spec.queries_per_sample = 8;
        spec.seed = opts.seed;
        spec.workers = opts.workers;
        t0 = now_ms();
        train(spec);
        rows.push_back(BenchRow{metric_name(goal.kind), "fresh", std::size_t(p * 100), opts.seed,
                                0, 0, 0, now_ms() - t0});
        (void)adapted;
      }
    }
    write_bench_csv(out_dir + "/adaptive.csv", rows);
    std::cout << "wrote " << out_dir << "/adaptive.csv\n";
  }

  if (all || suite == "skew") {
    std::vector<BenchRow> rows;
    const PerformanceGoal& goal = goals[0];  // max metric, as in the skew study
    Strategy strat = train_for(goal, 150, 8);
    for (double skew : {0.0, 0.5, 0.9, 0.99}) {
      for (std::uint64_t s = 0; s < 5; ++s) {
        auto counts = skewed_counts(12, catalog.num_templates(), skew);
        Workload w;
        int instance = 1;
        for (std::size_t i = 0; i < counts.size(); ++i)
          for (std::size_t c = 0; c < counts[i]; ++c)
            w.push_back(Query{catalog.templates()[i].id, instance++, 0, 0});
        std::mt19937_64 rng(mix_seed(opts.seed, 500 + s));
        std::shuffle(w.begin(), w.end(), rng);
        for (std::size_t i = 0; i < w.size(); ++i) w[i].instance_id = int(i) + 1;
        auto opt = astar(w, catalog, goal, HeuristicKind::kMonotonic);
        Schedule tree_s = schedule_batch(strat, w, catalog);
        rows.push_back(BenchRow{std::to_string(skew), "wisedb", w.size(), s,
                                total_cost(goal, tree_s, catalog).total, opt.cost, 0, 0});
      }
    }
    write_bench_csv(out_dir + "/skew.csv", rows);
    std::cout << "wrote " << out_dir << "/skew.csv\n";
  }

  if (all || suite == "noise") {
    std::vector<BenchRow> rows;
    const PerformanceGoal& goal = goals[0];
    Strategy strat = train_for(goal, 150, 8);
    int ref = catalog.reference_vm_type().id;
    for (double sigma : {0.0, 0.1, 0.2, 0.3, 0.4}) {
      for (std::uint64_t s = 0; s < 5; ++s) {
        Workload clean = random_workload(catalog, 12, mix_seed(opts.seed, 900 + s));
        std::mt19937_64 rng(mix_seed(opts.seed, 7000 + s * 31 + std::uint64_t(sigma * 100)));
        std::normal_distribution<double> noise(0.0, 1.0);
        Workload noisy = clean;
        std::size_t misassigned = 0;
        for (Query& q : noisy) {
          Seconds base = catalog.latency(q.template_id, ref);
          Seconds raw = std::max(base * (1.0 + sigma * noise(rng)), 1e-6);
          int mapped = map_unknown(raw, catalog);
          if (mapped != q.template_id) misassigned++;
          q.template_id = mapped;
        }
        auto opt = astar(clean, catalog, goal, HeuristicKind::kMonotonic);
        Schedule planned = schedule_batch(strat, noisy, catalog);
        // The plan was made against re-bucketed templates; its real cost
        // uses the true ones.
        Schedule actual = planned;
        std::map<int, const Query*> truth;
        for (const Query& q : clean) truth[q.instance_id] = &q;
        for (auto& vm : actual.vms)
          for (auto& q : vm.queue) q.template_id = truth.at(q.instance_id)->template_id;
        rows.push_back(BenchRow{std::to_string(sigma), "wisedb", clean.size(), s,
                                total_cost(goal, actual, catalog).total, opt.cost, misassigned,
                                0});
      }
    }
    write_bench_csv(out_dir + "/noise.csv", rows);
    std::cout << "wrote " << out_dir << "/noise.csv\n";
  }

  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wisedb: learned cost-aware workload scheduling"};
  app.require_subcommand(1);

  CommonOpts gen_opts;
  std::size_t gen_n = 0;
  double gen_skew = 0;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "generate a workload file");
  add_common(gen, gen_opts);
  gen->add_option("--n", gen_n, "number of queries")->required();
  gen->add_option("--skew", gen_skew, "target chi-square confidence in [0,1]");
  gen->add_option("--out", gen_out, "output workload CSV")->required();

  CommonOpts noise_opts;
  std::string noise_in, noise_out;
  double noise_sigma = 0;
  auto* noise = app.add_subcommand("noise", "perturb workload latencies");
  add_common(noise, noise_opts);
  noise->add_option("--in", noise_in, "input workload CSV")->required();
  noise->add_option("--sigma", noise_sigma, "stddev as a fraction of latency")->required();
  noise->add_option("--out", noise_out, "output workload CSV")->required();

  CommonOpts train_opts;
  int train_samples = 3000, train_per_sample = 18, train_cvq = 1000;
  std::size_t train_cap = 5'000'000;
  TreeOpts train_tree;
  std::string train_out;
  auto* train_cmd = app.add_subcommand("train", "train a strategy");
  add_common(train_cmd, train_opts);
  train_cmd->add_option("--samples", train_samples, "sample workloads (N)");
  train_cmd->add_option("--per-sample", train_per_sample, "queries per sample (m)");
  train_cmd->add_option("--cost-vector-queries", train_cvq, "queries for template costing");
  train_cmd->add_option("--max-expanded", train_cap, "search expansion cap");
  add_tree_opts(train_cmd, train_tree);
  train_cmd->add_option("--out", train_out, "output strategy JSON")->required();

  CommonOpts adapt_opts;
  std::string adapt_strategy, adapt_out;
  double adapt_p = -1, adapt_strictest = -1;
  auto* adapt_cmd = app.add_subcommand("adapt", "tighten an existing strategy");
  add_common(adapt_cmd, adapt_opts);
  adapt_cmd->add_option("--strategy", adapt_strategy, "input strategy JSON")->required();
  adapt_cmd->add_option("--tighten-p", adapt_p, "tightening fraction in [0,1]");
  adapt_cmd->add_option("--strictest", adapt_strictest, "strictest constraint value");
  adapt_cmd->add_option("--out", adapt_out, "output strategy JSON")->required();

  CommonOpts rec_opts;
  int rec_tiers = 7, rec_keep = 3, rec_samples = 300, rec_per_sample = 8;
  double rec_strictest = -1;
  std::string rec_counts, rec_out_dir;
  auto* rec = app.add_subcommand("recommend", "recommend strategy tiers");
  add_common(rec, rec_opts);
  rec->add_option("--tiers", rec_tiers, "goals generated (n)");
  rec->add_option("--keep", rec_keep, "strategies kept (k)");
  rec->add_option("--strictest", rec_strictest, "strictest constraint value");
  rec->add_option("--samples", rec_samples, "sample workloads per tier");
  rec->add_option("--per-sample", rec_per_sample, "queries per sample");
  rec->add_option("--counts", rec_counts, "estimate for tpl:count,... workload");
  rec->add_option("--out-dir", rec_out_dir, "directory for tier strategy files");

  CommonOpts sched_opts;
  std::string sched_workload, sched_method = "tree", sched_strategy, sched_out, sched_dot;
  std::size_t sched_cap = 5'000'000;
  auto* sched = app.add_subcommand("schedule", "schedule a batch workload");
  add_common(sched, sched_opts);
  sched->add_option("--workload", sched_workload, "workload CSV")->required();
  sched->add_option("--method", sched_method, "tree | astar | ffd | ffi | pack9")
      ->check(CLI::IsMember({"tree", "astar", "ffd", "ffi", "pack9"}));
  sched->add_option("--strategy", sched_strategy, "strategy JSON (for --method=tree)");
  sched->add_option("--max-expanded", sched_cap, "search expansion cap (astar)");
  sched->add_option("--out", sched_out, "schedule CSV output");
  sched->add_option("--dump-dot", sched_dot, "write the scheduling graph as DOT");

  CommonOpts online_opts;
  std::string online_strategy, online_trace, online_mode = "shift+reuse", online_out;
  double online_eps = 1.0;
  auto* online = app.add_subcommand("online", "simulate online arrivals");
  add_common(online, online_opts);
  online->add_option("--strategy", online_strategy, "base strategy JSON")->required();
  online->add_option("--trace", online_trace, "arrival trace CSV")->required();
  online->add_option("--mode", online_mode, "shift | reuse | shift+reuse | none")
      ->check(CLI::IsMember({"shift", "reuse", "shift+reuse", "none"}));
  online->add_option("--epsilon", online_eps, "omega cache tolerance (s)");
  online->add_option("--out", online_out, "schedule CSV output");

  CommonOpts bench_opts;
  std::string bench_suite = "all", bench_out = "bench_out";
  auto* bench = app.add_subcommand("bench", "run benchmark suites");
  add_common(bench, bench_opts);
  bench->add_option("--suite", bench_suite,
                    "optimality | training | adaptive | skew | noise | all")
      ->check(CLI::IsMember({"optimality", "training", "adaptive", "skew", "noise", "all"}));
  bench->add_option("--out", bench_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(gen_opts, gen_n, gen_skew, gen_out);
    if (noise->parsed()) return cmd_noise(noise_opts, noise_in, noise_sigma, noise_out);
    if (train_cmd->parsed())
      return cmd_train(train_opts, train_samples, train_per_sample, train_cvq, train_cap,
                       train_tree, train_out);
    if (adapt_cmd->parsed())
      return cmd_adapt(adapt_opts, adapt_strategy, adapt_p, adapt_strictest, adapt_out);
    if (rec->parsed())
      return cmd_recommend(rec_opts, rec_tiers, rec_keep, rec_strictest, rec_samples,
                           rec_per_sample, rec_counts, rec_out_dir);
    if (sched->parsed())
      return cmd_schedule(sched_opts, sched_workload, sched_method, sched_strategy, sched_cap,
                          sched_out, sched_dot);
    if (online->parsed())
      return cmd_online(online_opts, online_strategy, online_trace, online_mode, online_eps,
                        online_out);
    if (bench->parsed()) return cmd_bench(bench_opts, bench_suite, bench_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const ResourceCapError& e) {
    std::cerr << "resource cap: " << e.what() << "\n";
    return kExitResourceCap;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
