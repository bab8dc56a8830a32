// pmuplace: optimal PMU placement for three-phase distribution grids.
//
// Subcommands: gen-grid, candidates, bounds, place, validate.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "pmuplace/pmuplace.hpp"

namespace {

using namespace pmuplace;

struct PipelineOpts {
  std::string grid_path;
  std::string cost_rule = "normal";
  std::uint64_t cost_seed = 0;
  double cost_value = 1.0;
  double sigma_psd = 0.5;
  double sigma_mag = 0.01;
  double sigma_ang = 0.01;
  std::string prior = "linearization";
  int prior_samples = 10000;
  std::uint64_t prior_seed = 0;
};

void add_pipeline_opts(CLI::App* cmd, PipelineOpts& o) {
  cmd->add_option("--grid", o.grid_path, "grid file")->required();
  cmd->add_option("--cost-rule", o.cost_rule, "fixed|normal")
      ->check(CLI::IsMember({"fixed", "normal"}));
  cmd->add_option("--cost-seed", o.cost_seed, "seed for normal cost draws");
  cmd->add_option("--cost-value", o.cost_value, "cost under the fixed rule");
  cmd->add_option("--sigma-psd", o.sigma_psd, "pseudo-measurement relative std");
  cmd->add_option("--sigma-mag", o.sigma_mag, "PMU magnitude noise std (fraction)");
  cmd->add_option("--sigma-ang", o.sigma_ang, "PMU angle noise std (rad)");
  cmd->add_option("--prior", o.prior, "prior covariance method")
      ->check(CLI::IsMember({"linearization", "monte-carlo"}));
  cmd->add_option("--prior-samples", o.prior_samples, "samples for the monte-carlo prior");
  cmd->add_option("--prior-seed", o.prior_seed, "seed for the monte-carlo prior");
}

struct Pipeline {
  GridModel grid;
  AdmittanceMatrix adm;
  PriorState prior;
  CandidateSet set;
  PlacementProblem problem;
};

Pipeline build_pipeline(const PipelineOpts& o) {
  Pipeline pl;
  pl.grid = load_grid(o.grid_path);
  pl.adm = build_admittance(pl.grid);
  const CVector s_psd = nominal_loads(pl.grid, pl.adm.index);
  const PriorMethod method =
      o.prior == "monte-carlo" ? PriorMethod::monte_carlo : PriorMethod::linearization;
  pl.prior = make_prior(pl.grid, pl.adm, s_psd, method, o.sigma_psd, o.prior_samples,
                        o.prior_seed);
  CostRule rule;
  if (o.cost_rule == "fixed") {
    rule.kind = CostRule::fixed;
    rule.value = o.cost_value;
  } else {
    rule.kind = CostRule::seeded_normal;
    rule.seed = o.cost_seed;
  }
  NoiseConfig noise;
  noise.sigma_mag = o.sigma_mag;
  noise.sigma_ang = o.sigma_ang;
  noise.sigma_psd = o.sigma_psd;
  pl.set = enumerate_candidates(pl.grid, pl.adm, rule, noise, {}, &pl.prior.v);
  pl.problem = make_problem(pl.prior, pl.set);
  return pl;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

std::vector<Metric> parse_metric_list(const std::string& s) {
  std::vector<Metric> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(metric_from_string(tok));
  return out;
}

void print_selection(const Pipeline& pl, const std::vector<int>& selected, double value,
                     Metric metric) {
  std::cout << "id\tkind\tbus\tphase\tneighbor\tcost\n";
  double total = 0.0;
  for (int i : selected) {
    const auto& c = pl.set.candidates[i];
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d\t%s\t%d\t%c\t%d\t%.6g\n", c.id, to_string(c.kind).c_str(),
                  c.bus, static_cast<char>('a' + c.phase), c.neighbor, pl.set.cost(i));
    std::cout << buf;
    total += pl.set.cost(i);
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "total_cost\t%.6g\nf_%s\t%.9g\n", total,
                to_string(metric).c_str(), value);
  std::cout << buf;
}

int run(int argc, char** argv) {
  CLI::App app{"Optimal PMU placement under a budget constraint"};
  app.require_subcommand(1);

  // gen-grid
  auto* gen = app.add_subcommand("gen-grid", "generate a synthetic radial feeder");
  int n_bus = 0;
  std::uint64_t gen_seed = 0;
  std::string gen_out = "feeder.grid";
  FeederConfig fcfg;
  gen->add_option("--buses", n_bus, "bus count (>= 2)")->required()->check(CLI::Range(2, 1 << 20));
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("-o,--output", gen_out, "output grid file");
  gen->add_option("--zero-injection-frac", fcfg.zero_injection_frac, "fraction of zero-injection buses");
  gen->add_option("--full-phase-frac", fcfg.full_phase_frac, "chance a bus keeps all parent phases");
  gen->add_option("--load-mag-min", fcfg.load_mag_min, "min load magnitude (per unit)");
  gen->add_option("--load-mag-max", fcfg.load_mag_max, "max load magnitude (per unit)");

  // candidates
  auto* cands = app.add_subcommand("candidates", "enumerate and export candidate measurements");
  PipelineOpts cands_opts;
  add_pipeline_opts(cands, cands_opts);
  std::string cands_out;
  cands->add_option("-o,--output", cands_out, "output file (default stdout)");

  // bounds
  auto* bounds = app.add_subcommand("bounds", "compute the certified bound sandwich");
  PipelineOpts bounds_opts;
  add_pipeline_opts(bounds, bounds_opts);
  std::string metric_list = "A";
  std::string budget_list = "5";
  std::string bounds_out;
  DescentConfig dcfg;
  std::string greedy_variant = "as-written";
  unsigned n_threads = std::max(1u, std::thread::hardware_concurrency());
  bounds->add_option("--metric", metric_list, "comma list of metrics (A,D,E,M)");
  bounds->add_option("--budgets", budget_list, "comma list of budgets");
  bounds->add_option("--alpha", dcfg.alpha, "subgradient step scale");
  bounds->add_option("--max-iter", dcfg.max_iter, "descent iteration cap")->check(CLI::PositiveNumber);
  bounds->add_option("--rel-tol", dcfg.rel_tol, "stall tolerance on the best objective");
  bounds->add_option("--greedy-variant", greedy_variant, "as-written|improvement-ratio")
      ->check(CLI::IsMember({"as-written", "improvement-ratio"}));
  bounds->add_option("--threads", n_threads, "parallelism across (metric, budget) pairs");
  bounds->add_option("-o,--output", bounds_out, "report file (appended, tab separated)");

  // place
  auto* place = app.add_subcommand("place", "select sensors under a budget");
  PipelineOpts place_opts;
  add_pipeline_opts(place, place_opts);
  std::string place_method = "greedy";
  std::string place_metric = "A";
  double place_budget = 0.0;
  DescentConfig place_dcfg;
  place->add_option("--method", place_method, "greedy|convex-round")
      ->check(CLI::IsMember({"greedy", "convex-round"}));
  place->add_option("--metric", place_metric, "metric (A|D|E|M)");
  place->add_option("--budget", place_budget, "budget")->required()->check(CLI::NonNegativeNumber);
  place->add_option("--max-iter", place_dcfg.max_iter, "descent iteration cap (convex-round)");

  // validate
  auto* validate = app.add_subcommand("validate", "Monte-Carlo check of the posterior covariance");
  PipelineOpts val_opts;
  add_pipeline_opts(validate, val_opts);
  int val_trials = 0;
  std::uint64_t val_seed = 0;
  std::string val_select;
  double val_budget = 0.0;
  std::string val_metric = "A";
  validate->add_option("--trials", val_trials, "Monte-Carlo trials (>= 1)")
      ->required()
      ->check(CLI::PositiveNumber);
  validate->add_option("--seed", val_seed, "trial seed");
  validate->add_option("--select", val_select, "comma list of candidate ids");
  validate->add_option("--budget", val_budget, "greedy budget when --select is absent");
  validate->add_option("--metric", val_metric, "metric for the greedy selection");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (gen->parsed()) {
    const GridModel grid = generate_feeder(n_bus, gen_seed, fcfg);
    save_grid(grid, gen_out);
    std::cout << "wrote " << gen_out << " (" << n_bus << " buses, N=" << grid.state_dim() << ")\n";
    return 0;
  }

  if (cands->parsed()) {
    const Pipeline pl = build_pipeline(cands_opts);
    if (cands_out.empty()) {
      export_candidates(pl.set, std::cout);
    } else {
      std::ofstream out(cands_out, std::ios::trunc);
      export_candidates(pl.set, out);
    }
    return 0;
  }

  if (bounds->parsed()) {
    const Pipeline pl = build_pipeline(bounds_opts);
    const auto metrics = parse_metric_list(metric_list);
    const auto budgets = parse_double_list(budget_list);
    const GreedyVariant variant = greedy_variant == "improvement-ratio"
                                      ? GreedyVariant::improvement_ratio
                                      : GreedyVariant::as_written;
    struct Cell { Metric metric; double budget; };
    std::vector<Cell> cells;
    for (Metric m : metrics)
      for (double b : budgets) cells.push_back({m, b});

    std::vector<BoundsReport> reports(cells.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
      for (size_t k = next.fetch_add(1); k < cells.size(); k = next.fetch_add(1))
        reports[k] = compute_bounds(cells[k].metric, pl.problem, cells[k].budget, dcfg, variant);
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < std::min<unsigned>(n_threads, cells.size()); ++t)
      pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::cout << "metric\tbudget\tf_lb\tf_convex\tf_feas\tf_greedy\tgap\n";
    for (const auto& r : reports) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%s\t%.6g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n",
                    to_string(r.metric).c_str(), r.budget, r.f_lb, r.f_convex_best, r.f_feas,
                    r.f_greedy, r.gap());
      std::cout << buf;
    }
    if (!bounds_out.empty()) {
      const bool fresh = !std::filesystem::exists(bounds_out) ||
                         std::filesystem::file_size(bounds_out) == 0;
      std::ofstream out(bounds_out, std::ios::app);
      if (fresh) write_bounds_header(out);
      for (const auto& r : reports) write_bounds_row(out, r);
    }
    return 0;
  }

  if (place->parsed()) {
    const Pipeline pl = build_pipeline(place_opts);
    const Metric metric = metric_from_string(place_metric);
    std::vector<int> selected;
    double value = 0.0;
    if (place_budget == 0.0) {
      value = metric_value(posterior_cov(pl.problem, RVector::Zero(pl.problem.n_x)), metric);
    } else if (place_method == "greedy") {
      const GreedyResult gr = greedy_cost_effective(metric, pl.problem, place_budget);
      selected = gr.selected;
      std::sort(selected.begin(), selected.end());
      value = gr.value;
    } else {
      const DescentResult dr = projected_subgradient(metric, pl.problem, place_budget, place_dcfg);
      const RVector x = round_convex(dr.x_best, pl.problem.cost, place_budget);
      for (int i = 0; i < pl.problem.n_x; ++i)
        if (x(i) != 0.0) selected.push_back(i);
      value = metric_value(posterior_cov(pl.problem, x), metric);
    }
    print_selection(pl, selected, value, metric);
    return 0;
  }

  if (validate->parsed()) {
    const Pipeline pl = build_pipeline(val_opts);
    std::vector<int> selected;
    if (!val_select.empty()) {
      selected = parse_int_list(val_select);
    } else if (val_budget > 0.0) {
      selected = greedy_cost_effective(metric_from_string(val_metric), pl.problem, val_budget)
                     .selected;
      std::sort(selected.begin(), selected.end());
    }
    const PriorMethod method = val_opts.prior == "monte-carlo" ? PriorMethod::monte_carlo
                                                               : PriorMethod::linearization;
    const ValidationReport rep = validate_posterior_covariance(
        pl.grid, pl.adm, pl.set, selected, val_trials, val_seed, method);
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "trials\t%d\ndiverged\t%d\nsensors\t%zu\ndeviation\t%.6g\n"
                  "f_A\t%.9g\nf_D\t%.9g\nf_E\t%.9g\nf_M\t%.9g\n",
                  rep.trials, rep.diverged, selected.size(), rep.deviation, rep.trace, rep.log_det,
                  rep.lambda_max, rep.max_diag);
    std::cout << buf;
    return 0;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const pmuplace::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
