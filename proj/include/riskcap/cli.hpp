#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "riskcap/capital.hpp"
#include "riskcap/error.hpp"
#include "riskcap/experiments.hpp"
#include "riskcap/io.hpp"

namespace riskcap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitComputation = 3;

inline constexpr const char* kSeedEnv = "RISKCAP_SEED";

/// flag > RISKCAP_SEED > config > clock.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::optional<std::uint64_t> config,
                                  const char* env_value) {
  if (flag) return *flag;
  if (env_value != nullptr && *env_value != '\0') {
    const auto v = io::parse_integer<std::uint64_t>(env_value);
    if (!v) throw ValidationError(std::string(kSeedEnv) + " must be a 64-bit unsigned decimal integer");
    return *v;
  }
  if (config) return *config;
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  return mix64(static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(now).count()));
}

inline std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::optional<std::uint64_t> config = {}) {
  return resolve_seed(flag, config, std::getenv(kSeedEnv));
}

inline std::string bracket(double estimate, const Interval& ci) {
  return io::format_short(estimate) + " (" + io::format_short(ci.lower) + ", " + io::format_short(ci.upper) + ")";
}

namespace detail {

/// Options shared by fit and capital.
struct CellArgs {
  std::string config;
  std::string counts;
  std::string events;
  std::string severity;
  std::optional<double> threshold;
  std::string id = "cell1";
  bool finite_mean = false;
};

inline void add_cell_options(CLI::App& cmd, CellArgs& a) {
  cmd.add_option("-c,--config", a.config, "JSON run configuration");
  cmd.add_option("--counts", a.counts, "counts CSV (year,count); overrides the config cells");
  cmd.add_option("--events", a.events, "events CSV (year,amount)");
  cmd.add_option("--severity", a.severity, "lognormal | pareto (with --counts)");
  cmd.add_option("--threshold", a.threshold, "Pareto threshold L (with --counts)");
  cmd.add_option("--id", a.id, "cell id (with --counts)");
  cmd.add_flag("--finite-mean", a.finite_mean, "restrict the Pareto tail index to xi > 1 (with --counts)");
}

inline io::RunConfig load_config(const CellArgs& a) {
  io::RunConfig cfg = a.config.empty() ? io::RunConfig{} : io::load_run_config(a.config);
  if (!a.counts.empty() || !a.events.empty()) {
    if (a.counts.empty() || a.events.empty()) throw ValidationError("--counts and --events must be given together");
    if (a.severity.empty()) throw ValidationError("--severity is required with --counts");
    nlohmann::json cell{{"id", a.id}, {"severity", a.severity}, {"counts", a.counts}, {"events", a.events}};
    if (a.threshold) cell["threshold"] = *a.threshold;
    if (a.finite_mean) cell["finite_mean"] = true;
    cfg.cells = io::parse_run_config(nlohmann::json{{"cells", {cell}}}, ".").cells;
  }
  if (cfg.cells.empty()) throw ValidationError("no cells: give --config with cells or --counts/--events/--severity");
  for (const auto& c : cfg.cells) {
    if (c.counts_path.empty() || c.events_path.empty()) {
      throw ValidationError("cell '" + c.model.cell_id + "': 'counts' and 'events' paths are required");
    }
  }
  return cfg;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  auto out = io::open_output(path);
  out << content;
  if (!out) throw ValidationError("failed writing '" + path + "'");
}

inline std::vector<std::size_t> parse_grid(const std::string& text) {
  if (text.empty()) return table_years();
  std::vector<std::size_t> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto v = io::parse_integer<std::size_t>(item);
    if (!v || *v == 0) throw ValidationError("--grid entries must be positive integers, got '" + item + "'");
    grid.push_back(*v);
  }
  if (grid.empty()) throw ValidationError("--grid must not be empty");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] <= grid[i - 1]) throw ValidationError("--grid must be strictly ascending");
  }
  return grid;
}

inline std::optional<SeverityFamily> parse_family(const std::string& s) {
  if (s == "lognormal") return SeverityFamily::lognormal;
  if (s == "pareto") return SeverityFamily::pareto;
  return std::nullopt;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

inline void print_fit(std::ostream& out, const CellModel& model, const LossData& data, std::vector<std::string>* csv) {
  out << "cell " << model.cell_id << " [poisson/" << to_string(model.severity) << "]: years=" << data.years()
      << " events=" << data.total_events() << '\n';
  std::optional<MleReport> mle;
  try {
    mle = fit_mle(model.severity, data.annual_counts, data.severities, model.threshold);
  } catch (const InsufficientDataError& e) {
    out << "  MLE unavailable: " << e.what() << '\n';
  }
  const CellPosterior post = build_posteriors(model, data);
  const auto summary = summarize_posteriors(post);

  const GammaParams& g = post.frequency.gamma();
  out << "  lambda posterior Gamma(shape=" << io::format_short(g.shape()) << ", scale=" << io::format_short(g.scale())
      << ")" << (post.frequency.truncated() ? " truncated" : "") << '\n';
  if (post.severity.family() == ParameterFamily::lognormal) {
    const NIXParams& n = post.severity.nix();
    out << "  (mu, sigma^2) posterior NormalInvChiSq(nu=" << io::format_short(n.dof_nu())
        << ", beta=" << io::format_short(n.scale_beta()) << ", theta=" << io::format_short(n.loc_theta())
        << ", phi=" << io::format_short(n.prec_phi()) << ")" << (post.severity.truncated() ? " truncated" : "")
        << '\n';
  } else {
    const GammaParams& t = post.severity.gamma();
    out << "  xi posterior Gamma(shape=" << io::format_short(t.shape()) << ", scale=" << io::format_short(t.scale())
        << ")" << (post.severity.truncated() ? " truncated" : "") << '\n';
  }
  out << "  parameter  MLE (0.95 interval)  posterior mode\n";
  for (const ParameterSummary& s : summary) {
    std::optional<double> est;
    if (mle) {
      if (s.name == "lambda") est = mle->lambda;
      if (s.name == "mu") est = mle->mu;
      if (s.name == "sigma") est = mle->sigma;
      if (s.name == "xi") est = mle->xi;
    }
    out << "  " << s.name << "  " << (est ? bracket(*est, s.credible)
                                        : "n/a (" + io::format_short(s.credible.lower) + ", " +
                                              io::format_short(s.credible.upper) + ")")
        << "  " << io::format_short(s.mode) << '\n';
    if (csv) {
      csv->push_back(model.cell_id + ',' + s.name + ',' + (est ? io::format_full(*est) : std::string("nan")) + ',' +
                     io::format_full(s.mode) + ',' + io::format_full(s.credible.lower) + ',' +
                     io::format_full(s.credible.upper));
    }
  }
  for (const auto& w : post.warnings) out << "  warning: " << w << '\n';
}

// ---------------------------------------------------------------------------
// capital
// ---------------------------------------------------------------------------

inline void print_capital(std::ostream& out, const CapitalReport& r) {
  const QuantileEstimate& e = r.estimate;
  out << "cell " << r.cell_id << " " << to_string(r.mode) << ": Q" << io::format_short(e.q) << " = "
      << io::format_short(e.value) << "  CI" << io::format_short(e.gamma) << " (" << io::format_short(e.ci_lower)
      << ", " << io::format_short(e.ci_upper) << ")  K=" << e.K
      << "  warnings: " << (r.warnings.empty() ? "none" : io::join_warnings(r.warnings)) << '\n';
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Runs the command line. Output goes to `out`, diagnostics to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"riskcap: operational-risk capital under parameter uncertainty"};
  app.require_subcommand(1);

  // fit
  detail::CellArgs fit_args;
  std::string fit_output;
  auto* fit = app.add_subcommand("fit", "MLEs and posterior summaries for each cell");
  detail::add_cell_options(*fit, fit_args);
  fit->add_option("-o,--output", fit_output, "CSV of parameter summaries");

  // capital
  detail::CellArgs cap_args;
  std::optional<double> cap_q, cap_gamma, cap_target;
  std::optional<std::size_t> cap_K, cap_workers, cap_batch_K, cap_max_K;
  std::optional<std::uint64_t> cap_seed;
  std::string cap_mode, cap_output;
  auto* capital = app.add_subcommand("capital", "conditional and/or predictive capital per cell");
  detail::add_cell_options(*capital, cap_args);
  capital->add_option("--q", cap_q, "quantile level (default 0.999)");
  capital->add_option("-K,--K", cap_K, "simulated years (default 1000000)");
  capital->add_option("--gamma", cap_gamma, "confidence level of the quantile interval (default 0.95)");
  capital->add_option("--seed", cap_seed, "master seed");
  capital->add_option("--mode", cap_mode, "conditional | predictive | both (default both)");
  capital->add_option("--target", cap_target, "adaptive run: target relative half-width of the interval");
  capital->add_option("--batch-K", cap_batch_K, "adaptive batch size (default 100000)");
  capital->add_option("--max-K", cap_max_K, "adaptive ceiling on K (default 10000000)");
  capital->add_option("--workers", cap_workers, "worker threads, 0 = all cores (default 1)");
  capital->add_option("-o,--output", cap_output, "capital CSV");

  // simulate
  double sim_lambda = 10.0, sim_mu = 1.0, sim_sigma = 2.0, sim_xi = 2.0, sim_threshold = 1.0;
  std::size_t sim_years = 0;
  std::string sim_severity = "lognormal", sim_counts, sim_events;
  std::optional<std::uint64_t> sim_seed;
  auto* simulate = app.add_subcommand("simulate", "synthetic loss history from a known model");
  simulate->add_option("--lambda", sim_lambda, "Poisson rate (default 10)");
  simulate->add_option("--severity", sim_severity, "lognormal | pareto (default lognormal)");
  simulate->add_option("--mu", sim_mu, "lognormal mu (default 1)");
  simulate->add_option("--sigma", sim_sigma, "lognormal sigma (default 2)");
  simulate->add_option("--xi", sim_xi, "Pareto tail index (default 2)");
  simulate->add_option("--threshold", sim_threshold, "Pareto threshold (default 1)");
  simulate->add_option("-M,--years", sim_years, "number of years")->required();
  simulate->add_option("--seed", sim_seed, "master seed");
  simulate->add_option("--counts-out", sim_counts, "counts CSV path")->required();
  simulate->add_option("--events-out", sim_events, "events CSV path")->required();

  // experiment
  std::string exp_grid, exp_severity, exp_output;
  std::optional<std::size_t> exp_K, exp_R, exp_reference_K;
  std::optional<std::uint64_t> exp_seed;
  std::optional<double> exp_q;
  bool exp_paper = false;
  std::size_t exp_workers = 1;
  auto* experiment = app.add_subcommand("experiment", "synthetic studies of estimator bias");
  experiment->require_subcommand(1);
  auto add_exp_options = [&](CLI::App* c) {
    c->add_option("--grid", exp_grid, "comma-separated years (default 5,10,15,20,40,60,80,100,200,400)");
    c->add_option("-K,--K", exp_K, "simulated years per quantile");
    c->add_option("--q", exp_q, "quantile level (default 0.999)");
    c->add_flag("--paper-scale", exp_paper, "K=1000000 and R=100 instead of the desk scale K=100000, R=20");
    c->add_option("--seed", exp_seed, "master seed");
    c->add_option("--workers", exp_workers, "worker threads, 0 = all cores (default 1)");
    c->add_option("-o,--output", exp_output, "CSV path");
  };
  auto* table1 = experiment->add_subcommand("table1", "one growing history: MLEs, intervals, both quantiles");
  add_exp_options(table1);
  table1->add_option("--severity", exp_severity, "lognormal | pareto (default lognormal)");
  auto* bias = experiment->add_subcommand("bias", "relative bias of the predictive quantile over R histories");
  add_exp_options(bias);
  bias->add_option("--severity", exp_severity, "lognormal | pareto | both (default both)");
  bias->add_option("--R", exp_R, "number of realizations");
  bias->add_option("--reference-K", exp_reference_K, "simulated years for the true-parameter quantile (default 1000000)");

  // aggregate
  std::vector<std::string> agg_inputs;
  std::string agg_mode, agg_output;
  auto* aggregate = app.add_subcommand("aggregate", "bank total as the sum of cell capital");
  aggregate->add_option("inputs", agg_inputs, "capital CSV files")->required();
  aggregate->add_option("--mode", agg_mode, "use only rows of this mode");
  aggregate->add_option("-o,--output", agg_output, "CSV path");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      std::ostringstream o, x;
      const int code = app.exit(e, o, x);
      out << o.str();
      err << x.str();
      return code == 0 ? kExitOk : kExitValidation;
    }

    if (*fit) {
      const io::RunConfig cfg = detail::load_config(fit_args);
      std::vector<std::string> rows;
      out << "# riskcap fit\n";
      for (const auto& cell : cfg.cells) {
        print_fit(out, cell.model, io::load_loss_data(cell.counts_path, cell.events_path),
                  fit_output.empty() ? nullptr : &rows);
      }
      if (!fit_output.empty()) {
        std::string csv = "cell_id,parameter,mle,mode,ci_lower,ci_upper\n";
        for (const auto& r : rows) csv += r + '\n';
        detail::write_text_file(fit_output, csv);
      }
      return kExitOk;
    }

    if (*capital) {
      io::RunConfig cfg = detail::load_config(cap_args);
      if (cap_q) cfg.q = *cap_q;
      if (cap_gamma) cfg.gamma = *cap_gamma;
      if (cap_K) cfg.K = *cap_K;
      if (cap_workers) cfg.workers = *cap_workers;
      if (cap_batch_K) cfg.batch_K = *cap_batch_K;
      if (cap_max_K) cfg.max_K = *cap_max_K;
      if (cap_target) cfg.target_rel_halfwidth = *cap_target;
      if (!cap_mode.empty()) {
        const auto m = io::parse_run_mode(cap_mode);
        if (!m) throw ValidationError("--mode must be conditional, predictive or both");
        cfg.mode = *m;
      }
      if (!(cfg.q > 0.0 && cfg.q < 1.0)) throw ValidationError("--q must lie in (0, 1)");
      if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) throw ValidationError("--gamma must lie in (0, 1)");
      if (cfg.K == 0) throw ValidationError("--K must be positive");
      const std::uint64_t seed = resolve_seed(cap_seed, cfg.seed);

      CapitalSettings settings;
      settings.q = cfg.q;
      settings.K = cfg.K;
      settings.gamma = cfg.gamma;
      settings.simulation.workers = cfg.workers;
      if (cfg.target_rel_halfwidth) settings.adaptive = AccuracyTarget{*cfg.target_rel_halfwidth, cfg.batch_K, cfg.max_K};

      out << "# riskcap capital seed=" << seed << " q=" << io::format_short(cfg.q) << " gamma="
          << io::format_short(cfg.gamma) << '\n';
      std::ostringstream csv;
      io::write_capital_header(csv);
      for (const auto& cell : cfg.cells) {
        const LossData data = io::load_loss_data(cell.counts_path, cell.events_path);
        settings.seed = cell_seed(seed, cell.model.cell_id);
        if (cfg.mode != io::RunMode::predictive) {
          const CapitalReport r = conditional_capital(cell.model, data, settings);
          print_capital(out, r);
          io::write_capital_row(csv, io::to_row(r));
        }
        if (cfg.mode != io::RunMode::conditional) {
          const CapitalReport r = predictive_capital(cell.model, data, settings);
          print_capital(out, r);
          io::write_capital_row(csv, io::to_row(r));
        }
      }
      if (cap_output.empty()) {
        out << csv.str();
      } else {
        detail::write_text_file(cap_output, csv.str());
      }
      return kExitOk;
    }

    if (*simulate) {
      const auto family = detail::parse_family(sim_severity);
      if (!family) throw ValidationError("--severity must be lognormal or pareto");
      if (sim_years == 0) throw ValidationError("--years must be positive");
      const TrueModel truth = *family == SeverityFamily::lognormal
                                  ? TrueModel::lognormal(sim_lambda, sim_mu, sim_sigma)
                                  : TrueModel::pareto(sim_lambda, sim_xi, sim_threshold);
      const std::uint64_t seed = resolve_seed(sim_seed);
      RngStream rng(seed, 0);
      const LossData data = generate_synthetic(truth, sim_years, rng);
      std::ostringstream counts, events;
      io::write_counts_csv(counts, data);
      io::write_events_csv(events, data);
      detail::write_text_file(sim_counts, counts.str());
      detail::write_text_file(sim_events, events.str());
      out << "# riskcap simulate seed=" << seed << '\n'
          << "wrote " << data.years() << " years and " << data.total_events() << " events\n";
      return kExitOk;
    }

    if (*experiment) {
      const StudyScale scale = exp_paper ? StudyScale::paper() : StudyScale::desk();
      const std::vector<std::size_t> grid = detail::parse_grid(exp_grid);
      const std::size_t K = exp_K.value_or(scale.K_sims);
      const double q = exp_q.value_or(0.999);
      if (!(q > 0.0 && q < 1.0)) throw ValidationError("--q must lie in (0, 1)");
      if (K == 0) throw ValidationError("--K must be positive");
      const std::uint64_t seed = resolve_seed(exp_seed);
      SimulationOptions sim;
      sim.workers = exp_workers;
      auto truth_for = [](SeverityFamily f) {
        return f == SeverityFamily::lognormal ? TrueModel::lognormal(10.0, 1.0, 2.0) : TrueModel::pareto(10.0, 2.0, 1.0);
      };
      std::ostringstream csv;

      if (*table1) {
        const auto family = detail::parse_family(exp_severity.empty() ? "lognormal" : exp_severity);
        if (!family) throw ValidationError("--severity must be lognormal or pareto");
        const auto rows = single_realization_track(truth_for(*family), grid, q, K, seed, sim);
        out << "# riskcap experiment table1 seed=" << seed << " severity=" << to_string(*family) << " K=" << K
            << " (quantiles in thousands)\n";
        for (const BiasRecord& r : rows) {
          out << "M=" << r.M << " K=" << r.K_data;
          for (const auto& p : r.parameters) out << "  " << p.name << "=" << bracket(p.estimate, p.interval);
          out << "  Q=" << io::format_short(r.q_conditional) << "  QB=" << io::format_short(r.q_predictive) << '\n';
        }
        io::write_table1_csv(csv, rows);
      } else {
        std::vector<SeverityFamily> families;
        if (exp_severity.empty() || exp_severity == "both") {
          families = {SeverityFamily::lognormal, SeverityFamily::pareto};
        } else if (const auto f = detail::parse_family(exp_severity)) {
          families = {*f};
        } else {
          throw ValidationError("--severity must be lognormal, pareto or both");
        }
        const std::size_t R = exp_R.value_or(scale.R);
        if (R == 0) throw ValidationError("--R must be positive");
        out << "# riskcap experiment bias seed=" << seed << " R=" << R << " K=" << K << '\n';
        std::vector<std::pair<SeverityFamily, BiasCurve>> curves;
        for (SeverityFamily f : families) {
          curves.emplace_back(f, bias_study(truth_for(f), grid, R, q, K, seed, sim, exp_reference_K.value_or(1'000'000)));
          out << to_string(f) << " Q0=" << io::format_short(curves.back().second.Q0) << '\n';
          for (const BiasPoint& p : curves.back().second.points) {
            out << "  M=" << p.M << " relative_bias=" << io::format_short(p.relative_bias) << '\n';
          }
        }
        io::write_bias_csv(csv, curves);
      }
      if (exp_output.empty()) {
        out << csv.str();
      } else {
        detail::write_text_file(exp_output, csv.str());
      }
      return kExitOk;
    }

    if (*aggregate) {
      if (!agg_mode.empty() && agg_mode != "conditional" && agg_mode != "predictive") {
        throw ValidationError("--mode must be conditional or predictive");
      }
      std::vector<io::CapitalRow> rows;
      for (const auto& path : agg_inputs) {
        auto in = io::open_input(path);
        for (auto& r : io::read_capital_csv(in, path)) {
          if (agg_mode.empty() || r.mode == agg_mode) rows.push_back(std::move(r));
        }
      }
      if (rows.empty()) throw ValidationError("aggregate: no capital rows to sum");
      std::vector<CapitalReport> reports;
      for (const auto& r : rows) {
        if (r.cell_id == "TOTAL") throw ValidationError("aggregate: input already contains a TOTAL row");
        CapitalReport rep;
        rep.cell_id = r.cell_id;
        rep.mode = r.mode == "conditional" ? CapitalMode::conditional : CapitalMode::predictive;
        rep.estimate.q = r.q;
        rep.estimate.value = r.value;
        reports.push_back(std::move(rep));
      }
      BankCapital bank;
      try {
        bank = aggregate_bank_capital(reports);
      } catch (const std::invalid_argument& e) {
        throw ValidationError(e.what());
      }
      std::uint64_t total_K = 0;
      for (const auto& r : rows) total_K += r.K;
      io::CapitalRow total{"TOTAL", std::string(to_string(bank.mode)), bank.q, total_K, bank.total,
                           std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                           "sum-of-quantiles"};
      std::ostringstream csv;
      io::write_capital_header(csv);
      for (const auto& r : rows) io::write_capital_row(csv, r);
      io::write_capital_row(csv, total);
      out << "# riskcap aggregate: " << kAggregationNote << '\n'
          << "total " << to_string(bank.mode) << " capital at q=" << io::format_short(bank.q) << ": "
          << io::format_short(bank.total) << " over " << rows.size() << " cells\n";
      if (agg_output.empty()) {
        out << csv.str();
      } else {
        detail::write_text_file(agg_output, csv.str());
      }
      return kExitOk;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitComputation;
  }
  return kExitOk;
}

}  // namespace riskcap::cli
