#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kendallreg/kendallreg.hpp"

namespace {

using nlohmann::json;

enum Exit { ok = 0, usage = 2, data = 3, numerical = 4 };

/// Raised when the Lasso did not converge and --allow-nonconverged is off.
class NonConvergedError : public kreg::Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "nonconverged"; }
};

struct FitFlags {
  std::string data_path;
  std::string x1 = "x1", x2 = "x2", z;
  std::string dict = "family-1d";
  std::string design_points;
  std::string kernel = "epanechnikov";
  double bandwidth = 0;
  double bandwidth_multiplier = 1.0;
  std::string transform = "identity";
  std::string lambda = "cv";
  double lambda_multiplier = 1.0;
  std::string variant = "g2";
  bool exclude_diagonal = false;
  std::string penalty = "uniform";
  std::size_t cv_folds = 5;
  std::string cv_scale = "tau";
  bool cv_swap_roles = false;
  std::size_t cv_grid_size = 50;
  double tolerance = 1e-8;
  long max_iters = 100000;
  bool allow_nonconverged = false;
};

struct Common {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string threads_flag = "1";
  std::string out;
};

void add_fit_flags(CLI::App* app, FitFlags& f) {
  app->add_option("--data", f.data_path, "input CSV with header x1,x2,z1[,z2,...]")->required();
  app->add_option("--x1", f.x1, "column of the first variable");
  app->add_option("--x2", f.x2, "column of the second variable");
  app->add_option("--z", f.z, "comma-separated covariate columns (default z1,z2,...)");
  app->add_option("--dict", f.dict, "family-1d, family-1d-literal, family-2d:<1..12>, constant");
  app->add_option("--design-points", f.design_points, "grid:a:b:k or a CSV with columns z1[,z2]");
  app->add_option("--kernel", f.kernel, "epanechnikov or gaussian");
  app->add_option("--bandwidth", f.bandwidth, "fixed bandwidth (default: rule of thumb)");
  app->add_option("--bandwidth-multiplier", f.bandwidth_multiplier, "multiplier of sd(Z) n^(-1/(4+p))");
  app->add_option("--transform", f.transform, "identity, fisher or loglog");
  app->add_option("--lambda", f.lambda, "cv or a nonnegative value");
  app->add_option("--lambda-multiplier", f.lambda_multiplier, "factor applied to the CV lambda");
  app->add_option("--variant", f.variant, "g1, g2 or g3");
  app->add_flag("--exclude-diagonal", f.exclude_diagonal, "drop i = j terms of the first stage");
  app->add_option("--penalty", f.penalty, "uniform or column_sd");
  app->add_option("--cv-folds", f.cv_folds, "number of CV blocks");
  app->add_option("--cv-scale", f.cv_scale, "tau or transformed");
  app->add_flag("--cv-swap-roles", f.cv_swap_roles, "estimate tau on the complement, beta on the block");
  app->add_option("--cv-grid-size", f.cv_grid_size, "lambda values on the CV path");
  app->add_option("--tolerance", f.tolerance, "Lasso tolerance");
  app->add_option("--max-iters", f.max_iters, "Lasso sweep limit");
  app->add_flag("--allow-nonconverged", f.allow_nonconverged, "exit 0 even if the Lasso did not converge");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

kreg::Sample load_sample(const FitFlags& f) {
  const auto table = kreg::read_csv_file(f.data_path);
  return kreg::sample_from_table(table, f.x1, f.x2, split_list(f.z));
}

kreg::FitConfig make_config(const FitFlags& f, const kreg::Sample& s, const Common& c) {
  kreg::FitConfig cfg;
  cfg.kernel = kreg::kernel_family_from_string(f.kernel);
  if (f.bandwidth > 0) cfg.bandwidth = f.bandwidth;
  cfg.bandwidth_multiplier = f.bandwidth_multiplier;
  cfg.transform.family = kreg::transform_family_from_string(f.transform);
  cfg.dictionary = kreg::dict::from_token(f.dict, s.dim());
  const std::string dp = !f.design_points.empty() ? f.design_points
                         : s.dim() == 1          ? "grid:0.01:0.99:100"
                                                 : "grid:0.1:0.9:10";
  cfg.design_points = kreg::parse_design_points(dp, s.dim());
  if (f.lambda == "cv") {
    cfg.lambda_cv = true;
  } else {
    cfg.lambda = kreg::parse_number(f.lambda);
  }
  cfg.lambda_multiplier = f.lambda_multiplier;
  cfg.variant = kreg::concordance_from_string(f.variant);
  cfg.include_diagonal = !f.exclude_diagonal;
  cfg.penalty = kreg::penalty_scaling_from_string(f.penalty);
  cfg.cv.folds = f.cv_folds;
  cfg.cv.scale = kreg::cv_scale_from_string(f.cv_scale);
  cfg.cv.swap_roles = f.cv_swap_roles;
  cfg.cv.grid_size = f.cv_grid_size;
  cfg.cv.seed = c.seed;
  cfg.lasso.tolerance = f.tolerance;
  cfg.lasso.max_iters = f.max_iters;
  cfg.threads = c.threads;
  return cfg;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw kreg::DataError("cannot write '" + path + "'");
  f << text;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void check_converged(const kreg::FitResult& fit, bool allow) {
  if (!fit.converged() && !allow)
    throw NonConvergedError("Lasso did not converge (kkt_residual " + kreg::format_number(fit.lasso.kkt_residual) +
                            "); rerun with --allow-nonconverged to keep the result");
}

json run_meta(const std::string& cmd, const Common& c) {
  return {{"command", cmd}, {"seed", c.seed}, {"threads", c.threads}};
}

int cmd_fit(const FitFlags& f, const Common& c, const std::string& predict_grid, const std::string& predict_out) {
  const auto sample = load_sample(f);
  const auto cfg = make_config(f, sample, c);
  const auto fit = kreg::two_step_fit(sample, cfg);
  check_converged(fit, f.allow_nonconverged);
  json out = kreg::to_json(fit);
  out["config"] = kreg::to_json(cfg);
  out["config"]["run"] = run_meta("fit", c);
  out["config"]["input"] = {{"data", f.data_path}, {"x1", f.x1}, {"x2", f.x2}, {"z", split_list(f.z)}};
  out["timing"] = kreg::timing_json(fit.timing);
  emit(c.out, dump(out));
  if (!predict_out.empty()) {
    const auto pts = kreg::parse_design_points(predict_grid.empty() ? "grid:0:1:201" : predict_grid, sample.dim());
    std::ostringstream csv;
    for (std::size_t k = 0; k < sample.dim(); ++k) csv << "z" << k + 1 << ',';
    csv << "tau_hat\n";
    for (const auto& p : pts) {
      for (double v : p) csv << kreg::format_number(v) << ',';
      csv << kreg::format_number(kreg::predict(fit, p)) << '\n';
    }
    emit(predict_out, csv.str());
  }
  return ok;
}

int cmd_predict(const std::string& fit_path, const std::string& points, int coord, const Common& c) {
  std::ifstream in(fit_path);
  if (!in) throw kreg::DataError("cannot open '" + fit_path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw kreg::DataError(std::string("fit document: ") + e.what());
  }
  const auto fit = kreg::fit_from_json(doc);
  const std::size_t dim = fit.dictionary.input_dim();
  const auto pts = kreg::parse_design_points(points.empty() ? "grid:0:1:201" : points, dim);
  std::ostringstream csv;
  for (std::size_t k = 0; k < dim; ++k) csv << "z" << k + 1 << ',';
  csv << "tau_hat";
  if (coord > 0) csv << ",marginal_effect";
  csv << '\n';
  for (const auto& p : pts) {
    for (double v : p) csv << kreg::format_number(v) << ',';
    csv << kreg::format_number(kreg::predict(fit, p));
    if (coord > 0) {
      try {
        csv << ',' << kreg::format_number(kreg::marginal_effect(fit, p, static_cast<std::size_t>(coord - 1)));
      } catch (const kreg::Error&) {
        csv << ",nan";
      }
    }
    csv << '\n';
  }
  emit(c.out, csv.str());
  return ok;
}

int cmd_test(const FitFlags& f, const Common& c, const std::string& wald_variant, const std::string& dof,
             bool keep_intercept, std::size_t bootstrap) {
  const auto sample = load_sample(f);
  const auto cfg = make_config(f, sample, c);
  const auto fit = kreg::two_step_fit(sample, cfg);
  check_converged(fit, f.allow_nonconverged);
  kreg::WaldOptions w;
  w.variant = kreg::wald_variant_from_string(wald_variant);
  w.dof = kreg::dof_rule_from_string(dof);
  w.remove_intercept = !keep_intercept;
  w.seed = c.seed;
  json out = kreg::to_json(kreg::wald_test(sample, fit, w));
  if (bootstrap > 0)
    out["bootstrap"] = kreg::to_json(kreg::bootstrap_pvalue(sample, fit, cfg, w, bootstrap, c.seed, c.threads));
  out["fit"] = {{"beta", std::vector<double>(fit.beta.data(), fit.beta.data() + fit.beta.size())},
                {"names", fit.dictionary.names()},
                {"lambda", fit.lambda_used},
                {"bandwidth", fit.kernel.bandwidth()},
                {"design_points_used", fit.used_points.size()}};
  out["config"] = kreg::to_json(cfg);
  out["config"]["wald"] = kreg::to_json(w);
  out["config"]["run"] = run_meta("test-sa", c);
  out["config"]["input"] = {{"data", f.data_path}, {"x1", f.x1}, {"x2", f.x2}, {"z", split_list(f.z)}};
  out["timing"] = kreg::timing_json(fit.timing);
  emit(c.out, dump(out));
  return ok;
}

int cmd_cv(const FitFlags& f, const Common& c) {
  const auto sample = load_sample(f);
  auto cfg = make_config(f, sample, c);
  const auto cv = kreg::cross_validate_lambda(sample, cfg);
  json out = kreg::to_json(cv);
  out["config"] = kreg::to_json(cfg);
  out["config"]["run"] = run_meta("cv", c);
  emit(c.out, dump(out));
  return ok;
}

int cmd_simulate(const std::string& setting, std::size_t n, const Common& c) {
  const auto spec = kreg::make_setting(setting);
  const auto sample = kreg::sample_setting(spec, n, kreg::Rng(c.seed), c.threads);
  std::ostringstream csv;
  kreg::write_sample_csv(csv, sample);
  emit(c.out, csv.str());
  if (!c.out.empty() && c.out != "-") {
    const json side{{"setting", spec.name},
                    {"n", n},
                    {"seed", c.seed},
                    {"dim", spec.dim},
                    {"family", std::string(kreg::to_string(spec.family))}};
    emit(c.out + ".json", dump(side));
  }
  return ok;
}

struct BenchFlags {
  std::string table = "comparison";
  std::string settings = "s1,s2,s3,s4,s5,s6";
  std::string n_values = "2000";
  std::string estimators = "two_step,kernel";
  std::size_t replications = 30;
  std::size_t grid_points = 0;
  double level = 0.05;
  std::string wald_variant = "as_printed";
  std::string long_out;
};

int cmd_bench(const BenchFlags& b, const Common& c) {
  std::vector<kreg::SettingSpec> settings;
  for (const auto& s : split_list(b.settings)) settings.push_back(kreg::make_setting(s));
  if (settings.empty()) throw kreg::ArgumentError("bench: no settings given");
  std::vector<std::size_t> ns;
  for (const auto& s : split_list(b.n_values)) ns.push_back(static_cast<std::size_t>(kreg::parse_number(s)));
  if (ns.empty()) throw kreg::ArgumentError("bench: no sample sizes given");
  const std::size_t dim = settings.front().dim;
  for (const auto& s : settings)
    if (s.dim != dim) throw kreg::ArgumentError("bench: settings must share one covariate dimension");
  const auto cfg = dim == 1 ? kreg::bench_config_1d() : kreg::bench_config_2d();
  json config{{"table", b.table},
              {"settings", split_list(b.settings)},
              {"n", ns},
              {"replications", b.replications},
              {"seed", c.seed},
              {"fit", kreg::to_json(cfg)}};
  config["fit"].erase("design_points");
  std::ostringstream out;
  if (b.table == "comparison") {
    std::vector<kreg::EstimatorId> est;
    for (const auto& e : split_list(b.estimators)) est.push_back(kreg::estimator_from_string(e));
    const auto grid = b.grid_points ? kreg::bench_grid(dim, b.grid_points) : kreg::bench_grid(dim);
    config["grid_points"] = grid.size();
    const auto rows = kreg::comparison_table(settings, est, ns, b.replications, grid, cfg, c.seed, c.threads);
    kreg::write_metrics_csv(out, rows, config);
    if (!b.long_out.empty()) {
      std::ostringstream lg;
      kreg::write_metrics_long(lg, rows);
      emit(b.long_out, lg.str());
    }
  } else if (b.table == "power") {
    kreg::WaldOptions w;
    w.variant = kreg::wald_variant_from_string(b.wald_variant);
    config["wald"] = kreg::to_json(w);
    config["level"] = b.level;
    for (auto n : ns) {
      const auto rows = kreg::test_power_table(settings, n, b.replications, b.level, cfg, w, c.seed, c.threads);
      kreg::write_power_csv(out, rows, config);
    }
  } else if (b.table == "coefficients") {
    if (dim != 1) throw kreg::ArgumentError("bench: the coefficient table uses the univariate family");
    for (const auto& s : settings)
      for (auto n : ns) {
        const auto truth = s.id == kreg::SettingId::s1 ? kreg::dict::family_1d_quadratic_beta()
                                                       : std::vector<double>(cfg.dictionary.size(), 0.0);
        const auto st = kreg::coefficient_study(s, n, b.replications, cfg, truth, c.seed, c.threads);
        json cc = config;
        cc["setting"] = s.name;
        cc["n"] = n;
        kreg::write_coefficients_csv(out, st, cc);
      }
  } else {
    throw kreg::ArgumentError("bench: unknown table '" + b.table + "' (comparison, power, coefficients)");
  }
  emit(c.out, out.str());
  return ok;
}

int exit_code_for(const kreg::Error& e) {
  if (dynamic_cast<const kreg::DataError*>(&e)) return data;
  if (dynamic_cast<const kreg::ArgumentError*>(&e)) return usage;
  return numerical;
}

void report(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-step estimation of conditional Kendall's tau"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "random seed");
    sub->add_option("--threads", common.threads_flag, "worker threads: a count in 1..1024 or auto")
        ->check([](const std::string& v) -> std::string {
          if (v == "auto") return {};
          unsigned t = 0;
          if (!CLI::detail::lexical_cast(v, t) || t < 1 || t > 1024) return "expected auto or a count in 1..1024";
          return {};
        });
    sub->add_option("-o,--out", common.out, "output path (default stdout)");
  };

  FitFlags fit_flags;
  std::string predict_grid, predict_out;
  auto* fit = app.add_subcommand("fit", "two-step fit; writes FitResult JSON");
  add_fit_flags(fit, fit_flags);
  add_common(fit);
  fit->add_option("--predict-grid", predict_grid, "grid:a:b:k or CSV of points for --predict-out");
  fit->add_option("--predict-out", predict_out, "CSV of (z, tau_hat) on the prediction grid");

  std::string fit_path, points;
  int coord = 0;
  auto* pred = app.add_subcommand("predict", "evaluate a saved fit; writes CSV of (z, tau_hat)");
  pred->add_option("--fit", fit_path, "FitResult JSON")->required();
  pred->add_option("--points", points, "grid:a:b:k or CSV with columns z1[,z2]");
  pred->add_option("--marginal", coord, "also report the marginal effect along this coordinate (1-based)");
  add_common(pred);

  FitFlags test_flags;
  std::string wald_variant = "as_printed", dof = "automatic";
  bool keep_intercept = false;
  std::size_t bootstrap = 0;
  auto* test = app.add_subcommand("test-sa", "Wald test of the simplifying assumption; writes WaldResult JSON");
  add_fit_flags(test, test_flags);
  add_common(test);
  test->add_option("--wald-variant", wald_variant, "as_printed or studentized");
  test->add_option("--dof", dof, "automatic, design_points or coefficients");
  test->add_flag("--keep-intercept", keep_intercept, "test every coefficient including the constant");
  test->add_option("--bootstrap", bootstrap, "also compute a bootstrap p-value with B resamples");

  FitFlags cv_flags;
  auto* cv = app.add_subcommand("cv", "cross-validation curve for lambda");
  add_fit_flags(cv, cv_flags);
  add_common(cv);

  std::string setting;
  std::size_t n = 0;
  auto* sim = app.add_subcommand("simulate", "draw a sample from a simulation setting");
  sim->add_option("--setting", setting, "s1..s6, d1..d3")->required();
  sim->add_option("--n", n, "sample size")->required()->check(CLI::PositiveNumber);
  add_common(sim);

  BenchFlags bench_flags;
  auto* bench = app.add_subcommand("bench", "simulation tables (comparison, power, coefficients)");
  bench->add_option("--table", bench_flags.table, "comparison, power or coefficients");
  bench->add_option("--settings", bench_flags.settings, "comma-separated settings");
  bench->add_option("--n", bench_flags.n_values, "comma-separated sample sizes");
  bench->add_option("--estimators", bench_flags.estimators, "comma-separated: two_step, kernel, oracle");
  bench->add_option("--R", bench_flags.replications, "replications")->check(CLI::PositiveNumber);
  bench->add_option("--grid-points", bench_flags.grid_points, "evaluation points per axis");
  bench->add_option("--level", bench_flags.level, "test level for the power table");
  bench->add_option("--wald-variant", bench_flags.wald_variant, "as_printed or studentized");
  bench->add_option("--long-out", bench_flags.long_out, "long-format CSV (setting, n, estimator, metric, value)");
  add_common(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report("usage", e.what(), usage);
    return usage;
  }

  common.threads = common.threads_flag == "auto" ? kreg::default_threads()
                                                 : static_cast<unsigned>(std::stoul(common.threads_flag));

  try {
    if (*fit) return cmd_fit(fit_flags, common, predict_grid, predict_out);
    if (*pred) return cmd_predict(fit_path, points, coord, common);
    if (*test) return cmd_test(test_flags, common, wald_variant, dof, keep_intercept, bootstrap);
    if (*cv) return cmd_cv(cv_flags, common);
    if (*sim) return cmd_simulate(setting, n, common);
    if (*bench) return cmd_bench(bench_flags, common);
  } catch (const kreg::Error& e) {
    const int code = exit_code_for(e);
    report(e.kind(), e.what(), code);
    return code;
  } catch (const std::exception& e) {
    report("internal", e.what(), numerical);
    return numerical;
  }
  return usage;
}
