#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "kendallreg/bench.hpp"
#include "kendallreg/dictionary.hpp"
#include "kendallreg/error.hpp"
#include "kendallreg/inference.hpp"
#include "kendallreg/kernel.hpp"
#include "kendallreg/pipeline.hpp"

namespace kreg {

/// Malformed or missing input data (CSV shape, unknown column, bad number).
class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "data"; }
};

/// Shortest representation that reads back to the same double.
inline std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_number(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw DataError("not a number: '" + std::string(s) + "'");
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return k;
    throw DataError("missing column '" + std::string(name) + "'");
  }
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    std::string_view cell = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.remove_suffix(1);
    while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
    out.emplace_back(cell);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Comma-separated, header required, '#' lines and blank lines skipped.
inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    auto cells = split_csv_line(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw DataError("line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                      " fields, got " + std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      try {
        row.push_back(parse_number(c));
      } catch (const DataError& e) {
        throw DataError("line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw DataError("empty CSV: a header line is required");
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open '" + path + "'");
  return read_csv(f);
}

/// Builds a Sample from named columns. Empty `z` means every column named
/// z1, z2, ... in order.
inline Sample sample_from_table(const CsvTable& t, const std::string& x1 = "x1", const std::string& x2 = "x2",
                                std::vector<std::string> z = {}) {
  if (z.empty()) {
    for (std::size_t k = 1;; ++k) {
      const std::string name = "z" + std::to_string(k);
      bool found = false;
      for (const auto& h : t.header) found = found || h == name;
      if (!found) break;
      z.push_back(name);
    }
    if (z.empty()) throw DataError("missing column 'z1'");
  }
  const auto c1 = t.column(x1), c2 = t.column(x2);
  std::vector<std::size_t> cz;
  for (const auto& name : z) cz.push_back(t.column(name));
  std::vector<double> a, b, zz;
  for (const auto& row : t.rows) {
    a.push_back(row[c1]);
    b.push_back(row[c2]);
    for (auto c : cz) zz.push_back(row[c]);
  }
  try {
    return Sample(std::move(a), std::move(b), std::move(zz), cz.size());
  } catch (const ArgumentError& e) {
    throw DataError(e.what());
  }
}

inline void write_sample_csv(std::ostream& out, const Sample& s) {
  out << "x1,x2";
  for (std::size_t k = 0; k < s.dim(); ++k) out << ",z" << k + 1;
  out << '\n';
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << format_number(s.x1(i)) << ',' << format_number(s.x2(i));
    for (double v : s.z(i)) out << ',' << format_number(v);
    out << '\n';
  }
}

/// Points from a CSV whose columns are z1..zp (header required).
inline PointList points_from_table(const CsvTable& t) {
  PointList pts;
  std::vector<std::size_t> cols;
  for (std::size_t k = 1;; ++k) {
    const std::string name = "z" + std::to_string(k);
    std::size_t c = t.header.size();
    for (std::size_t j = 0; j < t.header.size(); ++j)
      if (t.header[j] == name) c = j;
    if (c == t.header.size()) break;
    cols.push_back(c);
  }
  if (cols.empty()) throw DataError("design point file needs columns z1[,z2,...]");
  for (const auto& row : t.rows) {
    Point p;
    for (auto c : cols) p.push_back(row[c]);
    pts.push_back(std::move(p));
  }
  return pts;
}

/// "grid:a:b:k" gives k equispaced points per axis on [a,b]^dim; anything
/// else is read as a CSV path.
inline PointList parse_design_points(const std::string& spec, std::size_t dim) {
  if (spec.rfind("grid:", 0) == 0) {
    std::vector<std::string> parts;
    std::stringstream ss(spec.substr(5));
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.size() != 3) throw ArgumentError("design points: expected grid:a:b:k, got '" + spec + "'");
    const double a = parse_number(parts[0]), b = parse_number(parts[1]);
    const double k = parse_number(parts[2]);
    if (!(k >= 1) || k != std::floor(k)) throw ArgumentError("design points: k must be a positive integer");
    return equispaced_grid(a, b, static_cast<std::size_t>(k), dim);
  }
  return points_from_table(read_csv_file(spec));
}

inline nlohmann::json to_json(const KernelSpec& k) {
  return {{"family", std::string(to_string(k.family()))}, {"bandwidth", k.bandwidth()}, {"dim", k.dim()}};
}

inline nlohmann::json to_json(const TransformSpec& t) {
  return {{"family", std::string(to_string(t.family))}, {"clamp_eps", t.clamp_eps}};
}

inline nlohmann::json to_json(const FitResult& f) {
  nlohmann::json j;
  j["beta"] = std::vector<double>(f.beta.data(), f.beta.data() + f.beta.size());
  j["names"] = f.dictionary.names();
  j["dictionary"] = f.dictionary.descriptor();
  j["transform"] = to_json(f.transform);
  j["kernel"] = to_json(f.kernel);
  j["lambda"] = f.lambda_used;
  j["lambda_cv"] = f.lambda_cv ? nlohmann::json(*f.lambda_cv) : nlohmann::json(nullptr);
  j["variant"] = std::string(to_string(f.variant));
  j["include_diagonal"] = f.include_diagonal;
  j["penalty"] = {{"scaling", std::string(to_string(f.penalty))}};
  std::vector<nlohmann::json> w;
  for (Eigen::Index k = 0; k < f.penalty_weights.size(); ++k)
    w.push_back(std::isinf(f.penalty_weights[k]) ? nlohmann::json("inf") : nlohmann::json(f.penalty_weights[k]));
  j["penalty"]["weights"] = w;
  j["n"] = f.n;
  j["design_points"] = f.design_points;
  nlohmann::json fs = nlohmann::json::array();
  for (std::size_t i = 0; i < f.first_stage.size(); ++i) {
    const auto& p = f.first_stage[i];
    nlohmann::json e{{"z", f.design_points[i]}};
    if (p.ok()) {
      e["tau_hat"] = p.estimate->value;
      e["raw"] = p.estimate->raw;
      e["clipped"] = p.estimate->clipped;
      e["effective_mass"] = p.estimate->effective_mass;
      e["density"] = p.estimate->density;
    } else {
      e["error"] = p.error;
    }
    fs.push_back(e);
  }
  j["first_stage"] = fs;
  j["diagnostics"] = {{"excluded_points", f.excluded_points},
                      {"clip_events", f.clip_events},
                      {"converged", f.lasso.converged},
                      {"kkt_residual", f.lasso.kkt_residual},
                      {"iterations", f.lasso.iterations},
                      {"objective", f.lasso.objective},
                      {"nonzeros", f.lasso.nonzeros()}};
  if (f.cv) {
    j["cv"] = {{"lambda_cv", f.cv->lambda_cv},
               {"grid", f.cv->grid},
               {"errors", f.cv->total_error},
               {"skipped_folds", f.cv->skipped_folds},
               {"folds", f.cv->blocks.size()}};
  }
  return j;
}

inline nlohmann::json to_json(const CvResult& cv) {
  return {{"lambda_cv", cv.lambda_cv},
          {"grid", cv.grid},
          {"errors", cv.total_error},
          {"fold_errors", cv.fold_error},
          {"skipped_folds", cv.skipped_folds},
          {"folds", cv.blocks.size()}};
}

/// Fully resolved fit configuration, echoed into every output document.
inline nlohmann::json to_json(const FitConfig& c) {
  nlohmann::json j;
  j["kernel"] = std::string(to_string(c.kernel));
  j["bandwidth"] = c.bandwidth ? nlohmann::json(*c.bandwidth) : nlohmann::json(nullptr);
  j["bandwidth_multiplier"] = c.bandwidth_multiplier;
  j["transform"] = to_json(c.transform);
  j["dictionary"] = c.dictionary.descriptor();
  j["design_points"] = c.design_points;
  j["lambda"] = c.lambda_cv ? nlohmann::json("cv") : nlohmann::json(c.lambda);
  j["lambda_multiplier"] = c.lambda_multiplier;
  j["variant"] = std::string(to_string(c.variant));
  j["include_diagonal"] = c.include_diagonal;
  j["penalty"] = std::string(to_string(c.penalty));
  j["cv"] = {{"folds", c.cv.folds},
             {"grid", c.cv.grid},
             {"grid_size", c.cv.grid_size},
             {"grid_ratio", c.cv.grid_ratio},
             {"scale", std::string(to_string(c.cv.scale))},
             {"swap_roles", c.cv.swap_roles},
             {"seed", c.cv.seed}};
  j["lasso"] = {{"tolerance", c.lasso.tolerance}, {"max_iters", c.lasso.max_iters}};
  return j;
}

inline nlohmann::json to_json(const WaldOptions& o) {
  return {{"variant", std::string(to_string(o.variant))},
          {"remove_intercept", o.remove_intercept},
          {"dof", std::string(to_string(o.dof))},
          {"gn_budget", o.gn_budget},
          {"gn_max_triples", o.gn_max_triples ? nlohmann::json(*o.gn_max_triples) : nlohmann::json(nullptr)},
          {"seed", o.seed},
          {"rank_tolerance", o.rank_tolerance}};
}

inline nlohmann::json to_json(const BootstrapResult& b) {
  return {{"p_value", b.p_value},
          {"B", b.replicates},
          {"exceedances", b.exceedances},
          {"failed", b.failed},
          {"observed", b.observed}};
}

inline nlohmann::json timing_json(const FitTiming& t) {
  return {{"first_stage_seconds", t.first_stage},
          {"cross_validation_seconds", t.cross_validation},
          {"second_stage_seconds", t.second_stage}};
}

/// Rebuilds what predict and marginal_effect need from a FitResult document.
inline FitResult fit_from_json(const nlohmann::json& j) {
  try {
    FitResult f;
    const auto beta = j.at("beta").get<std::vector<double>>();
    f.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    f.dictionary = dict::from_descriptor(j.at("dictionary"));
    if (f.dictionary.size() != beta.size()) throw DataError("fit document: beta length != dictionary size");
    f.transform.family = transform_family_from_string(j.at("transform").at("family").get<std::string>());
    f.transform.clamp_eps = j.at("transform").value("clamp_eps", 1e-6);
    const auto& k = j.at("kernel");
    f.kernel = KernelSpec(kernel_family_from_string(k.at("family").get<std::string>()), k.at("bandwidth").get<double>(),
                          k.at("dim").get<std::size_t>());
    f.lambda_used = j.at("lambda").get<double>();
    f.n = j.value("n", std::size_t{0});
    f.variant = concordance_from_string(j.value("variant", std::string("g2")));
    f.include_diagonal = j.value("include_diagonal", true);
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("fit document: ") + e.what());
  }
}

inline nlohmann::json to_json(const WaldResult& w) {
  return {{"statistic", w.statistic},
          {"dof", w.dof},
          {"p_value", w.p_value},
          {"variant", std::string(to_string(w.variant))},
          {"intercept_removed", w.intercept_removed},
          {"h_hat_diag", w.h_hat_diag},
          {"gn", w.gn},
          {"floored", w.floored},
          {"rank", w.rank},
          {"scale", w.scale}};
}

inline nlohmann::json to_json(const MetricReport& m) {
  nlohmann::json j{{"setting", m.setting},
                   {"estimator", std::string(to_string(m.estimator))},
                   {"n", m.n},
                   {"replications", m.replications},
                   {"grid_size", m.grid_size},
                   {"ibias_x1e3", m.ibias * 1e3},
                   {"ivar_x1e3", m.ivar * 1e3},
                   {"isd_x1e3", m.isd * 1e3},
                   {"imse_x1e3", m.imse * 1e3},
                   {"failed_evaluations", m.failed_evaluations},
                   {"uncovered_points", m.uncovered_points},
                   {"nonconverged", m.nonconverged}};
  if (!m.error.empty()) j["error"] = m.error;
  return j;
}

/// Wide table, metrics x 1e3. Failed cells carry their error message.
inline void write_metrics_csv(std::ostream& out, const std::vector<MetricReport>& rows, const nlohmann::json& config) {
  out << "# config: " << config.dump() << '\n';
  out << "setting,n,estimator,replications,ibias_x1e3,ivar_x1e3,isd_x1e3,imse_x1e3,failed_evaluations,error\n";
  for (const auto& m : rows) {
    out << m.setting << ',' << m.n << ',' << to_string(m.estimator) << ',' << m.replications << ','
        << format_number(m.ibias * 1e3) << ',' << format_number(m.ivar * 1e3) << ',' << format_number(m.isd * 1e3)
        << ',' << format_number(m.imse * 1e3) << ',' << m.failed_evaluations << ',' << m.error << '\n';
  }
}

/// Long format (setting, n, estimator, metric, value) for plotting tools.
inline void write_metrics_long(std::ostream& out, const std::vector<MetricReport>& rows) {
  out << "setting,n,estimator,metric,value\n";
  for (const auto& m : rows) {
    if (!m.error.empty()) continue;
    const std::pair<const char*, double> vals[] = {
        {"ibias", m.ibias * 1e3}, {"ivar", m.ivar * 1e3}, {"isd", m.isd * 1e3}, {"imse", m.imse * 1e3}};
    for (const auto& [name, v] : vals)
      out << m.setting << ',' << m.n << ',' << to_string(m.estimator) << ',' << name << ',' << format_number(v)
          << '\n';
  }
}

inline void write_power_csv(std::ostream& out, const std::vector<PowerRow>& rows, const nlohmann::json& config) {
  out << "# config: " << config.dump() << '\n';
  out << "setting,n,replications,level,rejections,failures,rejection_percent,mean_p_value\n";
  for (const auto& r : rows)
    out << r.setting << ',' << r.n << ',' << r.replications << ',' << format_number(r.level) << ',' << r.rejections
        << ',' << r.failures << ',' << format_number(r.rejection_percent) << ',' << format_number(r.mean_p_value)
        << '\n';
}

/// One row per coefficient: truth, mean, bias, sd and nonzero frequency.
inline void write_coefficients_csv(std::ostream& out, const CoefficientStudy& st, const nlohmann::json& config) {
  out << "# config: " << config.dump() << '\n';
  out << "index,name,truth,mean,bias,sd,prob_nonzero\n";
  for (std::size_t j = 0; j < st.names.size(); ++j)
    out << j + 1 << ',' << st.names[j] << ',' << format_number(st.truth[j]) << ',' << format_number(st.mean[j]) << ','
        << format_number(st.bias[j]) << ',' << format_number(st.sd[j]) << ',' << format_number(st.prob_nonzero[j])
        << '\n';
}

}  // namespace kreg
