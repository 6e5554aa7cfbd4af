#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "kendallreg/error.hpp"

namespace kreg {

using Point = std::vector<double>;
using PointList = std::vector<Point>;

/// k points per axis equispaced on [lo, hi]^dim, first coordinate slowest.
inline PointList equispaced_grid(double lo, double hi, std::size_t k, std::size_t dim = 1) {
  detail::require(k >= 1 && dim >= 1, "equispaced_grid: need k >= 1 and dim >= 1");
  detail::require(lo <= hi, "equispaced_grid: lo > hi");
  std::vector<double> axis(k);
  for (std::size_t i = 0; i < k; ++i)
    axis[i] = k == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k - 1);
  std::size_t total = 1;
  for (std::size_t d = 0; d < dim; ++d) total *= k;
  PointList out(total, Point(dim));
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    for (std::size_t d = dim; d-- > 0;) {
      out[idx][d] = axis[rem % k];
      rem /= k;
    }
  }
  return out;
}

/// One univariate factor of a basis term, acting on coordinate `coord`.
struct Factor {
  enum class Kind { centered_poly, unit_poly, monomial, cosine, sine, indicator_le };
  Kind kind = Kind::monomial;
  std::size_t coord = 0;
  int order = 1;          // degree or frequency index
  double threshold = 0;   // indicator only

  // centered_poly: 2^-i (x - 1/2)^i.  unit_poly: (2x - 1)^i.  cosine/sine: cos/sin(2 i pi x).
  double value(double x) const {
    switch (kind) {
      case Kind::centered_poly: return std::pow(0.5 * (x - 0.5), order);
      case Kind::unit_poly: return std::pow(2.0 * x - 1.0, order);
      case Kind::monomial: return std::pow(x, order);
      case Kind::cosine: return std::cos(2.0 * order * std::numbers::pi * x);
      case Kind::sine: return std::sin(2.0 * order * std::numbers::pi * x);
      case Kind::indicator_le: return x <= threshold ? 1.0 : 0.0;
    }
    return 0.0;
  }

  double derivative(double x) const {
    const double w = 2.0 * order * std::numbers::pi;
    switch (kind) {
      case Kind::centered_poly: return 0.5 * order * std::pow(0.5 * (x - 0.5), order - 1);
      case Kind::unit_poly: return 2.0 * order * std::pow(2.0 * x - 1.0, order - 1);
      case Kind::monomial: return order * std::pow(x, order - 1);
      case Kind::cosine: return -w * std::sin(w * x);
      case Kind::sine: return w * std::cos(w * x);
      case Kind::indicator_le: return 0.0;
    }
    return 0.0;
  }

  std::string name() const {
    const std::string z = "z" + std::to_string(coord + 1);
    switch (kind) {
      case Kind::centered_poly: return "p" + std::to_string(order) + "(" + z + ")";
      case Kind::unit_poly: return "(2" + z + "-1)^" + std::to_string(order);
      case Kind::monomial: return order == 1 ? z : z + "^" + std::to_string(order);
      case Kind::cosine: return "cos(2pi*" + std::to_string(order) + "*" + z + ")";
      case Kind::sine: return "sin(2pi*" + std::to_string(order) + "*" + z + ")";
      case Kind::indicator_le: {
        nlohmann::json t = threshold;
        return "1{" + z + "<=" + t.dump() + "}";
      }
    }
    return "?";
  }
};

/// Product of factors; the empty product is the constant 1.
struct Term {
  std::vector<Factor> factors;

  std::string name() const {
    if (factors.empty()) return "1";
    std::string s;
    for (std::size_t k = 0; k < factors.size(); ++k) s += (k ? "*" : "") + factors[k].name();
    return s;
  }
};

/// Ordered family psi = (psi_1, ..., psi_p') of functions R^p -> R.
/// Coefficient j always refers to term j. Optionally composes every
/// coordinate with the affine map x -> (x - lo)/(hi - lo) first.
class Dictionary {
 public:
  Dictionary(std::size_t input_dim, std::vector<Term> terms, nlohmann::json descriptor = {})
      : dim_(input_dim), terms_(std::move(terms)), descriptor_(std::move(descriptor)) {
    detail::require(dim_ >= 1, "Dictionary: input dimension must be >= 1");
    detail::require(!terms_.empty(), "Dictionary: at least one basis function required");
    std::unordered_set<std::string> seen;
    for (const auto& t : terms_) {
      for (const auto& f : t.factors)
        detail::require(f.coord < dim_, "Dictionary: factor coordinate out of range in " + t.name());
      if (!seen.insert(t.name()).second)
        throw ArgumentError("Dictionary: duplicate basis function " + t.name());
    }
    if (descriptor_.is_null()) descriptor_ = custom_descriptor();
  }

  std::size_t input_dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return terms_.size(); }
  const std::vector<Term>& terms() const noexcept { return terms_; }
  std::string name(std::size_t j) const { return terms_.at(j).name(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& t : terms_) out.push_back(t.name());
    return out;
  }

  /// Index of the constant-1 function, if the family has one.
  std::optional<std::size_t> constant_index() const {
    for (std::size_t j = 0; j < terms_.size(); ++j)
      if (terms_[j].factors.empty()) return j;
    return std::nullopt;
  }

  const std::vector<std::pair<double, double>>& rescaling() const noexcept { return rescale_; }

  /// Copy that maps each observed range [lo_k, hi_k] onto [0, 1] before evaluation.
  Dictionary with_rescaling(std::vector<std::pair<double, double>> ranges) const {
    detail::require(ranges.empty() || ranges.size() == dim_,
                    "Dictionary: rescaling needs one range per coordinate");
    for (const auto& [lo, hi] : ranges)
      detail::require(hi > lo, "Dictionary: rescaling range must have hi > lo");
    Dictionary d = *this;
    d.rescale_ = std::move(ranges);
    return d;
  }

  void evaluate_into(std::span<const double> z, std::span<double> out) const {
    check_dim(z);
    double buf[8];
    std::vector<double> heap;
    double* x = buf;
    if (dim_ > 8) {
      heap.resize(dim_);
      x = heap.data();
    }
    for (std::size_t k = 0; k < dim_; ++k) x[k] = map(k, z[k]);
    for (std::size_t j = 0; j < terms_.size(); ++j) {
      double v = 1.0;
      for (const auto& f : terms_[j].factors) v *= f.value(x[f.coord]);
      out[j] = v;
    }
  }

  /// psi_j(z) alone.
  double evaluate_one(std::size_t j, std::span<const double> z) const {
    check_dim(z);
    double v = 1.0;
    for (const auto& f : terms_.at(j).factors) v *= f.value(map(f.coord, z[f.coord]));
    return v;
  }

  std::vector<double> evaluate(std::span<const double> z) const {
    std::vector<double> out(size());
    evaluate_into(z, out);
    return out;
  }

  /// d psi_j / d z_coord at z (coord is 0-based).
  std::vector<double> evaluate_derivative(std::span<const double> z, std::size_t coord) const {
    check_dim(z);
    detail::require(coord < dim_, "evaluate_derivative: coordinate out of range");
    std::vector<double> x(dim_);
    for (std::size_t k = 0; k < dim_; ++k) x[k] = map(k, z[k]);
    const double chain = rescale_.empty() ? 1.0 : 1.0 / (rescale_[coord].second - rescale_[coord].first);
    std::vector<double> out(size(), 0.0);
    for (std::size_t j = 0; j < terms_.size(); ++j) {
      const auto& fs = terms_[j].factors;
      double total = 0.0;
      for (std::size_t a = 0; a < fs.size(); ++a) {
        if (fs[a].coord != coord) continue;
        if (fs[a].kind == Factor::Kind::indicator_le && x[coord] == fs[a].threshold) {
          throw NonDifferentiableError(terms_[j].name(), "basis function " + terms_[j].name() +
                                                             " is not differentiable at its knot");
        }
        double prod = fs[a].derivative(x[coord]);
        for (std::size_t b = 0; b < fs.size(); ++b)
          if (b != a) prod *= fs[b].value(x[fs[b].coord]);
        total += prod;
      }
      out[j] = total * chain;
    }
    return out;
  }

  /// Rows are psi(z'_i)^T.
  Eigen::MatrixXd design_matrix(const PointList& points) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(size()));
    std::vector<double> row(size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      evaluate_into(points[i], row);
      for (std::size_t j = 0; j < size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    return m;
  }

  /// Self-describing document: family id (or explicit terms) plus rescaling.
  nlohmann::json descriptor() const {
    nlohmann::json d = descriptor_;
    if (!rescale_.empty()) {
      nlohmann::json r = nlohmann::json::array();
      for (const auto& [lo, hi] : rescale_) r.push_back({lo, hi});
      d["rescale"] = r;
    }
    d["size"] = size();
    d["input_dim"] = dim_;
    d["names"] = names();
    return d;
  }

  nlohmann::json custom_descriptor() const {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : terms_) {
      nlohmann::json fs = nlohmann::json::array();
      for (const auto& f : t.factors) {
        nlohmann::json jf{{"coord", f.coord + 1}};
        switch (f.kind) {
          case Factor::Kind::centered_poly: jf["kind"] = "poly"; jf["degree"] = f.order; break;
          case Factor::Kind::unit_poly: jf["kind"] = "unit_poly"; jf["degree"] = f.order; break;
          case Factor::Kind::monomial: jf["kind"] = "monomial"; jf["degree"] = f.order; break;
          case Factor::Kind::cosine: jf["kind"] = "cos"; jf["freq"] = f.order; break;
          case Factor::Kind::sine: jf["kind"] = "sin"; jf["freq"] = f.order; break;
          case Factor::Kind::indicator_le: jf["kind"] = "indicator_le"; jf["threshold"] = f.threshold; break;
        }
        fs.push_back(jf);
      }
      terms.push_back(fs);
    }
    return {{"family", "custom"}, {"terms", terms}};
  }

 private:
  void check_dim(std::span<const double> z) const {
    if (z.size() != dim_)
      throw ArgumentError("dictionary: expected z of dimension " + std::to_string(dim_) + ", got " +
                          std::to_string(z.size()));
  }

  double map(std::size_t k, double v) const {
    if (rescale_.empty()) return v;
    return (v - rescale_[k].first) / (rescale_[k].second - rescale_[k].first);
  }

  std::size_t dim_;
  std::vector<Term> terms_;
  nlohmann::json descriptor_;
  std::vector<std::pair<double, double>> rescale_;
};

namespace dict {

inline Factor poly(std::size_t coord, int degree) {
  return {Factor::Kind::centered_poly, coord, degree, 0.0};
}
inline Factor unit_poly(std::size_t coord, int degree) {
  return {Factor::Kind::unit_poly, coord, degree, 0.0};
}
inline Factor monomial(std::size_t coord, int degree) {
  return {Factor::Kind::monomial, coord, degree, 0.0};
}
inline Factor cosine(std::size_t coord, int freq) { return {Factor::Kind::cosine, coord, freq, 0.0}; }
inline Factor sine(std::size_t coord, int freq) { return {Factor::Kind::sine, coord, freq, 0.0}; }
inline Factor indicator_le(std::size_t coord, double threshold) {
  return {Factor::Kind::indicator_le, coord, 1, threshold};
}

/// {psi_1 = 1} on R^p.
inline Dictionary constant(std::size_t dim = 1) {
  return Dictionary(dim, {Term{}}, {{"family", "constant"}, {"dim", dim}});
}

/// The 12-function univariate family: 1, five polynomials in (z - 1/2),
/// cos/sin(2 pi z), cos/sin(4 pi z), 1{z <= 0.4}, 1{z <= 0.6}.
/// The default polynomials are (2z - 1)^i, under which 3z(1-z) has
/// coefficients (3/4, 0, -3/4, 0, ...). With `literal_scaling` they are
/// p_i(z) = 2^-i (z - 1/2)^i instead.
inline Dictionary family_1d(bool literal_scaling = false) {
  std::vector<Term> t;
  t.push_back(Term{});
  for (int i = 1; i <= 5; ++i) t.push_back(Term{{literal_scaling ? poly(0, i) : unit_poly(0, i)}});
  for (int i = 1; i <= 2; ++i) {
    t.push_back(Term{{cosine(0, i)}});
    t.push_back(Term{{sine(0, i)}});
  }
  t.push_back(Term{{indicator_le(0, 0.4)}});
  t.push_back(Term{{indicator_le(0, 0.6)}});
  return Dictionary(1, std::move(t), {{"family", literal_scaling ? "family-1d-literal" : "family-1d"}});
}

/// Coefficients of 3z(1-z) = 3/4 - (3/4)(2z - 1)^2 in family_1d(literal_scaling).
inline std::vector<double> family_1d_quadratic_beta(bool literal_scaling = false) {
  std::vector<double> b(12, 0.0);
  b[0] = 0.75;
  b[2] = literal_scaling ? -12.0 : -0.75;
  return b;
}

namespace detail2d {

inline bool admissible(int i, int j, int min_cap) {
  return std::min(i, j) <= min_cap && std::max(i, j) <= 5;
}

inline std::vector<Term> poly_terms(int min_cap) {
  std::vector<Term> out;
  for (int i = 0; i <= 5; ++i)
    for (int j = 0; j <= 5; ++j) {
      if (!admissible(i, j, min_cap)) continue;
      Term t;
      if (i > 0) t.factors.push_back(poly(0, i));
      if (j > 0) t.factors.push_back(poly(1, j));
      out.push_back(std::move(t));
    }
  return out;
}

inline std::vector<std::vector<Factor>> trig(std::size_t coord, int i) {
  if (i == 0) return {{}};
  return {{cosine(coord, i)}, {sine(coord, i)}};
}

inline std::vector<Term> trig_terms(int min_cap) {
  std::vector<Term> out;
  for (int i = 0; i <= 5; ++i)
    for (int j = 0; j <= 5; ++j) {
      if (!admissible(i, j, min_cap)) continue;
      for (const auto& a : trig(0, i))
        for (const auto& b : trig(1, j)) {
          Term t;
          t.factors = a;
          t.factors.insert(t.factors.end(), b.begin(), b.end());
          out.push_back(std::move(t));
        }
    }
  return out;
}

}  // namespace detail2d

/// Bivariate families 1..12. Tensor terms are enumerated lexicographically in
/// (i, j) = (index on z1, index on z2); the (cos, sin) products follow
/// (c1c2, c1s2, s1c2, s1s2). Families 9..12 concatenate a polynomial family
/// with a trigonometric one, keeping the constant once.
inline Dictionary family_2d(int id) {
  if (id < 1 || id > 12)
    throw ArgumentError("family_2d: id must be in 1..12, got " + std::to_string(id));
  static constexpr int caps[4] = {0, 1, 2, 5};
  std::vector<Term> terms;
  if (id <= 4) {
    terms = detail2d::poly_terms(caps[id - 1]);
  } else if (id <= 8) {
    terms = detail2d::trig_terms(caps[id - 5]);
  } else {
    terms = detail2d::poly_terms(caps[id - 9]);
    auto tr = detail2d::trig_terms(caps[id - 9]);
    for (auto& t : tr)
      if (!t.factors.empty()) terms.push_back(std::move(t));
  }
  return Dictionary(2, std::move(terms), {{"family", "family-2d"}, {"id", id}});
}

inline Factor factor_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const auto coord = j.at("coord").get<std::size_t>();
  detail::require(coord >= 1, "dictionary descriptor: coord is 1-based");
  if (kind == "poly") return poly(coord - 1, j.at("degree").get<int>());
  if (kind == "unit_poly") return unit_poly(coord - 1, j.at("degree").get<int>());
  if (kind == "monomial") return monomial(coord - 1, j.at("degree").get<int>());
  if (kind == "cos") return cosine(coord - 1, j.at("freq").get<int>());
  if (kind == "sin") return sine(coord - 1, j.at("freq").get<int>());
  if (kind == "indicator_le") return indicator_le(coord - 1, j.at("threshold").get<double>());
  throw ArgumentError("dictionary descriptor: unknown factor kind '" + kind + "'");
}

/// Inverse of Dictionary::descriptor().
inline Dictionary from_descriptor(const nlohmann::json& d) {
  const std::string family = d.at("family").get<std::string>();
  std::optional<Dictionary> out;
  if (family == "family-1d") {
    out = family_1d();
  } else if (family == "family-1d-literal") {
    out = family_1d(true);
  } else if (family == "family-2d") {
    out = family_2d(d.at("id").get<int>());
  } else if (family == "constant") {
    out = constant(d.value("dim", std::size_t{1}));
  } else if (family == "custom") {
    std::vector<Term> terms;
    std::size_t dim = d.value("input_dim", std::size_t{0});
    for (const auto& jt : d.at("terms")) {
      Term t;
      for (const auto& jf : jt) {
        t.factors.push_back(factor_from_json(jf));
        dim = std::max(dim, t.factors.back().coord + 1);
      }
      terms.push_back(std::move(t));
    }
    out = Dictionary(std::max<std::size_t>(dim, 1), std::move(terms));
  } else {
    throw ArgumentError("dictionary descriptor: unknown family '" + family + "'");
  }
  if (d.contains("rescale")) {
    std::vector<std::pair<double, double>> r;
    for (const auto& pr : d.at("rescale")) r.emplace_back(pr.at(0).get<double>(), pr.at(1).get<double>());
    return out->with_rescaling(std::move(r));
  }
  return *out;
}

/// Parses CLI tokens: "family-1d", "family-1d-literal", "family-2d:<id>", "constant".
inline Dictionary from_token(const std::string& token, std::size_t dim = 1) {
  if (token == "family-1d") return family_1d();
  if (token == "family-1d-literal") return family_1d(true);
  if (token == "constant") return constant(dim);
  if (token.rfind("family-2d:", 0) == 0) return family_2d(std::stoi(token.substr(10)));
  throw ArgumentError("unknown dictionary '" + token + "' (family-1d, family-1d-literal, family-2d:<1..12>, constant)");
}

}  // namespace dict
}  // namespace kreg
