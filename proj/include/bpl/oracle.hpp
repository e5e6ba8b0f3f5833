#pragma once

// Benchmark objectives and the preference oracles that answer duels.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>

#include "bpl/error.hpp"

namespace bpl {

/// Standard normal CDF through erfc, accurate to double precision in both tails.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

inline double rosenbrock(const Eigen::VectorXd& x) {
  if (x.size() < 2) throw DimensionError("rosenbrock needs dimension >= 2");
  double f = 0.0;
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
    const double a = x(i + 1) - x(i) * x(i);
    const double b = 1.0 - x(i);
    f += 100.0 * a * a + b * b;
  }
  return f;
}

inline double sphere(const Eigen::VectorXd& x) { return x.squaredNorm(); }

struct ProblemSpec {
  std::string name = "rosenbrock";  // rosenbrock | sphere
  int dim = 2;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::optional<Eigen::VectorXd> optimum;
  std::optional<double> optimum_value;

  void validate() const {
    if (dim < 1) throw ConfigError("problem dimension must be >= 1");
    if (name == "rosenbrock" && dim < 2) throw ConfigError("rosenbrock needs dimension >= 2");
    if (name != "rosenbrock" && name != "sphere") {
      throw ConfigError("unknown problem '" + name + "'");
    }
    require_dim(lower.size(), dim, "problem lower bound");
    require_dim(upper.size(), dim, "problem upper bound");
    if ((upper.array() <= lower.array()).any()) throw ConfigError("degenerate domain box");
    if (optimum) {
      require_dim(optimum->size(), dim, "problem optimum");
      if ((optimum->array() < lower.array()).any() || (optimum->array() > upper.array()).any()) {
        throw ConfigError("declared optimum lies outside the domain box");
      }
    }
  }

  [[nodiscard]] double box_diagonal() const { return (upper - lower).norm(); }
};

inline ProblemSpec make_problem(const std::string& name, int dim, double lower = -2.048,
                                double upper = 2.048) {
  ProblemSpec p;
  p.name = name;
  p.dim = dim;
  p.lower = Eigen::VectorXd::Constant(dim, lower);
  p.upper = Eigen::VectorXd::Constant(dim, upper);
  if (name == "rosenbrock") {
    p.optimum = Eigen::VectorXd::Ones(dim);
    p.optimum_value = 0.0;
  } else if (name == "sphere") {
    p.optimum = Eigen::VectorXd::Zero(dim);
    p.optimum_value = 0.0;
  }
  p.validate();
  return p;
}

/// Objective value (to be minimized).
inline double objective(const ProblemSpec& p, const Eigen::VectorXd& x) {
  require_dim(x.size(), p.dim, "objective input");
  if (p.name == "rosenbrock") return rosenbrock(x);
  if (p.name == "sphere") return sphere(x);
  throw ConfigError("unknown problem '" + p.name + "'");
}

/// Higher is better: the negated objective.
inline double latent_utility(const ProblemSpec& p, const Eigen::VectorXd& x) {
  return -objective(p, x);
}

/// |f(x) - f*| with f* the declared optimum value (0 when undeclared).
inline double absolute_error(const ProblemSpec& p, double objective_value) {
  return std::abs(objective_value - p.optimum_value.value_or(0.0));
}

enum class OracleMode { deterministic, probit, human };
enum class Preference { first, second };

inline std::string to_string(OracleMode m) {
  switch (m) {
    case OracleMode::deterministic: return "deterministic";
    case OracleMode::probit: return "probit";
    case OracleMode::human: return "human";
  }
  return "?";
}

inline OracleMode oracle_mode_from_string(const std::string& s) {
  if (s == "deterministic") return OracleMode::deterministic;
  if (s == "probit") return OracleMode::probit;
  if (s == "human") return OracleMode::human;
  throw ConfigError("unknown oracle mode '" + s + "'");
}

inline std::string to_string(Preference p) { return p == Preference::first ? "first" : "second"; }

struct OracleConfig {
  OracleMode mode = OracleMode::deterministic;
  double noise = 0.1;  // probit noise scale
  std::uint64_t seed = 0;
  double human_timeout_s = 300.0;

  void validate() const {
    if (mode == OracleMode::probit && !(noise > 0.0)) {
      throw ConfigError("probit oracle noise must be > 0");
    }
    if (!(human_timeout_s > 0.0)) throw ConfigError("human timeout must be > 0");
  }
};

/// P(first preferred) under the probit model.
inline double probit_first_probability(double u1, double u2, double noise) {
  return normal_cdf((u1 - u2) / (std::numbers::sqrt2 * noise));
}

/// Synthetic answer to a duel between utilities u1 (first) and u2 (second).
/// Human mode has no synthetic answer; the harness routes it to the duel service.
template <typename Rng>
Preference answer_duel(const OracleConfig& cfg, double u1, double u2, Rng& rng) {
  if (!std::isfinite(u1) || !std::isfinite(u2)) {
    throw NumericalError("answer_duel: non-finite utility");
  }
  switch (cfg.mode) {
    case OracleMode::deterministic:
      return u1 >= u2 ? Preference::first : Preference::second;
    case OracleMode::probit: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      return u(rng) < probit_first_probability(u1, u2, cfg.noise) ? Preference::first
                                                                  : Preference::second;
    }
    case OracleMode::human:
      break;
  }
  throw OracleTimeout("human oracle: no duel service connected");
}

}  // namespace bpl
