#pragma once

// Experiment orchestration: the B-RLHF loop, the PBO loop, alpha sweeps,
// run configuration (JSON) and trajectory CSV emission.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <future>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bpl/acquisition.hpp"
#include "bpl/error.hpp"
#include "bpl/gp_pbo.hpp"
#include "bpl/laplace.hpp"
#include "bpl/oracle.hpp"
#include "bpl/policy.hpp"
#include "bpl/reward_model.hpp"

namespace bpl {

inline constexpr const char* kEngineVersion = "bpl 0.1.0";

enum class Method { brlhf, pbo };

inline std::string to_string(Method m) { return m == Method::brlhf ? "brlhf" : "pbo"; }

struct GpSettings {
  double length_scale = 1.0;  // in units of the box diagonal
  double signal_variance = 1.0;
  double noise = 0.1;
  std::size_t max_kernel_bytes = std::size_t{2} << 30;
};

struct RunConfig {
  Method method = Method::brlhf;
  ProblemSpec problem = make_problem("rosenbrock", 2);
  OracleConfig oracle;
  AcqConfig acq;
  long budget = 300;
  double time_limit_s = 36000.0;
  int retrain_every = 10;
  PolicyConfig policy;
  RewardConfig reward;
  GpSettings gp;
  std::uint64_t seed = 0;
  std::string output;
  std::string audit_log;
  bool record_timing = true;
  std::optional<double> stop_at_error;

  void validate() const {
    problem.validate();
    oracle.validate();
    acq.validate();
    policy.validate();
    reward.validate();
    if (budget < 0) throw ConfigError("budget must be >= 0");
    if (!(time_limit_s > 0.0)) throw ConfigError("time_limit_s must be > 0");
    if (retrain_every < 1) throw ConfigError("retrain_every must be >= 1");
    if (!(gp.length_scale > 0.0) || !(gp.signal_variance > 0.0) || !(gp.noise > 0.0)) {
      throw ConfigError("gp hyperparameters must be > 0");
    }
    if (stop_at_error && !(*stop_at_error > 0.0)) throw ConfigError("stop_at_error must be > 0");
  }

  [[nodiscard]] GpHyper gp_hyper() const {
    return GpHyper{.length_scale = gp.length_scale * problem.box_diagonal(),
                   .signal_variance = gp.signal_variance,
                   .noise = gp.noise};
  }
};

// ---- configuration JSON ----

namespace detail {

inline std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.begin(), v.end());
}

// Scalar or per-dimension bound.
inline Eigen::VectorXd read_bound(const nlohmann::json& j, int dim) {
  if (j.is_number()) return Eigen::VectorXd::Constant(dim, j.get<double>());
  const auto v = j.get<std::vector<double>>();
  if (static_cast<int>(v.size()) != dim) throw ConfigError("bound length must equal dim");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), dim);
}

}  // namespace detail

/// Defaults for every field; an input document only lists what it changes.
inline nlohmann::json default_config_json() {
  const PolicyConfig pol;
  const RewardConfig rew;
  const AcqConfig acq;
  const GpSettings gp;
  const OracleConfig orc;
  return {
      {"method", "brlhf"},
      {"budget", nullptr},
      {"time_limit_s", 36000.0},
      {"retrain_every", 10},
      {"record_timing", true},
      {"stop_at_error", nullptr},
      {"output", ""},
      {"audit_log", ""},
      {"problem", {{"name", "rosenbrock"}, {"dim", 2}, {"lower", -2.048}, {"upper", 2.048}}},
      {"oracle",
       {{"mode", to_string(orc.mode)},
        {"noise", orc.noise},
        {"seed", 0},
        {"human_timeout_s", orc.human_timeout_s}}},
      {"acquisition",
       {{"mode", to_string(acq.mode)},
        {"alpha", acq.alpha},
        {"temperature", acq.temperature},
        {"pool_size", acq.pool_size},
        {"mc_samples", acq.mc_samples}}},
      {"reward",
       {{"hidden", rew.hidden},
        {"activation", to_string(rew.activation)},
        {"weight_decay", rew.weight_decay},
        {"epochs", rew.epochs},
        {"learning_rate", rew.learning_rate}}},
      {"policy",
       {{"learning_rate", pol.learning_rate},
        {"entropy_weight", pol.entropy_weight},
        {"baseline_decay", pol.baseline_decay},
        {"min_std", std::exp(pol.min_log_std)},
        {"exploration", pol.exploration},
        {"initial_std", pol.initial_std},
        {"inner_updates", pol.inner_updates},
        {"update_batch", pol.update_batch}}},
      {"gp",
       {{"length_scale", gp.length_scale},
        {"signal_variance", gp.signal_variance},
        {"noise", gp.noise},
        {"max_kernel_bytes", gp.max_kernel_bytes}}},
  };
}

/// Parses a config document merged over the defaults. "seed" is mandatory.
inline RunConfig run_config_from_json(const nlohmann::json& input) {
  try {
    // merge_patch treats null as "delete"; null-valued inputs mean "default".
    nlohmann::json j = default_config_json();
    j.merge_patch(input);
    for (const char* key : {"budget", "stop_at_error"}) {
      if (!j.contains(key)) j[key] = nullptr;
    }
    RunConfig c;
    const auto method = j.at("method").get<std::string>();
    if (method != "brlhf" && method != "pbo") throw ConfigError("unknown method '" + method + "'");
    c.method = method == "brlhf" ? Method::brlhf : Method::pbo;
    if (!j.contains("seed") || j.at("seed").is_null()) throw ConfigError("seed is mandatory");
    c.seed = j.at("seed").get<std::uint64_t>();

    const auto& p = j.at("problem");
    c.problem.name = p.at("name").get<std::string>();
    c.problem.dim = p.at("dim").get<int>();
    if (c.problem.dim < 1) throw ConfigError("problem dimension must be >= 1");
    c.problem.lower = detail::read_bound(p.at("lower"), c.problem.dim);
    c.problem.upper = detail::read_bound(p.at("upper"), c.problem.dim);
    if (c.problem.name == "rosenbrock") {
      c.problem.optimum = Eigen::VectorXd::Ones(c.problem.dim);
      c.problem.optimum_value = 0.0;
    } else if (c.problem.name == "sphere") {
      c.problem.optimum = Eigen::VectorXd::Zero(c.problem.dim);
      c.problem.optimum_value = 0.0;
    }

    const auto& o = j.at("oracle");
    c.oracle.mode = oracle_mode_from_string(o.at("mode").get<std::string>());
    c.oracle.noise = o.at("noise").get<double>();
    c.oracle.seed = o.at("seed").get<std::uint64_t>();
    c.oracle.human_timeout_s = o.at("human_timeout_s").get<double>();

    const auto& a = j.at("acquisition");
    c.acq.mode = acq_mode_from_string(a.at("mode").get<std::string>());
    c.acq.alpha = a.at("alpha").get<double>();
    c.acq.temperature = a.at("temperature").get<double>();
    c.acq.pool_size = a.at("pool_size").get<int>();
    c.acq.mc_samples = a.at("mc_samples").get<int>();

    const auto& r = j.at("reward");
    c.reward.hidden = r.at("hidden").get<std::vector<int>>();
    c.reward.activation = activation_from_string(r.at("activation").get<std::string>());
    c.reward.weight_decay = r.at("weight_decay").get<double>();
    c.reward.epochs = r.at("epochs").get<int>();
    c.reward.learning_rate = r.at("learning_rate").get<double>();

    const auto& pol = j.at("policy");
    c.policy.learning_rate = pol.at("learning_rate").get<double>();
    c.policy.entropy_weight = pol.at("entropy_weight").get<double>();
    c.policy.baseline_decay = pol.at("baseline_decay").get<double>();
    const double min_std = pol.at("min_std").get<double>();
    if (!(min_std > 0.0)) throw ConfigError("policy min_std must be > 0");
    c.policy.min_log_std = std::log(min_std);
    c.policy.exploration = pol.at("exploration").get<double>();
    c.policy.initial_std = pol.at("initial_std").get<double>();
    c.policy.inner_updates = pol.at("inner_updates").get<int>();
    c.policy.update_batch = pol.at("update_batch").get<int>();

    const auto& g = j.at("gp");
    c.gp.length_scale = g.at("length_scale").get<double>();
    c.gp.signal_variance = g.at("signal_variance").get<double>();
    c.gp.noise = g.at("noise").get<double>();
    c.gp.max_kernel_bytes = g.at("max_kernel_bytes").get<std::size_t>();

    c.budget = j.at("budget").is_null() ? 150L * c.problem.dim : j.at("budget").get<long>();
    c.time_limit_s = j.at("time_limit_s").get<double>();
    c.retrain_every = j.at("retrain_every").get<int>();
    c.record_timing = j.at("record_timing").get<bool>();
    if (!j.at("stop_at_error").is_null()) c.stop_at_error = j.at("stop_at_error").get<double>();
    c.output = j.at("output").get<std::string>();
    c.audit_log = j.at("audit_log").get<std::string>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = default_config_json();
  j["method"] = to_string(c.method);
  j["seed"] = c.seed;
  j["budget"] = c.budget;
  j["time_limit_s"] = c.time_limit_s;
  j["retrain_every"] = c.retrain_every;
  j["record_timing"] = c.record_timing;
  j["stop_at_error"] = c.stop_at_error ? nlohmann::json(*c.stop_at_error) : nlohmann::json(nullptr);
  j["output"] = c.output;
  j["audit_log"] = c.audit_log;
  j["problem"] = {{"name", c.problem.name},
                  {"dim", c.problem.dim},
                  {"lower", detail::to_std(c.problem.lower)},
                  {"upper", detail::to_std(c.problem.upper)}};
  j["oracle"] = {{"mode", to_string(c.oracle.mode)},
                 {"noise", c.oracle.noise},
                 {"seed", c.oracle.seed},
                 {"human_timeout_s", c.oracle.human_timeout_s}};
  j["acquisition"] = {{"mode", to_string(c.acq.mode)},
                      {"alpha", c.acq.alpha},
                      {"temperature", c.acq.temperature},
                      {"pool_size", c.acq.pool_size},
                      {"mc_samples", c.acq.mc_samples}};
  j["reward"] = {{"hidden", c.reward.hidden},
                 {"activation", to_string(c.reward.activation)},
                 {"weight_decay", c.reward.weight_decay},
                 {"epochs", c.reward.epochs},
                 {"learning_rate", c.reward.learning_rate}};
  j["policy"] = {{"learning_rate", c.policy.learning_rate},
                 {"entropy_weight", c.policy.entropy_weight},
                 {"baseline_decay", c.policy.baseline_decay},
                 {"min_std", std::exp(c.policy.min_log_std)},
                 {"exploration", c.policy.exploration},
                 {"initial_std", c.policy.initial_std},
                 {"inner_updates", c.policy.inner_updates},
                 {"update_batch", c.policy.update_batch}};
  j["gp"] = {{"length_scale", c.gp.length_scale},
             {"signal_variance", c.gp.signal_variance},
             {"noise", c.gp.noise},
             {"max_kernel_bytes", c.gp.max_kernel_bytes}};
  return j;
}

/// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON when
/// possible and taken as a string otherwise.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key.path=value: '" + assignment + "'");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("empty key in override '" + assignment + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

// ---- results ----

struct TrajectoryRow {
  long iter = 0;
  long queries = 0;
  double best_latent = 0.0;
  double abs_error = 0.0;
  double wall_ms = 0.0;
  double refit_ms = 0.0;
  // Not part of the CSV schema.
  double posterior_ms = 0.0;
  long pairs = 0;
};

enum class Termination { budget, time, memory, target, numerical };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::budget: return "budget";
    case Termination::time: return "time";
    case Termination::memory: return "memory";
    case Termination::target: return "target";
    case Termination::numerical: return "numerical";
  }
  return "?";
}

struct RunResult {
  std::vector<TrajectoryRow> rows;
  Termination status = Termination::budget;
  nlohmann::json config;
  std::string version = kEngineVersion;
  std::string diagnostic;
  std::vector<PreferenceRecord> dataset;

  [[nodiscard]] double final_error() const {
    return rows.empty() ? std::numeric_limits<double>::infinity() : rows.back().abs_error;
  }
};

inline nlohmann::json to_json(const TrajectoryRow& r) {
  return {{"iter", r.iter},         {"queries", r.queries},   {"best_latent", r.best_latent},
          {"abs_error", r.abs_error}, {"wall_ms", r.wall_ms}, {"refit_ms", r.refit_ms}};
}

inline nlohmann::json summary_json(const RunResult& r) {
  return {{"status", to_string(r.status)},
          {"version", r.version},
          {"iterations", r.rows.size()},
          {"final_abs_error", r.rows.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.final_error())},
          {"diagnostic", r.diagnostic},
          {"config", r.config}};
}

inline constexpr const char* kCsvHeader = "iter,queries,best_latent,abs_error,wall_ms,refit_ms";

inline std::string format_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_csv(std::ostream& out, const RunResult& r) {
  out << kCsvHeader << '\n';
  for (const auto& row : r.rows) {
    out << row.iter << ',' << row.queries << ',' << format_g9(row.best_latent) << ','
        << format_g9(row.abs_error) << ',' << format_g9(row.wall_ms) << ','
        << format_g9(row.refit_ms) << '\n';
  }
}

/// Writes the trajectory CSV (binary mode, LF endings) to `path`.
inline void emit_csv(const RunResult& r, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  write_csv(f, r);
  if (!f) throw ConfigError("failed writing '" + path + "'");
}

/// Parses a trajectory CSV produced by write_csv.
inline std::vector<TrajectoryRow> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw ConfigError("trajectory CSV: unexpected header");
  }
  std::vector<TrajectoryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw ConfigError("trajectory CSV: expected 6 columns");
    TrajectoryRow r;
    r.iter = std::stol(cells[0]);
    r.queries = std::stol(cells[1]);
    r.best_latent = std::stod(cells[2]);
    r.abs_error = std::stod(cells[3]);
    r.wall_ms = std::stod(cells[4]);
    r.refit_ms = std::stod(cells[5]);
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<TrajectoryRow> read_csv_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  return read_csv(f);
}

// ---- run loop plumbing ----

/// Blocks until a human answers the duel; nullopt when the wait timed out.
using HumanAnswerFn = std::function<std::optional<Preference>(const DuelQuery&)>;

struct RunHooks {
  HumanAnswerFn human;
  std::function<void(const RunResult&)> on_row;
  std::ostream* audit = nullptr;
  std::function<bool()> cancelled;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_matrix(const Eigen::MatrixXd& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint64_t bits = 0;
    const double v = m.data()[i];
    std::memcpy(&bits, &v, sizeof bits);
    h = splitmix(h ^ bits);
  }
  return h;
}

// Resolves duels through the synthetic oracle or the human channel, with
// pause-and-resume on human timeouts. Returns nullopt when the run must stop.
class DuelResolver {
 public:
  DuelResolver(const RunConfig& cfg, const RunHooks& hooks, Clock::time_point start)
      : cfg_(cfg), hooks_(hooks), start_(start),
        rng_(cfg.oracle.seed != 0 ? cfg.oracle.seed : splitmix(cfg.seed ^ 0x6f7261636c65ULL)) {}

  std::optional<Preference> resolve(const DuelQuery& q, bool& timed_out) {
    timed_out = false;
    if (cfg_.oracle.mode != OracleMode::human) {
      return answer_duel(cfg_.oracle, latent_utility(cfg_.problem, q.first),
                         latent_utility(cfg_.problem, q.second), rng_);
    }
    if (!hooks_.human) throw OracleTimeout("human oracle: no duel service connected");
    while (true) {
      if (auto a = hooks_.human(q)) return a;
      // Paused: keep the duel pending until answered or the run is stopped.
      if (ms_since(start_) > cfg_.time_limit_s * 1000.0 ||
          (hooks_.cancelled && hooks_.cancelled())) {
        timed_out = true;
        return std::nullopt;
      }
    }
  }

  [[nodiscard]] PreferenceSource source() const {
    return cfg_.oracle.mode == OracleMode::human ? PreferenceSource::human
                                                 : PreferenceSource::synthetic;
  }

 private:
  const RunConfig& cfg_;
  const RunHooks& hooks_;
  Clock::time_point start_;
  std::mt19937_64 rng_;
};

inline void write_audit(std::ostream* out, const DuelQuery& q, const Eigen::MatrixXd* pool,
                        Preference answer, const PreferenceRecord& rec) {
  if (!out) return;
  nlohmann::json j = to_json(q);
  j["pool_hash"] = pool ? std::to_string(hash_matrix(*pool)) : std::string();
  j["answer"] = to_string(answer);
  j["record"] = to_json(rec);
  *out << j.dump() << '\n';
  out->flush();
}

struct BestTracker {
  double best = -std::numeric_limits<double>::infinity();
  void observe(double u) { best = std::max(best, u); }
};

}  // namespace detail

/// The B-RLHF loop: policy pool -> Laplace posterior -> duel selection ->
/// oracle -> dataset -> periodic MAP refit with a full Hessian rebuild (and a
/// rank-one posterior update in between) -> policy update on posterior means.
inline RunResult run_brlhf(const RunConfig& cfg, const RunHooks& hooks = {}) {
  cfg.validate();
  using detail::Clock;
  const auto start = Clock::now();
  RunResult result;
  result.config = to_json(cfg);

  std::mt19937_64 rng(detail::splitmix(cfg.seed));
  detail::DuelResolver resolver(cfg, hooks, start);
  const ProblemSpec& prob = cfg.problem;
  RewardConfig reward_cfg = cfg.reward;
  reward_cfg.lower = prob.lower;
  reward_cfg.upper = prob.upper;
  GaussianPolicy policy(prob.lower, prob.upper, cfg.policy);
  const int m = cfg.acq.pool_size;
  const long cold_start = (m + 1) / 2;

  std::optional<RewardModel> model;
  LaplacePosterior post;
  Eigen::MatrixXd hessian;
  detail::BestTracker best;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto uniform_point = [&] {
    Eigen::VectorXd x(prob.dim);
    for (int i = 0; i < prob.dim; ++i) {
      x(i) = prob.lower(i) + (prob.upper(i) - prob.lower(i)) * unif(rng);
    }
    return x;
  };

  try {
    for (long q = 0; q < cfg.budget; ++q) {
      if (detail::ms_since(start) > cfg.time_limit_s * 1000.0) {
        result.status = Termination::time;
        break;
      }
      TrajectoryRow row;
      DuelQuery query;
      Eigen::MatrixXd pool;
      const auto t_post = Clock::now();
      if (!model) {
        query.first = uniform_point();
        query.second = uniform_point();
        query.best = 0;
        query.rival = 1;
        query.mode = cfg.acq.mode;
        query.alpha = cfg.acq.alpha;
        query.temperature = cfg.acq.temperature;
      } else {
        pool = sample_candidates(policy, m, rng);
        query = select_duel(post, *model, pool, cfg.acq, rng);
      }
      row.posterior_ms = detail::ms_since(t_post);
      query.id = q;

      bool timed_out = false;
      const auto answer = resolver.resolve(query, timed_out);
      if (!answer) {
        result.status = Termination::time;
        break;
      }
      PreferenceRecord rec;
      rec.winner = *answer == Preference::first ? query.first : query.second;
      rec.loser = *answer == Preference::first ? query.second : query.first;
      rec.source = resolver.source();
      rec.iteration = q;
      result.dataset.push_back(rec);
      detail::write_audit(hooks.audit, query, model ? &pool : nullptr, *answer, rec);
      best.observe(latent_utility(prob, query.first));
      best.observe(latent_utility(prob, query.second));

      const long n_pairs = q + 1;
      if (n_pairs >= cold_start && (n_pairs - cold_start) % cfg.retrain_every == 0) {
        const auto t_fit = Clock::now();
        model = fit_reward_map(result.dataset, reward_cfg, cfg.seed, model ? &*model : nullptr);
        hessian = last_layer_hessian(*model, result.dataset);
        post = build_posterior(model->head_weights(), hessian);
        row.refit_ms = detail::ms_since(t_fit);
      } else if (model) {
        // Between refits the head is fixed: fold in the new pair's curvature.
        const auto t_upd = Clock::now();
        const Eigen::VectorXd gap =
            reward_features(*model, rec.winner) - reward_features(*model, rec.loser);
        add_pair_curvature(hessian, post.w_map(), gap);
        post = build_posterior(post.w_map(), hessian);
        row.posterior_ms += detail::ms_since(t_upd);
      }

      if (model) {
        for (int k = 0; k < cfg.policy.inner_updates; ++k) {
          const Eigen::MatrixXd xs = sample_candidates(policy, cfg.policy.update_batch, rng, 0.0);
          const Eigen::VectorXd r = model->scores(xs);
          policy = reinforce_update(policy, xs, std::span<const double>(r.data(), r.size()));
        }
      }

      row.iter = q;
      row.queries = q + 1;
      row.pairs = n_pairs;
      row.best_latent = best.best;
      row.abs_error = absolute_error(prob, -best.best);
      row.wall_ms = detail::ms_since(start);
      if (!cfg.record_timing) {
        row.wall_ms = 0.0;
        row.refit_ms = 0.0;
      }
      result.rows.push_back(row);
      if (hooks.on_row) hooks.on_row(result);
      if (cfg.stop_at_error && row.abs_error < *cfg.stop_at_error) {
        result.status = Termination::target;
        break;
      }
    }
  } catch (const NumericalError& e) {
    result.status = Termination::numerical;
    result.diagnostic = e.what();
  }
  return result;
}

/// The PBO baseline loop over uniform pools with the same duel selection.
inline RunResult run_pbo(const RunConfig& cfg, const RunHooks& hooks = {}) {
  cfg.validate();
  using detail::Clock;
  const auto start = Clock::now();
  RunResult result;
  result.config = to_json(cfg);
  std::mt19937_64 rng(detail::splitmix(cfg.seed));
  detail::DuelResolver resolver(cfg, hooks, start);
  PboConfig pcfg{.hyper = cfg.gp_hyper(), .acq = cfg.acq, .max_kernel_bytes = cfg.gp.max_kernel_bytes};
  PboState state(cfg.problem, pcfg, cfg.budget);

  bool stop_time = false;
  const DuelOracle oracle = [&](const DuelQuery& q) {
    bool timed_out = false;
    DuelQuery numbered = q;
    numbered.id = state.queries;
    const auto a = resolver.resolve(numbered, timed_out);
    if (!a) {
      stop_time = true;
      return Preference::first;
    }
    return *a;
  };

  try {
    for (long q = 0; q < cfg.budget; ++q) {
      if (detail::ms_since(start) > cfg.time_limit_s * 1000.0) {
        result.status = Termination::time;
        break;
      }
      const PboStep step = pbo_iterate(state, oracle, rng);
      if (stop_time) {
        result.status = Termination::time;
        break;
      }
      if (step.status == PboStatus::memory) {
        result.status = Termination::memory;
        result.diagnostic = "budget-exhausted: memory";
        break;
      }
      if (step.status == PboStatus::budget) break;
      PreferenceRecord rec;
      rec.winner = step.answer == Preference::first ? step.query.first : step.query.second;
      rec.loser = step.answer == Preference::first ? step.query.second : step.query.first;
      rec.source = resolver.source();
      rec.iteration = q;
      result.dataset.push_back(rec);
      DuelQuery logged = step.query;
      logged.id = q;
      detail::write_audit(hooks.audit, logged, nullptr, step.answer, rec);

      TrajectoryRow row;
      row.iter = q;
      row.queries = state.queries;
      row.pairs = static_cast<long>(state.pairs.size());
      row.best_latent = state.best_utility;
      row.abs_error = absolute_error(cfg.problem, -state.best_utility);
      row.refit_ms = step.refit_ms;
      row.wall_ms = detail::ms_since(start);
      if (!cfg.record_timing) {
        row.wall_ms = 0.0;
        row.refit_ms = 0.0;
      }
      result.rows.push_back(row);
      if (hooks.on_row) hooks.on_row(result);
      if (cfg.stop_at_error && row.abs_error < *cfg.stop_at_error) {
        result.status = Termination::target;
        break;
      }
    }
  } catch (const NumericalError& e) {
    result.status = Termination::numerical;
    result.diagnostic = e.what();
  }
  return result;
}

inline RunResult run(const RunConfig& cfg, const RunHooks& hooks = {}) {
  return cfg.method == Method::brlhf ? run_brlhf(cfg, hooks) : run_pbo(cfg, hooks);
}

// ---- alpha sweep ----

struct SweepRun {
  double alpha = 0.0;
  std::uint64_t seed = 0;
  long queries_to_target = 0;
  bool censored = false;
};

struct SweepRow {
  double alpha = 0.0;
  long median = 0;
  long q1 = 0;
  long q3 = 0;
  int runs = 0;
  int censored = 0;
};

struct SweepSummary {
  double target = 0.1;
  std::vector<SweepRow> rows;
  std::vector<SweepRun> runs;
};

/// Lower median: the smaller of the two middle values for even counts.
inline long lower_median(std::vector<long> v) {
  if (v.empty()) throw DimensionError("median of an empty list");
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

/// Nearest-rank quantile.
inline long nearest_rank(std::vector<long> v, double q) {
  if (v.empty()) throw DimensionError("quantile of an empty list");
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

/// Queries until best-so-far error first drops below `target`; censored at
/// the budget when it never does.
inline SweepRun queries_to_target(const RunResult& r, double target, long budget) {
  SweepRun s;
  for (const auto& row : r.rows) {
    if (row.abs_error < target) {
      s.queries_to_target = row.queries;
      return s;
    }
  }
  s.queries_to_target = budget;
  s.censored = true;
  return s;
}

inline SweepSummary summarize_sweep(std::vector<SweepRun> runs, std::span<const double> alphas,
                                    double target) {
  SweepSummary out;
  out.target = target;
  for (double a : alphas) {
    std::vector<long> q;
    SweepRow row;
    row.alpha = a;
    for (const auto& r : runs) {
      if (r.alpha == a) {
        q.push_back(r.queries_to_target);
        row.censored += r.censored ? 1 : 0;
      }
    }
    row.runs = static_cast<int>(q.size());
    if (!q.empty()) {
      row.median = lower_median(q);
      row.q1 = nearest_rank(q, 0.25);
      row.q3 = nearest_rank(q, 0.75);
    }
    out.rows.push_back(row);
  }
  out.runs = std::move(runs);
  return out;
}

/// Runs base x alphas x seeds (early-stopping each run at the target) on
/// `jobs` worker threads. `csv_dir`, when non-empty, receives one CSV per run.
inline SweepSummary alpha_sweep(const RunConfig& base, std::span<const double> alphas,
                                std::span<const std::uint64_t> seeds, double target = 0.1,
                                unsigned jobs = 0, const std::string& csv_dir = "") {
  if (alphas.empty() || seeds.empty()) throw ConfigError("sweep needs alphas and seeds");
  std::vector<RunConfig> configs;
  for (double a : alphas) {
    for (auto s : seeds) {
      RunConfig c = base;
      c.acq.alpha = a;
      c.acq.mode = AcqMode::mixed;
      c.seed = s;
      c.stop_at_error = target;
      c.validate();
      configs.push_back(c);
    }
  }
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  std::vector<SweepRun> runs(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      const RunResult r = run(configs[i]);
      if (r.status == Termination::numerical) throw NumericalError(r.diagnostic);
      SweepRun s = queries_to_target(r, target, configs[i].budget);
      s.alpha = configs[i].acq.alpha;
      s.seed = configs[i].seed;
      runs[i] = s;
      if (!csv_dir.empty()) {
        char name[128];
        std::snprintf(name, sizeof name, "/alpha%.3f_seed%llu.csv", s.alpha,
                      static_cast<unsigned long long>(s.seed));
        emit_csv(r, csv_dir + name);
      }
    }
  };
  std::vector<std::future<void>> workers;
  for (unsigned t = 0; t < std::min<std::size_t>(jobs, configs.size()); ++t) {
    workers.push_back(std::async(std::launch::async, worker));
  }
  for (auto& w : workers) w.get();
  return summarize_sweep(std::move(runs), alphas, target);
}

inline void write_sweep_csv(std::ostream& out, const SweepSummary& s) {
  out << "alpha,runs,median_queries,q1,q3,censored\n";
  for (const auto& r : s.rows) {
    out << format_g9(r.alpha) << ',' << r.runs << ',' << r.median << ',' << r.q1 << ',' << r.q3
        << ',' << r.censored << '\n';
  }
}

}  // namespace bpl
