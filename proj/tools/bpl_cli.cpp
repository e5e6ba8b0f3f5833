// bpl: command-line front end.
//
//   bpl run    --config cfg.json [--seed N] [--set key=value ...] [--out run.csv]
//   bpl sweep  --config cfg.json --alphas 0,0.5,1 --seeds 1-10 [--target 0.1]
//   bpl serve  --config cfg.json [--host 127.0.0.1] [--port 8080]
//   bpl report run1.csv [run2.csv ...]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical abort.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "bpl/duel_service.hpp"
#include "bpl/harness.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kNumericalAbort = 3;

nlohmann::json load_config(const std::string& path, const std::vector<std::string>& overrides,
                           std::optional<std::uint64_t> seed) {
  nlohmann::json doc = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw bpl::ConfigError("cannot open config '" + path + "'");
    doc = nlohmann::json::parse(f, nullptr, false);
    if (doc.is_discarded()) throw bpl::ConfigError("config '" + path + "' is not valid JSON");
  }
  for (const auto& o : overrides) bpl::apply_override(doc, o);
  if (seed) doc["seed"] = *seed;
  return doc;
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash != std::string::npos) {
      const auto lo = std::stoull(item.substr(0, dash));
      const auto hi = std::stoull(item.substr(dash + 1));
      if (hi < lo) throw bpl::ConfigError("bad seed range '" + item + "'");
      for (auto s = lo; s <= hi; ++s) out.push_back(s);
    } else if (!item.empty()) {
      out.push_back(std::stoull(item));
    }
  }
  if (out.empty()) throw bpl::ConfigError("no seeds given");
  return out;
}

std::vector<double> parse_doubles(const std::string& spec) {
  std::vector<double> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  if (out.empty()) throw bpl::ConfigError("empty list '" + spec + "'");
  return out;
}

void write_outputs(const bpl::RunResult& r, const std::string& csv_path) {
  if (csv_path.empty()) {
    bpl::write_csv(std::cout, r);
    return;
  }
  bpl::emit_csv(r, csv_path);
  std::ofstream meta(csv_path + ".json");
  meta << bpl::summary_json(r).dump(2) << '\n';
}

int exit_code(const bpl::RunResult& r) {
  return r.status == bpl::Termination::numerical ? kNumericalAbort : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian preference optimization: B-RLHF and PBO"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  std::string audit_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config,-c", config_path, "JSON run configuration");
    sub->add_option("--set", overrides, "override a config field: key.path=value");
    sub->add_option("--seed", seed, "random seed (required here or in the config)");
    sub->add_option("--out,-o", out_path, "output path");
    sub->add_option("--audit", audit_path, "append-only JSON-lines duel log");
  };

  auto* run_cmd = app.add_subcommand("run", "run one B-RLHF or PBO experiment");
  add_common(run_cmd);

  std::string alphas = "0,0.25,0.5,0.75,1";
  std::string seeds = "1-10";
  double target = 0.1;
  unsigned jobs = 0;
  std::string runs_dir;
  auto* sweep_cmd = app.add_subcommand("sweep", "alpha sensitivity sweep (queries to target)");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--alphas", alphas, "comma-separated alpha values");
  sweep_cmd->add_option("--seeds", seeds, "seed list, e.g. 1-10 or 1,4,9");
  sweep_cmd->add_option("--target", target, "absolute-error target");
  sweep_cmd->add_option("--jobs,-j", jobs, "worker threads (0 = hardware concurrency)");
  sweep_cmd->add_option("--runs-dir", runs_dir, "directory for per-run CSVs");

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "human-oracle run behind the HTTP duel service");
  add_common(serve_cmd);
  serve_cmd->add_option("--host", host, "bind address");
  serve_cmd->add_option("--port", port, "bind port (0 = any)");

  std::vector<std::string> csv_files;
  auto* report_cmd = app.add_subcommand("report", "summarize trajectory CSVs");
  report_cmd->add_option("files", csv_files, "trajectory CSV files")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      auto cfg = bpl::run_config_from_json(load_config(config_path, overrides, seed));
      if (audit_path.empty()) audit_path = cfg.audit_log;
      std::ofstream audit;
      bpl::RunHooks hooks;
      if (!audit_path.empty()) {
        audit.open(audit_path, std::ios::app);
        if (!audit) throw bpl::ConfigError("cannot open audit log '" + audit_path + "'");
        hooks.audit = &audit;
      }
      if (out_path.empty()) out_path = cfg.output;
      const auto r = bpl::run(cfg, hooks);
      write_outputs(r, out_path);
      std::cerr << "status=" << bpl::to_string(r.status) << " iterations=" << r.rows.size()
                << " final_abs_error=" << bpl::format_g9(r.final_error());
      if (!r.diagnostic.empty()) std::cerr << " diagnostic=\"" << r.diagnostic << '"';
      std::cerr << '\n';
      return exit_code(r);
    }
    if (*sweep_cmd) {
      auto doc = load_config(config_path, overrides, seed);
      if (!doc.contains("seed")) doc["seed"] = 0;
      const auto base = bpl::run_config_from_json(doc);
      const auto a = parse_doubles(alphas);
      const auto s = parse_seeds(seeds);
      const auto summary = bpl::alpha_sweep(base, a, s, target, jobs, runs_dir);
      if (out_path.empty()) {
        bpl::write_sweep_csv(std::cout, summary);
      } else {
        std::ofstream f(out_path, std::ios::binary);
        bpl::write_sweep_csv(f, summary);
      }
      return 0;
    }
    if (*serve_cmd) {
      auto cfg = bpl::run_config_from_json(load_config(config_path, overrides, seed));
      if (audit_path.empty()) audit_path = cfg.audit_log;
      std::ofstream audit;
      if (!audit_path.empty()) {
        audit.open(audit_path, std::ios::app);
        if (!audit) throw bpl::ConfigError("cannot open audit log '" + audit_path + "'");
      }
      bpl::DuelService service(cfg);
      const int bound = service.start(host, port, audit_path.empty() ? nullptr : &audit);
      std::cerr << "duel service on http://" << host << ':' << bound << '\n';
      const auto& r = service.wait();
      if (out_path.empty()) out_path = cfg.output;
      if (!out_path.empty()) write_outputs(r, out_path);
      std::cerr << "status=" << bpl::to_string(r.status) << " queries=" << r.rows.size() << '\n';
      service.stop();
      return exit_code(r);
    }
    if (*report_cmd) {
      std::vector<double> finals;
      std::cout << "file,iterations,final_queries,final_abs_error\n";
      for (const auto& f : csv_files) {
        const auto rows = bpl::read_csv_file(f);
        const double err = rows.empty() ? std::nan("") : rows.back().abs_error;
        std::cout << f << ',' << rows.size() << ',' << (rows.empty() ? 0 : rows.back().queries)
                  << ',' << bpl::format_g9(err) << '\n';
        if (!rows.empty()) finals.push_back(err);
      }
      if (!finals.empty()) {
        std::sort(finals.begin(), finals.end());
        std::cout << "# median_final_abs_error," << bpl::format_g9(finals[(finals.size() - 1) / 2])
                  << '\n';
      }
      return 0;
    }
  } catch (const bpl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const bpl::DimensionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const bpl::NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kNumericalAbort;
  } catch (const bpl::OracleTimeout& e) {
    std::cerr << "oracle timeout: " << e.what() << '\n';
    return kNumericalAbort;
  }
  return 0;
}
