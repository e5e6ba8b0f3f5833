#pragma once

// HTTP duel service for human-oracle runs.
//
//   GET  /duel/next    200 + DuelQuery JSON, or 204 when nothing is pending
//   POST /duel/answer  {"duel_id": n, "winner": "first"|"second"}
//                      200 accepted, 400 malformed, 404 unknown id,
//                      409 stale or already answered
//   GET  /status       queries used, best-so-far error, alpha/T/mode and the
//                      last 20 trajectory rows
//
// The optimizer thread owns the run; DuelBroker is the single point where
// HTTP handlers and the optimizer exchange state.

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>

#include "bpl/acquisition.hpp"
#include "bpl/harness.hpp"

// After Eigen: glibc <resolv.h>, pulled in here, defines a `_res` macro that
// collides with Eigen identifiers.
#include <httplib.h>

namespace bpl {

enum class AnswerStatus { accepted, malformed, unknown, stale };

inline int http_status(AnswerStatus s) {
  switch (s) {
    case AnswerStatus::accepted: return 200;
    case AnswerStatus::malformed: return 400;
    case AnswerStatus::unknown: return 404;
    case AnswerStatus::stale: return 409;
  }
  return 500;
}

class DuelBroker {
 public:
  /// Optimizer side: publishes `q` (once per id) and waits up to `timeout`
  /// for its answer. The duel stays pending after a timeout.
  std::optional<Preference> post_and_wait(const DuelQuery& q, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    if (!pending_ || pending_->id != q.id) {
      pending_ = q;
      pending_json_ = to_json(q);
      issued_.insert(q.id);
      answer_.reset();
    }
    cv_.wait_for(lock, timeout, [&] { return answer_.has_value() || closed_; });
    if (!answer_) return std::nullopt;
    const Preference p = *answer_;
    answer_.reset();
    pending_.reset();
    pending_json_ = nullptr;
    return p;
  }

  [[nodiscard]] std::optional<nlohmann::json> pending() const {
    std::lock_guard lock(mu_);
    if (!pending_ || answer_) return std::nullopt;
    return std::optional<nlohmann::json>(std::in_place, pending_json_);
  }

  AnswerStatus answer(long duel_id, Preference winner) {
    std::lock_guard lock(mu_);
    if (!issued_.contains(duel_id)) return AnswerStatus::unknown;
    if (!pending_ || pending_->id != duel_id || answer_) return AnswerStatus::stale;
    answer_ = winner;
    cv_.notify_all();
    return AnswerStatus::accepted;
  }

  /// Parses an answer body and applies it.
  AnswerStatus answer_body(const std::string& body) {
    const auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("duel_id") || !j.contains("winner") ||
        !j["duel_id"].is_number_integer() || !j["winner"].is_string()) {
      return AnswerStatus::malformed;
    }
    const auto w = j["winner"].get<std::string>();
    if (w != "first" && w != "second") return AnswerStatus::malformed;
    return answer(j["duel_id"].get<long>(), w == "first" ? Preference::first : Preference::second);
  }

  void publish(const RunResult& r, const AcqConfig& acq) {
    nlohmann::json s;
    s["queries_used"] = r.rows.empty() ? 0 : r.rows.back().queries;
    s["best_latent"] = r.rows.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.rows.back().best_latent);
    s["best_abs_error"] = r.rows.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.rows.back().abs_error);
    s["alpha"] = acq.alpha;
    s["temperature"] = acq.temperature;
    s["mode"] = to_string(acq.mode);
    s["rows"] = nlohmann::json::array();
    const std::size_t from = r.rows.size() > 20 ? r.rows.size() - 20 : 0;
    for (std::size_t i = from; i < r.rows.size(); ++i) s["rows"].push_back(to_json(r.rows[i]));
    std::lock_guard lock(mu_);
    s["finished"] = finished_;
    status_ = std::move(s);
  }

  void finish(const RunResult& r, const AcqConfig& acq) {
    {
      std::lock_guard lock(mu_);
      finished_ = true;
    }
    publish(r, acq);
  }

  [[nodiscard]] nlohmann::json status() const {
    std::lock_guard lock(mu_);
    if (status_.is_null()) {
      return {{"queries_used", 0}, {"best_latent", nullptr}, {"best_abs_error", nullptr},
              {"rows", nlohmann::json::array()}, {"finished", finished_}};
    }
    return status_;
  }

  /// Wakes a waiting optimizer; later waits return immediately.
  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    cv_.notify_all();
  }

  [[nodiscard]] bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::optional<DuelQuery> pending_;
  nlohmann::json pending_json_;
  std::optional<Preference> answer_;
  std::set<long> issued_;
  nlohmann::json status_;
  bool finished_ = false;
  bool closed_ = false;
};

/// Registers the duel endpoints on `server`.
inline void install_duel_routes(httplib::Server& server, DuelBroker& broker) {
  server.Get("/duel/next", [&broker](const httplib::Request&, httplib::Response& res) {
    if (auto p = broker.pending()) {
      res.set_content(p->dump(), "application/json");
    } else {
      res.status = 204;
    }
  });
  server.Post("/duel/answer", [&broker](const httplib::Request& req, httplib::Response& res) {
    const AnswerStatus s = broker.answer_body(req.body);
    res.status = http_status(s);
    const char* msg = s == AnswerStatus::accepted  ? "accepted"
                      : s == AnswerStatus::malformed ? "malformed body"
                      : s == AnswerStatus::unknown   ? "unknown duel id"
                                                     : "stale or duplicate duel id";
    res.set_content(nlohmann::json{{"result", msg}}.dump(), "application/json");
  });
  server.Get("/status", [&broker](const httplib::Request&, httplib::Response& res) {
    res.set_content(broker.status().dump(), "application/json");
  });
}

/// A human-oracle run behind an HTTP server. The optimizer runs on its own
/// thread; call wait() for the result.
class DuelService {
 public:
  explicit DuelService(RunConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.oracle.mode = OracleMode::human;
    install_duel_routes(server_, broker_);
  }

  ~DuelService() { stop(); }

  DuelService(const DuelService&) = delete;
  DuelService& operator=(const DuelService&) = delete;

  /// Binds and starts serving; port 0 picks a free port. Returns the port.
  int start(const std::string& host, int port, std::ostream* audit = nullptr) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    http_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    const auto timeout = std::chrono::milliseconds(
        static_cast<long>(cfg_.oracle.human_timeout_s * 1000.0));
    hooks_.human = [this, timeout](const DuelQuery& q) { return broker_.post_and_wait(q, timeout); };
    hooks_.on_row = [this](const RunResult& r) { broker_.publish(r, cfg_.acq); };
    hooks_.cancelled = [this] { return broker_.closed(); };
    hooks_.audit = audit;
    optimizer_ = std::thread([this] {
      try {
        result_ = run(cfg_, hooks_);
      } catch (const std::exception& e) {
        result_.status = Termination::numerical;
        result_.diagnostic = e.what();
      }
      broker_.finish(result_, cfg_.acq);
      done_ = true;
    });
    return port_;
  }

  /// Blocks until the optimizer finishes.
  const RunResult& wait() {
    if (optimizer_.joinable()) optimizer_.join();
    return result_;
  }

  void stop() {
    broker_.close();
    if (optimizer_.joinable()) optimizer_.join();
    server_.stop();
    if (http_.joinable()) http_.join();
  }

  [[nodiscard]] DuelBroker& broker() { return broker_; }
  [[nodiscard]] bool done() const { return done_; }
  [[nodiscard]] int port() const { return port_; }

 private:
  RunConfig cfg_;
  httplib::Server server_;
  DuelBroker broker_;
  RunHooks hooks_;
  RunResult result_;
  std::thread http_;
  std::thread optimizer_;
  std::atomic<bool> done_{false};
  int port_ = -1;
};

}  // namespace bpl
