#include "pbrl/runner/query_service.hpp"

#include <chrono>

#include <httplib.h>

PBRL_NAMESPACE_BEGIN
namespace runner {

nlohmann::json pending_queries_json(const oracle::HumanBridge& bridge) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& q : bridge.pending()) {
    nlohmann::json item = q.payload.is_object() ? q.payload : nlohmann::json::object();
    item["query_id"] = q.query_id;
    if (!item.contains("segments")) item["segments"] = nlohmann::json::array();
    if (!item.contains("attention")) item["attention"] = nlohmann::json::array();
    out.push_back(std::move(item));
  }
  return out;
}

LabelResponse submit_label(oracle::HumanBridge& bridge, const std::string& body) {
  const auto parsed = nlohmann::json::parse(body, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("query_id") || !parsed.contains("choice") ||
      !parsed["query_id"].is_number_integer() || !parsed["choice"].is_string()) {
    return {400, {{"status", "malformed"}, {"error", "expected {query_id: int, choice: \"a\"|\"b\"|\"equal\"}"}}};
  }
  const auto label = oracle::label_from_choice(parsed["choice"].get<std::string>());
  if (!label) return {400, {{"status", "malformed"}, {"error", "choice must be a, b or equal"}}};
  const auto id = parsed["query_id"].get<std::int64_t>();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch()).count();
  switch (bridge.submit(id, *label, ms)) {
    case oracle::SubmitStatus::accepted: return {200, {{"status", "accepted"}, {"query_id", id}}};
    case oracle::SubmitStatus::not_found: return {404, {{"status", "not_found"}, {"query_id", id}}};
    case oracle::SubmitStatus::conflict: return {409, {{"status", "conflict"}, {"query_id", id}}};
  }
  return {500, {{"status", "error"}}};
}

QueryService::QueryService(oracle::HumanBridge& bridge, std::function<std::string()> metrics)
    : bridge_(bridge), metrics_(std::move(metrics)) {}

QueryService::~QueryService() { stop(); }

int QueryService::start(const std::string& host, int port) {
  if (server_) throw ConfigError("query service already running");
  server_ = std::make_unique<httplib::Server>();
  server_->Get("/queries/pending", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(pending_queries_json(bridge_).dump(), "application/json");
  });
  server_->Post("/labels", [this](const httplib::Request& req, httplib::Response& res) {
    const auto r = submit_label(bridge_, req.body);
    res.status = r.http_status;
    res.set_content(r.body.dump(), "application/json");
  });
  server_->Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(metrics_ ? metrics_() : std::string(), "text/csv");
  });
  // The labeller UI may be served from another origin.
  server_->set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server_->Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });

  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) {
    server_.reset();
    throw ConfigError("cannot bind query service to " + host + ":" + std::to_string(port));
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void QueryService::stop() {
  if (!server_) return;
  server_->stop();
  if (thread_.joinable()) thread_.join();
  server_.reset();
}

}  // namespace runner
PBRL_NAMESPACE_END
