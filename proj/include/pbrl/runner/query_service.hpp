#pragma once

#include <functional>
#include <memory>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "pbrl/oracle/oracle.hpp"

namespace httplib {
class Server;
}

PBRL_NAMESPACE_BEGIN
namespace runner {

/// JSON view of the pending queries: [{query_id, segments, attention}].
nlohmann::json pending_queries_json(const oracle::HumanBridge& bridge);

struct LabelResponse {
  int http_status = 200;
  nlohmann::json body;
};

/// Handles a POST /labels body {query_id, choice}. 200 accepted, 400
/// malformed, 404 unknown id, 409 already labelled.
LabelResponse submit_label(oracle::HumanBridge& bridge, const std::string& body);

/// HTTP front end for the human labeller:
///   GET  /queries/pending
///   POST /labels
///   GET  /metrics  (CSV)
class QueryService {
 public:
  QueryService(oracle::HumanBridge& bridge, std::function<std::string()> metrics);
  ~QueryService();
  QueryService(const QueryService&) = delete;
  QueryService& operator=(const QueryService&) = delete;

  /// Binds host:port (port 0 picks a free one) and serves on a background
  /// thread. Returns the bound port; ConfigError when binding fails.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();
  int port() const { return port_; }

 private:
  oracle::HumanBridge& bridge_;
  std::function<std::string()> metrics_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace runner
PBRL_NAMESPACE_END
