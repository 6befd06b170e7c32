#pragma once

#include <atomic>
#include <string>
#include <thread>

#include "twotower/serving.hpp"

namespace httplib {
class Server;
}

namespace twotower {

// JSON-over-HTTP front for the Engine:
//   GET  /v1/similar/{product_id}?k=N
//   GET  /v1/complementary/{product_id}?k=N
//   POST /v1/inspire            {history:[{product_id,ts}], k, probe_n, skip_l[, now]}
//   POST /v1/admin/reload       {checkpoint, index}
//   GET  /v1/healthz
// Errors: 404 unknown product, 422 invalid parameters, 503 not loaded; bodies
// are {"error", "detail"}.
class HttpService {
 public:
  explicit HttpService(Engine& engine);
  ~HttpService();

  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  // Blocks until stop().
  void listen(const std::string& host, int port);

  // Starts listening on a background thread and waits until the socket is
  // ready; port 0 picks a free port. Returns the bound port.
  int start_background(const std::string& host, int port = 0);
  void stop();

 private:
  void install_routes();

  Engine& engine_;
  std::unique_ptr<httplib::Server> server_;
  std::thread worker_;
};

}  // namespace twotower
