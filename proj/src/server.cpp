#include "twotower/server.hpp"

#include "httplib.h"
#include "json.hpp"

namespace twotower {

using nlohmann::json;

namespace {

json to_json(const RecommendationResponse& response) {
  json items = json::array();
  for (const auto& item : response.items) {
    json entry = {{"product_id", item.product_id}, {"score", item.score}, {"group", item.group}};
    if (item.cluster_id >= 0) entry["cluster_id"] = item.cluster_id;
    items.push_back(std::move(entry));
  }
  return {{"status", response.status},
          {"items", std::move(items)},
          {"model_version", response.model_version},
          {"index_version", response.index_version},
          {"took_ms", response.took_ms}};
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& error,
                 const std::string& detail) {
  reply(res, status, json{{"error", error}, {"detail", detail}});
}

// One translation of engine/library exceptions to status codes for all routes.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const NotFoundError& e) {
    reply_error(res, 404, "not_found", e.what());
  } catch (const NotLoadedError& e) {
    reply_error(res, 503, "not_loaded", e.what());
  } catch (const InvalidArgument& e) {
    reply_error(res, 422, "invalid_parameters", e.what());
  } catch (const json::exception& e) {
    reply_error(res, 422, "invalid_parameters", e.what());
  } catch (const Error& e) {
    reply_error(res, 500, "internal", e.what());
  } catch (const std::exception& e) {
    reply_error(res, 500, "internal", e.what());
  }
}

int parse_k(const httplib::Request& req) {
  if (!req.has_param("k")) return 10;
  const std::string raw = req.get_param_value("k");
  std::size_t used = 0;
  int k = 0;
  try {
    k = std::stoi(raw, &used);
  } catch (const std::exception&) {
    throw InvalidArgument("k must be an integer");
  }
  if (used != raw.size() || k < 1) throw InvalidArgument("k must be a positive integer");
  return k;
}

}  // namespace

HttpService::HttpService(Engine& engine)
    : engine_(engine), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

HttpService::~HttpService() { stop(); }

void HttpService::install_routes() {
  server_->Get(R"(/v1/similar/([^/]+))", [this](const httplib::Request& req,
                                                httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, to_json(engine_.similar(req.matches[1], parse_k(req)))); });
  });

  server_->Get(R"(/v1/complementary/([^/]+))",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   reply(res, 200, to_json(engine_.complementary(req.matches[1], parse_k(req))));
                 });
               });

  server_->Post("/v1/inspire", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      json body = json::parse(req.body);
      UserHistory history;
      for (const auto& event : body.at("history")) {
        history.events.push_back(
            {event.at("product_id").get<std::string>(), event.at("ts").get<std::int64_t>()});
      }
      std::optional<std::int64_t> now;
      if (body.contains("now")) now = body.at("now").get<std::int64_t>();
      int k = body.value("k", 10);
      int probe_n = body.value("probe_n", 4);
      int skip_l = body.value("skip_l", 0);
      reply(res, 200, to_json(engine_.inspirational(history, now, probe_n, skip_l, k)));
    });
  });

  server_->Post("/v1/admin/reload", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      json body = json::parse(req.body);
      std::uint64_t version = engine_.load(body.at("checkpoint").get<std::string>(),
                                           body.at("index").get<std::string>());
      reply(res, 200, json{{"status", "ok"}, {"version", version}});
    });
  });

  server_->Get("/v1/healthz", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      auto snap = engine_.snapshot();
      json body = {{"status", snap ? "ok" : "not_loaded"},
                   {"model_version", snap ? snap->version : 0},
                   {"index_version", snap ? snap->version : 0}};
      if (snap) {
        body["mode"] = snap->params.mode == EncoderMode::Similarity ? "similarity" : "complementary";
        body["index_kind"] =
            std::holds_alternative<FlatIndex>(snap->index) ? "flat" : "hierarchical";
        body["index_size"] = index_size(snap->index);
      }
      reply(res, snap ? 200 : 503, body);
    });
  });
}

void HttpService::listen(const std::string& host, int port) {
  if (!server_->listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

int HttpService::start_background(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
    if (bound < 0) throw IoError("cannot bind " + host);
  } else {
    if (!server_->bind_to_port(host, port))
      throw IoError("cannot bind " + host + ":" + std::to_string(port));
  }
  worker_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void HttpService::stop() {
  if (server_) server_->stop();
  if (worker_.joinable()) worker_.join();
}

}  // namespace twotower
