#include "iftx/server.hpp"

#include "httplib.h"

namespace iftx {

namespace {

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, const std::string& message) {
  reply(res, status, {{"error", message}, {"code", status}});
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const NotFoundError& e) {
      fail(res, 404, e.what());
    } catch (const ConflictError& e) {
      fail(res, 409, e.what());
    } catch (const ValidationError& e) {
      fail(res, 400, e.what());
    } catch (const nlohmann::json::exception& e) {
      fail(res, 400, std::string("malformed request body: ") + e.what());
    } catch (const std::exception& e) {
      fail(res, 500, e.what());
    }
  };
}

nlohmann::json body_of(const httplib::Request& req) {
  auto j = nlohmann::json::parse(req.body);
  if (!j.is_object()) throw ValidationError("request body must be a JSON object");
  return j;
}

std::string string_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) throw ValidationError(std::string("missing string field '") + key + "'");
  return j[key].get<std::string>();
}

}  // namespace

SessionServer::SessionServer(SessionStore& store, std::string checkpoint_hash)
    : store_(&store), hash_(std::move(checkpoint_hash)), http_(std::make_unique<httplib::Server>()) {
  auto& s = *http_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"}, {"Access-Control-Allow-Headers", "Content-Type"}});
  s.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  s.Get("/healthz", guarded([this](const httplib::Request&, httplib::Response& res) {
          reply(res, 200, {{"ok", true}, {"checkpoint_hash", hash_}});
        }));

  s.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
           store_->purge_expired();
           const auto body = body_of(req);
           std::optional<AgentKind> agent;
           if (body.contains("agent") && !body["agent"].is_null()) agent = parse_agent(string_field(body, "agent"));
           const auto view = store_->create(string_field(body, "description"), agent);
           reply(res, 201, store_->view_json(view, false));
         }));

  s.Post(R"(/sessions/([^/]+)/answers)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto body = body_of(req);
           const auto view = store_->answer(req.matches[1].str(), string_field(body, "text"));
           reply(res, 200, store_->view_json(view, false));
         }));

  s.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          reply(res, 200, store_->view_json(store_->get(req.matches[1].str()), true));
        }));

  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) fail(res, res.status, res.status == 404 ? "no such endpoint" : "request failed");
  });
}

SessionServer::~SessionServer() = default;

int SessionServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = http_->bind_to_any_port(host);
    if (p < 0) throw Error("cannot bind to " + host);
    return p;
  }
  if (!http_->bind_to_port(host, port)) throw Error("cannot bind to " + host + ":" + std::to_string(port));
  return port;
}

void SessionServer::listen() { http_->listen_after_bind(); }

void SessionServer::stop() { http_->stop(); }

}  // namespace iftx
