#pragma once

#include <memory>
#include <string>

#include "iftx/session.hpp"

namespace httplib {
class Server;
}

namespace iftx {

// JSON-over-HTTP front end for a SessionStore:
//   POST /sessions              {description, agent?}
//   POST /sessions/{id}/answers {text}
//   GET  /sessions/{id}
//   GET  /healthz
// Errors reply {error, code} with 400, 404 or 409.
class SessionServer {
 public:
  SessionServer(SessionStore& store, std::string checkpoint_hash);
  ~SessionServer();

  // Binds to an ephemeral port when port is 0; returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks until stop() is called.
  void listen();
  void stop();

 private:
  SessionStore* store_;
  std::string hash_;
  std::unique_ptr<httplib::Server> http_;
};

}  // namespace iftx
