#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "pprl/review.hpp"

namespace httplib {
class Server;
}

namespace pprl {

/// HTTP JSON front of a ReviewSession:
///   GET  /api/session               {run_id, pending_count, budget_remaining}
///   GET  /api/tasks/next            ReviewTask JSON, 204 when nothing is pending
///   POST /api/tasks/{pair_id}/label {"label": "match"|"nonmatch"} -> 200 / 409
/// Static UI assets are mounted at / when a directory is given.
class ReviewServer {
 public:
  explicit ReviewServer(ReviewSession& session,
                        std::optional<std::filesystem::path> assets = std::nullopt);
  ~ReviewServer();

  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds to host:port (port 0 picks a free port); returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Blocking.
  void listen();
  void stop();

 private:
  ReviewSession& session_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace pprl
