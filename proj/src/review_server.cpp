#include "pprl/review_server.hpp"

#include "httplib.h"

namespace pprl {

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), kJson);
}

}  // namespace

ReviewServer::ReviewServer(ReviewSession& session, std::optional<std::filesystem::path> assets)
    : session_(session), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;

  srv.Get("/api/session", [this](const httplib::Request&, httplib::Response& res) {
    const auto info = session_.info();
    send_json(res, {{"run_id", info.run_id},
                    {"pending_count", info.pending_count},
                    {"budget_remaining", info.budget_remaining},
                    {"finished", info.finished}});
  });

  srv.Get("/api/tasks/next", [this](const httplib::Request&, httplib::Response& res) {
    auto task = session_.next_task();
    if (!task) {
      res.status = 204;
      return;
    }
    send_json(res, to_json(*task));
  });

  srv.Post(R"(/api/tasks/(\d+)/label)", [this](const httplib::Request& req, httplib::Response& res) {
    PairId id = 0;
    try {
      id = std::stoull(req.matches[1].str());
    } catch (const std::exception&) {
      send_json(res, {{"error", "bad pair id"}}, 400);
      return;
    }
    const auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("label") ||
        !body["label"].is_string()) {
      send_json(res, {{"error", "body must be {\"label\": \"match\"|\"nonmatch\"}"}}, 400);
      return;
    }
    const std::string label = body["label"].get<std::string>();
    if (label != "match" && label != "nonmatch") {
      send_json(res, {{"error", "label must be match or nonmatch"}}, 400);
      return;
    }
    std::string reviewer = req.get_header_value("X-Reviewer");
    if (body.contains("reviewer_id") && body["reviewer_id"].is_string()) {
      reviewer = body["reviewer_id"].get<std::string>();
    }
    const auto result = session_.submit(id, label == "match" ? MatchLabel::Match : MatchLabel::NonMatch,
                                        std::move(reviewer));
    if (result == SubmitResult::Conflict) {
      send_json(res, {{"error", "task unknown or already labeled"}, {"pair_id", id}}, 409);
      return;
    }
    send_json(res, {{"pair_id", id}, {"label", label}});
  });

  if (assets) srv.set_mount_point("/", assets->string());
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

void ReviewServer::listen() { server_->listen_after_bind(); }

void ReviewServer::stop() {
  if (server_) server_->stop();
}

}  // namespace pprl
