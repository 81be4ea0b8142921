#include "agentdel/verifier_http.hpp"

#include <ctime>
#include <thread>

#include "httplib.h"

namespace agentdel::verifier {

struct VerifierServer::Impl {
  std::shared_ptr<Verifier> verifier;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  void route() {
    server.Post("/authorize", [this](const httplib::Request& req, httplib::Response& res) {
      auto fail = [&](int status, const std::string& code, const std::string& msg) {
        res.status = status;
        res.set_content(nlohmann::json{{"code", code}, {"message", msg}}.dump(),
                        "application/json");
      };
      nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object())
        return fail(400, "ValidationError", "body must be a JSON object");
      std::vector<tokens::TokenEnvelope> bundle;
      for (const auto& t : body.value("bundle", nlohmann::json::array())) {
        auto env = tokens::TokenEnvelope::decode(t.get<std::string>());
        if (!env.ok())
          return fail(400, errc_name(env.error().code), env.error().message);
        bundle.push_back(std::move(env.value()));
      }
      auto request = policy::AccessRequest::from_json(
          body.value("request", nlohmann::json::object()));
      if (!request.ok())
        return fail(400, errc_name(request.error().code), request.error().message);
      std::int64_t now = body.contains("now") ? body["now"].get<std::int64_t>()
                                              : static_cast<std::int64_t>(std::time(nullptr));
      auto decision = verifier->authorize(bundle, request.value(), now);
      res.set_content(decision.to_json().dump(), "application/json");
    });

    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(nlohmann::json{{"status", "ok"}}.dump(), "application/json");
    });
  }
};

VerifierServer::VerifierServer(std::shared_ptr<Verifier> verifier)
    : impl_(std::make_unique<Impl>()) {
  impl_->verifier = std::move(verifier);
  impl_->route();
}

VerifierServer::~VerifierServer() { stop(); }

Result<int> VerifierServer::start(const std::string& host, int port) {
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
    if (impl_->port <= 0)
      return Error(Errc::StorageFailure, "could not bind an ephemeral port");
  } else {
    if (!impl_->server.bind_to_port(host, port))
      return Error(Errc::StorageFailure, "could not bind port " + std::to_string(port));
    impl_->port = port;
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void VerifierServer::stop() {
  if (impl_ && impl_->thread.joinable()) {
    impl_->server.stop();
    impl_->thread.join();
  }
}

int VerifierServer::port() const { return impl_->port; }

std::string VerifierServer::base_url() const {
  return "http://127.0.0.1:" + std::to_string(impl_->port);
}

}  // namespace agentdel::verifier
