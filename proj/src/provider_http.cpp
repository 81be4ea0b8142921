#include "agentdel/provider_http.hpp"

#include <thread>

#include "httplib.h"

namespace agentdel::provider {

namespace {

int status_for(Errc code) {
  switch (code) {
    case Errc::AuthnFailed:
    case Errc::BadClientSecret:
    case Errc::CallerUnauthenticated:
    case Errc::NotOwner:
    case Errc::InvalidOwnerToken:
      return 401;
    case Errc::UnknownToken:
    case Errc::UnknownReferencedToken:
    case Errc::UnknownPeer:
      return 404;
    default:
      return 400;
  }
}

void respond_error(httplib::Response& res, const Error& err) {
  res.status = status_for(err.code);
  res.set_content(
      nlohmann::json{{"code", errc_name(err.code)}, {"message", err.message}}.dump(),
      "application/json");
}

void respond_json(httplib::Response& res, const nlohmann::json& body) {
  res.set_content(body.dump(), "application/json");
}

std::optional<nlohmann::json> parse_body(const httplib::Request& req,
                                         httplib::Response& res) {
  nlohmann::json j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    respond_error(res, Error(Errc::ValidationError, "body must be a JSON object"));
    return std::nullopt;
  }
  return j;
}

Result<tokens::TokenEnvelope> token_field(const nlohmann::json& j,
                                          const std::string& field) {
  if (!j.contains(field) || !j[field].is_string())
    return Error(Errc::ValidationError, "missing token field '" + field + "'");
  return tokens::TokenEnvelope::decode(j[field].get<std::string>());
}

}  // namespace

struct ProviderServer::Impl {
  std::shared_ptr<Provider> provider;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  void route() {
    server.Post("/register", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req, res);
      if (!body) return;
      auto owner = token_field(*body, "owner_token");
      if (!owner.ok()) return respond_error(res, owner.error());
      auto out = provider->register_agent(owner.value(),
                                          body->value("metadata", nlohmann::json::object()));
      if (!out.ok()) return respond_error(res, out.error());
      respond_json(res, {{"local_id", out.value().local_id},
                         {"client_secret", out.value().client_secret}});
    });

    server.Post("/token/user", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req, res);
      if (!body) return;
      auto out = provider->issue_user_token(
          body->value("assertion", nlohmann::json::object()),
          body->value("user_key", ""), body->value("lifetime", std::int64_t{0}));
      if (!out.ok()) return respond_error(res, out.error());
      respond_json(res, {{"token", out.value().encode()}});
    });

    server.Post("/token/agent", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req, res);
      if (!body) return;
      std::optional<std::string> audience;
      if (body->contains("audience")) audience = (*body)["audience"].get<std::string>();
      auto out = provider->issue_agent_token(body->value("local_id", ""),
                                             body->value("client_secret", ""), audience);
      if (!out.ok()) return respond_error(res, out.error());
      respond_json(res, {{"token", out.value().encode()}});
    });

    server.Post("/delegation", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req, res);
      if (!body) return;
      auto env = token_field(*body, "token");
      if (!env.ok()) return respond_error(res, env.error());
      auto out = provider->record_delegation(env.value());
      if (!out.ok()) return respond_error(res, out.error());
      respond_json(res, {{"hash", out.value().hex}});
    });

    server.Post("/introspect", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req, res);
      if (!body) return;
      auto caller = token_field(*body, "caller_token");
      if (!caller.ok()) return respond_error(res, caller.error());
      auto out = provider->introspect(body->value("token_hash", ""), caller.value());
      if (!out.ok()) return respond_error(res, out.error());
      respond_json(res, out.value().to_json());
    });

    server.Post("/revoke", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req, res);
      if (!body) return;
      auto owner = token_field(*body, "owner_token");
      if (!owner.ok()) return respond_error(res, owner.error());
      auto out = provider->revoke(body->value("token_hash", ""), owner.value());
      if (!out.ok()) return respond_error(res, out.error());
      respond_json(res, {{"revoked", true}});
    });

    server.Get("/keys", [this](const httplib::Request&, httplib::Response& res) {
      respond_json(res, {{"key_id", provider->config().key_id},
                         {"public_key", crypto::to_hex(provider->public_key())}});
    });

    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      respond_json(res, {{"status", "ok"}});
    });
  }
};

ProviderServer::ProviderServer(std::shared_ptr<Provider> provider)
    : impl_(std::make_unique<Impl>()) {
  impl_->provider = std::move(provider);
  impl_->route();
}

ProviderServer::~ProviderServer() { stop(); }

Result<int> ProviderServer::start(const std::string& host, int port) {
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

void ProviderServer::stop() {
  if (impl_ && impl_->thread.joinable()) {
    impl_->server.stop();
    impl_->thread.join();
  }
}

void ProviderServer::wait() {
  if (impl_ && impl_->thread.joinable()) impl_->thread.join();
}

int ProviderServer::port() const { return impl_->port; }

std::string ProviderServer::base_url() const {
  return "http://127.0.0.1:" + std::to_string(impl_->port);
}

}  // namespace agentdel::provider
