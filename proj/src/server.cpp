#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "protex/service.hpp"

namespace protex::service {

struct Server::Impl {
  Impl(RunStore& store, ServeOptions opts) : api(store, opts.bearer_token), options(std::move(opts)) {}

  Api api;
  ServeOptions options;
  httplib::Server http;
};

namespace {

void dispatch(const Api& api, const httplib::Request& req, httplib::Response& res) {
  ApiRequest r;
  r.method = req.method;
  r.path = req.path;
  r.body = req.body;
  for (const auto& [k, v] : req.params) r.query.emplace(k, v);
  for (const auto& [k, v] : req.headers) r.headers.emplace(to_lower_ascii(k), v);
  const ApiResponse out = api.handle(r);
  res.status = out.status;
  res.set_content(out.body, out.content_type);
}

}  // namespace

Server::Server(RunStore& store, ServeOptions options) : impl_(std::make_unique<Impl>(store, std::move(options))) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) { dispatch(impl_->api, req, res); };
  impl_->http.Get(".*", handler);
  impl_->http.Post(".*", handler);
}

Server::~Server() { stop(); }

int Server::bind() {
  int port = impl_->options.port;
  if (port == 0) {
    port = impl_->http.bind_to_any_port(impl_->options.host);
  } else if (!impl_->http.bind_to_port(impl_->options.host, port)) {
    port = -1;
  }
  if (port < 0) {
    throw Error(ErrorCode::StorageError, "cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
  }
  return port;
}

void Server::listen() { impl_->http.listen_after_bind(); }

void Server::stop() {
  if (impl_->http.is_running()) impl_->http.stop();
}

}  // namespace protex::service
