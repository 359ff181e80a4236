#include <httplib.h>
#include <spdlog/spdlog.h>

#include "mockforge/service.hpp"

namespace mockforge::service {

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  explicit Impl(Service& s) : service(s) {}
};

HttpServer::HttpServer(Service& service, std::size_t threads) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  srv.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    const auto out = impl_->service.handle(req.method, req.path, req.body);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  };
  srv.Get(R"(/.*)", forward);
  srv.Post(R"(/.*)", forward);
  srv.Put(R"(/.*)", forward);
  srv.Delete(R"(/.*)", forward);
  srv.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw UsageError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace mockforge::service
