#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>

#include "flywheel/interface.hpp"

namespace flywheel {

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

using Query = std::map<std::string, std::string>;

/// The workbench API without a transport: routes a request to the session
/// store under `root`. Reads share a per-session lock; mutations take it
/// exclusively and persist the session before returning.
class Service {
 public:
  /// Loads every session directory under root; a corrupt one aborts with a
  /// data error naming the file.
  explicit Service(std::filesystem::path root);

  HttpResponse handle(const std::string& method, const std::string& path, const Query& query,
                      const std::string& body);

  std::size_t session_count() const;

 private:
  struct Slot {
    std::shared_mutex mu;
    Session session;
    std::filesystem::path dir;
  };

  std::shared_ptr<Slot> slot(const std::string& id) const;
  HttpResponse route(const std::string& method, const std::string& path, const Query& query,
                     const std::string& body);

  std::filesystem::path root_;
  mutable std::mutex registry_mu_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::uint64_t next_id_ = 1;
};

/// cpp-httplib front end for a Service.
class HttpServer {
 public:
  explicit HttpServer(std::filesystem::path root);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  /// Throws usage errors when the port is busy.
  int start(const std::string& host, int port);
  /// Binds and serves on the calling thread.
  void run(const std::string& host, int port);
  void stop();

  Service& service() { return *service_; }

 private:
  struct Impl;
  std::unique_ptr<Service> service_;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
};

}  // namespace flywheel
