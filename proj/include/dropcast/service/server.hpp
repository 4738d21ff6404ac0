#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dropcast/model.hpp"
#include "dropcast/service/store.hpp"

namespace dropcast::service {

struct ServiceConfig {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::filesystem::path data_dir = ".";
  std::filesystem::path model_dir = ".";
  std::optional<std::string> token;  // bearer token; unset disables auth

  // SERVICE_PORT, DATA_DIR, MODEL_DIR, SERVICE_TOKEN.
  static ServiceConfig from_env();
};

// Model snapshots are <model_dir>/<model_id>.json manifests, loaded on
// first use and shared immutably; a new file id is a new snapshot.
class ModelRegistry {
 public:
  explicit ModelRegistry(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::shared_ptr<const Model> get(const std::string& model_id);
  std::vector<std::string> available() const;

 private:
  std::filesystem::path dir_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const Model>> cache_;
};

class Server {
 public:
  explicit Server(ServiceConfig config);
  ~Server();

  // Binds (port 0 picks a free one) and returns the bound port.
  int bind();
  // Blocks until stop().
  void run();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  ServiceConfig config_;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace dropcast::service
