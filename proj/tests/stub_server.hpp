#pragma once

// Local OpenAI-style embeddings server for tests. Vectors are a deterministic
// function of the input string; the first `fail_first` requests get `fail_status`.

#include <atomic>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

class StubEmbeddingServer {
 public:
  explicit StubEmbeddingServer(std::size_t dim, int fail_first = 0, int fail_status = 429)
      : dim_(dim), fail_first_(fail_first), fail_status_(fail_status) {
    server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = requests_++;
      {
        std::lock_guard lock(mutex_);
        auth_.push_back(req.get_header_value("Authorization"));
      }
      if (n < fail_first_) {
        res.status = fail_status_;
        res.set_content("{}", "application/json");
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      const auto& input = body.at("input");
      inputs_ += input.size();
      {
        std::lock_guard lock(mutex_);
        batch_sizes_.push_back(input.size());
      }
      nlohmann::json data = nlohmann::json::array();
      // Reverse order on the wire; clients must match by index.
      for (std::size_t i = input.size(); i-- > 0;) {
        data.push_back({{"index", i}, {"embedding", vector_for(input[i].get<std::string>())}});
      }
      res.set_content(nlohmann::json{{"data", data}, {"model", body.value("model", "")}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubEmbeddingServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  int requests() const { return requests_.load(); }
  std::size_t inputs() const { return inputs_.load(); }
  std::vector<std::size_t> batch_sizes() const {
    std::lock_guard lock(mutex_);
    return batch_sizes_;
  }
  std::vector<std::string> auth_headers() const {
    std::lock_guard lock(mutex_);
    return auth_;
  }

  std::vector<double> vector_for(const std::string& s) const {
    std::vector<double> v(dim_);
    std::size_t h = std::hash<std::string>{}(s);
    for (std::size_t i = 0; i < dim_; ++i) {
      h = h * 6364136223846793005ULL + 1442695040888963407ULL;
      v[i] = static_cast<double>((h >> 33) % 1000) / 1000.0 - 0.5;
    }
    return v;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::size_t dim_;
  int fail_first_;
  int fail_status_;
  std::atomic<int> requests_{0};
  std::atomic<std::size_t> inputs_{0};
  mutable std::mutex mutex_;
  std::vector<std::size_t> batch_sizes_;
  std::vector<std::string> auth_;
};
