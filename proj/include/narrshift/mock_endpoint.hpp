#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

namespace narrshift {

/// A local OpenAI-compatible chat server for tests and offline runs. It binds
/// 127.0.0.1 on a free port and answers POST /v1/chat/completions.
class MockEndpoint {
 public:
  struct Reply {
    int status = 200;
    std::string content;  // the assistant message (status 200) or the body
  };
  using Handler = std::function<Reply(const nlohmann::json& request)>;

  explicit MockEndpoint(Handler handler);
  ~MockEndpoint();
  MockEndpoint(const MockEndpoint&) = delete;
  MockEndpoint& operator=(const MockEndpoint&) = delete;

  /// "http://127.0.0.1:<port>/v1"
  std::string base_url() const;
  int port() const { return port_; }

  std::size_t calls() const;
  std::vector<nlohmann::json> requests() const;
  /// Authorization header of each request (empty when absent).
  std::vector<std::string> authorizations() const;

  /// Replies in order; the last one repeats once the script runs out.
  static Handler scripted(std::vector<Reply> replies);
  /// Replays one of the bundled sample analyses, picked by prompt hash, with
  /// the summaries trimmed or padded to the number of "ARTICLE " blocks.
  static Handler appendix_replay();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace narrshift
