#include "narrshift/mock_endpoint.hpp"

#include <atomic>
#include <stdexcept>
#include <thread>

#include "httplib.h"
#include "narrshift/resources.hpp"
#include "narrshift/util.hpp"

namespace narrshift {

using nlohmann::json;

struct MockEndpoint::Impl {
  httplib::Server server;
  std::thread thread;
  Handler handler;
  mutable std::mutex mutex;
  std::vector<json> requests;
  std::vector<std::string> authorizations;
};

MockEndpoint::MockEndpoint(Handler handler) : impl_(std::make_unique<Impl>()) {
  impl_->handler = std::move(handler);
  impl_->server.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) {
      res.status = 400;
      res.set_content("invalid JSON", "text/plain");
      return;
    }
    Reply reply;
    {
      std::lock_guard lock(impl_->mutex);
      impl_->requests.push_back(body);
      impl_->authorizations.push_back(req.get_header_value("Authorization"));
    }
    reply = impl_->handler(body);
    res.status = reply.status;
    if (reply.status != 200) {
      res.set_content(reply.content, "text/plain");
      return;
    }
    json out = {{"object", "chat.completion"},
                {"model", body.value("model", "")},
                {"choices", json::array({{{"index", 0},
                                          {"message", {{"role", "assistant"},
                                                       {"content", reply.content}}},
                                          {"finish_reason", "stop"}}})}};
    res.set_content(out.dump(), "application/json");
  });
  port_ = impl_->server.bind_to_any_port("127.0.0.1");
  if (port_ <= 0) throw std::runtime_error("mock endpoint could not bind a port");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

MockEndpoint::~MockEndpoint() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string MockEndpoint::base_url() const {
  return "http://127.0.0.1:" + std::to_string(port_) + "/v1";
}

std::size_t MockEndpoint::calls() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->requests.size();
}

std::vector<json> MockEndpoint::requests() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->requests;
}

std::vector<std::string> MockEndpoint::authorizations() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->authorizations;
}

MockEndpoint::Handler MockEndpoint::scripted(std::vector<Reply> replies) {
  if (replies.empty()) throw std::invalid_argument("scripted mock needs at least one reply");
  auto next = std::make_shared<std::atomic<std::size_t>>(0);
  return [replies = std::move(replies), next](const json&) {
    const auto i = next->fetch_add(1);
    return replies[std::min(i, replies.size() - 1)];
  };
}

namespace {

std::size_t count_articles(const json& request) {
  std::size_t n = 0;
  for (const auto& m : request.value("messages", json::array())) {
    if (m.value("role", "") != "user") continue;
    const auto text = m.value("content", "");
    for (auto pos = text.find("\nARTICLE "); pos != std::string::npos;
         pos = text.find("\nARTICLE ", pos + 1))
      ++n;
    // repair turns repeat no articles; the first user message carries them
    break;
  }
  return n;
}

}  // namespace

MockEndpoint::Handler MockEndpoint::appendix_replay() {
  std::vector<json> samples;
  for (auto name : {"mock/sample1.json", "mock/sample2.json", "mock/sample3.json"})
    samples.push_back(json::parse(resource(name)));
  return [samples = std::move(samples)](const json& request) {
    // chosen from the prompt text so concurrent runs stay reproducible
    json answer = samples[fnv1a64(request.value("messages", json::array()).dump()) %
                          samples.size()];
    const auto n = count_articles(request);
    auto& s = answer["summaries"];
    while (s.size() > n) s.erase(s.size() - 1);
    for (std::size_t i = s.size(); i < n; ++i)
      s.push_back({{"article_" + std::to_string(i + 1),
                    "The article repeats the developments covered above."}});
    return Reply{200, answer.dump(2)};
  };
}

}  // namespace narrshift
