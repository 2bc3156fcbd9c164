#include "mock_endpoint.hpp"

#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "phantom/rng.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include <httplib.h>

namespace testkit {

struct MockEndpoint::Impl {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  Handler handler;
  mutable std::mutex mutex;
  std::map<std::size_t, int> attempts;
  std::vector<MockRequest> log;
};

MockEndpoint::MockEndpoint(Handler handler) : impl_(std::make_unique<Impl>()) {
  impl_->handler = std::move(handler);
  impl_->server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
    MockRequest r;
    r.id = std::stoul(req.get_header_value("X-Request-Id"));
    r.authorization = req.get_header_value("Authorization");
    const auto body = nlohmann::json::parse(req.body);
    r.temperature = body.at("temperature").get<double>();
    r.prompt = body.at("messages").back().at("content").get<std::string>();
    {
      std::lock_guard lock(impl_->mutex);
      r.attempt = ++impl_->attempts[r.id];
      impl_->log.push_back(r);
    }
    const MockReply reply = impl_->handler(r);
    res.status = reply.status;
    if (reply.status == 200) {
      const nlohmann::json out = {
          {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", reply.content}}}}}}};
      res.set_content(out.dump(), "application/json");
    } else {
      res.set_content(R"({"error":{"message":"mock"}})", "application/json");
    }
  });
  impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

MockEndpoint::~MockEndpoint() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string MockEndpoint::base_url() const { return fmt::format("http://127.0.0.1:{}", impl_->port); }

std::size_t MockEndpoint::hits() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->log.size();
}

std::vector<MockRequest> MockEndpoint::received() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->log;
}

std::string scripted_answers(std::size_t id, std::span<const phantom::inst::Instrument> instruments) {
  phantom::Rng rng(0x5eed0000u + id);
  std::string out;
  for (const auto& ins : instruments) {
    const auto span = static_cast<std::uint64_t>(ins.scale_points());
    for (const auto& item : ins.items) {
      out += fmt::format("{}: {}\n", item.id, ins.scale_min + static_cast<int>(rng.below(span)));
    }
  }
  return out;
}

}  // namespace testkit
