#include "meow/chat.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace meow {

namespace {

// Splits an URL into (scheme://host[:port], path).
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw TransportError("endpoint URL lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpChatClient::HttpChatClient(ChatClientConfig config)
    : config_(std::move(config)), inflight_(std::max(config_.max_inflight, 1)) {
  if (const char* key = std::getenv("MEOW_API_KEY"); key && *key) config_.api_key = key;
  std::tie(base_, path_) = split_url(config_.endpoint);
}

std::string HttpChatClient::complete(const std::vector<ChatMessage>& messages) {
  nlohmann::json body;
  body["model"] = config_.model;
  body["temperature"] = config_.temperature;
  body["top_p"] = config_.top_p;
  auto& msgs = body["messages"] = nlohmann::json::array();
  for (const ChatMessage& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});

  inflight_.acquire();
  struct Release {
    std::counting_semaphore<>* sem;
    ~Release() { sem->release(); }
  } release{&inflight_};

  httplib::Client client(base_);
  client.set_connection_timeout(30);
  client.set_read_timeout(120);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw TransportError("chat endpoint unreachable: " + config_.endpoint);
  if (res->status != 200)
    throw TransportError("chat endpoint returned status " + std::to_string(res->status));

  try {
    const nlohmann::json reply = nlohmann::json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed chat response: ") + e.what());
  }
}

MockChatClient::MockChatClient(std::vector<std::string> replies) : replies_(std::move(replies)) {
  if (replies_.empty()) replies_.push_back("");
}

std::vector<std::string> MockChatClient::replies_from_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TransportError("cannot read mock reply script: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  // A JSON array of strings, or one reply per line.
  if (auto parsed = nlohmann::json::parse(text, nullptr, false); parsed.is_array()) {
    std::vector<std::string> replies;
    for (const auto& item : parsed) replies.push_back(item.get<std::string>());
    return replies;
  }
  std::vector<std::string> replies;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty()) replies.push_back(line);
  }
  return replies;
}

std::string MockChatClient::complete(const std::vector<ChatMessage>& messages) {
  std::lock_guard lock(mutex_);
  calls_.push_back(messages);
  const std::string& reply = replies_[next_ % replies_.size()];
  next_ += 1;
  return reply;
}

std::vector<std::vector<ChatMessage>> MockChatClient::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::unique_ptr<ChatClient> make_client(const ChatClientConfig& config) {
  if (config.endpoint.rfind("mock:", 0) == 0) {
    return std::make_unique<MockChatClient>(
        MockChatClient::replies_from_script(config.endpoint.substr(5)));
  }
  return std::make_unique<HttpChatClient>(config);
}

}  // namespace meow
