#pragma once

#include <memory>
#include <mutex>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <vector>

namespace meow {

struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One wire-format message: role is "system", "user", or "assistant".
struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatClientConfig {
  std::string endpoint;  // http(s) URL, or "mock:<script-file>"
  std::string model;
  std::string api_key;   // overridden by MEOW_API_KEY when set
  double temperature = 0.7;
  double top_p = 0.9;
  int max_inflight = 4;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  // Sends the transcript and returns the assistant reply content.
  // Throws TransportError on connection or protocol failure.
  virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

// POSTs {model, messages, temperature, top_p} and reads
// choices[0].message.content, the format used by common chat-completion APIs.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(ChatClientConfig config);
  std::string complete(const std::vector<ChatMessage>& messages) override;

 private:
  ChatClientConfig config_;
  std::string base_;  // scheme://host[:port]
  std::string path_;
  std::counting_semaphore<> inflight_;  // caps concurrent requests across games
};

// Canned replies, cycled; used for tests and offline judge runs.
class MockChatClient : public ChatClient {
 public:
  explicit MockChatClient(std::vector<std::string> replies);
  static std::vector<std::string> replies_from_script(const std::string& path);

  std::string complete(const std::vector<ChatMessage>& messages) override;

  // Transcripts seen so far, in call order.
  std::vector<std::vector<ChatMessage>> calls() const;

 private:
  std::vector<std::string> replies_;
  std::vector<std::vector<ChatMessage>> calls_;
  std::size_t next_ = 0;
  mutable std::mutex mutex_;
};

// Dispatches on the endpoint: "mock:<file>" loads a reply script, anything
// else becomes an HTTP client.
std::unique_ptr<ChatClient> make_client(const ChatClientConfig& config);

}  // namespace meow
