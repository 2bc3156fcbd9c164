#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "phantom/instrument.hpp"

namespace phantom::collect {

/// `target_n` temperatures drawn uniformly (with replacement) from the grid
/// {0, step, 2*step, ..., 1}. Zero is drawn at most once: later draws of zero
/// are redrawn. Deterministic in `seed`.
std::vector<double> build_temperature_schedule(int target_n, double step, std::uint64_t seed);

/// Pseudo-code prompt administering every instrument in one completion.
/// Answers are requested as one `item_id: value` line per item.
std::string build_prompt(std::span<const inst::Instrument> instruments);

enum class InvalidReason { refusal, echo, incomplete, out_of_range, unparseable };

std::string_view to_string(InvalidReason reason);

struct ParseOutcome {
  bool valid = false;
  std::vector<int> values;  // concatenated over instruments when valid
  InvalidReason reason = InvalidReason::unparseable;
  std::string detail;
};

/// Extracts one in-range integer per item from free text. Accepts
/// `item_id: value` (also `=`) lines and `N. value` / `N) value` numbered
/// lines, where N is the 1-based position across all instruments.
ParseOutcome parse_completion(std::string_view text, std::span<const inst::Instrument> instruments);

struct ChatRequest {
  std::size_t index = 0;
  std::string model;
  std::string system_message;
  std::string prompt;
  double temperature = 1.0;
};

/// OpenAI-style chat-completion request body.
std::string request_body(const ChatRequest& request);

/// choices[0].message.content of a chat-completion response body.
/// Throws TransportError if the body does not have that shape.
std::string extract_content(std::string_view response_body);

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  /// Returns the assistant message text. Throws TransportError carrying the
  /// HTTP status (0 for connection-level failures).
  virtual std::string complete(const ChatRequest& request) = 0;
};

struct EndpointConfig {
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::seconds timeout{120};
};

/// Blocking HTTP client. Sends `Authorization: Bearer $api_key_env` when the
/// variable is set and `X-Request-Id: <schedule index>`.
class HttpChatClient final : public ChatClient {
 public:
  explicit HttpChatClient(EndpointConfig config);
  std::string complete(const ChatRequest& request) override;

 private:
  EndpointConfig config_;
  std::string api_key_;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds backoff{500};
  double multiplier = 2.0;
};

struct CollectionConfig {
  EndpointConfig endpoint;
  std::string model;
  std::string group;  // defaults to model
  int target_n = 401;
  std::vector<double> temperature_schedule;
  double max_attempt_factor = 3.0;  // cap on HTTP attempts incl. retries, as a multiple of target_n
  RetryPolicy retry;
  int concurrency = 4;
  std::string system_message;
  std::optional<std::filesystem::path> audit_dir;

  /// Throws PreconditionError on a violated invariant.
  void validate() const;
};

struct RawCompletion {
  std::size_t request_id = 0;
  double temperature = 0.0;
  std::string text;
  std::string timestamp;  // ISO-8601 UTC
  int attempts = 0;
  std::optional<std::string> failure;  // transport/auth failure; no parse outcome then
  ParseOutcome outcome;
};

struct CollectionResult {
  std::vector<inst::ResponseMatrix> matrices;  // one per instrument, valid rows in schedule order
  std::vector<RawCompletion> log;              // one per schedule entry, schedule order
  std::size_t valid = 0;
  std::size_t invalid = 0;
  std::size_t failed = 0;
  bool aborted = false;
  std::string abort_reason;
  bool majority_invalid = false;  // more than half of the answered requests were invalid
};

/// Issues one request per schedule entry with at most `concurrency` in
/// flight; invalid completions are logged and dropped, never resampled.
/// Authentication failures abort the run.
CollectionResult collect(const CollectionConfig& config,
                         std::span<const inst::Instrument> instruments, ChatClient& client);

/// One collection per static temperature, `target_n` requests each.
std::vector<CollectionResult> sweep_collect(const CollectionConfig& config,
                                            std::span<const inst::Instrument> instruments,
                                            std::span<const double> temperatures,
                                            ChatClient& client);

}  // namespace phantom::collect
