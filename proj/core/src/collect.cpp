#include "phantom/collect.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "phantom/error.hpp"
#include "phantom/rng.hpp"

namespace phantom::collect {

using nlohmann::json;

std::vector<double> build_temperature_schedule(int target_n, double step, std::uint64_t seed) {
  if (target_n < 1) throw PreconditionError("temperature schedule: target_n must be >= 1");
  if (!(step > 0.0) || step > 1.0) throw PreconditionError("temperature schedule: step must be in (0, 1]");
  const double cells = 1.0 / step;
  const auto intervals = static_cast<std::uint64_t>(std::llround(cells));
  if (std::abs(cells - static_cast<double>(intervals)) > 1e-9 * cells) {
    throw PreconditionError("temperature schedule: step must divide 1 into an integer grid");
  }
  Rng rng(seed);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(target_n));
  bool zero_drawn = false;
  while (static_cast<int>(out.size()) < target_n) {
    const std::uint64_t idx = rng.below(intervals + 1);
    if (idx == 0) {
      if (zero_drawn) continue;
      zero_drawn = true;
    }
    out.push_back(static_cast<double>(idx) / static_cast<double>(intervals));
  }
  return out;
}

namespace {

constexpr std::string_view kResponseMarker = "# Response format";

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string build_prompt(std::span<const inst::Instrument> instruments) {
  if (instruments.empty()) throw PreconditionError("build_prompt: no instruments");
  std::ostringstream os;
  os << "# Questionnaire administration.\n"
        "# The questionnaires below are written as pseudo-code. Read every block, then\n"
        "# answer as a respondent would, following each questionnaire's instructions.\n\n";
  for (const auto& ins : instruments) {
    os << "questionnaire " << ins.id << " {\n";
    if (!ins.instructions.empty()) os << "    instructions = " << quote(ins.instructions) << "\n";
    os << "    scale = {";
    for (int v = ins.scale_min; v <= ins.scale_max; ++v) {
      os << (v == ins.scale_min ? "" : ", ") << v;
      if (!ins.scale_labels.empty()) {
        os << ": " << quote(ins.scale_labels[static_cast<std::size_t>(v - ins.scale_min)]);
      }
    }
    os << "}\n    items = [\n";
    for (const auto& item : ins.items) {
      os << "        " << item.id << ": " << quote(item.text) << ",\n";
    }
    os << "    ]\n}\n\n";
  }
  os << kResponseMarker << "\n"
     << "# Give exactly one integer answer per item, within that questionnaire's scale.\n"
        "# Answer every item, in the order listed, one per line, and print nothing else:\n"
        "for questionnaire in [";
  for (std::size_t i = 0; i < instruments.size(); ++i) {
    os << (i ? ", " : "") << instruments[i].id;
  }
  os << "]:\n"
        "    for item in questionnaire.items:\n"
        "        print(f\"{item.id}: {answer}\")\n";
  return os.str();
}

std::string_view to_string(InvalidReason reason) {
  switch (reason) {
    case InvalidReason::refusal: return "refusal";
    case InvalidReason::echo: return "echo";
    case InvalidReason::incomplete: return "incomplete";
    case InvalidReason::out_of_range: return "out_of_range";
    case InvalidReason::unparseable: return "unparseable";
  }
  return "unknown";
}

namespace {

bool looks_like_refusal(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  static const char* kPhrases[] = {"i cannot", "i can't", "i can\u2019t", "i won\u2019t", "i can not", "i won't", "i will not",
                                   "i'm sorry", "i am sorry", "as an ai", "unable to",
                                   "i do not have personal", "i don't have personal",
                                   "not able to", "i'm not able", "cannot provide", "decline"};
  for (const char* p : kPhrases) {
    if (lower.find(p) != std::string::npos) return true;
  }
  return false;
}

bool looks_like_echo(std::string_view text) {
  return text.find(kResponseMarker) != std::string_view::npos ||
         text.find("items = [") != std::string_view::npos ||
         (text.find("questionnaire ") != std::string_view::npos && text.find(" {") != std::string_view::npos);
}

}  // namespace

ParseOutcome parse_completion(std::string_view text, std::span<const inst::Instrument> instruments) {
  struct Slot {
    std::size_t position;
    int min;
    int max;
  };
  std::map<std::string, Slot> by_id;
  std::vector<Slot> by_position;
  for (const auto& ins : instruments) {
    for (const auto& item : ins.items) {
      Slot s{by_position.size(), ins.scale_min, ins.scale_max};
      by_id.emplace(item.id, s);
      by_position.push_back(s);
    }
  }

  static const std::regex kIdLine(R"(^\s*(?:[-*]\s*)?`?([A-Za-z][A-Za-z0-9_.\-]*)`?\s*[:=]\s*\**\s*"?(-?\d+)\b)");
  static const std::regex kNumbered(R"(^\s*(\d+)\s*[.)]\s*(-?\d+)\s*(?:$|[^\d.]))");

  std::vector<std::optional<int>> values(by_position.size());
  std::vector<std::string> out_of_range;
  bool conflict = false;
  std::size_t found = 0;

  auto record = [&](const Slot& slot, long v, const std::string& label) {
    auto& cell = values[slot.position];
    if (v < slot.min || v > slot.max) {
      out_of_range.push_back(label + "=" + std::to_string(v));
      return;
    }
    if (cell) {
      if (*cell != v) conflict = true;
      return;
    }
    cell = static_cast<int>(v);
    ++found;
  };

  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string line(text.substr(start, end - start));
    start = end + 1;
    std::smatch m;
    if (std::regex_search(line, m, kIdLine)) {
      const auto it = by_id.find(m[1].str());
      if (it != by_id.end()) {
        record(it->second, std::stol(m[2].str()), m[1].str());
        continue;
      }
    }
    if (std::regex_search(line, m, kNumbered)) {
      const auto pos = std::stoul(m[1].str());
      if (pos >= 1 && pos <= by_position.size()) {
        record(by_position[pos - 1], std::stol(m[2].str()), "#" + m[1].str());
      }
    }
    if (end == text.size()) break;
  }

  ParseOutcome out;
  if (!out_of_range.empty()) {
    out.reason = InvalidReason::out_of_range;
    out.detail = out_of_range.front();
    return out;
  }
  if (conflict) {
    out.reason = InvalidReason::unparseable;
    out.detail = "conflicting answers for the same item";
    return out;
  }
  if (found == by_position.size() && found > 0) {
    out.valid = true;
    out.values.reserve(found);
    for (const auto& v : values) out.values.push_back(*v);
    return out;
  }
  if (looks_like_echo(text)) {
    out.reason = InvalidReason::echo;
    out.detail = "completion repeats the prompt";
  } else if (found == 0) {
    out.reason = looks_like_refusal(text) ? InvalidReason::refusal : InvalidReason::unparseable;
  } else {
    out.reason = InvalidReason::incomplete;
    out.detail = std::to_string(found) + " of " + std::to_string(by_position.size()) + " items answered";
  }
  return out;
}

std::string request_body(const ChatRequest& request) {
  json messages = json::array();
  if (!request.system_message.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.system_message}});
  }
  messages.push_back({{"role", "user"}, {"content", request.prompt}});
  json body = {{"model", request.model}, {"messages", messages}, {"temperature", request.temperature}};
  return body.dump();
}

std::string extract_content(std::string_view response_body) {
  try {
    const json j = json::parse(response_body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string{} : content.get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed chat-completion response: ") + e.what(), 200);
  }
}

void CollectionConfig::validate() const {
  if (target_n <= 0) throw PreconditionError("collection: target_n must be > 0");
  if (static_cast<int>(temperature_schedule.size()) != target_n) {
    throw PreconditionError("collection: schedule length must equal target_n");
  }
  for (double t : temperature_schedule) {
    if (!(t >= 0.0 && t <= 1.0)) throw PreconditionError("collection: temperature outside [0, 1]");
  }
  if (concurrency < 1) throw PreconditionError("collection: concurrency must be >= 1");
  if (!(max_attempt_factor >= 1.0)) throw PreconditionError("collection: max_attempt_factor must be >= 1");
  if (model.empty()) throw PreconditionError("collection: model id is empty");
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool retryable(const TransportError& e) {
  return e.status() == 0 || e.status() == 408 || e.status() == 429 || e.status() >= 500;
}

void write_audit(const std::filesystem::path& dir, const ChatRequest& request,
                 const RawCompletion& raw) {
  json j = {{"request_id", raw.request_id},
            {"timestamp", raw.timestamp},
            {"temperature", raw.temperature},
            {"attempts", raw.attempts},
            {"request", json::parse(request_body(request))},
            {"completion", raw.text}};
  if (raw.failure) {
    j["failure"] = *raw.failure;
  } else {
    j["valid"] = raw.outcome.valid;
    if (!raw.outcome.valid) {
      j["invalid_reason"] = to_string(raw.outcome.reason);
      j["detail"] = raw.outcome.detail;
    }
  }
  std::ofstream out(dir / fmt::format("completion_{:05d}.json", raw.request_id));
  out << j.dump(2) << '\n';
}

}  // namespace

CollectionResult collect(const CollectionConfig& config,
                         std::span<const inst::Instrument> instruments, ChatClient& client) {
  config.validate();
  const std::string prompt = build_prompt(instruments);
  const std::string group = config.group.empty() ? config.model : config.group;
  if (config.audit_dir) std::filesystem::create_directories(*config.audit_dir);

  const std::size_t n = config.temperature_schedule.size();
  std::vector<RawCompletion> log(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::atomic<long> attempt_budget{static_cast<long>(std::floor(config.max_attempt_factor * static_cast<double>(n)))};
  std::mutex abort_mutex;
  std::string abort_reason;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      RawCompletion& raw = log[i];
      raw.request_id = i;
      raw.temperature = config.temperature_schedule[i];
      ChatRequest request{i, config.model, config.system_message, prompt, raw.temperature};
      if (abort.load()) {
        raw.failure = "not sent: collection aborted";
        raw.timestamp = utc_now();
        continue;
      }
      auto delay = config.retry.backoff;
      for (;;) {
        if (attempt_budget.fetch_sub(1) <= 0) {
          raw.failure = "attempt budget exhausted";
          break;
        }
        ++raw.attempts;
        try {
          raw.text = client.complete(request);
          raw.failure.reset();
          break;
        } catch (const TransportError& e) {
          raw.failure = e.what();
          if (e.is_auth()) {
            std::lock_guard lock(abort_mutex);
            if (!abort.exchange(true)) abort_reason = std::string("authentication failed: ") + e.what();
            break;
          }
          if (!retryable(e) || raw.attempts > config.retry.max_retries) break;
          std::this_thread::sleep_for(delay);
          delay = std::chrono::milliseconds(
              static_cast<long>(static_cast<double>(delay.count()) * config.retry.multiplier));
        }
      }
      raw.timestamp = utc_now();
      if (!raw.failure) raw.outcome = parse_completion(raw.text, instruments);
      if (config.audit_dir) write_audit(*config.audit_dir, request, raw);
    }
  };

  const int threads = std::min<int>(config.concurrency, static_cast<int>(n));
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  CollectionResult result;
  result.aborted = abort.load();
  result.abort_reason = abort_reason;
  std::vector<const RawCompletion*> valid_rows;
  for (const auto& raw : log) {
    if (raw.failure) {
      ++result.failed;
    } else if (raw.outcome.valid) {
      ++result.valid;
      valid_rows.push_back(&raw);
    } else {
      ++result.invalid;
    }
  }
  const std::size_t answered = result.valid + result.invalid;
  result.majority_invalid = answered > 0 && 2 * result.invalid > answered;

  std::size_t offset = 0;
  for (const auto& ins : instruments) {
    inst::ResponseMatrix m;
    m.group = group;
    m.instrument_id = ins.id;
    m.items = ins.item_ids();
    m.values.resize(static_cast<Eigen::Index>(valid_rows.size()), static_cast<Eigen::Index>(ins.size()));
    for (std::size_t r = 0; r < valid_rows.size(); ++r) {
      const auto& raw = *valid_rows[r];
      for (std::size_t c = 0; c < ins.size(); ++c) {
        m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = raw.outcome.values[offset + c];
      }
      m.meta.push_back({fmt::format("{}#{}", group, raw.request_id + 1), raw.temperature, std::nullopt,
                        std::nullopt});
    }
    offset += ins.size();
    result.matrices.push_back(std::move(m));
  }
  result.log = std::move(log);
  return result;
}

std::vector<CollectionResult> sweep_collect(const CollectionConfig& config,
                                            std::span<const inst::Instrument> instruments,
                                            std::span<const double> temperatures,
                                            ChatClient& client) {
  std::vector<CollectionResult> out;
  for (double t : temperatures) {
    CollectionConfig fixed = config;
    fixed.temperature_schedule.assign(static_cast<std::size_t>(config.target_n), t);
    if (config.audit_dir) *fixed.audit_dir /= fmt::format("t{:.2f}", t);
    out.push_back(collect(fixed, instruments, client));
  }
  return out;
}

}  // namespace phantom::collect
