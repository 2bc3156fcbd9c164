#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "mock_endpoint.hpp"
#include "phantom/collect.hpp"
#include "phantom/error.hpp"
#include "testkit.hpp"

using namespace phantom;
using namespace phantom::collect;

namespace {

std::vector<inst::Instrument> both() {
  return {inst::load_instrument(testkit::instrument_path("h60.json")),
          inst::load_instrument(testkit::instrument_path("dshs.json"))};
}

std::vector<inst::Instrument> demo() { return {inst::load_instrument(testkit::instrument_path("demo6.json"))}; }

CollectionConfig config_for(const std::string& base_url, int n, std::uint64_t seed) {
  CollectionConfig c;
  c.endpoint.base_url = base_url;
  c.endpoint.api_key_env = "PHANTOM_TEST_NO_SUCH_KEY";
  c.endpoint.timeout = std::chrono::seconds(10);
  c.model = "mock-model";
  c.target_n = n;
  c.temperature_schedule = build_temperature_schedule(n, 0.01, seed);
  c.retry.backoff = std::chrono::milliseconds(1);
  c.concurrency = 4;
  return c;
}

class FakeClient final : public ChatClient {
 public:
  explicit FakeClient(std::vector<inst::Instrument> instruments) : instruments_(std::move(instruments)) {}
  std::string complete(const ChatRequest& request) override {
    ++calls;
    return testkit::scripted_answers(request.index, instruments_);
  }
  std::atomic<int> calls{0};

 private:
  std::vector<inst::Instrument> instruments_;
};

}  // namespace

TEST(Schedule, ZeroAtMostOnceAndOnGrid) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto s = build_temperature_schedule(401, 0.01, seed);
    ASSERT_EQ(s.size(), 401u);
    EXPECT_LE(std::count(s.begin(), s.end(), 0.0), 1);
    for (double t : s) {
      ASSERT_GE(t, 0.0);
      ASSERT_LE(t, 1.0);
      EXPECT_NEAR(t * 100, std::round(t * 100), 1e-9);
    }
  }
}

TEST(Schedule, CoarseGridStillDrawsZeroOnce) {
  // With 3 grid points zero comes up constantly; it must still appear once at most.
  const auto s = build_temperature_schedule(500, 0.5, 1);
  EXPECT_EQ(std::count(s.begin(), s.end(), 0.0), 1);
  EXPECT_GT(std::count(s.begin(), s.end(), 1.0), 100);
}

TEST(Schedule, DeterministicAndBoundary) {
  EXPECT_EQ(build_temperature_schedule(401, 0.01, 42), build_temperature_schedule(401, 0.01, 42));
  EXPECT_NE(build_temperature_schedule(401, 0.01, 42), build_temperature_schedule(401, 0.01, 43));
  const auto one = build_temperature_schedule(1, 0.01, 9);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_GE(one[0], 0.0);
  EXPECT_LE(one[0], 1.0);
  EXPECT_THROW(build_temperature_schedule(0, 0.01, 1), PreconditionError);
  EXPECT_THROW(build_temperature_schedule(5, 0.3, 1), PreconditionError);
}

TEST(Prompt, ListsEveryItemAndScale) {
  const auto ins = both();
  const auto prompt = build_prompt(ins);
  std::size_t count = 0;
  for (const auto& i : ins)
    for (const auto& item : i.items) {
      EXPECT_NE(prompt.find("        " + item.id + ": "), std::string::npos) << item.id;
      ++count;
    }
  EXPECT_EQ(count, 102u);
  EXPECT_NE(prompt.find("questionnaire H60"), std::string::npos);
  EXPECT_NE(prompt.find("questionnaire DSHS"), std::string::npos);
  EXPECT_NE(prompt.find("6: \"very much like me\""), std::string::npos);
  EXPECT_THROW(build_prompt(std::span<const inst::Instrument>{}), PreconditionError);
}

TEST(Parse, ValidIdLinesAndNumberedLines) {
  const auto ins = both();
  const auto text = testkit::scripted_answers(3, ins);
  const auto ok = parse_completion(text, ins);
  ASSERT_TRUE(ok.valid);
  EXPECT_EQ(ok.values.size(), 102u);

  std::string numbered;
  for (std::size_t i = 0; i < 102; ++i) numbered += std::to_string(i + 1) + ". " + std::to_string(1 + i % 5) + "\n";
  const auto n = parse_completion(numbered, ins);
  ASSERT_TRUE(n.valid);
  EXPECT_EQ(n.values[4], 5);
  EXPECT_EQ(n.values[101], 1 + 101 % 5);
}

TEST(Parse, Categories) {
  const auto ins = both();
  EXPECT_EQ(parse_completion("I cannot take personality tests.", ins).reason, InvalidReason::refusal);
  EXPECT_EQ(parse_completion(build_prompt(ins), ins).reason, InvalidReason::echo);
  auto text = testkit::scripted_answers(1, ins);
  text.erase(text.rfind('\n', text.size() - 2) + 1);
  const auto inc = parse_completion(text, ins);
  EXPECT_FALSE(inc.valid);
  EXPECT_EQ(inc.reason, InvalidReason::incomplete);
  EXPECT_EQ(inc.detail, "101 of 102 items answered");
  EXPECT_EQ(parse_completion("h1: 9\n", ins).reason, InvalidReason::out_of_range);
  EXPECT_EQ(parse_completion("lorem ipsum", ins).reason, InvalidReason::unparseable);
  EXPECT_EQ(parse_completion("h1: 2\nh1: 3\n", ins).reason, InvalidReason::unparseable);
}

TEST(Parse, ValidIffAllInRange) {
  // Property: random line sets; valid exactly when every item has an in-range value.
  const auto ins = demo();
  Rng rng(12);
  for (int rep = 0; rep < 500; ++rep) {
    std::string text;
    bool all = true;
    for (const auto& item : ins[0].items) {
      const auto roll = rng.below(10);
      if (roll == 0) {
        all = false;
        continue;
      }
      const int v = roll == 1 ? 0 : 1 + static_cast<int>(rng.below(5));
      if (v == 0) all = false;
      text += item.id + ": " + std::to_string(v) + "\n";
    }
    const auto out = parse_completion(text, ins);
    EXPECT_EQ(out.valid, all) << text;
    EXPECT_EQ(parse_completion(text, ins).reason, out.reason);
  }
}

TEST(Transport, RequestBodyAndExtract) {
  ChatRequest r{7, "m", "sys", "hello", 0.35};
  const auto body = request_body(r);
  EXPECT_NE(body.find("\"temperature\":0.35"), std::string::npos);
  EXPECT_NE(body.find("\"role\":\"system\""), std::string::npos);
  EXPECT_EQ(extract_content(R"({"choices":[{"message":{"content":"x: 1"}}]})"), "x: 1");
  EXPECT_THROW(extract_content("{}"), TransportError);
  EXPECT_THROW(extract_content("not json"), TransportError);
}

TEST(Collect, FakeClientFullSample) {
  const auto ins = demo();
  FakeClient client(ins);
  CollectionConfig c = config_for("unused", 25, 5);
  const auto result = collect::collect(c, ins, client);
  EXPECT_EQ(result.valid, 25u);
  EXPECT_EQ(result.matrices[0].rows(), 25);
  EXPECT_EQ(result.matrices[0].meta[0].source_id, "mock-model#1");
  EXPECT_EQ(*result.matrices[0].meta[3].temperature, c.temperature_schedule[3]);
  EXPECT_EQ(client.calls.load(), 25);
  c.temperature_schedule.pop_back();
  EXPECT_THROW(collect::collect(c, ins, client), PreconditionError);
}

TEST(Collect, MockEndpointDropsInvalidAndRetries) {
  const auto ins = both();
  testkit::MockEndpoint server([&](const testkit::MockRequest& r) -> testkit::MockReply {
    switch (r.id % 20) {
      case 3: return {200, "I'm sorry, but I cannot take personality tests."};
      case 7: return {200, r.prompt};
      case 11: {
        auto t = testkit::scripted_answers(r.id, ins);
        return {200, t.substr(0, t.size() / 2)};
      }
      case 15:
        if (r.attempt == 1) return {503, ""};
        break;
    }
    return {200, testkit::scripted_answers(r.id, ins)};
  });
  HttpChatClient client(config_for(server.base_url(), 1, 0).endpoint);
  const auto c = config_for(server.base_url(), 60, 77);
  const auto result = collect::collect(c, ins, client);
  EXPECT_EQ(result.invalid, 9u);
  EXPECT_EQ(result.failed, 0u);
  EXPECT_EQ(result.valid, 51u);
  EXPECT_EQ(result.matrices[0].rows(), 51);
  EXPECT_EQ(result.matrices[1].rows(), 51);
  EXPECT_FALSE(result.majority_invalid);
  EXPECT_EQ(server.hits(), 63u);
  for (const auto& raw : result.log) {
    switch (raw.request_id % 20) {
      case 3: EXPECT_EQ(raw.outcome.reason, InvalidReason::refusal); break;
      case 7: EXPECT_EQ(raw.outcome.reason, InvalidReason::echo); break;
      case 11: EXPECT_EQ(raw.outcome.reason, InvalidReason::incomplete); break;
      case 15: EXPECT_EQ(raw.attempts, 2); [[fallthrough]];
      default: EXPECT_TRUE(raw.outcome.valid);
    }
  }
  for (const auto& r : server.received()) EXPECT_EQ(r.temperature, c.temperature_schedule[r.id]);
}

TEST(Collect, ByteIdenticalAcrossRuns) {
  const auto ins = both();
  testkit::MockEndpoint server([&](const testkit::MockRequest& r) {
    return testkit::MockReply{200, testkit::scripted_answers(r.id, ins)};
  });
  HttpChatClient client(config_for(server.base_url(), 1, 0).endpoint);
  const auto dir = std::filesystem::temp_directory_path() / "phantom_test_collect";
  std::filesystem::remove_all(dir);
  std::vector<std::string> files;
  for (int run = 0; run < 2; ++run) {
    auto c = config_for(server.base_url(), 40, 3);
    c.concurrency = run == 0 ? 1 : 6;
    const auto result = collect::collect(c, ins, client);
    const auto path = dir / ("run" + std::to_string(run) + ".csv");
    inst::write_matrix_csv(path, result.matrices[1]);
    std::ifstream in(path);
    files.emplace_back(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  EXPECT_FALSE(files[0].empty());
  EXPECT_EQ(files[0], files[1]);
  std::filesystem::remove_all(dir);
}

TEST(Collect, AuthFailureAborts) {
  const auto ins = demo();
  testkit::MockEndpoint server([](const testkit::MockRequest&) { return testkit::MockReply{401, ""}; });
  ::setenv("PHANTOM_TEST_KEY", "sk-test", 1);
  auto c = config_for(server.base_url(), 30, 1);
  c.endpoint.api_key_env = "PHANTOM_TEST_KEY";
  c.concurrency = 1;
  HttpChatClient client(c.endpoint);
  const auto result = collect::collect(c, ins, client);
  EXPECT_TRUE(result.aborted);
  EXPECT_EQ(result.valid, 0u);
  EXPECT_EQ(result.matrices[0].rows(), 0);
  EXPECT_EQ(result.failed, 30u);
  EXPECT_EQ(server.hits(), 1u);
  EXPECT_EQ(server.received()[0].authorization, "Bearer sk-test");
}

TEST(Collect, AttemptBudgetCapsRetries) {
  const auto ins = demo();
  testkit::MockEndpoint server([](const testkit::MockRequest&) { return testkit::MockReply{500, ""}; });
  auto c = config_for(server.base_url(), 10, 1);
  c.max_attempt_factor = 1.5;
  c.retry.max_retries = 5;
  HttpChatClient client(c.endpoint);
  const auto result = collect::collect(c, ins, client);
  EXPECT_EQ(result.failed, 10u);
  EXPECT_EQ(server.hits(), 15u);
  EXPECT_FALSE(result.aborted);
}

TEST(Collect, ConnectionRefusedIsFailure) {
  auto c = config_for("http://127.0.0.1:1", 2, 1);
  c.retry.max_retries = 1;
  HttpChatClient client(c.endpoint);
  const auto ins = demo();
  const auto result = collect::collect(c, ins, client);
  EXPECT_EQ(result.failed, 2u);
  EXPECT_EQ(result.log[0].attempts, 2);
}

TEST(Sweep, OneMatrixPerTemperature) {
  const auto ins = demo();
  FakeClient client(ins);
  auto c = config_for("unused", 5, 1);
  const std::vector<double> temps{0.5};
  const auto out = sweep_collect(c, ins, temps, client);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].matrices[0].rows(), 5);
  for (const auto& m : out[0].matrices[0].meta) EXPECT_EQ(*m.temperature, 0.5);
  EXPECT_TRUE(sweep_collect(c, ins, std::span<const double>{}, client).empty());
}
