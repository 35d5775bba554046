#include <gtest/gtest.h>

#include <random>
#include <set>

#include "rwsearch/composer.hpp"
#include "rwsearch/minilang.hpp"
#include "rwsearch/mock_provider.hpp"
#include "rwsearch/transforms.hpp"
#include "rwsearch/util/files.hpp"

using namespace rws;

namespace {

const std::filesystem::path kData = std::filesystem::path(RWS_SOURCE_DIR) / "data";

forest::Registry& registry() {
    static forest::Registry reg = forest::load_modules(kData / "modules");
    return reg;
}

std::string script(const std::string& name) { return util::read_file(kData / "scripts" / name); }

ChatRequest generation_request(const std::string& module, const std::string& code, int p, SizeClass sc,
                               std::int64_t seed) {
    ComposerParams cp;
    cp.p = p;
    cp.max_token = 16384;
    return compose_generation_prompt(code, registry().get(module), sc, cp, seed).request();
}

struct FlakyProvider : Provider {
    int failures_left;
    int sends = 0;
    explicit FlakyProvider(int f) : failures_left(f) {}
    std::string id() const override { return "flaky"; }
    ProviderReply send(const ChatRequest& r) override {
        ++sends;
        if (failures_left-- > 0) throw TransportError("connection reset");
        return {std::vector<std::string>(static_cast<std::size_t>(r.completions_requested), "ok"), std::nullopt};
    }
};

Gateway mock_gateway(std::shared_ptr<EventLog> log = nullptr) {
    return Gateway(std::make_shared<MockProvider>(), std::move(log));
}

} // namespace

TEST(Tokens, Examples) {
    EXPECT_EQ(estimate_tokens("").count, 0u);
    EXPECT_EQ(estimate_tokens("abcd").count, 1u);
    EXPECT_EQ(estimate_tokens("abcde").count, 2u);
    EXPECT_EQ(estimate_tokens(std::string(4096, 'x')).count, 1024u);
    EXPECT_EQ(estimate_tokens("x").method, "ceil_bytes_div_4");
}

TEST(Tokens, MonotoneUnderConcatenation) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 1000; ++i) {
        std::string a(rng() % 300, 'a'), b(rng() % 300, 'b');
        for (auto& c : a) c = static_cast<char>(rng() % 256);
        const auto ab = estimate_tokens(a + b).count;
        ASSERT_GE(ab, std::max(estimate_tokens(a).count, estimate_tokens(b).count));
    }
}

TEST(Gateway, RejectsInvalidRequests) {
    auto log = std::make_shared<EventLog>();
    auto gw = mock_gateway(log);
    ChatRequest r = generation_request("rename-vars", script("s01_greeting.mini"), 1, SizeClass::Small, 1);
    r.completions_requested = 0;
    EXPECT_THROW(gw.complete(r), ValidationError);
    r.completions_requested = 1;
    r.max_output_tokens = 0;
    EXPECT_THROW(gw.complete(r), ValidationError);
    r.max_output_tokens = 10;
    r.temperature = 2.5;
    EXPECT_THROW(gw.complete(r), ValidationError);
    // failures are still logged, one record per call
    EXPECT_EQ(log->count("chat"), 3u);
}

TEST(Gateway, MockThreeChoicesDeterministic) {
    const auto req = generation_request("string-split", script("s02_config_path.mini"), 3, SizeClass::Large, 99);
    EXPECT_EQ(req.completions_requested, 3);
    auto a = mock_gateway().complete(req);
    auto b = mock_gateway().complete(req);
    ASSERT_EQ(a.choices.size(), 3u);
    EXPECT_EQ(a.choices, b.choices);
    EXPECT_EQ(a.provider_id, "mock");
    EXPECT_EQ(a.usage.output.size(), 3u);
    std::set<std::string> distinct(a.choices.begin(), a.choices.end());
    EXPECT_EQ(distinct.size(), 3u);
}

TEST(Gateway, MockRenameMatchesReferenceTransform) {
    const auto code = script("s03_shell_label.mini");
    const std::int64_t seed = 4242;
    auto resp = mock_gateway().complete(generation_request("rename-vars", code, 1, SizeClass::Small, seed));
    auto blocks = format::extract_fenced_blocks(resp.choices.at(0));
    ASSERT_EQ(blocks.size(), 1u);
    const auto expected = transforms::apply_transform("rename-vars", code, seed, 0).code;
    EXPECT_EQ(blocks[0].content, format::normalize_code(expected));
    EXPECT_NE(blocks[0].content, code);
}

TEST(Gateway, MockCommentInsertTwoDistinctPositions) {
    const auto code = script("s13_etc_listing.mini");
    const std::int64_t seed = 17;
    auto resp = mock_gateway().complete(generation_request("comment-insert", code, 2, SizeClass::Small, seed));
    auto blocks = format::extract_fenced_blocks(resp.choices.at(0));
    ASSERT_EQ(blocks.size(), 2u);
    const auto in_lines = format::split_lines(code);
    std::set<std::size_t> positions;
    for (int j = 0; j < 2; ++j) {
        const auto& out = blocks[static_cast<std::size_t>(j)].content;
        EXPECT_EQ(out, format::normalize_code(transforms::apply_transform("comment-insert", code, seed, j).code));
        // exactly one extra line, a // comment; removing it restores the input
        auto lines = format::split_lines(out);
        ASSERT_EQ(lines.size(), in_lines.size() + 1);
        std::size_t at = 0;
        while (at < in_lines.size() && lines[at] == in_lines[at]) ++at;
        EXPECT_EQ(lines[at].rfind("// ", 0), 0u);
        lines.erase(lines.begin() + static_cast<std::ptrdiff_t>(at));
        EXPECT_EQ(lines, in_lines);
        positions.insert(at);
        EXPECT_TRUE(minilang::trace_equal(minilang::run_source(code), minilang::run_source(out)));
    }
    EXPECT_EQ(positions.size(), 2u);
}

TEST(Gateway, MockVoteTieBreaksLow) {
    std::string user = format::render_header_line("module", "rename-vars") + format::render_header_line("mode", "vote") +
                       format::render_header_line("p", "2") + format::render_header_line("seed", "0") + "\n" +
                       std::string(format::kTitleCandidates) + "\n[0]\n" + format::fence("echo 1;") + "[1]\n" +
                       format::fence("echo 1;");
    ChatRequest r;
    r.user_text = user;
    auto resp = mock_gateway().complete(r);
    EXPECT_EQ(resp.choices.at(0).substr(0, 8), "BEST: 0\n");
}

TEST(Gateway, MockRequiresHeader) {
    ChatRequest r;
    r.user_text = "## Input code\n```\necho 1;\n```\n";
    auto log = std::make_shared<EventLog>();
    auto gw = mock_gateway(log);
    EXPECT_THROW(gw.complete(r), format::FormatError);
    EXPECT_EQ(log->count("chat"), 1u);
    EXPECT_FALSE(log->records().at(0)["error"].is_null());
}

TEST(Gateway, RetriesTransportFailures) {
    std::vector<std::chrono::milliseconds> sleeps;
    GatewayOptions opts;
    opts.sleep = [&](std::chrono::milliseconds d) { sleeps.push_back(d); };
    auto flaky = std::make_shared<FlakyProvider>(2);
    Gateway gw(flaky, nullptr, opts);
    ChatRequest r;
    r.user_text = "x";
    auto resp = gw.complete(r);
    EXPECT_EQ(resp.choices.size(), 1u);
    EXPECT_EQ(flaky->sends, 3);
    ASSERT_EQ(sleeps.size(), 2u);
    EXPECT_LT(sleeps[0], sleeps[1]);
    EXPECT_EQ(gw.log()->records().at(0)["attempts"], 3);
}

TEST(Gateway, SurfacesTransportFailureAfterThreeAttempts) {
    GatewayOptions opts;
    opts.sleep = [](std::chrono::milliseconds) {};
    auto flaky = std::make_shared<FlakyProvider>(5);
    Gateway gw(flaky, nullptr, opts);
    ChatRequest r;
    r.user_text = "x";
    EXPECT_THROW(gw.complete(r), TransportError);
    EXPECT_EQ(flaky->sends, 3);
}

TEST(Gateway, BackoffIsCapped) {
    RetryPolicy p;
    p.initial_backoff = std::chrono::milliseconds(100);
    p.max_backoff = std::chrono::milliseconds(300);
    EXPECT_EQ(p.backoff(1).count(), 100);
    EXPECT_EQ(p.backoff(2).count(), 200);
    EXPECT_EQ(p.backoff(3).count(), 300);
    EXPECT_EQ(p.backoff(9).count(), 300);
}

TEST(Gateway, TruncationIsAWarning) {
    auto req = generation_request("dead-branch", script("s18_countdown.mini"), 3, SizeClass::Small, 5);
    req.max_output_tokens = 2;
    auto resp = mock_gateway().complete(req);
    EXPECT_EQ(resp.choices.size(), 1u);
    EXPECT_EQ(resp.warnings.size(), 1u);
}

TEST(Gateway, EventLogCountsEveryCall) {
    const auto dir = std::filesystem::temp_directory_path() / "rws_gateway_log";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    {
        auto log = std::make_shared<EventLog>(dir / "events.jsonl");
        auto gw = mock_gateway(log);
        for (int i = 0; i < 5; ++i)
            gw.complete(generation_request("number-split", script("s04_leet_score.mini"), 2, SizeClass::Large, i));
        ChatRequest bad;
        EXPECT_THROW(gw.complete(bad), std::exception);
    }
    auto records = EventLog::read_all(dir / "events.jsonl");
    ASSERT_EQ(records.size(), 6u);
    for (std::size_t i = 0; i < records.size(); ++i) {
        EXPECT_EQ(records[i]["type"], "chat");
        EXPECT_EQ(records[i]["seq"], i);
        EXPECT_TRUE(records[i].contains("ts_start"));
    }
    EXPECT_EQ(records[0]["response"]["choices"].size(), 2u);
    // a reopened log keeps numbering
    EventLog again(dir / "events.jsonl");
    again.append({{"type", "note"}});
    EXPECT_EQ(EventLog::read_all(dir / "events.jsonl").back()["seq"], 6);
}

TEST(Gateway, MockOutageSimulatesTransportLoss) {
    MockOptions mo;
    mo.outage_after = 1;
    GatewayOptions opts;
    opts.sleep = [](std::chrono::milliseconds) {};
    Gateway gw(std::make_shared<MockProvider>(mo), nullptr, opts);
    const auto req = generation_request("rename-vars", script("s01_greeting.mini"), 1, SizeClass::Small, 1);
    EXPECT_NO_THROW(gw.complete(req));
    EXPECT_THROW(gw.complete(req), TransportError);
}

TEST(Transforms, VariantsAreNestedAndBehaviorPreserving) {
    for (const auto& entry : std::filesystem::directory_iterator(kData / "scripts")) {
        const auto code = util::read_file(entry.path());
        const auto base = minilang::run_source(code);
        for (const auto& [id, fn] : transforms::reference_transforms()) {
            std::size_t prev_changed = 0;
            for (int v = 0; v < 4; ++v) {
                const auto r = fn(code, 1234, v);
                ASSERT_TRUE(minilang::parses(r.code)) << id << " " << entry.path() << "\n" << r.code;
                ASSERT_TRUE(minilang::trace_equal(base, minilang::run_source(r.code))) << id << "\n" << r.code;
                EXPECT_GE(r.sites_changed, prev_changed) << id;
                prev_changed = r.sites_changed;
            }
        }
    }
}

TEST(Transforms, UnknownModuleIsNotFound) {
    EXPECT_THROW(transforms::apply_transform("nope", "echo 1;", 1, 0), NotFoundError);
}

TEST(Transforms, SeededPermutationIsAPermutation) {
    for (std::size_t n : {0u, 1u, 2u, 7u, 50u}) {
        auto p = transforms::seeded_permutation(n, 99);
        std::set<std::size_t> s(p.begin(), p.end());
        EXPECT_EQ(s.size(), n);
        if (n) {
            EXPECT_EQ(*s.rbegin(), n - 1);
        }
    }
}

TEST(Transforms, RandomProgramsStayEquivalent) {
    // string-heavy random scripts through every transform
    std::mt19937_64 rng(3);
    const std::vector<std::string> stmts{"$a = \"left\";", "$b = 41 + $a;", "echo $a . \"-\" . $b;",
                                         "echo upper(\"mix\") . 7;", "if ($b > 3) { echo \"big\"; } else { echo 0; }",
                                         "$c = substr(\"abcdef\", 2);", "echo $c, 12, \"x\";", "notify($a, 5);"};
    for (int i = 0; i < 60; ++i) {
        std::string code;
        for (int k = 0; k < 5; ++k) code += stmts[rng() % stmts.size()] + "\n";
        const auto base = minilang::run_source(code);
        for (const auto& [id, fn] : transforms::reference_transforms()) {
            const auto r = fn(code, rng(), static_cast<int>(rng() % 4));
            ASSERT_TRUE(minilang::trace_equal(base, minilang::run_source(r.code))) << id << "\n" << code << "\n" << r.code;
        }
    }
}
