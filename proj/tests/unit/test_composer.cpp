#include <gtest/gtest.h>

#include <random>

#include "rwsearch/composer.hpp"
#include "rwsearch/mock_provider.hpp"
#include "rwsearch/util/files.hpp"

using namespace rws;

namespace {

const std::filesystem::path kData = std::filesystem::path(RWS_SOURCE_DIR) / "data";

forest::Registry& registry() {
    static forest::Registry reg = forest::load_modules(kData / "modules");
    return reg;
}

std::string script(const std::string& name) { return util::read_file(kData / "scripts" / name); }

ComposerParams params(int p, std::int64_t max_token = 8192) {
    ComposerParams cp;
    cp.p = p;
    cp.max_token = max_token;
    return cp;
}

ChatResponse reply(std::vector<std::string> choices) {
    ChatResponse r;
    r.choices = std::move(choices);
    r.provider_id = "test";
    r.request_id = "req-1";
    return r;
}

} // namespace

TEST(ClassifySize, Examples) {
    // 100-token code, p=3, 300 tokens of examples+overhead, margin 256
    auto d = classify_size_tokens(100, 150, 150, 3, 256, 4096);
    EXPECT_EQ(d.size_class, SizeClass::Small);
    EXPECT_EQ(d.total, 856);
    EXPECT_EQ(classify_size_tokens(5000, 0, 0, 1, 0, 4096).size_class, SizeClass::Large);
    // equality is not a violation
    EXPECT_EQ(classify_size_tokens(1000, 500, 300, 3, 296, 4096).size_class, SizeClass::Small);
    EXPECT_EQ(classify_size_tokens(1000, 500, 300, 3, 297, 4096).size_class, SizeClass::Large);
}

TEST(ClassifySize, FromModuleCountsAllAddends) {
    const auto& m = registry().get("string-split");
    const auto code = script("s02_config_path.mini");
    auto d = classify_size(code, m, params(3));
    EXPECT_EQ(d.code_tokens, static_cast<std::int64_t>(token_count(code)));
    EXPECT_GT(d.fe_chain_tokens, 0);
    EXPECT_GT(d.overhead_tokens, 0);
    EXPECT_EQ(d.total, 3 * d.code_tokens + d.fe_chain_tokens + d.overhead_tokens + d.safety_margin);
    EXPECT_EQ(d.size_class, SizeClass::Small);
    EXPECT_EQ(classify_size(std::string(20000, 'x'), m, params(3)).size_class, SizeClass::Large);
}

TEST(Budget, SmallExamples) {
    EXPECT_EQ(budget_small(4096, 1096, 3), 1000);
    EXPECT_THROW(budget_small(4096, 4095, 2), BudgetError);
    EXPECT_EQ(budget_small(8192, 2000, 5), 1238);
    EXPECT_THROW(budget_small(100, 200, 1), BudgetError);
}

TEST(Budget, LargeExamples) {
    EXPECT_EQ(budget_large(4096, 2000, 96), 2000);
    EXPECT_THROW(budget_large(4096, 4000, 200), BudgetError);
    EXPECT_EQ(budget_large(16384, 5000, 256), 11128);
}

TEST(Budget, RandomTriples) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 1000; ++i) {
        const std::int64_t max = 64 + static_cast<std::int64_t>(rng() % 100000);
        const std::int64_t p = 1 + static_cast<std::int64_t>(rng() % 8);
        const std::int64_t in = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(max - p));
        const auto bs = budget_small(max, in, p);
        EXPECT_LE(bs * p + in, max);
        EXPECT_LT(max - in - bs * p, p);
        const std::int64_t desc = 1 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(max - in));
        if (max - in - desc > 0) {
            EXPECT_EQ(budget_large(max, in, desc) + in + desc, max);
        } else {
            EXPECT_THROW(budget_large(max, in, desc), BudgetError);
        }
    }
}

TEST(Compose, SmallRequestsOneChoice) {
    const auto& m = registry().get("string-split");
    auto b = compose_generation_prompt(script("s02_config_path.mini"), m, SizeClass::Small, params(3), 5);
    EXPECT_EQ(b.completions_requested, 1);
    const auto text = b.user_text();
    EXPECT_NE(text.find("Return 3 fenced variants in this single reply"), std::string::npos);
    EXPECT_EQ(format::count_fenced_blocks(text), 1u);
    EXPECT_EQ(b.max_output_tokens, b.per_candidate_budget * 3);
    EXPECT_LE(static_cast<std::int64_t>(b.input_tokens.count) + 3 * b.per_candidate_budget, 8192);
    EXPECT_EQ(b.input_tokens.count, token_count(b.system_text) + token_count(text));
}

TEST(Compose, LargeUsesMultiCompletion) {
    const auto& m = registry().get("string-split");
    auto b = compose_generation_prompt(script("s02_config_path.mini"), m, SizeClass::Large, params(3), 5);
    EXPECT_EQ(b.completions_requested, 3);
    EXPECT_EQ(b.per_candidate_budget + static_cast<std::int64_t>(b.input_tokens.count) + 128, 8192);
    EXPECT_NE(b.user_text().find("under 128 tokens"), std::string::npos);
}

TEST(Compose, SectionOrderAndOptionalPreKnowledge) {
    const std::vector<SectionKind> full{SectionKind::Header, SectionKind::PreKnowledge, SectionKind::FeChain,
                                        SectionKind::InputCode, SectionKind::KeyPrompts, SectionKind::Safeguard};
    auto with = compose_generation_prompt("echo 1;\n", registry().get("rename-vars"), SizeClass::Small, params(2), 1);
    std::vector<SectionKind> kinds;
    for (const auto& s : with.sections) kinds.push_back(s.kind);
    EXPECT_EQ(kinds, full);
    EXPECT_NE(with.user_text().find("#HP pre_knowledge=present\n"), std::string::npos);

    auto without = compose_generation_prompt("echo 1;\n", registry().get("symbol-noise"), SizeClass::Small, params(2), 1);
    kinds.clear();
    for (const auto& s : without.sections) kinds.push_back(s.kind);
    auto expected = full;
    expected.erase(expected.begin() + 1);
    EXPECT_EQ(kinds, expected);
    const auto text = without.user_text();
    EXPECT_NE(text.find("#HP pre_knowledge=absent\n"), std::string::npos);
    EXPECT_EQ(text.find(std::string(format::kTitlePreKnowledge)), std::string::npos);
    const std::vector<std::string> titles{"## Examples", "## Input code", "## Key prompts", "## Safeguard"};
    EXPECT_EQ(format::section_order(text), titles);
}

TEST(Compose, HeaderCarriesMachineFields) {
    auto b = compose_generation_prompt("echo 1;\n", registry().get("dead-branch"), SizeClass::Large, params(4), 77);
    auto h = format::parse_header(b.user_text());
    EXPECT_EQ(h.at("module"), "dead-branch");
    EXPECT_EQ(h.at("mode"), "generate");
    EXPECT_EQ(h.at("p"), "4");
    EXPECT_EQ(h.at("seed"), "77");
}

TEST(Compose, InputCodeIsFenced) {
    const std::string code = "$a = 1;\necho $a;";
    auto b = compose_generation_prompt(code, registry().get("rename-vars"), SizeClass::Small, params(1), 1);
    const auto& sec = b.sections.at(3);
    ASSERT_EQ(sec.kind, SectionKind::InputCode);
    EXPECT_EQ(sec.text, "## Input code\n```\n$a = 1;\necho $a;\n```\n\n");
    EXPECT_NE(b.sections.back().text.find("still parse"), std::string::npos);
}

TEST(Compose, BudgetErrorsPropagate) {
    EXPECT_THROW(compose_generation_prompt(std::string(4000, 'x'), registry().get("rename-vars"), SizeClass::Small,
                                           params(3, 1024), 1),
                 BudgetError);
    EXPECT_THROW(compose_generation_prompt(std::string(4000, 'x'), registry().get("rename-vars"), SizeClass::Large,
                                           params(3, 1024), 1),
                 BudgetError);
}

TEST(ParseReply, SmallThreeFences) {
    const std::string text = "DESC: one\n```\necho 1;\n```\nsome chatter\n```php\necho 2;\n```\nDESC: three\n```\necho 3;\n```\n";
    auto c = parse_generation_reply(reply({text}), SizeClass::Small, 3, 2, "m", "L1.0.0", "L2.0");
    ASSERT_EQ(c.size(), 3u);
    EXPECT_EQ(c[0].code, "echo 1;\n");
    EXPECT_EQ(c[1].code, "echo 2;\n");
    EXPECT_EQ(c[0].description, "one");
    EXPECT_FALSE(c[1].description.has_value());
    EXPECT_EQ(c[2].id, "L2.0.2");
    EXPECT_EQ(c[2].layer, 2);
    EXPECT_EQ(c[2].parent, "L1.0.0");
    EXPECT_EQ(c[2].provenance.request_id, "req-1");
}

TEST(ParseReply, SmallWrongFenceCount) {
    const std::string text = "```\necho 1;\n```\n```\necho 2;\n```\n";
    try {
        parse_generation_reply(reply({text}), SizeClass::Small, 3, 1, "m", kInputId, "L1.0");
        FAIL();
    } catch (const WrongFenceCount& e) {
        EXPECT_EQ(e.found(), 2u);
        EXPECT_EQ(e.expected(), 3u);
    }
}

TEST(ParseReply, LargeThreeChoicesWithDescriptions) {
    std::vector<std::string> choices;
    for (int i = 0; i < 3; ++i)
        choices.push_back("DESC: variant " + std::to_string(i) + "\n```\necho " + std::to_string(i) + ";\n```\n");
    auto c = parse_generation_reply(reply(choices), SizeClass::Large, 3, 1, "m", kInputId, "L1.0");
    ASSERT_EQ(c.size(), 3u);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(c[static_cast<std::size_t>(i)].description, "variant " + std::to_string(i));
        EXPECT_EQ(c[static_cast<std::size_t>(i)].provenance.choice_index, i);
        EXPECT_EQ(c[static_cast<std::size_t>(i)].code, "echo " + std::to_string(i) + ";\n");
    }
}

TEST(ParseReply, LargeErrors) {
    EXPECT_THROW(parse_generation_reply(reply({"```\necho 1;\n```\n"}), SizeClass::Large, 1, 1, "m", kInputId, "a"),
                 ReplyFormatError);
    EXPECT_THROW(parse_generation_reply(reply({"DESC: d\n```\n\n```\n"}), SizeClass::Large, 1, 1, "m", kInputId, "a"),
                 ReplyFormatError);
    EXPECT_THROW(parse_generation_reply(reply({"DESC: d\n```\necho 1;\n"}), SizeClass::Large, 1, 1, "m", kInputId, "a"),
                 ReplyFormatError);
    EXPECT_THROW(parse_generation_reply(reply({"DESC: d\n```\necho 1;\n```\n"}), SizeClass::Large, 2, 1, "m",
                                        kInputId, "a"),
                 ReplyFormatError);
}

TEST(RoundTrip, MockYieldsExactlyP) {
    std::mt19937_64 rng(5);
    std::vector<std::string> scripts;
    for (const auto& e : std::filesystem::directory_iterator(kData / "scripts")) scripts.push_back(util::read_file(e.path()));
    std::sort(scripts.begin(), scripts.end());
    Gateway gw(std::make_shared<MockProvider>(), nullptr);
    const auto ids = registry().ids();
    for (int i = 0; i < 80; ++i) {
        const int p = 1 + static_cast<int>(rng() % 5);
        const auto sc = (i % 2) ? SizeClass::Small : SizeClass::Large;
        const auto& m = registry().get(ids[rng() % ids.size()]);
        const auto& code = scripts[rng() % scripts.size()];
        auto bundle = compose_generation_prompt(code, m, sc, params(p), static_cast<std::int64_t>(rng() % 1000));
        auto resp = gw.complete(bundle.request());
        auto cands = parse_generation_reply(resp, sc, p, 1, m.id, kInputId, "L1.0");
        ASSERT_EQ(cands.size(), static_cast<std::size_t>(p)) << m.id;
        for (const auto& c : cands) {
            EXPECT_FALSE(c.code.empty());
            if (sc == SizeClass::Large) {
                EXPECT_TRUE(c.description.has_value());
            }
        }
    }
}
