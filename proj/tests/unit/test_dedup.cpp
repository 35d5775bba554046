#include <gtest/gtest.h>

#include <cstdio>
#include <random>
#include <set>

#include "rwsearch/dedup.hpp"
#include "support/program_gen.hpp"

using namespace rws;
using namespace rws::dedup;

namespace {

const std::filesystem::path kFixture = std::filesystem::path(RWS_SOURCE_DIR) / "tests" / "fixtures" / "dedup";

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static std::mt19937_64 rng(std::random_device{}());
        path = std::filesystem::temp_directory_path() / ("rws_dedup_" + std::to_string(rng()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

std::vector<Entry> corpus_entries() {
    std::vector<Warning> errors;
    auto e = read_corpus(kFixture / "corpus", errors);
    EXPECT_TRUE(errors.empty());
    return e;
}

nlohmann::json classes() { return nlohmann::json::parse(util::read_file(kFixture / "classes.json")); }

std::string md5sum_tool(const std::filesystem::path& p) {
    const auto cmd = "md5sum '" + p.string() + "'";
    std::FILE* f = popen(cmd.c_str(), "r");
    if (!f) return "";
    char buf[64] = {};
    const auto n = std::fread(buf, 1, 32, f);
    pclose(f);
    return std::string(buf, n);
}

} // namespace

TEST(Hashes, ContentHash) {
    EXPECT_EQ(content_hash(""), "d41d8cd98f00b204e9800998ecf8427e");
    EXPECT_EQ(content_hash("echo 1;"), content_hash("echo 1;"));
    const auto f = kFixture / "corpus" / "c04_a.mini";
    const auto tool = md5sum_tool(f);
    if (tool.size() != 32) GTEST_SKIP() << "md5sum not available";
    EXPECT_EQ(content_hash(util::read_file(f)), tool);
}

TEST(Hashes, AstHash) {
    EXPECT_EQ(ast_hash("$a = 1; echo $a;"), ast_hash("// note\n$a = 1;   /* x */ echo $a; # end\n"));
    EXPECT_NE(ast_hash("$a = 1; echo $a;"), ast_hash("$b = 1; echo $b;"));
    EXPECT_THROW(ast_hash("echo (;"), minilang::SyntaxError);
}

TEST(Hashes, OpcodeHash) {
    EXPECT_EQ(opcode_hash("$a=1; echo $a;"), opcode_hash("$b=1; echo $b;"));
    EXPECT_NE(opcode_hash("$a=1; echo $a;"), opcode_hash("$a=2; echo $a;"));
    EXPECT_EQ(opcode_hash("echo \"x\";"), opcode_hash("echo \"x\";"));
}

TEST(Hashes, AlphaEquivalenceProperty) {
    std::mt19937_64 rng(42);
    const std::vector<std::string> olds{"a", "b", "cnt", "x1", "name"};
    for (int t = 0; t < 200; ++t) {
        rws::testing::ProgramGen gen(rng());
        const auto toks = gen.program(8);
        auto fresh = std::vector<std::string>{"p", "q", "r_2", "zz", "long_name", "k9", "w"};
        std::shuffle(fresh.begin(), fresh.end(), rng);
        std::map<std::string, std::string> mapping;
        for (std::size_t i = 0; i < olds.size(); ++i) mapping[olds[i]] = fresh[i];
        const auto a = rws::testing::join_tokens(toks);
        const auto b = rws::testing::join_with_trivia(rws::testing::rename_tokens(toks, mapping), rng());
        ASSERT_EQ(opcode_hash(a), opcode_hash(b)) << a << "\n---\n" << b;
    }
}

TEST(Dedup, ByteDuplicates) {
    auto r = dedup_entries({{"b.mini", "echo 1;"}, {"a.mini", "echo 1;"}});
    EXPECT_EQ(r.survivors(), std::vector<std::string>{"a.mini"});
    EXPECT_EQ(r.stages[0].removed, std::vector<std::string>{"b.mini"});
    EXPECT_EQ(r.stages[1].removed_count + r.stages[2].removed_count, 0u);
}

TEST(Dedup, UnparseableFilesSurviveWithWarning) {
    auto r = dedup_entries({{"bad.mini", "echo (;"}, {"bad2.mini", "echo (; "}, {"ok.mini", "echo 1;"}});
    EXPECT_EQ(r.survivors().size(), 3u);
    ASSERT_EQ(r.warnings.size(), 2u);
    EXPECT_EQ(r.warnings[0].id, "bad.mini");
}

TEST(Dedup, ConstructedCorpus) {
    TempDir out;
    const auto report_path = out.path / "report.json";
    auto r = rws::dedup::dedup(kFixture / "corpus", out.path / "unique", report_path);
    const auto cls = classes();
    ASSERT_EQ(r.input_count, 30u);
    ASSERT_EQ(r.survivors().size(), cls["classes"].get<std::size_t>());
    EXPECT_EQ(r.input_count, r.survivors().size() + r.removed_total());
    EXPECT_TRUE(r.warnings.empty());

    std::map<std::string, int> stage_of;
    for (int s = 0; s < 3; ++s)
        for (const auto& id : r.stages[static_cast<std::size_t>(s)].removed) stage_of[id] = s + 1;
    std::set<int> survivor_classes;
    for (const auto& [name, info] : cls["files"].items()) {
        EXPECT_EQ(stage_of.count(name) ? stage_of[name] : 0, info["removed_at_stage"].get<int>()) << name;
        if (info["removed_at_stage"] == 0) survivor_classes.insert(info["class"].get<int>());
    }
    EXPECT_EQ(survivor_classes.size(), 11u);

    for (std::size_t s = 1; s < 3; ++s)
        for (const auto& id : r.stages[s].survivors)
            EXPECT_TRUE(std::count(r.stages[s - 1].survivors.begin(), r.stages[s - 1].survivors.end(), id));

    std::set<std::string> written;
    for (const auto& e : std::filesystem::directory_iterator(out.path / "unique")) {
        const auto bytes = util::read_file(e.path());
        EXPECT_EQ(e.path().filename().string(), content_hash(bytes) + ".mini");
        written.insert(e.path().filename().string());
    }
    EXPECT_EQ(written.size(), 11u);
    EXPECT_EQ(r.manifest.size(), 11u);
    const auto rep = nlohmann::json::parse(util::read_file(report_path));
    EXPECT_EQ(rep["survivor_count"], 11);
    EXPECT_EQ(rep["stages"].size(), 3u);
}

TEST(Dedup, Idempotent) {
    TempDir out;
    rws::dedup::dedup(kFixture / "corpus", out.path / "once");
    auto second = rws::dedup::dedup(out.path / "once", out.path / "twice");
    EXPECT_EQ(second.removed_total(), 0u);
    EXPECT_EQ(second.survivors().size(), 11u);
}

TEST(Dedup, OrderInsensitive) {
    auto entries = corpus_entries();
    const auto base = dedup_entries(entries).to_json().dump();
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) {
        std::shuffle(entries.begin(), entries.end(), rng);
        ASSERT_EQ(dedup_entries(entries).to_json().dump(), base);
    }
}

TEST(Dedup, AstClassesMatchPairwiseComparison) {
    std::mt19937_64 rng(8);
    std::vector<std::vector<Entry>> corpora{corpus_entries()};
    for (int c = 0; c < 10; ++c) {
        std::vector<Entry> e;
        std::vector<std::vector<std::string>> pool;
        for (int i = 0; i < 6; ++i) pool.push_back(rws::testing::ProgramGen(rng()).program(4));
        const auto n = 10 + rng() % 41;
        for (std::size_t i = 0; i < n; ++i)
            e.push_back({"f" + std::to_string(i) + ".mini", rws::testing::join_with_trivia(pool[rng() % pool.size()], rng() % 3)});
        corpora.push_back(std::move(e));
    }
    for (const auto& corpus : corpora) {
        const auto r = dedup_entries(corpus);
        std::map<std::string, std::string> canon;
        for (const auto& e : corpus) canon[e.id] = minilang::canonical_json(minilang::parse(e.bytes));
        const auto& in = r.stages[0].survivors;
        std::set<std::set<std::string>> brute;
        std::set<std::string> seen;
        for (const auto& a : in) {
            if (seen.count(a)) continue;
            std::set<std::string> cls;
            for (const auto& b : in)
                if (canon[a] == canon[b]) cls.insert(b);
            seen.insert(cls.begin(), cls.end());
            brute.insert(cls);
        }
        std::set<std::set<std::string>> got;
        for (const auto& [rep, members] : r.stages[1].classes) {
            got.insert({members.begin(), members.end()});
            EXPECT_EQ(rep, *std::min_element(members.begin(), members.end()));
        }
        EXPECT_EQ(got, brute);
    }
}

TEST(Dedup, RejectsOutputInsideCorpus) {
    TempDir d;
    util::write_file(d.path / "a.mini", "echo 1;");
    EXPECT_THROW(rws::dedup::dedup(d.path, d.path / "out"), ValidationError);
    EXPECT_THROW(rws::dedup::dedup(d.path / "missing", d.path / "x"), IoError);
}
