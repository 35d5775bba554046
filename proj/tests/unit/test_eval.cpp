#include <gtest/gtest.h>

#include <random>
#include <set>

#include "rwsearch/eval.hpp"
#include "rwsearch/transforms.hpp"

using namespace rws;
using namespace rws::eval;

namespace {

const std::filesystem::path kSource(RWS_SOURCE_DIR);

// Returns a fixed verdict per round.
struct Scripted : Detector {
    std::string name;
    std::vector<Verdict> per_round;
    Scripted(std::string n, std::vector<Verdict> v) : name(std::move(n)), per_round(std::move(v)) {}
    std::string id() const override { return name; }
    Verdict scan(std::string_view, int round) override {
        return per_round[static_cast<std::size_t>(round) % per_round.size()];
    }
};

struct Throwing : Detector {
    std::string id() const override { return "broken"; }
    Verdict scan(std::string_view, int) override { throw std::runtime_error("engine timeout"); }
};

std::vector<WeightedDetector> panel(int total, int positives, std::vector<Verdict> pos_rounds = {Verdict::Malicious}) {
    std::vector<WeightedDetector> out;
    for (int i = 0; i < total; ++i)
        out.push_back({std::make_shared<Scripted>("e" + std::to_string(i),
                                                  i < positives ? pos_rounds : std::vector<Verdict>{Verdict::Benign}),
                       1});
    return out;
}

ScanOutcome outcome(bool malicious) {
    ScanOutcome o;
    o.consensus_malicious = malicious;
    return o;
}

} // namespace

TEST(Scan, ThresholdBoundary) {
    const AggregationPolicy pol{13, 1};
    EXPECT_TRUE(scan("s", "", panel(58, 13), pol).consensus_malicious);
    EXPECT_FALSE(scan("s", "", panel(58, 12), pol).consensus_malicious);
    EXPECT_EQ(scan("s", "", panel(58, 13), pol).rounds[0].weighted_positives, 13);
}

TEST(Scan, WeightsCountAsRedundantVotes) {
    auto p = panel(58, 12);
    p[0].weight = 2;
    EXPECT_TRUE(scan("s", "", p, {13, 1}).consensus_malicious);
    p[0].weight = 0;
    EXPECT_THROW(scan("s", "", p, {13, 1}), ValidationError);
}

TEST(Scan, RoundConsensus) {
    // Engines 0..12 flag rounds 0 and 2 only.
    auto p = panel(58, 13, {Verdict::Malicious, Verdict::Benign, Verdict::Malicious});
    const auto o = scan("s", "", p, {13, 3});
    ASSERT_EQ(o.rounds.size(), 3u);
    EXPECT_TRUE(o.rounds[0].malicious);
    EXPECT_FALSE(o.rounds[1].malicious);
    EXPECT_TRUE(o.consensus_malicious);
    EXPECT_THROW(scan("s", "", p, {13, 2}), ValidationError);
    EXPECT_THROW(scan("s", "", p, {0, 3}), ValidationError);
}

TEST(Scan, ErrorsCountBenignAndAreFlagged) {
    auto p = panel(13, 13);
    p[0] = {std::make_shared<Throwing>(), 1};
    const auto o = scan("s", "", p, {13, 1});
    EXPECT_FALSE(o.consensus_malicious);
    EXPECT_TRUE(o.had_errors);
    EXPECT_EQ(o.rounds[0].errors, 1);
    EXPECT_EQ(o.rounds[0].verdicts[0].error, "engine timeout");
}

TEST(Scan, PermutationInvariant) {
    std::mt19937_64 rng(4);
    const std::vector<Verdict> choices{Verdict::Malicious, Verdict::Benign, Verdict::Error};
    for (int t = 0; t < 200; ++t) {
        const int rounds = 1 + 2 * static_cast<int>(rng() % 3);
        std::vector<WeightedDetector> p;
        const auto n = 1 + rng() % 20;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<Verdict> v;
            for (int r = 0; r < rounds; ++r) v.push_back(choices[rng() % 3]);
            p.push_back({std::make_shared<Scripted>("d" + std::to_string(i), v), 1 + static_cast<int>(rng() % 3)});
        }
        const AggregationPolicy pol{1 + static_cast<int>(rng() % 10), rounds};
        const auto base = scan("s", "", p, pol).consensus_malicious;
        std::shuffle(p.begin(), p.end(), rng);
        ASSERT_EQ(scan("s", "", p, pol).consensus_malicious, base);
        // Reversing every detector's round schedule permutes the round labels.
        for (auto& wd : p) {
            auto* s = static_cast<Scripted*>(wd.detector.get());
            std::reverse(s->per_round.begin(), s->per_round.end());
        }
        ASSERT_EQ(scan("s", "", p, pol).consensus_malicious, base);
    }
}

TEST(Survival, Examples) {
    const auto src = util::read_file(kSource / "data" / "scripts" / "s04_leet_score.mini");
    EXPECT_TRUE(survival_check(src, src).survived);
    const auto commented = transforms::apply_transform("comment-insert", src, 3, 2).code;
    ASSERT_NE(commented, src);
    EXPECT_TRUE(survival_check(src, commented).survived);
    const auto broken = survival_check(src, src + "echo (;");
    EXPECT_FALSE(broken.survived);
    EXPECT_EQ(broken.reason.rfind("parse-failure", 0), 0u);
    EXPECT_EQ(survival_check("echo 1;", "echo 2;").reason, "trace-mismatch");
}

TEST(Metrics, Examples) {
    std::vector<ScanOutcome> o;
    for (int i = 0; i < 1000; ++i) o.push_back(outcome(i < 114));
    std::vector<SurvivalResult> s(1000, {true, ""});
    std::vector<SampleSizes> z(1000, {1, 1});
    z[0] = {1, 431};
    auto m = compute_metrics(o, s, z);
    EXPECT_DOUBLE_EQ(m.dr, 0.114);
    EXPECT_DOUBLE_EQ(m.er, 0.886);
    EXPECT_EQ(m.er + m.dr, 1.0);
    EXPECT_DOUBLE_EQ(m.mr, 1.43);
    EXPECT_DOUBLE_EQ(m.sr, 1.0);
    EXPECT_THROW(compute_metrics({}, {}, {}), ValidationError);
}

TEST(Metrics, MatchesRecount) {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 1000; ++t) {
        const auto n = 1 + rng() % 60;
        std::vector<ScanOutcome> o;
        std::vector<SurvivalResult> s;
        std::vector<SampleSizes> z;
        std::size_t det = 0, surv = 0;
        std::uint64_t a = 0, b = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool d = rng() % 2, v = rng() % 3 != 0;
            const std::uint64_t x = 1 + rng() % 500, y = rng() % 2000;
            o.push_back(outcome(d));
            s.push_back({v, ""});
            z.push_back({x, y});
            det += d;
            surv += v;
            a += x;
            b += y;
        }
        const auto m = compute_metrics(o, s, z);
        ASSERT_EQ(m.er + m.dr, 1.0);
        ASSERT_EQ(m.er, 1.0 - m.dr);
        ASSERT_NEAR(m.dr, double(det) / double(n), 1e-9);
        ASSERT_NEAR(m.sr, double(surv) / double(n), 1e-9);
        ASSERT_NEAR(m.mr, double(b) / double(a), 1e-9);
    }
}

TEST(Metrics, TableLayout) {
    const auto rules = rules_from_json(nlohmann::json::parse(R"([{"name":"r","pattern":"secret"}])"));
    std::vector<EngineSpec> engines{{"alpha", {{std::make_shared<SignatureDetector>(rules), 1}}, {1, 1}},
                                    {"beta", signature_panel(rules), {1, 3}}};
    std::vector<EvalSample> samples{{"a", "echo \"secret\";", "echo \"sec\" . \"ret\";"},
                                    {"b", "echo 1;", "echo 1; // secret"}};
    const auto row = evaluate("mock p=3", samples, engines);
    const auto table = render_table({row});
    const auto header = table.substr(0, table.find('\n'));
    EXPECT_LT(header.find("ER alpha"), header.find("ER beta"));
    EXPECT_LT(header.find("ER beta"), header.find("SR"));
    EXPECT_LT(header.find("SR"), header.find("MR"));
    EXPECT_NE(table.find("mock p=3"), std::string::npos);
    EXPECT_DOUBLE_EQ(row.engines[0].metrics.er, 0.5);
    EXPECT_DOUBLE_EQ(row.sr, 1.0);
    EXPECT_THROW(evaluate("x", {}, engines), ValidationError);
}

TEST(Classifier, Examples) {
    auto d = classifier_metrics({0, 0, 10, 0});
    EXPECT_DOUBLE_EQ(d.accuracy, 1.0);
    EXPECT_FALSE(d.precision);
    EXPECT_FALSE(d.recall);
    EXPECT_FALSE(d.f1);
    auto m = classifier_metrics({80, 20, 890, 10});
    EXPECT_NEAR(m.accuracy, 0.97, 1e-4);
    EXPECT_NEAR(*m.precision, 0.8, 1e-4);
    EXPECT_NEAR(*m.recall, 0.8889, 1e-4);
    EXPECT_NEAR(*m.f1, 0.8421, 1e-4);
    auto p = classifier_metrics({50, 0, 0, 0});
    EXPECT_EQ(p.accuracy, 1.0);
    EXPECT_EQ(*p.precision, 1.0);
    EXPECT_EQ(*p.recall, 1.0);
    EXPECT_EQ(*p.f1, 1.0);
    EXPECT_THROW(classifier_metrics({}), ValidationError);
}

TEST(Classifier, MatchesRecountFromPairs) {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 1000; ++t) {
        std::vector<std::pair<bool, bool>> pairs(1 + rng() % 80); // (truth, predicted)
        for (auto& [y, yhat] : pairs) y = rng() % 2, yhat = rng() % 2;
        ConfusionMatrix cm;
        for (auto [y, yhat] : pairs) (y ? (yhat ? cm.tp : cm.fn) : (yhat ? cm.fp : cm.tn)) += 1;
        const auto m = classifier_metrics(cm);
        double correct = 0, pred_pos = 0, true_pos = 0, real_pos = 0;
        for (auto [y, yhat] : pairs) {
            correct += y == yhat;
            pred_pos += yhat;
            real_pos += y;
            true_pos += y && yhat;
        }
        ASSERT_NEAR(m.accuracy, correct / double(pairs.size()), 1e-9);
        ASSERT_EQ(m.precision.has_value(), pred_pos > 0);
        ASSERT_EQ(m.recall.has_value(), real_pos > 0);
        if (m.precision) {
            ASSERT_NEAR(*m.precision, true_pos / pred_pos, 1e-9);
        }
        if (m.recall) {
            ASSERT_NEAR(*m.recall, true_pos / real_pos, 1e-9);
        }
        if (m.f1) {
            ASSERT_NEAR(*m.f1, 2 * true_pos / (pred_pos + real_pos), 1e-9);
        } else {
            ASSERT_EQ(true_pos, 0);
        }
    }
}

TEST(Split, Examples) {
    std::vector<std::string> labels(10, "pos");
    labels.resize(20, "neg");
    const auto f = stratified_split(labels, 5, 1);
    for (int k = 0; k < 5; ++k) {
        int pos = 0, neg = 0;
        for (std::size_t i = 0; i < 20; ++i)
            if (f[i] == k) (labels[i] == "pos" ? pos : neg)++;
        EXPECT_EQ(pos, 2);
        EXPECT_EQ(neg, 2);
    }
    const auto seven = stratified_split(std::vector<std::string>(7, "pos"), 3, 2);
    std::multiset<int> counts;
    for (int k = 0; k < 3; ++k) counts.insert(static_cast<int>(std::count(seven.begin(), seven.end(), k)));
    EXPECT_EQ(counts, (std::multiset<int>{2, 2, 3}));
    EXPECT_THROW(stratified_split({"a", "a", "b"}, 2, 0), ValidationError);
    EXPECT_THROW(stratified_split({"a", "a"}, 1, 0), ValidationError);
    EXPECT_EQ(stratified_split(labels, 5, 7), stratified_split(labels, 5, 7));
}

TEST(Split, StratificationProperty) {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 300; ++t) {
        const int k = 2 + static_cast<int>(rng() % 5);
        std::vector<std::string> labels;
        const int classes = 1 + static_cast<int>(rng() % 4);
        for (int c = 0; c < classes; ++c)
            labels.insert(labels.end(), k + rng() % 15, "c" + std::to_string(c));
        std::shuffle(labels.begin(), labels.end(), rng);
        const auto f = stratified_split(labels, k, rng());
        ASSERT_EQ(f.size(), labels.size());
        for (int c = 0; c < classes; ++c) {
            std::vector<int> per(static_cast<std::size_t>(k), 0);
            for (std::size_t i = 0; i < labels.size(); ++i) {
                ASSERT_GE(f[i], 0);
                ASSERT_LT(f[i], k);
                if (labels[i] == "c" + std::to_string(c)) ++per[static_cast<std::size_t>(f[i])];
            }
            ASSERT_LE(*std::max_element(per.begin(), per.end()) - *std::min_element(per.begin(), per.end()), 1);
        }
    }
}

TEST(Signature, Examples) {
    SignatureDetector rev(rules_from_json(nlohmann::json::parse(R"([{"name":"rev-call","pattern":"rev\\("}])")));
    EXPECT_EQ(rev.scan("echo rev(\"x\");", 0), Verdict::Malicious);
    EXPECT_EQ(rev.scan("echo \"x\";", 0), Verdict::Benign);
    SignatureDetector none(rules_from_json(nlohmann::json::array()));
    EXPECT_EQ(none.scan("anything passwd", 0), Verdict::Benign);
    try {
        rules_from_json(nlohmann::json::parse(R"([{"name":"bad-one","pattern":"(unclosed"}])"));
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("bad-one"), std::string::npos);
    }
}

TEST(Signature, BundledRulesMatchGolden) {
    SignatureDetector det(load_signature_rules(kSource / "data" / "signatures.json"));
    EXPECT_EQ(det.rules().size(), 10u);
    const auto golden =
        nlohmann::json::parse(util::read_file(kSource / "tests" / "fixtures" / "eval" / "signature_golden.json"));
    ASSERT_EQ(golden.size(), 20u);
    for (const auto& [name, exp] : golden.items()) {
        const auto text = util::read_file(kSource / "data" / "scripts" / name);
        EXPECT_EQ(det.scan(text, 0) == Verdict::Malicious, exp["malicious"].get<bool>()) << name;
        EXPECT_EQ(det.matched_rules(text), exp["rules"].get<std::vector<std::string>>()) << name;
    }
}
