#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rwsearch/error.hpp"
#include "rwsearch/minilang.hpp"
#include "rwsearch/util/files.hpp"

namespace rws::eval {

enum class Verdict { Malicious, Benign, Error };

inline const char* verdict_name(Verdict v) {
    switch (v) {
    case Verdict::Malicious: return "malicious";
    case Verdict::Benign: return "benign";
    case Verdict::Error: return "error";
    }
    return "?";
}

struct DetectorVerdict {
    std::string detector_id;
    Verdict verdict = Verdict::Benign;
    int weight = 1;
    std::string error;
};

/// May be non-deterministic; `round` lets scripted detectors vary per round.
class Detector {
public:
    virtual ~Detector() = default;
    virtual std::string id() const = 0;
    virtual Verdict scan(std::string_view text, int round) = 0;
};

struct WeightedDetector {
    std::shared_ptr<Detector> detector;
    int weight = 1;
};

struct AggregationPolicy {
    int threshold = 13;
    int rounds = 3;
};

inline void validate_policy(const AggregationPolicy& p) {
    if (p.threshold < 1) throw ValidationError("aggregation threshold must be >= 1");
    if (p.rounds < 1 || p.rounds % 2 == 0) throw ValidationError("rounds must be a positive odd number");
}

struct RoundResult {
    std::vector<DetectorVerdict> verdicts;
    int weighted_positives = 0;
    int errors = 0;
    bool malicious = false;
};

struct ScanOutcome {
    std::string sample_id;
    std::vector<RoundResult> rounds;
    bool consensus_malicious = false;
    bool had_errors = false;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json rs = nlohmann::ordered_json::array();
        for (const auto& r : rounds) {
            nlohmann::ordered_json vs = nlohmann::ordered_json::array();
            for (const auto& v : r.verdicts) {
                nlohmann::ordered_json j{{"detector", v.detector_id}, {"verdict", verdict_name(v.verdict)},
                                         {"weight", v.weight}};
                if (!v.error.empty()) j["error"] = v.error;
                vs.push_back(j);
            }
            rs.push_back({{"weighted_positives", r.weighted_positives}, {"errors", r.errors},
                          {"label", r.malicious ? "malicious" : "benign"}, {"verdicts", vs}});
        }
        return {{"sample", sample_id}, {"consensus", consensus_malicious ? "malicious" : "benign"},
                {"had_errors", had_errors}, {"rounds", rs}};
    }
};

inline bool majority(const std::vector<bool>& labels) {
    std::size_t yes = 0;
    for (bool b : labels) yes += b ? 1 : 0;
    return 2 * yes > labels.size();
}

/// Runs every detector `rounds` times. A detector error counts as benign for
/// that round and is flagged.
inline ScanOutcome scan(const std::string& sample_id, std::string_view text,
                        const std::vector<WeightedDetector>& detectors, const AggregationPolicy& policy) {
    validate_policy(policy);
    ScanOutcome out;
    out.sample_id = sample_id;
    std::vector<bool> labels;
    for (int round = 0; round < policy.rounds; ++round) {
        RoundResult rr;
        for (const auto& wd : detectors) {
            if (wd.weight < 1) throw ValidationError("detector weight must be >= 1");
            DetectorVerdict v;
            v.detector_id = wd.detector->id();
            v.weight = wd.weight;
            try {
                v.verdict = wd.detector->scan(text, round);
                if (v.verdict == Verdict::Error) v.error = "detector reported an error";
            } catch (const std::exception& e) {
                v.verdict = Verdict::Error;
                v.error = e.what();
            }
            if (v.verdict == Verdict::Malicious) rr.weighted_positives += v.weight;
            if (v.verdict == Verdict::Error) ++rr.errors;
            rr.verdicts.push_back(std::move(v));
        }
        rr.malicious = rr.weighted_positives >= policy.threshold;
        out.had_errors = out.had_errors || rr.errors > 0;
        labels.push_back(rr.malicious);
        out.rounds.push_back(std::move(rr));
    }
    out.consensus_malicious = majority(labels);
    return out;
}

// ---- survival -----------------------------------------------------------------

struct SurvivalResult {
    bool survived = false;
    std::string reason;
};

inline SurvivalResult survival_check(std::string_view original, std::string_view transformed,
                                     std::uint64_t step_limit = minilang::kDefaultStepLimit) {
    minilang::ExecutionTrace a, b;
    try {
        a = minilang::run_source(original, step_limit);
    } catch (const minilang::SyntaxError& e) {
        return {false, std::string("original-parse-failure: ") + e.what()};
    }
    try {
        b = minilang::run_source(transformed, step_limit);
    } catch (const minilang::SyntaxError& e) {
        return {false, std::string("parse-failure: ") + e.what()};
    }
    if (!minilang::trace_equal(a, b)) return {false, "trace-mismatch"};
    return {true, "equivalent"};
}

// ---- metrics ------------------------------------------------------------------

struct SampleSizes {
    std::uint64_t original_bytes = 0;
    std::uint64_t transformed_bytes = 0;
};

struct DetectorBreakdown {
    std::string detector_id;
    std::size_t detected = 0;
    std::size_t errors = 0;
    double dr = 0, er = 1;
};

struct MetricsReport {
    std::size_t total = 0;
    std::size_t detected = 0;
    std::size_t surviving = 0;
    std::uint64_t original_bytes = 0;
    std::uint64_t transformed_bytes = 0;
    double dr = 0, er = 1, sr = 0, mr = 0;
    std::vector<DetectorBreakdown> per_detector;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json pd = nlohmann::ordered_json::array();
        for (const auto& d : per_detector)
            pd.push_back({{"detector", d.detector_id}, {"detected", d.detected}, {"errors", d.errors}, {"DR", d.dr},
                          {"ER", d.er}});
        return {{"total", total}, {"detected", detected}, {"surviving", surviving},
                {"original_bytes", original_bytes}, {"transformed_bytes", transformed_bytes},
                {"DR", dr}, {"ER", er}, {"SR", sr}, {"MR", mr}, {"per_detector", pd}};
    }
};

/// Per-detector DR uses the detector's own round-majority, ignoring the threshold.
inline MetricsReport compute_metrics(const std::vector<ScanOutcome>& outcomes,
                                     const std::vector<SurvivalResult>& survival,
                                     const std::vector<SampleSizes>& sizes) {
    if (outcomes.empty()) throw ValidationError("empty sample set");
    if (survival.size() != outcomes.size() || sizes.size() != outcomes.size())
        throw ValidationError("scan, survival and size lists differ in length");
    MetricsReport m;
    m.total = outcomes.size();
    std::map<std::string, std::size_t> order;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const auto& o = outcomes[i];
        m.detected += o.consensus_malicious ? 1 : 0;
        m.surviving += survival[i].survived ? 1 : 0;
        m.original_bytes += sizes[i].original_bytes;
        m.transformed_bytes += sizes[i].transformed_bytes;
        std::map<std::string, std::vector<bool>> labels;
        std::map<std::string, std::size_t> errs;
        for (const auto& r : o.rounds)
            for (const auto& v : r.verdicts) {
                labels[v.detector_id].push_back(v.verdict == Verdict::Malicious);
                if (v.verdict == Verdict::Error) ++errs[v.detector_id];
            }
        for (const auto& r : o.rounds)
            for (const auto& v : r.verdicts)
                if (!order.count(v.detector_id)) {
                    order[v.detector_id] = m.per_detector.size();
                    m.per_detector.push_back({v.detector_id});
                }
        for (const auto& [id, ls] : labels) {
            auto& d = m.per_detector[order[id]];
            d.detected += majority(ls) ? 1 : 0;
            d.errors += errs[id];
        }
    }
    const auto n = static_cast<double>(m.total);
    m.dr = static_cast<double>(m.detected) / n;
    m.er = 1.0 - m.dr;
    m.sr = static_cast<double>(m.surviving) / n;
    if (m.original_bytes == 0) throw ValidationError("original samples have zero total size");
    m.mr = static_cast<double>(m.transformed_bytes) / static_cast<double>(m.original_bytes);
    for (auto& d : m.per_detector) {
        d.dr = static_cast<double>(d.detected) / n;
        d.er = 1.0 - d.dr;
    }
    return m;
}

struct ConfusionMatrix {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct ClassifierMetrics {
    double accuracy = 0;
    std::optional<double> precision, recall, f1;
};

inline ClassifierMetrics classifier_metrics(const ConfusionMatrix& cm) {
    const auto total = cm.tp + cm.fp + cm.tn + cm.fn;
    if (total == 0) throw ValidationError("confusion matrix is all zero");
    ClassifierMetrics out;
    out.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(total);
    if (cm.tp + cm.fp > 0) out.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
    if (cm.tp + cm.fn > 0) out.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
    if (out.precision && out.recall && *out.precision + *out.recall > 0)
        out.f1 = 2 * *out.precision * *out.recall / (*out.precision + *out.recall);
    return out;
}

/// Fold index per sample (same order as `labels`). Members of each class are
/// shuffled with `seed` and dealt round-robin, continuing where the previous
/// class stopped so fold totals stay balanced too.
inline std::vector<int> stratified_split(const std::vector<std::string>& labels, int k, std::uint64_t seed) {
    if (k < 2) throw ValidationError("k must be >= 2");
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    for (const auto& [label, members] : by_class)
        if (members.size() < static_cast<std::size_t>(k))
            throw ValidationError("class '" + label + "' has " + std::to_string(members.size()) + " members, fewer than k=" +
                                  std::to_string(k));
    std::mt19937_64 rng(seed);
    std::vector<int> fold(labels.size(), -1);
    std::size_t next = 0;
    for (auto& [label, members] : by_class) {
        std::shuffle(members.begin(), members.end(), rng);
        for (auto idx : members) fold[idx] = static_cast<int>(next++ % static_cast<std::size_t>(k));
    }
    return fold;
}

// ---- signature rules ----------------------------------------------------------

struct SignatureRule {
    std::string name;
    std::string pattern;
    int weight = 1;
    std::regex re;
};

inline std::vector<SignatureRule> rules_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw ValidationError("signature rules must be a JSON array");
    std::vector<SignatureRule> out;
    for (const auto& r : j) {
        SignatureRule s;
        try {
            s.name = r.at("name").get<std::string>();
            s.pattern = r.at("pattern").get<std::string>();
            s.weight = r.value("weight", 1);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("malformed signature rule: ") + e.what());
        }
        if (s.weight < 1) throw ValidationError("rule " + s.name + ": weight must be >= 1");
        try {
            s.re = std::regex(s.pattern, std::regex::ECMAScript);
        } catch (const std::regex_error& e) {
            throw ValidationError("rule " + s.name + ": invalid pattern: " + e.what());
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<SignatureRule> load_signature_rules(const std::filesystem::path& file) {
    try {
        return rules_from_json(nlohmann::json::parse(util::read_file(file)));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(file.string() + ": " + e.what());
    }
}

/// Malicious iff any rule matches the raw sample text.
class SignatureDetector : public Detector {
public:
    explicit SignatureDetector(std::vector<SignatureRule> rules, std::string id = "signature")
        : rules_(std::move(rules)), id_(std::move(id)) {}

    std::string id() const override { return id_; }

    std::vector<std::string> matched_rules(std::string_view text) const {
        std::vector<std::string> out;
        for (const auto& r : rules_)
            if (std::regex_search(text.begin(), text.end(), r.re)) out.push_back(r.name);
        return out;
    }

    Verdict scan(std::string_view text, int) override {
        for (const auto& r : rules_)
            if (std::regex_search(text.begin(), text.end(), r.re)) return Verdict::Malicious;
        return Verdict::Benign;
    }

    const std::vector<SignatureRule>& rules() const { return rules_; }

private:
    std::vector<SignatureRule> rules_;
    std::string id_;
};

/// One engine per rule, weighted by the rule's weight.
inline std::vector<WeightedDetector> signature_panel(const std::vector<SignatureRule>& rules) {
    std::vector<WeightedDetector> out;
    for (const auto& r : rules)
        out.push_back({std::make_shared<SignatureDetector>(std::vector<SignatureRule>{r}, "sig:" + r.name), r.weight});
    return out;
}

// ---- evaluation table ---------------------------------------------------------

struct EngineSpec {
    std::string name;
    std::vector<WeightedDetector> detectors;
    AggregationPolicy policy;
};

struct EvalSample {
    std::string id;
    std::string original;
    std::string transformed;
};

struct EngineResult {
    std::string engine;
    MetricsReport metrics;
    std::vector<ScanOutcome> scans;
};

struct EvalRow {
    std::string label;
    std::size_t samples = 0;
    std::vector<EngineResult> engines;
    std::vector<SurvivalResult> survival;
    double sr = 0, mr = 0;

    nlohmann::ordered_json to_json(bool with_scans = false) const {
        nlohmann::ordered_json es = nlohmann::ordered_json::array();
        for (const auto& e : engines) {
            nlohmann::ordered_json j{{"engine", e.engine}, {"metrics", e.metrics.to_json()}};
            if (with_scans) {
                j["scans"] = nlohmann::ordered_json::array();
                for (const auto& s : e.scans) j["scans"].push_back(s.to_json());
            }
            es.push_back(j);
        }
        return {{"label", label}, {"samples", samples}, {"SR", sr}, {"MR", mr}, {"engines", es}};
    }
};

inline EvalRow evaluate(const std::string& label, const std::vector<EvalSample>& samples,
                        const std::vector<EngineSpec>& engines,
                        std::uint64_t step_limit = minilang::kDefaultStepLimit) {
    if (samples.empty()) throw ValidationError("no samples to evaluate");
    if (engines.empty()) throw ValidationError("no detection engines configured");
    EvalRow row;
    row.label = label;
    row.samples = samples.size();
    std::vector<SampleSizes> sizes;
    for (const auto& s : samples) {
        row.survival.push_back(survival_check(s.original, s.transformed, step_limit));
        sizes.push_back({s.original.size(), s.transformed.size()});
    }
    for (const auto& e : engines) {
        EngineResult er;
        er.engine = e.name;
        for (const auto& s : samples) er.scans.push_back(scan(s.id, s.transformed, e.detectors, e.policy));
        er.metrics = compute_metrics(er.scans, row.survival, sizes);
        row.engines.push_back(std::move(er));
    }
    row.sr = row.engines.front().metrics.sr;
    row.mr = row.engines.front().metrics.mr;
    return row;
}

/// Aligned text table: one ER column per engine, then SR and MR.
inline std::string render_table(const std::vector<EvalRow>& rows) {
    if (rows.empty()) return "";
    std::vector<std::string> header{"Samples"};
    for (const auto& e : rows.front().engines) header.push_back("ER " + e.engine);
    header.push_back("SR");
    header.push_back("MR");
    std::vector<std::vector<std::string>> cells{header};
    auto fmt = [](double v) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(4) << v;
        return os.str();
    };
    for (const auto& r : rows) {
        std::vector<std::string> line{r.label};
        for (const auto& e : r.engines) line.push_back(fmt(e.metrics.er));
        line.push_back(fmt(r.sr));
        line.push_back(fmt(r.mr));
        cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& line : cells)
        for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
    std::string out;
    for (std::size_t l = 0; l < cells.size(); ++l) {
        for (std::size_t c = 0; c < cells[l].size(); ++c) {
            const auto& s = cells[l][c];
            if (c) out += "  ";
            if (c == 0)
                out += s + std::string(width[c] - s.size(), ' ');
            else
                out += std::string(width[c] - s.size(), ' ') + s;
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        out += "\n";
        if (l == 0) {
            std::size_t total = 0;
            for (auto w : width) total += w;
            out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
        }
    }
    return out;
}

} // namespace rws::eval
