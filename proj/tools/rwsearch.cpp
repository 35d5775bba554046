#include <CLI11.hpp>

#include <iostream>

#include "rwsearch/config.hpp"
#include "rwsearch/dedup.hpp"

namespace fs = std::filesystem;
using namespace rws;

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

struct CommonFlags {
    std::string data_dir = RWS_DEFAULT_DATA_DIR;
    std::string config;
    std::optional<std::uint64_t> seed;
};

RunConfig resolve_config(const CommonFlags& f) {
    auto c = default_config(f.data_dir);
    if (!f.config.empty()) c = load_config(f.config, std::move(c));
    if (f.seed) c.search.seed = *f.seed;
    return c;
}

// ---- dedup ------------------------------------------------------------------

struct DedupFlags {
    std::string in, out, report;
};

int cmd_dedup(const DedupFlags& f) {
    auto r = dedup::dedup(f.in, f.out, f.report.empty() ? std::nullopt : std::optional<fs::path>(f.report));
    std::cout << "input files: " << r.input_count << "\n";
    for (const auto& s : r.stages)
        std::cout << "stage " << static_cast<int>(s.stage) << " (" << dedup::stage_name(s.stage) << "): removed "
                  << s.removed_count << ", kept " << s.survivors.size() << "\n";
    for (const auto& w : r.warnings) std::cerr << "warning: " << w.id << ": " << w.message << "\n";
    for (const auto& e : r.errors) std::cerr << "error: " << e.id << ": " << e.message << "\n";
    std::cout << "survivors written to " << f.out << "\n";
    return 0;
}

// ---- plan -------------------------------------------------------------------

struct PlanFlags {
    std::string modules, rules, select, check;
};

int cmd_plan(const CommonFlags& common, const PlanFlags& f) {
    auto c = resolve_config(common);
    const auto reg = forest::load_modules(f.modules.empty() ? c.modules_dir : fs::path(f.modules));
    const auto rules = forest::load_rules(f.rules.empty() ? c.rules_file : fs::path(f.rules));
    forest::validate_rules(rules, reg);
    std::vector<std::string> schedule;
    if (!f.check.empty()) {
        schedule = split_csv(f.check);
        const auto report = forest::validate_schedule(schedule, rules, reg);
        if (!report.ok()) {
            for (const auto& v : report.violations)
                std::cerr << "violation: " << forest::violation_kind_name(v.kind) << " " << v.first << " (#"
                          << v.first_pos + 1 << ") / " << v.second << " (#" << v.second_pos + 1 << ")\n";
            throw ValidationError("schedule is invalid");
        }
    } else {
        const auto sel = split_csv(f.select);
        schedule = forest::plan_schedule({sel.begin(), sel.end()}, rules, reg);
    }
    for (const auto& id : schedule) std::cout << id << "\n";
    return 0;
}

// ---- run --------------------------------------------------------------------

struct RunFlags {
    std::string input, campaign, provider, schedule, ext;
    std::optional<int> p, beam, ballots, depth, stop_after;
    std::optional<std::int64_t> max_token;
    bool resume = false;
};

bool is_campaign(const fs::path& d) { return fs::exists(d / campaign_files::kCampaign); }

void print_outcome(const std::string& where, const SearchOutcome& o) {
    std::cout << where << ": campaign " << o.campaign_id << " " << campaign_status_name(o.status) << " after "
              << o.layers_completed << " layer(s)";
    for (const auto& w : o.winners) std::cout << "\n  winner " << w.id << " " << util::md5_hex(w.code);
    std::cout << "\n";
    for (const auto& n : o.notices) std::cout << "  note: " << n << "\n";
}

int cmd_run(const CommonFlags& common, const RunFlags& f) {
    auto c = resolve_config(common);
    if (!f.provider.empty()) c.provider.kind = f.provider;
    if (!f.schedule.empty()) c.schedule = split_csv(f.schedule);
    if (f.depth) {
        if (*f.depth < 1 || static_cast<std::size_t>(*f.depth) > c.schedule.size())
            throw ValidationError("--depth must lie in [1," + std::to_string(c.schedule.size()) + "]");
        c.schedule.resize(static_cast<std::size_t>(*f.depth));
        c.search.depth = 0;
    }
    if (f.p) c.search.p = *f.p;
    if (f.beam) c.search.beam_width = *f.beam;
    if (f.ballots) c.search.ballots = *f.ballots;
    if (f.max_token) c.search.max_token = *f.max_token;
    validate_config(c);

    fs::path root = f.campaign.empty() ? (c.campaign_dir ? *c.campaign_dir : fs::path()) : fs::path(f.campaign);
    if (root.empty()) throw ValidationError("no campaign directory (use --campaign or paths.campaign_dir)");
    const auto reg = forest::load_modules(c.modules_dir);
    const auto rules = forest::load_rules(c.rules_file);
    RunOptions opts;
    opts.gateway = gateway_options(c);
    opts.stop_after_layer = f.stop_after;

    if (f.resume) {
        std::vector<fs::path> dirs;
        if (is_campaign(root)) {
            dirs.push_back(root);
        } else if (fs::is_directory(root)) {
            for (const auto& e : fs::directory_iterator(root))
                if (e.is_directory() && is_campaign(e.path())) dirs.push_back(e.path());
            std::sort(dirs.begin(), dirs.end());
        }
        if (dirs.empty()) throw ValidationError("no campaign found under " + root.string());
        for (const auto& d : dirs) print_outcome(d.string(), resume_campaign(d, reg, make_provider(c.provider), opts));
        return 0;
    }

    std::string in = f.input;
    if (in.empty() && c.corpus) in = c.corpus->string();
    if (in.empty()) throw ValidationError("--input is required unless --resume is given");
    if (fs::is_directory(in)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(in))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw ValidationError("input directory is empty: " + in);
        for (const auto& file : files) {
            const auto dir = root / file.stem();
            const auto ext = f.ext.empty() ? file.extension().string() : f.ext;
            print_outcome(dir.string(), start_campaign(dir, {util::read_file(file), ext}, c.schedule, c.search, reg,
                                                       rules, make_provider(c.provider), opts));
        }
        return 0;
    }
    const auto ext = f.ext.empty() ? fs::path(in).extension().string() : f.ext;
    print_outcome(root.string(), start_campaign(root, {util::read_file(in), ext}, c.schedule, c.search, reg, rules,
                                                make_provider(c.provider), opts));
    return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalFlags {
    std::string campaign, out, label;
    bool scans = false;
};

std::vector<eval::EvalSample> collect_samples(const fs::path& root) {
    std::vector<fs::path> dirs;
    if (is_campaign(root)) {
        dirs.push_back(root);
    } else if (fs::is_directory(root)) {
        for (const auto& e : fs::directory_iterator(root))
            if (e.is_directory() && is_campaign(e.path())) dirs.push_back(e.path());
        std::sort(dirs.begin(), dirs.end());
    } else {
        throw ValidationError("not a directory: " + root.string());
    }
    std::vector<eval::EvalSample> out;
    for (const auto& d : dirs) {
        const auto loaded = CampaignStore(d).load();
        const auto wdir = d / campaign_files::kWinners;
        if (!fs::is_directory(wdir)) continue;
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(wdir))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& w : files)
            out.push_back({d.filename().string() + "/" + w.filename().string(), loaded.state.x, util::read_file(w)});
    }
    if (out.empty()) throw ValidationError("no winners found under " + root.string());
    return out;
}

int cmd_eval(const CommonFlags& common, const EvalFlags& f) {
    auto c = resolve_config(common);
    validate_config(c);
    const auto samples = collect_samples(f.campaign);
    const auto row = eval::evaluate(f.label.empty() ? fs::path(f.campaign).filename().string() : f.label, samples,
                                    make_engines(c));
    std::cout << eval::render_table({row});
    if (!f.out.empty()) util::write_file_atomic(f.out, row.to_json(f.scans).dump(2) + "\n");
    return 0;
}

// ---- report -----------------------------------------------------------------

struct ReportFlags {
    std::vector<std::string> inputs;
    std::string format = "text";
};

eval::EvalRow row_from_json(const nlohmann::json& j) {
    eval::EvalRow r;
    r.label = j.at("label");
    r.samples = j.at("samples");
    r.sr = j.at("SR");
    r.mr = j.at("MR");
    for (const auto& e : j.at("engines")) {
        eval::EngineResult er;
        er.engine = e.at("engine");
        const auto& m = e.at("metrics");
        er.metrics.total = m.at("total");
        er.metrics.detected = m.at("detected");
        er.metrics.dr = m.at("DR");
        er.metrics.er = m.at("ER");
        er.metrics.sr = m.at("SR");
        er.metrics.mr = m.at("MR");
        r.engines.push_back(std::move(er));
    }
    return r;
}

int cmd_report(const ReportFlags& f) {
    std::vector<eval::EvalRow> rows;
    nlohmann::ordered_json all = nlohmann::ordered_json::array();
    for (const auto& in : f.inputs) {
        try {
            const auto j = nlohmann::json::parse(util::read_file(in));
            rows.push_back(row_from_json(j));
            all.push_back(nlohmann::ordered_json::parse(j.dump()));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(in + ": not an eval report: " + e.what());
        }
    }
    for (std::size_t i = 1; i < rows.size(); ++i) {
        bool same = rows[i].engines.size() == rows[0].engines.size();
        for (std::size_t k = 0; same && k < rows[i].engines.size(); ++k)
            same = rows[i].engines[k].engine == rows[0].engines[k].engine;
        if (!same) throw ValidationError(f.inputs[i] + ": engine columns differ from " + f.inputs[0]);
    }
    if (f.format == "json")
        std::cout << all.dump(2) << "\n";
    else
        std::cout << eval::render_table(rows);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Module-guided rewrite search over minilang scripts", "rwsearch"};
    app.set_help_all_flag("--help-all", "Print help for every subcommand");
    app.require_subcommand(1);

    CommonFlags common;
    app.add_option("--data", common.data_dir, "Data directory with modules/, rules.json, signatures.json (default: bundled data)");
    app.add_option("--config", common.config, "RunConfig JSON file")->check(CLI::ExistingFile);
    app.add_option("--seed", common.seed, "Override the search seed");

    DedupFlags df;
    auto* dedup_cmd = app.add_subcommand("dedup", "Triple-filter a corpus directory (MD5, AST, opcode)");
    dedup_cmd->add_option("in-dir", df.in, "Corpus directory")->required()->check(CLI::ExistingDirectory);
    dedup_cmd->add_option("out-dir", df.out, "Output directory for <md5><ext> survivors")->required();
    dedup_cmd->add_option("--report", df.report, "Write the JSON report here");

    PlanFlags pf;
    auto* plan_cmd = app.add_subcommand("plan", "Order selected modules by the precedence rules");
    plan_cmd->add_option("--modules", pf.modules, "Module directory (default: <data>/modules)");
    plan_cmd->add_option("--rules", pf.rules, "Precedence rules file (default: <data>/rules.json)");
    auto* sel = plan_cmd->add_option("--select", pf.select, "Comma-separated module ids to schedule");
    auto* chk = plan_cmd->add_option("--check", pf.check, "Validate this comma-separated schedule as given");
    sel->excludes(chk);

    RunFlags rf;
    auto* run_cmd = app.add_subcommand("run", "Run (or resume) search campaigns");
    run_cmd->add_option("--input", rf.input, "Script file, or a directory with one campaign per file");
    run_cmd->add_option("--campaign", rf.campaign, "Campaign directory (per-file subdirectories for directory input)");
    run_cmd->add_option("--provider", rf.provider, "Provider kind")->check(CLI::IsMember({"mock", "http"}));
    run_cmd->add_option("--schedule", rf.schedule, "Comma-separated module schedule");
    run_cmd->add_option("--depth", rf.depth, "Use only the first N scheduled modules");
    run_cmd->add_option("-p,--branches", rf.p, "Candidates per parent (p)");
    run_cmd->add_option("-b,--beam", rf.beam, "Winners kept per layer (b)");
    run_cmd->add_option("--ballots", rf.ballots, "Vote requests per layer (1-5)");
    run_cmd->add_option("--max-token", rf.max_token, "Model context size in tokens");
    run_cmd->add_option("--ext", rf.ext, "Extension for winner files (default: the input's)");
    run_cmd->add_option("--stop-after", rf.stop_after, "Checkpoint and stop after this layer");
    run_cmd->add_flag("--resume", rf.resume, "Continue existing campaign(s) under --campaign");

    EvalFlags ef;
    auto* eval_cmd = app.add_subcommand("eval", "Score campaign winners: ER per engine, SR, MR");
    eval_cmd->add_option("--campaign", ef.campaign, "Campaign directory or a parent of several")->required();
    eval_cmd->add_option("--label", ef.label, "Row label (default: directory name)");
    eval_cmd->add_option("--out", ef.out, "Write the JSON report here");
    eval_cmd->add_flag("--scans", ef.scans, "Include raw per-round verdicts in the JSON report");

    ReportFlags repf;
    auto* report_cmd = app.add_subcommand("report", "Combine eval reports into one table");
    report_cmd->add_option("eval-json", repf.inputs, "Eval reports written by `eval --out`")->required()->check(CLI::ExistingFile);
    report_cmd->add_option("--format", repf.format, "text or json")->check(CLI::IsMember({"text", "json"}))->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (*plan_cmd && pf.select.empty() && pf.check.empty()) {
        std::cerr << "plan needs --select or --check\nRun with --help or --help-all for more information.\n";
        return kExitUsage;
    }

    try {
        if (*dedup_cmd) return cmd_dedup(df);
        if (*plan_cmd) return cmd_plan(common, pf);
        if (*run_cmd) return cmd_run(common, rf);
        if (*eval_cmd) return cmd_eval(common, ef);
        if (*report_cmd) return cmd_report(repf);
    } catch (const CampaignInterrupted& e) {
        std::cerr << "interrupted: " << e.what() << "\n";
        return kExitDomain;
    } catch (const LayerFailure& e) {
        std::cerr << "error: " << e.what() << "\n" << e.diagnostics().dump(2) << "\n";
        return kExitDomain;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    }
    return kExitDomain;
}
