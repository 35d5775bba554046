// Obfuscate one bundled script with the offline mock provider and score it.
#include <iostream>

#include "rwsearch/config.hpp"

int main() {
    using namespace rws;
    const std::filesystem::path data(RWS_DATA_DIR);
    const auto cfg = default_config(data);
    const auto reg = forest::load_modules(cfg.modules_dir);
    const auto rules = forest::load_rules(cfg.rules_file);

    SearchParams sp = cfg.search;
    sp.p = 3;
    sp.beam_width = 2;
    const auto x = util::read_file(data / "scripts" / "s07_cmd_echo.mini");

    Gateway gw(std::make_shared<MockProvider>(), std::make_shared<EventLog>());
    const auto out = run_search(x, cfg.schedule, sp, reg, rules, gw);

    std::vector<eval::EvalSample> samples;
    for (const auto& w : out.winners) samples.push_back({w.id, x, w.code});
    const auto row = eval::evaluate("quickstart", samples, make_engines(cfg));
    std::cout << out.tree.size() << " candidates, " << out.winners.size() << " winners\n\n"
              << out.winners.front().code << "\n"
              << eval::render_table({row});
}
