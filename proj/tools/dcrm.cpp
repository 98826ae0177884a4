#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dcrm/dcrm.hpp"

namespace {

unsigned default_threads() {
    if (const char* env = std::getenv("DCRM_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dcrm: two-time ensemble simulator and concentration test bench"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    unsigned threads = default_threads();

    const std::vector<std::string> commands = {"simulate", "concentration", "reduction",
                                               "wep", "lipschitz"};
    for (const auto& name : commands) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "configuration file (TOML or JSON)")
            ->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed, "override the configured seed")
            ->each([&seed_set](const std::string&) { seed_set = true; });
        sub->add_option("--threads", threads, "worker threads (DCRM_THREADS as fallback)");
    }

    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        dcrm::ConfigDocument doc = dcrm::read_config_document(config_path);
        if (seed_set) doc.root["seed"] = seed;
        const dcrm::RunConfig cfg = dcrm::resolve_document(doc);
        return dcrm::run_command(command, cfg, out_dir, threads);
    } catch (const dcrm::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return dcrm::kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return dcrm::kExitRuntimeError;
    }
}
