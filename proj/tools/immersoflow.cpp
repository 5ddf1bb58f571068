#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "immersoflow/cases.hpp"

namespace fs = std::filesystem;
using namespace immersoflow;

namespace {

struct Options {
    std::string config;
    std::vector<std::string> overrides;
    std::string out;
    int threads = 0;
    std::uint64_t seed = 0;
    bool verbose = false;
    int levels = 0;
};

int execute(const std::string& command, const Options& o)
{
    if (o.threads > 0) {
        set_thread_count(o.threads);
    }
    CaseConfig cfg = CaseConfig::load(o.config);
    for (const auto& s : o.overrides) {
        cfg.set(s);
    }
    if (command == "export") {
        cfg.set("output.exportFields=true");
    }
    fs::path out = o.out.empty() ? fs::path(cfg.output_directory()) : fs::path(o.out);
    if (out.empty()) {
        out = fs::path("immersoflow_out") / cfg.name();
    }
    fs::create_directories(out);
    if (o.verbose) {
        std::cerr << "immersoflow " << command << ": case '" << cfg.name() << "', " << thread_count()
                  << " thread(s), output " << out.string() << '\n';
    }

    StudyResult res;
    std::string table = "table.csv";
    if (command == "run" || command == "export") {
        res = run_case(cfg, out);
        table = "";
    } else if (command == "converge") {
        res = run_convergence(cfg, out, o.levels > 0 ? std::optional<int>(o.levels) : std::nullopt);
        table = "convergence.csv";
    } else if (command == "sweep") {
        res = run_sweep(cfg, out);
        table = "sweep.csv";
    } else if (command == "infsup") {
        res = run_infsup(cfg, out);
        table = "infsup.csv";
    } else if (command == "quadcheck") {
        res = run_quadcheck(cfg, out);
        table = "quadrature.csv";
    }
    res.summary["seed"] = o.seed;
    write_study(res, out, table);

    if (!res.table.empty()) {
        std::cout << res.table;
    } else {
        Json brief = res.summary;
        brief.erase("config");
        std::cout << brief.dump(2) << '\n';
    }
    if (o.verbose) {
        std::cerr << "wrote " << (out / "summary.json").string() << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Immersed isogeometric Stokes/Navier-Stokes solver with skeleton and ghost stabilization"};
    app.require_subcommand(1);
    app.fallthrough();

    Options o;
    app.add_option("-c,--config", o.config, "Case configuration file (JSON)")->check(CLI::ExistingFile);
    app.add_option("-s,--set", o.overrides, "Override a config entry: dotted.key=value (repeatable)");
    app.add_option("-o,--out", o.out, "Output directory (default: output.directory of the config)");
    app.add_option("-t,--threads", o.threads, "Worker threads (default: IMMERSOFLOW_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--seed", o.seed, "Seed for randomized self-checks (recorded in the summary)");
    app.add_flag("-v,--verbose", o.verbose, "Progress messages on standard error");

    const std::vector<std::pair<std::string, std::string>> commands{
        {"run", "Solve the case on its configured mesh"},
        {"converge", "Mesh convergence study with observed rates"},
        {"sweep", "Repeat the study for every value of study.sweepParameter"},
        {"infsup", "Discrete inf-sup constants on the study meshes"},
        {"quadcheck", "Cut-cell quadrature area/length check over bisection depths"},
        {"export", "Solve and write legacy-VTK and CSV field samples"},
    };
    std::string selected;
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->callback([&selected, name = name] { selected = name; });
        if (name == "converge") {
            sub->add_option("--levels", o.levels, "Number of meshes (coarsest plus splitting refinements)")
                ->check(CLI::PositiveNumber);
        }
    }

    try {
        app.parse(argc, argv);
        if (o.config.empty()) {
            throw CLI::RequiredError("--config");
        }
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        return execute(selected, o);
    } catch (const NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 2;
    } catch (const InvalidInput& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
