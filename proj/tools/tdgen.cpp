// tdgen: command-line front end.
//
//   tdgen generate <config> [--templates DIR] [--out DIR] [--seed N] [--jobs N]
//   tdgen inspect <case-dir>
//   tdgen fmt <case.m>... [--check]

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "tdgen/app.hpp"

namespace fs = std::filesystem;

namespace {

fs::path default_templates() {
    if (fs::is_directory("templates")) return "templates";
#ifdef TDGEN_TEMPLATE_DIR
    return TDGEN_TEMPLATE_DIR;
#else
    return "templates";
#endif
}

// Rewrites case files in canonical form. With --check, only reports files
// that would change (exit 1 if any).
int format_cases(const std::vector<std::string>& paths, bool check) {
    int status = 0;
    for (const auto& p : paths) {
        try {
            const auto text = tdgen::fmt::read_file(p);
            const auto canonical = tdgen::emit_case(tdgen::parse_case(text));
            if (canonical == text) continue;
            if (check) {
                std::cout << p << ": not canonical\n";
                status = 1;
            } else {
                tdgen::fmt::write_file(p, canonical);
                std::cout << p << ": rewritten\n";
            }
        } catch (const std::exception& e) {
            std::cerr << p << ": " << e.what() << "\n";
            status = 1;
        }
    }
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Combined transmission and distribution network synthesizer"};
    app.require_subcommand(1);

    tdgen::RunOptions run_opts;
    run_opts.templates_dir = default_templates();
    std::uint64_t seed = 0;
    int jobs = 0;
    auto* gen = app.add_subcommand("generate", "Synthesize a combined network from a config file");
    gen->add_option("config", run_opts.config_path, "key = value configuration file")->required();
    gen->add_option("--templates", run_opts.templates_dir, "Directory holding the template bundles");
    gen->add_option("--out", run_opts.out_dir, "Output root; the bundle goes to <out>/<run_id>");
    auto* seed_opt = gen->add_option("--seed", seed, "Overrides rng_seed");
    auto* jobs_opt = gen->add_option("--jobs", jobs, "Caps worker threads (overrides jobs)")->check(CLI::PositiveNumber);

    std::string case_dir;
    auto* insp = app.add_subcommand("inspect", "Validate and solve a case bundle");
    insp->add_option("case-dir", case_dir, "Directory with case.m (and optional sidecars)")->required();

    std::vector<std::string> fmt_paths;
    bool fmt_check = false;
    auto* fmt = app.add_subcommand("fmt", "Rewrite MATPOWER case files in canonical form");
    fmt->add_option("files", fmt_paths, "case.m files")->required();
    fmt->add_flag("--check", fmt_check, "Report non-canonical files without rewriting");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (*gen) {
        if (*seed_opt) run_opts.seed = seed;
        if (*jobs_opt) run_opts.jobs = jobs;
        return tdgen::run(run_opts, std::cout, std::cerr);
    }
    if (*insp) return tdgen::inspect(case_dir, std::cout, std::cerr);
    if (*fmt) return format_cases(fmt_paths, fmt_check);
    return 2;
}
