#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "pmfuse/errors.hpp"
#include "pmfuse/manifest.hpp"
#include "pmfuse/pipeline.hpp"

// Exit codes: 0 success, 1 validation error (bad manifest / flags / paths),
// 2 data error (empty joins, undefined statistics, malformed strict input),
// 3 internal invariant violation.

namespace {

struct Args {
    std::string manifest_path;
    std::string out_dir;
    int threads = 1;
    bool strict = false;
    std::vector<std::string> seed_overrides;
};

int run(const std::string& command, const Args& args) {
    pmfuse::Manifest manifest = pmfuse::Manifest::parse_file(args.manifest_path);
    for (const auto& kv : args.seed_overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw pmfuse::ValidationError("--seed-override expects key=value, got: " +
                                          kv);
        manifest.override_value(kv.substr(0, eq), kv.substr(eq + 1));
    }
    pmfuse::pipeline::RunOptions opt;
    opt.threads = args.threads;
    opt.strict = args.strict;
    opt.out_dir = args.out_dir;

    std::vector<std::string> files;
    if (command == "synth")
        files = pmfuse::pipeline::cmd_synth(manifest, opt);
    else if (command == "calibrate")
        files = pmfuse::pipeline::cmd_calibrate(manifest, opt);
    else if (command == "sweep")
        files = pmfuse::pipeline::cmd_sweep(manifest, opt);
    else if (command == "fuse")
        files = pmfuse::pipeline::cmd_fuse(manifest, opt);
    else if (command == "map")
        files = pmfuse::pipeline::cmd_map(manifest, opt);
    else if (command == "all")
        files = pmfuse::pipeline::cmd_all(manifest, opt);
    else
        throw pmfuse::InternalError("unhandled command " + command);

    std::printf("%s: wrote %zu files under %s\n", command.c_str(), files.size(),
                pmfuse::pipeline::out_dir_of(manifest, opt).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pmfuse: mobile + fixed PM2.5 fusion pipeline"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    Args args;
    app.add_option("--manifest", args.manifest_path, "run manifest path")
        ->required();
    app.add_option("--out", args.out_dir, "output directory (overrides out.dir)");
    app.add_option("--threads", args.threads, "max worker threads")
        ->check(CLI::PositiveNumber);
    app.add_flag("--strict", args.strict, "malformed input rows are fatal");
    app.add_option("--seed-override", args.seed_overrides,
                   "override a seed key, e.g. seed.cv_folds=42");

    for (const char* name : {"synth", "calibrate", "sweep", "fuse", "map", "all"})
        app.add_subcommand(name);

    CLI11_PARSE(app, argc, argv);
    std::string command = app.get_subcommands().front()->get_name();

    try {
        return run(command, args);
    } catch (const pmfuse::ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 1;
    } catch (const pmfuse::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 3;
    }
}
