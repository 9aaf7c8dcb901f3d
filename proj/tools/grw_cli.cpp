// grw: a continual zero-shot learning engine with generative random walks.
//
// Subcommands:
//   run    --config PATH [--seeds LIST] [--out DIR]   train over a task stream
//   synth  --spec PATH --out DIR                      write a synthetic dataset
//   plot   RUN_DIR                                    render report charts
//   verify                                            run the property suites
//
// Exit codes: 0 ok, 1 config error, 2 numeric failure, 3 verification failure.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "grw/config.hpp"
#include "grw/data.hpp"
#include "grw/svg.hpp"
#include "grw/trainer.hpp"
#include "grw/verify.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

std::vector<std::uint64_t> parse_seed_list(const std::string& raw) {
    std::vector<std::uint64_t> seeds;
    std::istringstream is(raw);
    std::string field;
    while (std::getline(is, field, ',')) {
        if (field.empty()) continue;
        char* end = nullptr;
        unsigned long long v = std::strtoull(field.c_str(), &end, 10);
        if (end == field.c_str() || *end != '\0')
            throw grw::ConfigError("--seeds: bad seed '" + field + "'");
        seeds.push_back(v);
    }
    if (seeds.empty()) throw grw::ConfigError("--seeds: empty list");
    return seeds;
}

std::size_t thread_budget(std::size_t jobs) {
    std::size_t cap = std::thread::hardware_concurrency();
    if (cap == 0) cap = 1;
    if (const char* env = std::getenv("GRW_THREADS")) {
        char* end = nullptr;
        unsigned long v = std::strtoul(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) cap = v;
    }
    return std::min(cap, jobs);
}

void write_manifest(const grw::RunConfig& config, const std::string& dir,
                    std::uint64_t seed, double wall_seconds) {
    nlohmann::ordered_json j;
    j["version"] = kVersion;
    j["seed"] = seed;
    j["wall_seconds"] = wall_seconds;
    nlohmann::ordered_json resolved;
    std::istringstream is(grw::resolved_config_text(config));
    std::string line;
    while (std::getline(is, line)) {
        std::size_t eq = line.find(" = ");
        if (eq != std::string::npos)
            resolved[line.substr(0, eq)] = line.substr(eq + 3);
    }
    j["config"] = resolved;
    std::ofstream os(dir + "/manifest.json");
    if (!os) throw grw::StateError("cannot open " + dir + "/manifest.json");
    os << j.dump(2) << '\n';
}

struct LoadedData {
    grw::Dataset dataset;
    grw::TaskSchedule schedule;
};

LoadedData load_run_data(const grw::RunConfig& config) {
    LoadedData out;
    if (config.use_synthetic) {
        grw::Rng data_rng(config.synthetic_seed);
        auto synth = grw::generate_synthetic(config.synthetic, data_rng);
        out.dataset = std::move(synth.data);
        out.schedule =
            grw::build_static_schedule(config.synthetic.n_classes, config.synthetic_tasks);
    } else {
        out.dataset = grw::load_dataset_csv(config.features_csv, config.attributes_csv);
        out.schedule = grw::load_schedule_json(config.schedule_json);
        std::size_t covered = 0;
        for (const auto& task : out.schedule.task_classes) covered += task.size();
        if (covered != out.dataset.n_classes())
            throw grw::ConfigError("schedule covers " + std::to_string(covered) +
                                   " classes, dataset has " +
                                   std::to_string(out.dataset.n_classes()));
    }
    return out;
}

void run_one_seed(const grw::RunConfig& base, const LoadedData& data, std::uint64_t seed,
                  const std::string& dir) {
    grw::RunConfig config = base;
    config.trainer.seed = seed;
    std::filesystem::create_directories(dir);

    auto t0 = std::chrono::steady_clock::now();
    grw::TrainerState state =
        grw::make_trainer(config.trainer, data.dataset.attr_dim(), data.dataset.feature_dim());
    grw::StreamReport report =
        grw::train_task_stream(state, data.dataset, data.schedule, config.trainer.epochs);
    auto t1 = std::chrono::steady_clock::now();

    std::uint64_t hash = grw::fnv1a_hash(grw::resolved_config_text(config));
    grw::write_report_files(report, dir, hash, seed);
    write_manifest(config, dir, seed,
                   std::chrono::duration<double>(t1 - t0).count());
}

int cmd_run(const std::string& config_path, const std::string& seeds_raw,
            const std::string& out_override) {
    grw::RunConfig config = grw::parse_run_config(config_path);
    if (!out_override.empty()) config.out_dir = out_override;

    std::vector<std::uint64_t> seeds =
        seeds_raw.empty() ? std::vector<std::uint64_t>{config.trainer.seed}
                          : parse_seed_list(seeds_raw);
    LoadedData data = load_run_data(config);

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&]() {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= seeds.size()) return;
            try {
                std::string dir = seeds.size() == 1
                                      ? config.out_dir
                                      : config.out_dir + "/seed_" +
                                            std::to_string(seeds[i]);
                run_one_seed(config, data, seeds[i], dir);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::size_t threads = thread_budget(seeds.size());
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
    std::size_t tasks = 0;
    std::uint64_t seed = 0;
    grw::SyntheticSpec spec = grw::parse_synth_spec(spec_path, tasks, seed);
    grw::Rng rng(seed);
    auto synth = grw::generate_synthetic(spec, rng);
    std::filesystem::create_directories(out_dir);
    grw::save_dataset_csv(synth.data, out_dir + "/features.csv",
                          out_dir + "/attributes.csv");
    grw::save_schedule_json(grw::build_static_schedule(spec.n_classes, tasks),
                            out_dir + "/schedule.json");
    return 0;
}

struct PerTaskRow {
    double task = 0.0;
    double harmonic = 0.0;
    bool has_harmonic = false;
};

int cmd_plot(const std::string& run_dir) {
    const std::string per_task_path = run_dir + "/per_task.csv";
    std::ifstream is(per_task_path);
    if (!is) {
        std::cerr << "plot: missing " << per_task_path << "\n";
        return 1;
    }
    std::string line;
    std::getline(is, line); // header
    std::vector<double> xs, ys;
    double running = 0.0;
    std::size_t counted = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto fields = grw::detail::split_csv_line(line);
        if (fields.size() < 4 || fields[3].empty()) continue; // final task has no unseen side
        running += std::strtod(fields[3].c_str(), nullptr);
        ++counted;
        xs.push_back(std::strtod(fields[0].c_str(), nullptr) + 1.0);
        ys.push_back(running / static_cast<double>(counted));
    }
    if (!xs.empty())
        grw::write_line_chart_svg(run_dir + "/mha_per_task.svg",
                                  "mean harmonic accuracy up to each task", "task",
                                  "mHA", xs, ys);

    std::ifstream trace(run_dir + "/gdb_trace.csv");
    std::vector<double> grw_values, gdb_values;
    if (trace) {
        std::getline(trace, line);
        while (std::getline(trace, line)) {
            if (line.empty()) continue;
            auto fields = grw::detail::split_csv_line(line);
            if (fields.size() != 4) continue;
            grw_values.push_back(std::strtod(fields[2].c_str(), nullptr));
            gdb_values.push_back(std::strtod(fields[3].c_str(), nullptr));
        }
    }
    if (grw_values.size() >= 2) {
        grw::LinearFit fit = grw::linear_fit(grw_values, gdb_values);
        char title[128];
        std::snprintf(title, sizeof(title), "walk loss vs generative distance (Pearson r = %.3f)",
                      fit.pearson_r);
        grw::write_scatter_svg(run_dir + "/grw_vs_gdb.svg", title, "walk loss",
                               "generative distance", grw_values, gdb_values, fit);
    } else {
        std::cerr << "plot: gdb trace empty, scatter not written\n";
    }
    return 0;
}

int cmd_verify(const std::string& inject_fault) {
    grw::VerifyOptions options;
    if (inject_fault == "walk-backward-sign")
        options.flip_walk_backward_sign = true;
    else if (!inject_fault.empty())
        throw grw::ConfigError("unknown fault '" + inject_fault + "'");
    auto results = grw::run_verify_suites(options);
    std::size_t width = 0;
    for (const auto& r : results) width = std::max(width, r.name.size());
    for (const auto& r : results)
        std::printf("%-*s  %s  %s\n", static_cast<int>(width), r.name.c_str(),
                    r.passed ? "PASS" : "FAIL", r.detail.c_str());
    return grw::all_suites_passed(results) ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"grw: inductive continual zero-shot learning with generative random walks"};
    app.set_version_flag("--version", std::string("grw ") + kVersion);
    app.require_subcommand(1);

    std::string config_path, seeds_raw, out_override;
    bool print_config = false;
    CLI::App* run = app.add_subcommand("run", "train over a task stream");
    run->add_option("--config", config_path, "run configuration file");
    run->add_option("--seeds", seeds_raw, "comma-separated seeds, one run each");
    run->add_option("--out", out_override, "output directory");
    run->add_flag("--print-config", print_config, "print a config template and exit");

    std::string spec_path, synth_out;
    CLI::App* synth = app.add_subcommand("synth", "write a synthetic dataset");
    synth->add_option("--spec", spec_path, "synthetic spec file")->required();
    synth->add_option("--out", synth_out, "output directory")->required();

    std::string run_dir;
    CLI::App* plot = app.add_subcommand("plot", "render charts for a finished run");
    plot->add_option("run_dir", run_dir, "run output directory")->required();

    std::string inject_fault;
    CLI::App* verify = app.add_subcommand("verify", "run the property suites");
    verify->add_option("--inject-fault", inject_fault, "test harness fault hook")
        ->group(""); // hidden

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            if (print_config) {
                std::fputs(grw::default_config_template().c_str(), stdout);
                return 0;
            }
            if (config_path.empty()) {
                std::cerr << "run: --config is required\n";
                return 1;
            }
            return cmd_run(config_path, seeds_raw, out_override);
        }
        if (synth->parsed()) return cmd_synth(spec_path, synth_out);
        if (plot->parsed()) return cmd_plot(run_dir);
        if (verify->parsed()) return cmd_verify(inject_fault);
    } catch (const grw::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const grw::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 1;
    } catch (const grw::StateError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const grw::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
