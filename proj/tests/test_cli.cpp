#include <catch2/catch.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct CommandResult {
    int exit_code = -1;
    std::string output;
};

CommandResult run_cli(const std::string& args) {
    auto out_path = fs::temp_directory_path() / "grw_cli_out.txt";
    std::string cmd = std::string(GRW_CLI_PATH) + " " + args + " > " + out_path.string() +
                      " 2>&1";
    int raw = std::system(cmd.c_str());
    CommandResult result;
    result.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream is(out_path);
    std::stringstream buf;
    buf << is.rdbuf();
    result.output = buf.str();
    return result;
}

fs::path fresh_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / "grw_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// small synthetic stream that trains in about a second
std::string smoke_config(const fs::path& dir, const std::string& extra = "") {
    auto path = dir / "smoke.conf";
    std::ofstream os(path);
    os << "lambda_cls = 1\nlambda_c = 1\nlambda_i = 0.1\nlambda_rd = 1\nlambda_rg = 1\n"
          "tau = 10\ngamma = 0.7\nwalk_steps = 2\nepochs = 2\nbatch_size = 16\n"
          "buffer_capacity = 60\nseed = 2222\nhallucination = interpolation\n"
          "g_hidden = 16\nd_hidden = 16\n"
          "synthetic_classes = 8\nsynthetic_attr_dim = 6\nsynthetic_feature_dim = 10\n"
          "synthetic_samples_per_class = 12\nsynthetic_noise_sigma = 0.3\n"
          "synthetic_tasks = 4\nsynthetic_seed = 99\n"
       << extra;
    return path.string();
}

std::string read_file(const fs::path& path) {
    std::ifstream is(path);
    std::stringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

// minimal well-formedness scan: every opened tag is closed in order
bool svg_well_formed(const std::string& text) {
    if (text.find("<svg") == std::string::npos) return false;
    std::vector<std::string> stack;
    std::size_t pos = 0;
    while ((pos = text.find('<', pos)) != std::string::npos) {
        std::size_t end = text.find('>', pos);
        if (end == std::string::npos) return false;
        std::string tag = text.substr(pos + 1, end - pos - 1);
        pos = end + 1;
        if (tag.empty() || tag[0] == '?' || tag[0] == '!') continue;
        if (tag[0] == '/') {
            if (stack.empty()) return false;
            if (stack.back() != tag.substr(1)) return false;
            stack.pop_back();
        } else if (tag.back() != '/') {
            std::size_t space = tag.find_first_of(" \t\n");
            stack.push_back(space == std::string::npos ? tag : tag.substr(0, space));
        }
    }
    return stack.empty();
}

} // namespace

TEST_CASE("missing required key names the key and exits 1") {
    auto dir = fresh_dir("missing_key");
    auto path = dir / "bad.conf";
    {
        std::ofstream os(path);
        os << "lambda_cls = 1\nlambda_c = 1\n"; // lambda_i and the rest absent
    }
    auto result = run_cli("run --config " + path.string());
    REQUIRE(result.exit_code == 1);
    REQUIRE(result.output.find("lambda_i") != std::string::npos);
}

TEST_CASE("smoke run writes the report files") {
    auto dir = fresh_dir("smoke");
    auto config = smoke_config(dir);
    auto out = dir / "out";
    auto result = run_cli("run --config " + config + " --out " + out.string());
    INFO(result.output);
    REQUIRE(result.exit_code == 0);
    for (const char* name : {"per_task.csv", "summary.json", "gdb_trace.csv",
                             "buffer_counts.csv", "manifest.json"})
        REQUIRE(fs::exists(out / name));
    std::string summary = read_file(out / "summary.json");
    REQUIRE(summary.find("mHA") != std::string::npos);
    REQUIRE(summary.find("config_hash") != std::string::npos);
}

TEST_CASE("same config and seed produce byte-identical summaries") {
    auto dir = fresh_dir("determinism");
    auto config = smoke_config(dir);
    auto out1 = dir / "r1";
    auto out2 = dir / "r2";
    REQUIRE(run_cli("run --config " + config + " --out " + out1.string()).exit_code == 0);
    REQUIRE(run_cli("run --config " + config + " --out " + out2.string()).exit_code == 0);
    REQUIRE(read_file(out1 / "summary.json") == read_file(out2 / "summary.json"));
    REQUIRE(read_file(out1 / "per_task.csv") == read_file(out2 / "per_task.csv"));
}

TEST_CASE("multi-seed runs land in per-seed directories") {
    auto dir = fresh_dir("seeds");
    auto config = smoke_config(dir);
    auto out = dir / "out";
    setenv("GRW_THREADS", "2", 1);
    auto result = run_cli("run --config " + config + " --seeds 5,6 --out " + out.string());
    unsetenv("GRW_THREADS");
    REQUIRE(result.exit_code == 0);
    REQUIRE(fs::exists(out / "seed_5" / "summary.json"));
    REQUIRE(fs::exists(out / "seed_6" / "summary.json"));
    REQUIRE(read_file(out / "seed_5" / "summary.json") !=
            read_file(out / "seed_6" / "summary.json"));
}

TEST_CASE("print-config emits a parseable template") {
    auto dir = fresh_dir("template");
    auto result = run_cli("run --print-config");
    REQUIRE(result.exit_code == 0);
    auto path = dir / "template.conf";
    {
        std::ofstream os(path);
        os << result.output;
        // shrink the workload so the template run finishes in about a second
        os << "epochs = 1\nsynthetic_samples_per_class = 5\nbatch_size = 8\n"
              "g_hidden = 8\nd_hidden = 8\n";
    }
    auto rerun =
        run_cli("run --config " + path.string() + " --out " + (dir / "x").string());
    INFO(rerun.output);
    REQUIRE(rerun.exit_code == 0);
}

TEST_CASE("synth writes files that load back") {
    auto dir = fresh_dir("synth");
    auto spec = dir / "spec.conf";
    {
        std::ofstream os(spec);
        os << "classes = 8\nattr_dim = 4\nfeature_dim = 6\nsamples_per_class = 5\n"
              "noise_sigma = 0.2\ntasks = 2\nseed = 7\n";
    }
    auto out = dir / "data";
    auto result = run_cli("synth --spec " + spec.string() + " --out " + out.string());
    REQUIRE(result.exit_code == 0);
    REQUIRE(fs::exists(out / "features.csv"));
    REQUIRE(fs::exists(out / "attributes.csv"));
    REQUIRE(fs::exists(out / "schedule.json"));

    // identical spec+seed reproduce identical bytes
    auto out2 = dir / "data2";
    REQUIRE(run_cli("synth --spec " + spec.string() + " --out " + out2.string()).exit_code ==
            0);
    REQUIRE(read_file(out / "features.csv") == read_file(out2 / "features.csv"));

    // a run can consume the exported files
    auto config = smoke_config(dir, "features_csv = " + (out / "features.csv").string() +
                                        "\nattributes_csv = " +
                                        (out / "attributes.csv").string() +
                                        "\nschedule_json = " +
                                        (out / "schedule.json").string() + "\n");
    auto run_out = dir / "run";
    auto run_result = run_cli("run --config " + config + " --out " + run_out.string());
    INFO(run_result.output);
    REQUIRE(run_result.exit_code == 0);
}

TEST_CASE("synth rejects too few classes") {
    auto dir = fresh_dir("synth_bad");
    auto spec = dir / "spec.conf";
    {
        std::ofstream os(spec);
        os << "classes = 3\ntasks = 1\n";
    }
    auto result = run_cli("synth --spec " + spec.string() + " --out " + (dir / "x").string());
    REQUIRE(result.exit_code == 1);
}

TEST_CASE("plot renders well-formed SVG charts") {
    auto dir = fresh_dir("plot");
    auto config = smoke_config(dir);
    auto out = dir / "run";
    REQUIRE(run_cli("run --config " + config + " --out " + out.string()).exit_code == 0);
    auto result = run_cli("plot " + out.string());
    REQUIRE(result.exit_code == 0);
    REQUIRE(svg_well_formed(read_file(out / "mha_per_task.svg")));
    REQUIRE(svg_well_formed(read_file(out / "grw_vs_gdb.svg")));
    REQUIRE(read_file(out / "grw_vs_gdb.svg").find("Pearson r") != std::string::npos);
}

TEST_CASE("plot warns and skips the scatter when the trace is empty") {
    auto dir = fresh_dir("plot_empty");
    std::ofstream(dir / "per_task.csv")
        << "task,seen_acc,unseen_acc,harmonic\n0,0.5,0.4,0.44\n1,0.6,,\n";
    std::ofstream(dir / "gdb_trace.csv") << "task,epoch,grw_loss,gdb\n";
    auto result = run_cli("plot " + dir.string());
    REQUIRE(result.exit_code == 0);
    REQUIRE(result.output.find("scatter not written") != std::string::npos);
    REQUIRE(!fs::exists(dir / "grw_vs_gdb.svg"));
    REQUIRE(fs::exists(dir / "mha_per_task.svg"));
}

TEST_CASE("plot fitted line slope tracks a fabricated monotone trace") {
    auto dir = fresh_dir("plot_fit");
    std::ofstream(dir / "per_task.csv")
        << "task,seen_acc,unseen_acc,harmonic\n0,0.5,0.4,0.44\n";
    {
        std::ofstream os(dir / "gdb_trace.csv");
        os << "task,epoch,grw_loss,gdb\n";
        for (int i = 0; i < 10; ++i)
            os << "0," << i << ',' << (1.0 + 0.5 * i) << ',' << (0.1 + 0.05 * i) << '\n';
    }
    auto result = run_cli("plot " + dir.string());
    REQUIRE(result.exit_code == 0);
    std::string svg = read_file(dir / "grw_vs_gdb.svg");
    // perfectly linear data: r printed as 1.000
    REQUIRE(svg.find("Pearson r = 1.000") != std::string::npos);
}

TEST_CASE("plot exits 1 without run outputs") {
    auto dir = fresh_dir("plot_missing");
    REQUIRE(run_cli("plot " + (dir / "nothing").string()).exit_code == 1);
}

TEST_CASE("dictionary mode runs end to end") {
    auto dir = fresh_dir("dict");
    auto config = smoke_config(dir, "hallucination = dictionary\n");
    auto out = dir / "out";
    auto result = run_cli("run --config " + config + " --out " + out.string());
    INFO(result.output);
    REQUIRE(result.exit_code == 0);
    std::string manifest = read_file(out / "manifest.json");
    REQUIRE(manifest.find("\"hallucination\": \"dictionary\"") != std::string::npos);
}

TEST_CASE("numeric blow-up exits with code 2") {
    auto dir = fresh_dir("numeric");
    auto config = smoke_config(dir, "lr = 1e150\n");
    auto result = run_cli("run --config " + config + " --out " + (dir / "out").string());
    REQUIRE(result.exit_code == 2);
    REQUIRE(result.output.find("numeric failure") != std::string::npos);
}

TEST_CASE("verify passes on a pristine build within its time budget") {
    auto t0 = std::chrono::steady_clock::now();
    auto result = run_cli("verify");
    double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    INFO(result.output);
    REQUIRE(result.exit_code == 0);
    REQUIRE(seconds < 60.0);
    REQUIRE(result.output.find("gradient") != std::string::npos);
}

TEST_CASE("injected walk-backward sign flip trips the gradient suite") {
    auto result = run_cli("verify --inject-fault walk-backward-sign");
    REQUIRE(result.exit_code == 3);
    // the gradient suite must be the one named as failing
    std::istringstream lines(result.output);
    std::string line;
    bool gradient_failed = false;
    while (std::getline(lines, line))
        if (line.find("gradient") != std::string::npos &&
            line.find("FAIL") != std::string::npos)
            gradient_failed = true;
    REQUIRE(gradient_failed);
}

TEST_CASE("seed runs are identical across thread counts") {
    auto dir = fresh_dir("thread_det");
    auto config = smoke_config(dir);
    auto serial = dir / "serial";
    auto parallel = dir / "parallel";
    setenv("GRW_THREADS", "1", 1);
    REQUIRE(run_cli("run --config " + config + " --seeds 5,6 --out " + serial.string())
                .exit_code == 0);
    setenv("GRW_THREADS", "4", 1);
    REQUIRE(run_cli("run --config " + config + " --seeds 5,6 --out " + parallel.string())
                .exit_code == 0);
    unsetenv("GRW_THREADS");
    REQUIRE(read_file(serial / "seed_5" / "summary.json") ==
            read_file(parallel / "seed_5" / "summary.json"));
    REQUIRE(read_file(serial / "seed_6" / "summary.json") ==
            read_file(parallel / "seed_6" / "summary.json"));
}

TEST_CASE("config hash changes when a weight changes") {
    auto dir = fresh_dir("hash");
    auto out1 = dir / "a";
    auto out2 = dir / "b";
    REQUIRE(run_cli("run --config " + smoke_config(dir) + " --out " + out1.string())
                .exit_code == 0);
    auto config2 = dir / "smoke2.conf";
    {
        std::ofstream os(config2);
        os << read_file(dir / "smoke.conf");
        os << "lambda_i = 0.2\n"; // later assignment wins
    }
    REQUIRE(run_cli("run --config " + config2.string() + " --out " + out2.string())
                .exit_code == 0);
    std::string s1 = read_file(out1 / "summary.json");
    std::string s2 = read_file(out2 / "summary.json");
    REQUIRE(s1.substr(s1.find("config_hash")) != s2.substr(s2.find("config_hash")));
}
