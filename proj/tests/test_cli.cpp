#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <doctest.h>

namespace fs = std::filesystem;

namespace {

const char* kCli = CONDCLS_CLI_PATH;

struct RunResult {
    int exit_code = 0;
    std::string output;  // stdout + stderr
};

RunResult run(const std::string& args) {
    const fs::path log = fs::temp_directory_path() / "condcls_cli_test.log";
    const std::string cmd = std::string(kCli) + " " + args + " > " + log.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    RunResult r;
#ifdef _WIN32
    r.exit_code = raw;
#else
    r.exit_code = WEXITSTATUS(raw);
#endif
    std::ifstream in(log);
    std::ostringstream buf;
    buf << in.rdbuf();
    r.output = buf.str();
    return r;
}

fs::path tmp_file(const std::string& name, const std::string& content) {
    const fs::path p = fs::temp_directory_path() / name;
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

const char* kSmallConfig = R"({"K": 12, "planted_sizes": [5, 4, 3],
    "clustifier_accuracy": 0.9, "per_cluster_accuracy": [0.8, 0.85, 0.75],
    "samples_per_class": 20, "seed": 5, "baseline_accuracy": 0.7,
    "flops": {"shared": 1.0, "clustifier": 1.0, "per_cluster": [2.0, 2.0, 2.0],
              "original": 20.0}})";

}  // namespace

TEST_CASE("missing input file exits with code 2 and names the path") {
    const auto out = tmp_file("cli_missing_out.json", "");
    const auto r = run("cluster --input /nonexistent/indicators.json --out " + out.string());
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("error:") != std::string::npos);
    CHECK(r.output.find("/nonexistent/indicators.json") != std::string::npos);
}

TEST_CASE("identity indicators with forced k give four singleton clusters") {
    const auto input = tmp_file("cli_identity.json",
                                R"({"K": 4, "indicators": [[1,0,0,0],[0,1,0,0],
                                    [0,0,1,0],[0,0,0,1]]})");
    const fs::path out = fs::temp_directory_path() / "cli_identity_out.json";
    const auto r = run("cluster --input " + input.string() + " --k 4 --out " + out.string());
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("K1=4") != std::string::npos);
    const std::string body = slurp(out);
    CHECK(body.find("\"K1\": 4") != std::string::npos);
}

TEST_CASE("plan and flops agree on the bundled reference model") {
    const std::string model = std::string(CONDCLS_DATA_DIR) + "/resnet18.json";
    const fs::path plan_out = fs::temp_directory_path() / "cli_plan_out.json";
    const auto p = run("plan --model " + model + " --level L44 --shared-prefix 2 --out " +
                       plan_out.string());
    CHECK(p.exit_code == 0);
    CHECK(p.output.find("flops_before=1794344960") != std::string::npos);

    const auto f = run("flops --model " + model);
    CHECK(f.exit_code == 0);
    CHECK(f.output.find("1794344960") != std::string::npos);
}

TEST_CASE("simulate rejects thresholds outside (0,1)") {
    const auto cfg = tmp_file("cli_cfg.json", kSmallConfig);
    const fs::path out = fs::temp_directory_path() / "cli_sim_out.json";
    const auto r = run("simulate --config " + cfg.string() + " --tau 1.0 --out " + out.string());
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("error:") != std::string::npos);
}

TEST_CASE("sweep output is byte-identical across reruns and thread budgets") {
    const auto cfg = tmp_file("cli_cfg.json", kSmallConfig);
    const fs::path out1 = fs::temp_directory_path() / "cli_sweep1.csv";
    const fs::path out2 = fs::temp_directory_path() / "cli_sweep2.csv";
    setenv("CONDCLS_THREADS", "1", 1);
    const auto r1 = run("sweep --config " + cfg.string() + " --taus 0.5:0.9:0.1 --out " +
                        out1.string());
    setenv("CONDCLS_THREADS", "4", 1);
    const auto r2 = run("sweep --config " + cfg.string() + " --taus 0.5:0.9:0.1 --out " +
                        out2.string());
    unsetenv("CONDCLS_THREADS");
    CHECK(r1.exit_code == 0);
    CHECK(r2.exit_code == 0);
    const std::string a = slurp(out1);
    CHECK(a == slurp(out2));
    CHECK(a.rfind("tau,top1,top5,", 0) == 0);
    // Header plus one row per threshold in the grid 0.5..0.9 step 0.1.
    CHECK(std::count(a.begin(), a.end(), '\n') == 6);
}

TEST_CASE("cluster runs are reproducible byte for byte") {
    const auto input = tmp_file("cli_probs.json",
                                R"({"K": 3, "samples": [
        {"probs": [0.8, 0.1, 0.1], "label": 0}, {"probs": [0.7, 0.2, 0.1], "label": 0},
        {"probs": [0.2, 0.6, 0.2], "label": 1}, {"probs": [0.1, 0.8, 0.1], "label": 1},
        {"probs": [0.1, 0.2, 0.7], "label": 2}, {"probs": [0.2, 0.1, 0.7], "label": 2}]})");
    const fs::path out1 = fs::temp_directory_path() / "cli_rep1.json";
    const fs::path out2 = fs::temp_directory_path() / "cli_rep2.json";
    const auto r1 = run("cluster --input " + input.string() + " --seed 3 --out " + out1.string());
    const auto r2 = run("cluster --input " + input.string() + " --seed 3 --out " + out2.string());
    CHECK(r1.exit_code == 0);
    CHECK(r2.exit_code == 0);
    CHECK(slurp(out1) == slurp(out2));
}
