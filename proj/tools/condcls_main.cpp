// Command-line front end: cluster planning, compression planning, FLOP
// auditing, synthetic evaluation and tau sweeps, all seed-reproducible.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "condcls/clustering.hpp"
#include "condcls/compressor.hpp"
#include "condcls/harness.hpp"

namespace {

using nlohmann::json;

struct CliError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CliError("cannot open input file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CliError("cannot open output file: " + path);
    out << content;
}

condcls::clustering::IndicatorMatrix load_indicators(const std::string& path) {
    const json j = json::parse(read_file(path));
    const std::size_t K = j.at("K").get<std::size_t>();
    if (j.contains("indicators")) {
        condcls::clustering::IndicatorMatrix ind;
        ind.num_classes = K;
        ind.vectors = condcls::DenseMatrix(K, K);
        const auto rows = j.at("indicators");
        if (rows.size() != K) throw CliError("indicator matrix in " + path + " is not K x K");
        for (std::size_t i = 0; i < K; ++i) {
            if (rows[i].size() != K) throw CliError("indicator matrix in " + path + " is not K x K");
            for (std::size_t c = 0; c < K; ++c) ind.vectors.at(i, c) = rows[i][c].get<double>();
        }
        return ind;
    }
    if (j.contains("samples")) {
        std::vector<condcls::clustering::LabeledProbs> samples;
        for (const json& sj : j.at("samples")) {
            condcls::clustering::LabeledProbs s;
            s.probs = sj.at("probs").get<std::vector<double>>();
            s.label = sj.at("label").get<std::size_t>();
            samples.push_back(std::move(s));
        }
        return condcls::clustering::compute_indicator_vectors(samples, K);
    }
    throw CliError(path + " contains neither \"indicators\" nor \"samples\"");
}

std::vector<double> parse_tau_range(const std::string& spec) {
    double a = 0, b = 0, step = 0;
    if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &a, &b, &step) != 3 || step <= 0.0)
        throw CliError("--taus expects a:b:step with positive step, got " + spec);
    std::vector<double> taus;
    for (int i = 0;; ++i) {
        const double t = a + i * step;
        if (t > b + 1e-12) break;
        taus.push_back(t);
    }
    if (taus.empty()) throw CliError("--taus range " + spec + " is empty");
    for (double t : taus)
        if (t <= 0.0 || t >= 1.0)
            throw CliError("tau values must lie strictly inside (0,1), got " + spec);
    return taus;
}

/// FLOP table derived from the bundled ResNet18 ladder. The first twelve
/// layers (stem plus the first two stages) are shared; heads replicate only
/// the remaining stages, compressed at either the deepest or a shallow rung,
/// so even activating every head costs less than the uncompressed model.
condcls::harness::FlopTable default_flop_table(std::size_t K1) {
    using namespace condcls::compressor;
    const ModelIR ir = resnet18();
    const std::size_t prefix = 12;
    condcls::harness::FlopTable table;
    table.original = static_cast<double>(flops(ir));
    ModelIR stem;
    stem.input_shape = ir.input_shape;
    stem.layers.assign(ir.layers.begin(), ir.layers.begin() + prefix);
    table.shared = static_cast<double>(flops(stem));
    const double deep =
        static_cast<double>(plan(ir, "L44", prefix, 0.25).flops_after) - table.shared;
    const double shallow =
        static_cast<double>(plan(ir, "L2", prefix, 0.25).flops_after) - table.shared;
    table.clustifier = deep;
    for (std::size_t f = 0; f < K1; ++f) {
        const std::size_t slot = f % 6;
        table.per_cluster.push_back(slot == 0 || slot >= 4 ? deep : shallow);
    }
    return table;
}

struct SimSetup {
    condcls::harness::SyntheticDataset dataset;
    condcls::harness::Split split;
    condcls::router::ConfusionMatrix cm;
    condcls::harness::FlopTable flop_table;
};

SimSetup load_simulation(const std::string& config_path, std::optional<std::uint64_t> seed) {
    const json j = json::parse(read_file(config_path));
    const json task = j.contains("task") ? j.at("task") : j;
    condcls::harness::SyntheticTaskConfig cfg =
        condcls::harness::config_from_json(task.dump());
    if (seed) cfg.seed = *seed;
    SimSetup setup;
    setup.dataset = condcls::harness::gen_synthetic_task(cfg);
    setup.split = condcls::harness::parity_split(setup.dataset);
    setup.cm = condcls::harness::calibrate(setup.dataset, setup.split.calibration_ids);
    if (j.contains("flops")) {
        setup.flop_table = condcls::harness::flop_table_from_json(j.at("flops").dump());
        if (setup.flop_table.per_cluster.size() != cfg.planted_sizes.size())
            throw CliError("flop table in " + config_path +
                           " needs one per_cluster entry per planted cluster");
    } else {
        setup.flop_table = default_flop_table(cfg.planted_sizes.size());
    }
    return setup;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conditional-classification toolkit: spectral hyper-class planning, "
                 "bottleneck compression and synthetic pipeline evaluation"};
    app.require_subcommand(1);

    std::string input, model_path, config_path, out_path, level = "L0", taus_spec = "0.5:0.95:0.05";
    std::uint64_t seed = 1;
    bool seed_set = false;
    std::size_t k_override = 0;
    std::size_t shared_prefix = 0;
    double width_ratio = 0.25;
    double tau = 0.7;

    CLI::App* cluster = app.add_subcommand("cluster", "Compute hyper-class membership");
    cluster->add_option("--input", input, "Indicator-matrix or labeled-sample JSON")->required();
    cluster->add_option("--seed", seed, "Seed for k-means initialization");
    cluster->add_option("--k", k_override, "Override the eigengap cluster count");
    cluster->add_option("--out", out_path, "Output cluster-spec JSON")->required();

    CLI::App* plan_cmd = app.add_subcommand("plan", "Plan a compression ladder rung");
    plan_cmd->add_option("--model", model_path, "Model IR JSON")->required();
    plan_cmd->add_option("--level", level, "Ladder level (L0,L1,L2,L22,L3,L33,L4,L44)");
    plan_cmd->add_option("--shared-prefix", shared_prefix, "Layers kept shared and untouched");
    plan_cmd->add_option("--width-ratio", width_ratio, "Bottleneck width reduction ratio");
    plan_cmd->add_option("--out", out_path, "Output plan JSON")->required();

    CLI::App* flops_cmd = app.add_subcommand("flops", "Audit a model IR's FLOP count");
    flops_cmd->add_option("--model", model_path, "Model IR JSON")->required();
    flops_cmd->add_option("--out", out_path, "Optional output JSON");

    CLI::App* sim_cmd = app.add_subcommand("simulate", "Evaluate the pipeline at one threshold");
    sim_cmd->add_option("--config", config_path, "Synthetic task config JSON")->required();
    sim_cmd->add_option("--tau", tau, "Confidence-sum threshold");
    auto* sim_seed = sim_cmd->add_option("--seed", seed, "Override the config seed");
    sim_cmd->add_option("--out", out_path, "Output report JSON")->required();

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "Sweep the confidence-sum threshold");
    sweep_cmd->add_option("--config", config_path, "Synthetic task config JSON")->required();
    sweep_cmd->add_option("--taus", taus_spec, "Threshold grid a:b:step");
    auto* sweep_seed = sweep_cmd->add_option("--seed", seed, "Override the config seed");
    sweep_cmd->add_option("--out", out_path, "Output report CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cluster->parsed()) {
            const auto ind = load_indicators(input);
            std::optional<std::size_t> override_k;
            if (k_override > 0) override_k = k_override;
            const auto assignment = condcls::clustering::assign_clusters(ind, override_k, seed);
            write_file(out_path, condcls::clustering::to_json(assignment) + "\n");
            std::cout << "K1=" << assignment.num_clusters << " sizes=[";
            for (std::size_t i = 0; i < assignment.sizes.size(); ++i)
                std::cout << (i ? "," : "") << assignment.sizes[i];
            std::cout << "]\n";
        } else if (plan_cmd->parsed()) {
            const auto ir = condcls::compressor::ir_from_json(read_file(model_path));
            const auto p = condcls::compressor::plan(ir, level, shared_prefix, width_ratio);
            write_file(out_path, condcls::compressor::plan_to_json(p) + "\n");
            char pct[64];
            std::snprintf(pct, sizeof(pct), "%.6g",
                          100.0 * (1.0 - static_cast<double>(p.flops_after) /
                                             static_cast<double>(p.flops_before)));
            std::cout << "level=" << level << " flops_before=" << p.flops_before
                      << " flops_after=" << p.flops_after << " reduction=" << pct << "%\n";
        } else if (flops_cmd->parsed()) {
            const auto ir = condcls::compressor::ir_from_json(read_file(model_path));
            const std::uint64_t count = condcls::compressor::flops(ir);
            if (!out_path.empty()) {
                json j;
                j["flops"] = count;
                write_file(out_path, j.dump(2) + "\n");
            }
            std::cout << count << "\n";
        } else if (sim_cmd->parsed()) {
            if (tau <= 0.0 || tau >= 1.0) throw CliError("--tau must lie strictly inside (0,1)");
            seed_set = sim_seed->count() > 0;
            const SimSetup setup =
                load_simulation(config_path, seed_set ? std::optional<std::uint64_t>(seed)
                                                      : std::nullopt);
            const auto report = condcls::harness::evaluate(
                setup.dataset, setup.dataset.planted, setup.cm, tau, setup.flop_table,
                setup.split.calibration_ids, setup.split.test_ids);
            write_file(out_path, condcls::harness::reports_to_json({report}) + "\n");
            std::cout << "tau=" << report.tau << " top1=" << report.top1
                      << " cc_save=" << report.cc_save << "\n";
        } else if (sweep_cmd->parsed()) {
            const std::vector<double> taus = parse_tau_range(taus_spec);
            seed_set = sweep_seed->count() > 0;
            const SimSetup setup =
                load_simulation(config_path, seed_set ? std::optional<std::uint64_t>(seed)
                                                      : std::nullopt);
            const auto reports = condcls::harness::sweep_tau(
                setup.dataset, setup.dataset.planted, setup.cm, taus, setup.flop_table,
                setup.split.calibration_ids, setup.split.test_ids);
            write_file(out_path,
                       condcls::harness::reports_to_csv(reports,
                                                        setup.dataset.planted.num_clusters));
            std::cout << "wrote " << reports.size() << " rows to " << out_path << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
