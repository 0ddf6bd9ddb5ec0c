// invagg: run, sweep, check and export for the federated aggregation simulator.
//
//   invagg run --preset appendix_d1_invariant [--aggregator fedavg] [--set training.lr=0.2]
//   invagg sweep --preset appendix_d1_invariant --param tau --values 0,0.2,0.4,0.6
//   invagg check t2 --phi 2 --clients 10 --malicious 2 --tau-count 2
//   invagg export --preset appendix_d1_invariant --what datasets --out data/
//
// Exit codes: 0 ok, 1 validation error, 2 runtime error, 3 bound violation.

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "invagg/config.hpp"
#include "invagg/harness.hpp"
#include "invagg/synthdata.hpp"
#include "invagg/theory.hpp"

namespace fs = std::filesystem;
using invagg::config::ExperimentFile;
using invagg::config::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitViolation = 3;

struct ConfigSource {
    std::string config_path;
    std::string preset_name;
    std::string aggregator;
    std::vector<std::string> overrides;
    std::string out_dir;

    void attach(CLI::App* cmd) {
        auto* cfg = cmd->add_option("-c,--config", config_path, "Experiment JSON file");
        cmd->add_option("-p,--preset", preset_name, "Built-in preset")->excludes(cfg);
        cmd->add_option("--aggregator", aggregator, "Override aggregator.kind");
        cmd->add_option("--set", overrides, "Dotted-path override, e.g. training.lr=0.2");
        cmd->add_option("-o,--out-dir", out_dir, "Override output.dir");
    }

    ExperimentFile resolve() const {
        ExperimentFile cfg;
        if (!config_path.empty()) {
            cfg = invagg::config::load_file(config_path);
        } else if (!preset_name.empty()) {
            cfg = invagg::config::preset(preset_name);
        } else {
            cfg = invagg::config::preset("appendix_d1_invariant");
        }
        if (!aggregator.empty()) invagg::config::apply_override(cfg, "aggregator.kind=\"" + aggregator + "\"");
        for (const auto& o : overrides) invagg::config::apply_override(cfg, o);
        if (!out_dir.empty()) cfg.output.dir = out_dir;
        invagg::config::validate(cfg);
        return cfg;
    }
};

std::string format_weights(const invagg::WeightVector& w) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << '[';
    for (std::size_t k = 0; k < w.size(); ++k) os << (k ? ", " : "") << w[k];
    os << ']';
    return os.str();
}

std::vector<double> parse_list(const std::string& text, const std::string& field) {
    std::vector<double> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw invagg::ValidationError(field, "cannot parse '" + item + "' as a number");
        }
    }
    if (out.empty()) throw invagg::ValidationError(field, "empty list");
    return out;
}

invagg::harness::RunResult execute(const ExperimentFile& cfg) {
    return invagg::harness::run_experiment(invagg::config::resolve_scenario(cfg), cfg.aggregator,
                                           cfg.training, cfg.seed);
}

void write_run_artifacts(const ExperimentFile& cfg, const invagg::harness::RunResult& result) {
    const fs::path dir(cfg.output.dir);
    if (cfg.output.json) {
        invagg::config::write_atomic(dir / (cfg.output.name + ".json"),
                                     invagg::config::to_json(result, cfg).dump(2) + "\n");
    }
    if (cfg.output.csv) {
        std::ostringstream csv;
        // resolved config rides along as a comment line
        csv << "# config: " << invagg::config::to_json(cfg).dump() << '\n';
        invagg::harness::write_csv(csv, result);
        invagg::config::write_atomic(dir / (cfg.output.name + ".csv"), csv.str());
    }
}

int cmd_run(const ConfigSource& src) {
    const ExperimentFile cfg = src.resolve();
    const auto result = execute(cfg);
    write_run_artifacts(cfg, result);
    const auto& s = result.summary;
    std::cout << cfg.output.name << ": aggregator=" << invagg::aggregation::to_string(cfg.aggregator.kind)
              << " rounds=" << result.rounds.size() << " w=" << format_weights(s.final_weights)
              << std::fixed << std::setprecision(4) << " acc_main=" << s.final_acc_main
              << " acc_backdoor=" << s.final_acc_backdoor << '\n';
    return kExitOk;
}

int cmd_sweep(const ConfigSource& src, const std::string& param, const std::string& values_text) {
    static const std::vector<std::string> allowed{"tau", "alpha", "clients_per_round", "num_malicious"};
    if (std::find(allowed.begin(), allowed.end(), param) == allowed.end()) {
        throw invagg::ValidationError("param", "unknown sweep parameter '" + param +
                                                   "' (tau, alpha, clients_per_round, num_malicious)");
    }
    const auto values = parse_list(values_text, "values");
    const ExperimentFile base = src.resolve();
    const std::string path = param == "tau" || param == "alpha" ? "aggregator." + param
                             : param == "clients_per_round"     ? "training.clients_per_round"
                                                                : "scenario.num_malicious";

    std::ostringstream csv;
    csv << "# config: " << invagg::config::to_json(base).dump() << '\n';
    csv << param;
    bool header_done = false;
    for (double v : values) {
        ExperimentFile cfg = base;
        std::ostringstream assignment;
        assignment << path << '=';
        if (param == "tau" || param == "alpha") {
            assignment << std::setprecision(17) << v;
        } else {
            if (v < 0 || std::floor(v) != v) throw invagg::ValidationError(param, "expects integers");
            assignment << static_cast<std::size_t>(v);
        }
        invagg::config::apply_override(cfg, assignment.str());
        const auto result = execute(cfg);
        const auto& s = result.summary;
        if (!header_done) {
            for (std::size_t k = 0; k < s.final_weights.size(); ++k) csv << ",w_" << k;
            csv << ",final_acc_main,final_acc_backdoor,last10_acc_main,last10_acc_backdoor\n";
            header_done = true;
        }
        csv << std::setprecision(17) << v;
        for (double w : s.final_weights) csv << ',' << w;
        csv << ',' << s.final_acc_main << ',' << s.final_acc_backdoor << ',' << s.last10_acc_main
            << ',' << s.last10_acc_backdoor << '\n';
        std::cout << param << '=' << v << " w=" << format_weights(s.final_weights) << std::fixed
                  << std::setprecision(4) << " acc_main=" << s.final_acc_main
                  << " acc_backdoor=" << s.final_acc_backdoor << std::defaultfloat << '\n';
    }
    const fs::path out = fs::path(base.output.dir) / (base.output.name + "_sweep_" + param + ".csv");
    invagg::config::write_atomic(out, csv.str());
    std::cout << "wrote " << out.string() << '\n';
    return kExitOk;
}

struct CheckArgs {
    std::string theorem;
    std::size_t trials = 10000;
    std::uint64_t seed = 1;
    std::string out;
    // t1
    std::size_t n = 200;
    double eta = 0.0;
    double delta = 0.1;
    double c = 2.0;
    double mean = 0.0;
    double stddev = 1.0;
    std::string dist = "normal";
    // t2
    double phi = 2.0;
    std::size_t clients = 10;
    std::size_t malicious = 2;
    std::optional<long> tau_count;
    std::optional<double> tau;
    std::optional<double> substitute_p;
    // t3 / c1
    double mu = 1.0;
    double sigma = 1.0;
    std::string weights;
    std::size_t k = 0;
    std::size_t samples = 1000000;
};

int cmd_check(const CheckArgs& a) {
    Json report;
    bool violated = false;
    if (a.theorem == "t1") {
        invagg::theory::Distribution d;
        if (a.dist == "uniform") {
            d.kind = invagg::theory::Distribution::Kind::uniform;
        } else if (a.dist != "normal") {
            throw invagg::ValidationError("dist", "expected normal or uniform");
        }
        d.mean = a.mean;
        d.stddev = a.stddev;
        const double alpha = invagg::theory::theorem1_alpha(a.n, a.eta, a.delta);
        if (!(alpha < 0.5)) throw invagg::ValidationError("eta", "alpha = 8 eta + 12 log(4/delta)/N must be < 0.5");
        if (!(a.c > 1.0)) throw invagg::ValidationError("c", "must exceed 1");
        const auto rep = invagg::theory::check_theorem1(d, a.n, a.eta, a.delta, a.c, a.trials, a.seed);
        violated = !rep.passed;
        report = invagg::config::to_json(rep);
    } else if (a.theorem == "t2") {
        long tau_count = 0;
        if (a.tau_count) {
            tau_count = *a.tau_count;
        } else if (a.tau) {
            tau_count = std::lround(*a.tau * static_cast<double>(a.clients));
        } else {
            throw invagg::ValidationError("tau-count", "pass --tau-count or --tau");
        }
        if (a.phi == 0.0 && !a.substitute_p) {
            throw invagg::ValidationError("substitute-p", "phi = 0 requires a substitute probability");
        }
        if (2 * a.malicious >= a.clients) throw invagg::ValidationError("malicious", "must be < clients / 2");
        const auto rep = invagg::theory::check_theorem2(a.phi, a.clients, a.malicious, tau_count,
                                                        a.trials, a.seed, a.substitute_p);
        violated = !rep.passed;
        report = invagg::config::to_json(rep);
    } else if (a.theorem == "t3") {
        if (!(a.sigma > 0.0)) throw invagg::ValidationError("sigma", "must be positive");
        invagg::synthdata::GaussianClientSpec spec;
        spec.mu = {a.mu};
        spec.sigma = {a.sigma};
        invagg::WeightVector w = a.weights.empty() ? invagg::WeightVector{0.0} : parse_list(a.weights, "w");
        if (w.size() != 1) {
            // extra coordinates get a zero-mean unit-variance feature
            spec.mu.resize(w.size(), 0.0);
            spec.sigma.resize(w.size(), 1.0);
        }
        if (a.k >= w.size()) throw invagg::ValidationError("k", "out of range");
        std::swap(spec.mu[0], spec.mu[a.k]);
        std::swap(spec.sigma[0], spec.sigma[a.k]);
        const auto res = invagg::theory::check_theorem3(spec, w, a.k, a.samples, a.seed);
        violated = res.status == invagg::theory::SignStatus::disagree;
        report = invagg::config::to_json(res);
    } else if (a.theorem == "c1") {
        const auto scenario = invagg::synthdata::make_appendix_d1_scenario(a.seed);
        const invagg::WeightVector w = a.weights.empty() ? invagg::WeightVector{1.0, 0.0}
                                                         : parse_list(a.weights, "w");
        if (w.size() != scenario.dim) throw invagg::ValidationError("w", "expected 2 weights");
        const auto res = invagg::theory::check_corollary1(scenario, w, a.samples, a.seed);
        violated = !res.passed;
        report = invagg::config::to_json(res);
    } else {
        throw invagg::ValidationError("theorem", "expected one of t1, t2, t3, c1");
    }
    const std::string text = report.dump(2) + "\n";
    if (!a.out.empty()) invagg::config::write_atomic(a.out, text);
    std::cout << text;
    return violated ? kExitViolation : kExitOk;
}

int cmd_export(const ConfigSource& src, const std::string& what, const std::string& out) {
    const ExperimentFile cfg = src.resolve();
    if (what == "config") {
        invagg::config::write_atomic(out, invagg::config::to_json(cfg).dump(2) + "\n");
    } else if (what == "datasets") {
        const auto fed = invagg::harness::build_federation(invagg::config::resolve_scenario(cfg));
        const fs::path dir(out);
        auto dump = [&](const fs::path& file, const invagg::Dataset& data) {
            std::ostringstream os;
            invagg::synthdata::write_csv(os, data);
            invagg::config::write_atomic(dir / file, os.str());
        };
        for (std::size_t i = 0; i < fed.client_data.size(); ++i) {
            const bool bad = fed.scenario.clients[i].is_malicious;
            dump("client_" + std::to_string(i) + (bad ? "_malicious" : "") + ".csv", fed.client_data[i]);
        }
        dump("eval_main.csv", fed.main_eval);
        dump("eval_backdoor.csv", fed.backdoor_eval);
    } else if (what == "presets") {
        for (const auto& name : invagg::config::preset_names()) {
            invagg::config::write_atomic(fs::path(out) / (name + ".json"),
                                         invagg::config::to_json(invagg::config::preset(name)).dump(2) + "\n");
        }
    } else {
        throw invagg::ValidationError("what", "expected config, datasets or presets");
    }
    std::cout << "wrote " << out << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated aggregation simulator"};
    app.require_subcommand(1);

    ConfigSource run_src;
    auto* run = app.add_subcommand("run", "Run one experiment and write JSON/CSV artifacts");
    run_src.attach(run);

    ConfigSource sweep_src;
    std::string sweep_param;
    std::string sweep_values;
    auto* sweep = app.add_subcommand("sweep", "Run one experiment per parameter value");
    sweep_src.attach(sweep);
    sweep->add_option("--param", sweep_param, "tau, alpha, clients_per_round or num_malicious")->required();
    sweep->add_option("--values", sweep_values, "Comma-separated values")->required();

    CheckArgs check_args;
    auto* check = app.add_subcommand("check", "Monte Carlo check of a bound");
    check->add_option("theorem", check_args.theorem, "t1, t2, t3 or c1")->required();
    check->add_option("--trials", check_args.trials);
    check->add_option("--seed", check_args.seed);
    check->add_option("--out", check_args.out, "Also write the report here");
    check->add_option("-N,--n", check_args.n, "t1: sample count");
    check->add_option("--eta", check_args.eta, "t1: corrupted fraction");
    check->add_option("--delta", check_args.delta, "t1: confidence level");
    check->add_option("--c", check_args.c, "t1: concentration constant");
    check->add_option("--mean", check_args.mean, "t1: benign mean");
    check->add_option("--stddev", check_args.stddev, "t1: benign std");
    check->add_option("--dist", check_args.dist, "t1: normal or uniform");
    check->add_option("--phi", check_args.phi, "t2: mean/std ratio");
    check->add_option("--clients", check_args.clients, "t2: N");
    check->add_option("--malicious", check_args.malicious, "t2: N'");
    check->add_option("--tau-count", check_args.tau_count, "t2: threshold in votes");
    check->add_option("--tau", check_args.tau, "t2: normalized threshold, converted with round(tau N)");
    check->add_option("--substitute-p", check_args.substitute_p, "t2: replaces phi^-2 when phi = 0");
    check->add_option("--mu", check_args.mu, "t3: feature mean");
    check->add_option("--sigma", check_args.sigma, "t3: feature std");
    check->add_option("--w", check_args.weights, "t3/c1: comma-separated weights");
    check->add_option("--k", check_args.k, "t3: coordinate");
    check->add_option("--samples", check_args.samples, "t3/c1: Monte Carlo samples per estimate");

    ConfigSource export_src;
    std::string export_what = "config";
    std::string export_out;
    auto* exp = app.add_subcommand("export", "Write resolved config, presets or datasets");
    export_src.attach(exp);
    exp->add_option("--what", export_what, "config, datasets or presets");
    exp->add_option("--out", export_out, "File (config) or directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*run) return cmd_run(run_src);
        if (*sweep) return cmd_sweep(sweep_src, sweep_param, sweep_values);
        if (*check) return cmd_check(check_args);
        if (*exp) return cmd_export(export_src, export_what, export_out);
    } catch (const invagg::ValidationError& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitRuntime;
}
