#include "cdpa/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "cdpa/codec.hpp"
#include "cdpa/errors.hpp"
#include "cdpa/harness.hpp"

namespace cdpa {

namespace {

std::vector<double> parse_double_list(const std::string& spec) {
    // "0.5:0.1:1.0" (start:step:stop, inclusive) or "0.6,0.75,0.9"
    std::vector<double> out;
    if (spec.find(':') != std::string::npos) {
        double start = 0, step = 0, stop = 0;
        if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &start, &step, &stop) != 3 ||
            step <= 0) {
            throw ParseError("bad range '" + spec + "' (expected start:step:stop)");
        }
        for (double v = start; v <= stop + 1e-12; v += step) out.push_back(std::min(v, stop));
    } else {
        std::stringstream ss(spec);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (!tok.empty()) out.push_back(std::stod(tok));
        }
    }
    if (out.empty()) throw ParseError("empty value list '" + spec + "'");
    return out;
}

std::vector<std::size_t> parse_size_list(const std::string& spec) {
    std::vector<std::size_t> out;
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(static_cast<std::size_t>(std::stoull(tok)));
    }
    if (out.empty()) throw ParseError("empty value list '" + spec + "'");
    return out;
}

int cmd_simulate(const std::string& config_path, std::ostream& out) {
    const ExperimentConfig config = ExperimentConfig::load(config_path);
    const auto metrics = run_experiment(config);
    emit_report(metrics, config, config.output_dir);
    const RoundMetrics& last = metrics.back();
    out << "rounds: " << metrics.size() << ", final accuracy: " << last.accuracy
        << ", final test loss: " << last.test_loss << "\n";
    out << "report written to " << config.output_dir << "\n";
    return 0;
}

int cmd_analyze(const std::vector<std::string>& grid, std::size_t trials,
                std::vector<int> mask_positions, int m, int z, std::uint64_t seed,
                const std::string& out_path, std::ostream& out) {
    std::vector<std::size_t> clients{20};
    std::vector<double> probabilities{0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    for (const std::string& tok : grid) {
        if (tok.rfind("R=", 0) == 0) {
            clients = parse_size_list(tok.substr(2));
        } else if (tok.rfind("p=", 0) == 0) {
            probabilities = parse_double_list(tok.substr(2));
        } else {
            throw ParseError("bad grid token '" + tok + "' (expected R=... or p=...)");
        }
    }
    FlipMask mask;
    mask.positions = std::move(mask_positions);
    mask.m = m;
    mask.z = z;
    mask.p = 0.98;  // per-row p comes from the grid

    const auto rows = recovery_curve(clients, probabilities, mask, trials, seed);
    write_recovery_csv(rows, out_path);
    out << "R,p,p_gamma2_closed,p_gamma2_empirical,expected_error,empirical_error,ci\n";
    for (const RecoveryErrorReport& r : rows) {
        char buf[200];
        std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.clients,
                      r.p, r.p_gamma2_closed, r.p_gamma2_empirical, r.expected_error,
                      r.empirical_error, r.ci_halfwidth);
        out << buf;
    }
    out << "curve written to " << out_path << "\n";
    return 0;
}

int cmd_calibrate(double p, double epsilon, bool have_p, bool have_eps, std::ostream& out) {
    if (have_p == have_eps) {
        throw ParseError("calibrate: pass exactly one of --p or --epsilon");
    }
    if (have_p) {
        epsilon = epsilon_of(p);
    } else {
        p = p_of_epsilon(epsilon);
    }
    char buf[100];
    std::snprintf(buf, sizeof(buf), "p = %.6g, epsilon = %.6g\n", p, epsilon);
    out << buf;
    return 0;
}

int cmd_probe(const std::string& config_path, const std::string& out_path,
              std::ostream& out) {
    const ExperimentConfig config = ExperimentConfig::load(config_path);
    const auto results = run_probe(config);
    write_probe_csv(results, out_path);

    auto median_of = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    std::vector<double> plain, cdpa;
    std::size_t weaker = 0;
    for (const ProbeResult& r : results) {
        plain.push_back(r.cosine_plain);
        cdpa.push_back(r.cosine_cdpa);
        if (r.cosine_cdpa < r.cosine_plain) ++weaker;
    }
    out << "trials: " << results.size()
        << ", median cosine_plain: " << median_of(plain)
        << ", median cosine_cdpa: " << median_of(cdpa)
        << ", cdpa weaker fraction: "
        << static_cast<double>(weaker) / static_cast<double>(results.size()) << "\n";
    out << "probe written to " << out_path << "\n";
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"CDPA federated-aggregation simulator"};
    app.require_subcommand(1);

    auto* simulate = app.add_subcommand("simulate", "run a federated experiment");
    std::string sim_config;
    simulate->add_option("--config", sim_config, "experiment config (JSON)")->required();

    auto* analyze = app.add_subcommand("analyze", "recovery-error curve (closed form + Monte Carlo)");
    std::vector<std::string> grid;
    std::size_t trials = 100000;
    std::vector<int> mask_positions{2};
    int m = 16, z = 4;
    std::uint64_t analyze_seed = 7;
    std::string curve_path = "recovery_curve.csv";
    analyze->add_option("--grid", grid, "grid tokens, e.g. R=5,20,100 p=0.5:0.1:1.0");
    analyze->add_option("--trials", trials, "Monte Carlo trials per grid point");
    analyze->add_option("--mask", mask_positions, "masked bit positions (0 = MSB)");
    analyze->add_option("--m", m, "word width in bits");
    analyze->add_option("--z", z, "decimal scale exponent");
    analyze->add_option("--seed", analyze_seed, "Monte Carlo seed");
    analyze->add_option("--out", curve_path, "output CSV path");

    auto* calibrate = app.add_subcommand("calibrate", "convert between p and epsilon");
    double cal_p = 0.0, cal_eps = 0.0;
    auto* opt_p = calibrate->add_option("--p", cal_p, "retain probability in (0.5, 1]");
    auto* opt_eps = calibrate->add_option("--epsilon", cal_eps, "privacy budget in [0, inf)");

    auto* probe = app.add_subcommand("probe", "gradient-inversion probe");
    std::string probe_config;
    std::string probe_path = "probe.csv";
    probe->add_option("--config", probe_config, "experiment config (JSON)")->required();
    probe->add_option("--out", probe_path, "output CSV path");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << "error: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(sim_config, out);
        if (analyze->parsed()) {
            return cmd_analyze(grid, trials, mask_positions, m, z, analyze_seed, curve_path,
                               out);
        }
        if (calibrate->parsed()) {
            return cmd_calibrate(cal_p, cal_eps, opt_p->count() > 0, opt_eps->count() > 0,
                                 out);
        }
        if (probe->parsed()) return cmd_probe(probe_config, probe_path, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << app.help();
    return 2;
}

}  // namespace cdpa
