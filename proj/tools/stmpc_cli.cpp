#include <CLI11.hpp>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#include "stmpc/config.hpp"
#include "stmpc/report.hpp"

namespace fs = std::filesystem;
using namespace stmpc;

namespace {

constexpr uint64_t kAuditSeed = 20260815;

std::string ingredients_file(const FileConfig& cfg, const std::string& out_dir) {
    std::string name =
        cfg.ingredients_path.empty() ? "ingredients.txt" : cfg.ingredients_path;
    fs::path p(name);
    if (p.is_absolute()) return p.string();
    return (fs::path(out_dir) / p).string();
}

/// Synthesis + full verification; prints the report, writes the file.
int do_synth(const FileConfig& cfg, const std::string& out_dir,
             TerminalIngredients* out_terminal) {
    SynthesisResult synth = synthesize(cfg.plant, cfg.bucket, cfg.mpc.P);
    if (!synth.feasible) {
        std::cerr << "synthesis infeasible: most violated horizon index p="
                  << synth.most_violated_p
                  << "; the plant, base period, and loss bound admit no terminal law"
                  << std::endl;
        return 2;
    }
    LiftTable lifts(cfg.plant);
    const long M = cfg.bucket.base_period();

    TerminalIngredients terminal;
    terminal.Kf = synth.Kf;
    terminal.Pf = synth.Pf;
    terminal.M = M;
    terminal.P = cfg.mpc.P;
    bool degenerate = false;
    terminal.set = construct_terminal_set(synth.Kf, synth.Pf, cfg.mpc.X, cfg.mpc.U,
                                          lifts, M, cfg.mpc.P, &degenerate);
    if (degenerate)
        std::cerr << "warning: terminal set degenerated to the origin" << std::endl;

    QmiReport qmi = verify_qmi(synth.Kf, synth.Pf, lifts, M, cfg.mpc.P);
    DecreaseReport dec =
        verify_decrease(terminal, cfg.plant, cfg.bucket, 1000, kAuditSeed);

    fs::create_directories(out_dir);
    const std::string path = ingredients_file(cfg, out_dir);
    write_file(path, format_ingredients(terminal, qmi));

    std::cout << "ingredients: " << path << "\n";
    for (size_t p = 0; p < qmi.residuals.size(); ++p)
        std::cout << "qmi p=" << (p + 1) << " max_eig " << qmi.residuals[p] << " "
                  << (qmi.residuals[p] <= qmi.tolerance ? "PASS" : "FAIL") << "\n";
    std::cout << "decrease samples=" << dec.samples << " worst_margin "
              << dec.worst_margin << " " << (dec.pass() ? "PASS" : "FAIL") << "\n";
    std::cout << "terminal: " << (qmi.pass() && dec.pass() ? "PASS" : "FAIL")
              << std::endl;
    if (out_terminal) *out_terminal = terminal;
    return qmi.pass() && dec.pass() ? 0 : 2;
}

TerminalIngredients obtain_terminal(const FileConfig& cfg,
                                    const std::string& out_dir) {
    const std::string path = ingredients_file(cfg, out_dir);
    if (fs::exists(path)) {
        TerminalIngredients terminal = parse_ingredients(read_file(path));
        if (terminal.Pf.rows() != cfg.plant.n())
            throw std::invalid_argument("ingredients dimensions do not match plant");
        return terminal;
    }
    TerminalIngredients terminal;
    const int code = do_synth(cfg, out_dir, &terminal);
    if (code != 0) throw std::runtime_error("terminal synthesis failed");
    return terminal;
}

void write_run_outputs(const SimResult& result, const SimConfig& sim,
                       const std::string& out_dir, const std::string& stem) {
    fs::create_directories(out_dir);
    const fs::path base(out_dir);
    write_file((base / (stem + ".csv")).string(), trace_csv(result));
    write_file((base / (stem + "_diagnostics.csv")).string(),
               diagnostics_csv(result));
    write_file((base / (stem + "_summary.txt")).string(),
               summary_text(result, sim));
    const int n = sim.plant.n(), m = sim.plant.m();
    write_file((base / ("plot_" + stem + "_state.gp")).string(),
               state_plot_script(stem + ".csv", "", n, m));
    write_file((base / ("plot_" + stem + "_intervals.gp")).string(),
               interval_plot_script(stem + ".csv", n, m));
}

int do_simulate(FileConfig cfg, const std::string& out_dir) {
    TerminalIngredients terminal = obtain_terminal(cfg, out_dir);
    SimConfig sim = make_sim_config(cfg, terminal);
    try {
        SimResult result = run(sim);
        write_run_outputs(result, sim, out_dir, cfg.nominal ? "nominal" : "robust");
        std::cout << summary_text(result, sim) << std::flush;
        return 0;
    } catch (const InfeasibleProblem& e) {
        std::cerr << "infeasible: " << e.what() << std::endl;
        return 3;
    } catch (const AssumptionViolation& e) {
        std::cerr << "assumption violated: " << e.what() << std::endl;
        return 4;
    }
}

int do_verify(const std::string& ingredients_path, const FileConfig& cfg) {
    TerminalIngredients terminal = parse_ingredients(read_file(ingredients_path));
    if (terminal.Pf.rows() != cfg.plant.n() || terminal.Kf.cols() != cfg.plant.n() ||
        terminal.Kf.rows() != cfg.plant.m())
        throw std::invalid_argument("ingredients dimensions do not match plant");
    LiftTable lifts(cfg.plant);
    QmiReport qmi =
        verify_qmi(terminal.Kf, terminal.Pf, lifts, terminal.M, terminal.P);
    DecreaseReport dec =
        verify_decrease(terminal, cfg.plant, cfg.bucket, 1000, kAuditSeed);
    for (size_t p = 0; p < qmi.residuals.size(); ++p)
        std::cout << "qmi p=" << (p + 1) << " max_eig " << qmi.residuals[p] << " "
                  << (qmi.residuals[p] <= qmi.tolerance ? "PASS" : "FAIL") << "\n";
    std::cout << "decrease worst_margin " << dec.worst_margin << " "
              << (dec.pass() ? "PASS" : "FAIL") << "\n";
    if (qmi.pass() && dec.pass()) {
        std::cout << "verify: PASS" << std::endl;
        return 0;
    }
    std::cout << "verify: FAIL worst_residual " << qmi.worst() << std::endl;
    return 2;
}

int do_reproduce(FileConfig cfg, const std::string& out_dir, int seed_sweep,
                 int p_override) {
    const bool loss_free_compare = p_override == 0;
    if (p_override >= 0) {
        cfg.mpc.P = p_override;
        if (loss_free_compare) cfg.loss = parse_loss_spec("script:1");
    }
    fs::create_directories(out_dir);
    TerminalIngredients terminal;
    if (do_synth(cfg, out_dir, &terminal) != 0)
        throw std::runtime_error("terminal synthesis failed");

    std::vector<std::string> failures;

    FileConfig robust_cfg = cfg;
    robust_cfg.nominal = false;
    SimConfig robust_sim = make_sim_config(robust_cfg, terminal);
    SimResult robust = run(robust_sim);
    write_run_outputs(robust, robust_sim, out_dir, "robust");

    FileConfig nominal_cfg = cfg;
    nominal_cfg.nominal = true;
    SimConfig nominal_sim = make_sim_config(nominal_cfg, terminal);
    SimResult nominal = run(nominal_sim);
    write_run_outputs(nominal, nominal_sim, out_dir, "nominal");

    write_file((fs::path(out_dir) / "plot_compare_state.gp").string(),
               state_plot_script("robust.csv", "nominal.csv", cfg.plant.n(),
                                 cfg.plant.m()));

    std::ostringstream summary;
    summary << std::setprecision(17);
    auto check = [&](const std::string& name, bool ok, const std::string& detail) {
        summary << name << " = " << (ok ? "PASS" : "FAIL") << "  # " << detail
                << "\n";
        if (!ok) failures.push_back(name);
    };

    check("robust_convergence", robust.max_x_tail <= robust_sim.tail_threshold,
          "max ||x||_inf for t >= " + std::to_string(robust_sim.tail_start) + " is " +
              std::to_string(robust.max_x_tail));
    check("bucket_bounds",
          robust.beta_min >= 0 && robust.beta_max <= cfg.bucket.b,
          "beta range [" + std::to_string(robust.beta_min) + ", " +
              std::to_string(robust.beta_max) + "]");

    if (loss_free_compare) {
        const bool identical = trace_csv(robust) == trace_csv(nominal);
        check("lossfree_identity", identical,
              "robust and nominal traces must coincide when P = 0 and no losses");
    } else {
        double x1_t30 = std::numeric_limits<double>::quiet_NaN();
        if (static_cast<long>(nominal.trace.size()) > 30)
            x1_t30 = nominal.trace[30].x[0];
        check("nominal_divergence", std::abs(x1_t30) > 1e2,
              "|x_1(30)| = " + std::to_string(std::abs(x1_t30)));
    }

    IntervalSummary intervals = sampling_interval_summary(robust);
    bool tail_periodic = intervals.last5.size() == 5;
    for (int d : intervals.last5)
        tail_periodic = tail_periodic && d == cfg.bucket.base_period();
    {
        std::string tail;
        for (int d : intervals.last5) tail += std::to_string(d) + " ";
        check("periodic_tail", tail_periodic, "last 5 intervals: " + tail);
    }

    InvariantReport invariants = assert_runtime_invariants(robust, robust_sim);
    check("runtime_invariants", invariants.pass,
          invariants.pass ? "all records pass"
                          : invariants.failures.front() + " (+" +
                                std::to_string(invariants.failures.size() - 1) +
                                " more)");
    check("certified_decrease",
          robust.margins.empty() || robust.min_margin >= -1e-6,
          "min margin " + std::to_string(robust.min_margin));

    if (seed_sweep > 0) {
        long sweep_failures = 0;
        double sweep_min_margin = std::numeric_limits<double>::infinity();
        for (int s = 1; s <= seed_sweep; ++s) {
            FileConfig sweep_cfg = cfg;
            sweep_cfg.nominal = false;
            sweep_cfg.loss.kind = LossModelSpec::Kind::Random;
            sweep_cfg.loss.probability = 0.5;
            sweep_cfg.loss.seed = static_cast<uint64_t>(s);
            sweep_cfg.T = std::min<long>(cfg.T, 45);
            sweep_cfg.mpc.solver.refine_top = 1;
            sweep_cfg.mpc.solver.descent_iters = 8;
            SimConfig sweep_sim = make_sim_config(sweep_cfg, terminal);
            try {
                SimResult res = run(sweep_sim);
                InvariantReport rep = assert_runtime_invariants(res, sweep_sim);
                if (!rep.pass || res.infeasible_instants > 0) ++sweep_failures;
                if (!res.margins.empty())
                    sweep_min_margin = std::min(sweep_min_margin, res.min_margin);
            } catch (const std::exception&) {
                ++sweep_failures;
            }
        }
        check("feasibility_sweep", sweep_failures == 0,
              std::to_string(seed_sweep) + " seeded random-loss runs, " +
                  std::to_string(sweep_failures) + " failures, min margin " +
                  std::to_string(sweep_min_margin));
    }

    write_file((fs::path(out_dir) / "summary.txt").string(), summary.str());
    std::cout << summary.str() << std::flush;
    if (!failures.empty()) {
        std::cerr << "failed criteria:";
        for (const std::string& f : failures) std::cerr << " " << f;
        std::cerr << std::endl;
        return 5;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-triggered min-max MPC over a token-bucket network"};
    app.require_subcommand(1);

    std::string config_path, out_dir, loss_text, ingredients_path;
    bool nominal = false;
    int p_override = -1;
    int seed_sweep = 0;

    CLI::App* synth = app.add_subcommand("synth", "synthesize terminal ingredients");
    synth->add_option("--config", config_path, "experiment config file")->required();
    synth->add_option("--out", out_dir, "output directory");
    synth->add_option("--p", p_override, "override the loss bound P");

    CLI::App* verify = app.add_subcommand("verify", "verify external ingredients");
    verify->add_option("--config", config_path, "experiment config file")->required();
    verify->add_option("--ingredients", ingredients_path,
                       "ingredients file (default: the config's own path)");
    verify->add_option("--out", out_dir, "directory the default path is under");

    CLI::App* simulate = app.add_subcommand("simulate", "run the closed loop");
    simulate->add_option("--config", config_path, "experiment config file")
        ->required();
    simulate->add_option("--out", out_dir, "output directory");
    simulate->add_option("--loss", loss_text,
                         "loss process: script:<bits> | random:<p>,<seed> | "
                         "adversarial");
    simulate->add_flag("--nominal", nominal, "loss-blind controller");
    simulate->add_option("--p", p_override, "override the loss bound P");

    CLI::App* reproduce =
        app.add_subcommand("reproduce", "run the bundled comparison experiment");
    reproduce->add_option("--config", config_path, "experiment config file");
    reproduce->add_option("--out", out_dir, "output directory");
    reproduce->add_option("--seed-sweep", seed_sweep,
                          "extra bounded-random loss runs");
    reproduce->add_option("--p", p_override, "override the loss bound P");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(synth)) {
            FileConfig cfg = load_config(config_path);
            if (p_override >= 0) cfg.mpc.P = p_override;
            return do_synth(cfg, out_dir.empty() ? cfg.out_dir : out_dir, nullptr);
        }
        if (app.got_subcommand(verify)) {
            FileConfig cfg = load_config(config_path);
            if (ingredients_path.empty())
                ingredients_path =
                    ingredients_file(cfg, out_dir.empty() ? cfg.out_dir : out_dir);
            return do_verify(ingredients_path, cfg);
        }
        if (app.got_subcommand(simulate)) {
            FileConfig cfg = load_config(config_path);
            if (!loss_text.empty()) cfg.loss = parse_loss_spec(loss_text);
            if (nominal) cfg.nominal = true;
            if (p_override >= 0) cfg.mpc.P = p_override;
            return do_simulate(cfg, out_dir.empty() ? cfg.out_dir : out_dir);
        }
        if (app.got_subcommand(reproduce)) {
            if (config_path.empty()) config_path = "data/batch_reactor.cfg";
            FileConfig cfg = load_config(config_path);
            return do_reproduce(cfg, out_dir.empty() ? cfg.out_dir : out_dir,
                                seed_sweep, p_override);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 1;
}
