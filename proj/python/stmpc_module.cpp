#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "stmpc/config.hpp"
#include "stmpc/report.hpp"
#include "stmpc/sim.hpp"

namespace py = pybind11;
using namespace stmpc;

namespace {

TerminalIngredients synthesize_from_config(const FileConfig& cfg) {
    SynthesisResult synth = synthesize(cfg.plant, cfg.bucket, cfg.mpc.P);
    if (!synth.feasible)
        throw std::runtime_error(
            "terminal synthesis infeasible, most violated horizon index p=" +
            std::to_string(synth.most_violated_p));
    TerminalIngredients terminal;
    terminal.Kf = synth.Kf;
    terminal.Pf = synth.Pf;
    terminal.M = cfg.bucket.base_period();
    terminal.P = cfg.mpc.P;
    LiftTable lifts(cfg.plant);
    terminal.set = construct_terminal_set(synth.Kf, synth.Pf, cfg.mpc.X, cfg.mpc.U,
                                          lifts, terminal.M, cfg.mpc.P);
    return terminal;
}

py::dict verify_from_config(const FileConfig& cfg, const TerminalIngredients& terminal,
                            int samples, uint64_t seed) {
    LiftTable lifts(cfg.plant);
    QmiReport qmi = verify_qmi(terminal.Kf, terminal.Pf, lifts, terminal.M,
                               terminal.P);
    DecreaseReport dec =
        verify_decrease(terminal, cfg.plant, cfg.bucket, samples, seed);
    py::dict out;
    out["qmi_residuals"] = qmi.residuals;
    out["qmi_pass"] = qmi.pass();
    out["decrease_margin"] = dec.worst_margin;
    out["decrease_pass"] = dec.pass();
    out["containment_pass"] = dec.containment_pass;
    out["samples"] = dec.samples;
    out["ok"] = qmi.pass() && dec.pass();
    return out;
}

py::dict simulate_from_config(const FileConfig& cfg,
                              const TerminalIngredients& terminal, bool nominal,
                              const std::optional<std::string>& loss,
                              std::optional<long> T, int threads) {
    SimConfig sim = make_sim_config(cfg, terminal);
    sim.nominal = nominal;
    if (loss) sim.loss = parse_loss_spec(*loss);
    if (T) sim.T = *T;
    if (threads > 0) sim.mpc.solver.threads = threads;
    SimResult res = run(sim);

    const long rows = static_cast<long>(res.trace.size());
    const int n = cfg.plant.n(), m = cfg.plant.m();
    Matrix X(rows, n), U(rows, m);
    Vector beta(rows), time(rows);
    for (long i = 0; i < rows; ++i) {
        X.row(i) = res.trace[i].x.transpose();
        U.row(i) = res.trace[i].u.transpose();
        beta(i) = static_cast<double>(res.trace[i].beta);
        time(i) = static_cast<double>(res.trace[i].t);
    }

    py::dict events;
    std::vector<long> ev_t, ev_k;
    std::vector<int> ev_delta, ev_sigma, ev_ack, ev_r;
    std::vector<double> ev_value;
    for (const InstantRecord& inst : res.instants) {
        ev_t.push_back(inst.t);
        ev_k.push_back(inst.k);
        ev_delta.push_back(inst.delta);
        ev_sigma.push_back(inst.sigma);
        ev_ack.push_back(inst.ack);
        ev_r.push_back(inst.r);
        ev_value.push_back(inst.worst_value);
    }
    events["t"] = ev_t;
    events["k"] = ev_k;
    events["delta"] = ev_delta;
    events["sigma"] = ev_sigma;
    events["ack"] = ev_ack;
    events["r"] = ev_r;
    events["worst_value"] = ev_value;

    py::dict out;
    out["t"] = time;
    out["x"] = X;
    out["u"] = U;
    out["beta"] = beta;
    out["events"] = events;
    out["margins"] = res.margins;
    out["min_margin"] = res.min_margin;
    out["max_x_tail"] = res.max_x_tail;
    out["diverged"] = res.diverged;
    out["diverged_t"] = res.diverged_t;
    out["infeasible_instants"] = res.infeasible_instants;
    out["fallback_count"] = res.fallback_count;
    out["beta_min"] = res.beta_min;
    out["beta_max"] = res.beta_max;
    out["trace_csv"] = trace_csv(res);
    return out;
}

}  // namespace

PYBIND11_MODULE(_stmpc, m) {
    m.doc() =
        "Self-triggered min-max MPC of a linear plant over a token-bucket "
        "network with bounded packet loss";

    py::register_exception<InfeasibleProblem>(m, "InfeasibleProblem");
    py::register_exception<AssumptionViolation>(m, "AssumptionViolation");

    py::class_<FileConfig>(m, "Config")
        .def_property_readonly("A", [](const FileConfig& c) { return c.plant.A; })
        .def_property_readonly("B", [](const FileConfig& c) { return c.plant.B; })
        .def_property_readonly("Q", [](const FileConfig& c) { return c.plant.Q; })
        .def_property_readonly("R", [](const FileConfig& c) { return c.plant.R; })
        .def_property_readonly("n", [](const FileConfig& c) { return c.plant.n(); })
        .def_property_readonly("m", [](const FileConfig& c) { return c.plant.m(); })
        .def_property_readonly("g", [](const FileConfig& c) { return c.bucket.g; })
        .def_property_readonly("c", [](const FileConfig& c) { return c.bucket.c; })
        .def_property_readonly("b", [](const FileConfig& c) { return c.bucket.b; })
        .def_property_readonly("base_period",
                               [](const FileConfig& c) { return c.bucket.base_period(); })
        .def_property_readonly("N", [](const FileConfig& c) { return c.mpc.N; })
        .def_property_readonly("P", [](const FileConfig& c) { return c.mpc.P; })
        .def_property_readonly("delta_max",
                               [](const FileConfig& c) { return c.mpc.delta_max; })
        .def_readonly("x0", &FileConfig::x0)
        .def_readonly("beta0", &FileConfig::beta0)
        .def_readonly("T", &FileConfig::T)
        .def_readonly("nominal", &FileConfig::nominal)
        .def_readonly("out_dir", &FileConfig::out_dir)
        .def_property_readonly("loss",
                               [](const FileConfig& c) { return format_loss_spec(c.loss); })
        .def("__repr__", [](const FileConfig& c) {
            return "<stmpc.Config n=" + std::to_string(c.plant.n()) +
                   " m=" + std::to_string(c.plant.m()) +
                   " N=" + std::to_string(c.mpc.N) +
                   " P=" + std::to_string(c.mpc.P) + " T=" + std::to_string(c.T) +
                   ">";
        });

    py::class_<TerminalIngredients>(m, "Ingredients")
        .def_readonly("Kf", &TerminalIngredients::Kf)
        .def_readonly("Pf", &TerminalIngredients::Pf)
        .def_readonly("M", &TerminalIngredients::M)
        .def_readonly("P", &TerminalIngredients::P)
        .def_property_readonly("level",
                               [](const TerminalIngredients& t) { return t.set.level; })
        .def("__repr__", [](const TerminalIngredients& t) {
            return "<stmpc.Ingredients n=" + std::to_string(t.Pf.rows()) +
                   " M=" + std::to_string(t.M) + " P=" + std::to_string(t.P) + ">";
        });

    m.def("parse_config", &parse_config, py::arg("text"),
          "Parse an experiment description from its text form.");
    m.def("load_config", &load_config, py::arg("path"),
          "Load an experiment description file.");
    m.def("synthesize", &synthesize_from_config, py::arg("config"),
          "Solve for the terminal gain, weight, and set of the experiment.");
    m.def("verify", &verify_from_config, py::arg("config"), py::arg("ingredients"),
          py::arg("samples") = 1000, py::arg("seed") = 20260815,
          "Re-check the decrease certificates of synthesized ingredients.");
    m.def("simulate", &simulate_from_config, py::arg("config"),
          py::arg("ingredients"), py::arg("nominal") = false,
          py::arg("loss") = std::nullopt, py::arg("T") = std::nullopt,
          py::arg("threads") = 0,
          "Run the closed loop and return the trace and run statistics.");
    m.def("format_ingredients",
          [](const TerminalIngredients& t) {
              return format_ingredients(t, QmiReport{});
          },
          py::arg("ingredients"), "Serialize ingredients to their text form.");
    m.def("parse_ingredients", &parse_ingredients, py::arg("text"),
          "Parse ingredients from their text form.");
}
