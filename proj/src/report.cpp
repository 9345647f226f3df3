#include "stmpc/report.hpp"

#include <iomanip>
#include <sstream>

namespace stmpc {

namespace {

void append_number(std::ostringstream& out, double v) {
    out << std::setprecision(17) << v;
}

}  // namespace

std::string trace_csv(const SimResult& result) {
    std::ostringstream out;
    if (result.trace.empty()) return "";
    const int n = static_cast<int>(result.trace.front().x.size());
    const int m = static_cast<int>(result.trace.front().u.size());
    out << "t,k";
    for (int i = 1; i <= n; ++i) out << ",x_" << i;
    for (int i = 1; i <= m; ++i) out << ",u_" << i;
    out << ",beta,delta,sigma,ack,r,worst_value,provenance\n";
    for (const TraceRecord& rec : result.trace) {
        out << rec.t << ",";
        if (rec.event) out << rec.k;
        for (int i = 0; i < n; ++i) {
            out << ",";
            append_number(out, rec.x[i]);
        }
        for (int i = 0; i < m; ++i) {
            out << ",";
            append_number(out, rec.u[i]);
        }
        out << "," << rec.beta << ",";
        if (rec.event) {
            out << rec.delta << "," << rec.sigma << "," << rec.ack << "," << rec.r
                << ",";
            append_number(out, rec.worst_value);
            out << "," << provenance_name(rec.provenance);
        } else {
            out << ",,,,,";
        }
        out << "\n";
    }
    return out.str();
}

std::string diagnostics_csv(const SimResult& result) {
    std::ostringstream out;
    out << "k,t_k,r,admissible,words_explored,provenance,worst_value\n";
    for (const InstantRecord& inst : result.instants) {
        out << inst.k << "," << inst.t << "," << inst.r << ","
            << inst.admissible_count << "," << inst.words_feasible << ","
            << provenance_name(inst.provenance) << ",";
        append_number(out, inst.worst_value);
        out << "\n";
    }
    return out.str();
}

std::string summary_text(const SimResult& result, const SimConfig& config) {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "mode = " << (config.nominal ? "nominal" : "robust") << "\n";
    out << "loss = " << format_loss_spec(config.loss) << "\n";
    out << "T = " << config.T << "\n";
    out << "steps = " << (result.trace.empty() ? 0 : result.trace.back().t) << "\n";
    out << "instants = " << result.instants.size() << "\n";
    out << "fallback_count = " << result.fallback_count << "\n";
    out << "infeasible_instants = " << result.infeasible_instants << "\n";
    out << "diverged = " << (result.diverged ? 1 : 0) << "\n";
    out << "diverged_t = " << result.diverged_t << "\n";
    out << "tail_start = " << config.tail_start << "\n";
    out << "tail_threshold = " << config.tail_threshold << "\n";
    out << "max_x_tail = " << result.max_x_tail << "\n";
    out << "time_to_threshold = " << result.time_to_threshold << "\n";
    if (result.margins.empty())
        out << "min_margin = nan\n";
    else
        out << "min_margin = " << result.min_margin << "\n";
    out << "beta_min = " << result.beta_min << "\n";
    out << "beta_max = " << result.beta_max << "\n";

    IntervalSummary intervals = sampling_interval_summary(result);
    out << "last5 =";
    for (int d : intervals.last5) out << " " << d;
    out << "\n";
    for (const auto& [delta, count] : intervals.histogram)
        out << "count_delta_" << delta << " = " << count << "\n";
    return out.str();
}

std::string state_plot_script(const std::string& robust_csv,
                              const std::string& nominal_csv, int n, int m) {
    (void)m;
    std::ostringstream out;
    out << "set datafile separator ','\n";
    out << "set datafile missing ''\n";
    out << "set key outside\n";
    out << "set xlabel 't'\n";
    out << "set ylabel 'state'\n";
    out << "set grid\n";
    out << "plot ";
    for (int i = 0; i < n; ++i) {
        if (i) out << ", \\\n     ";
        out << "'" << robust_csv << "' using 1:" << (3 + i)
            << " with lines title 'x_" << (i + 1) << "'";
    }
    if (!nominal_csv.empty()) {
        out << ", \\\n     '" << nominal_csv
            << "' using 1:3 with lines dashtype 2 title 'x_1 nominal'";
    }
    out << "\n";
    return out.str();
}

std::string interval_plot_script(const std::string& csv, int n, int m) {
    const int delta_col = 4 + n + m;
    const int sigma_col = delta_col + 1;
    std::ostringstream out;
    out << "set datafile separator ','\n";
    out << "set datafile missing ''\n";
    out << "set key outside\n";
    out << "set xlabel 't_k'\n";
    out << "set ylabel 'interval'\n";
    out << "set yrange [0:*]\n";
    out << "set grid\n";
    out << "plot '" << csv << "' using 1:($" << sigma_col << " == 1 ? $" << delta_col
        << " : NaN) with impulses lw 2 title 'received', \\\n";
    out << "     '" << csv << "' using 1:($" << sigma_col << " == 1 ? $" << delta_col
        << " : NaN) with points pt 7 notitle, \\\n";
    out << "     '" << csv << "' using 1:($" << sigma_col << " == 0 ? $" << delta_col
        << " : NaN) with impulses lw 2 title 'lost', \\\n";
    out << "     '" << csv << "' using 1:($" << sigma_col << " == 0 ? $" << delta_col
        << " : NaN) with points pt 6 notitle\n";
    return out.str();
}

}  // namespace stmpc
