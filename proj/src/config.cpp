#include "stmpc/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace stmpc {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

long parse_long(const std::string& key, const std::string& value) {
    size_t pos = 0;
    long out;
    try {
        out = std::stol(value, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' needs an integer");
    }
    if (pos != value.size())
        throw std::invalid_argument("config: key '" + key + "' needs an integer");
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    size_t pos = 0;
    double out;
    try {
        out = std::stod(value, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' needs a number");
    }
    if (pos != value.size())
        throw std::invalid_argument("config: key '" + key + "' needs a number");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "yes") return true;
    if (value == "0" || value == "false" || value == "no") return false;
    throw std::invalid_argument("config: key '" + key + "' needs a boolean");
}

}  // namespace

Matrix parse_matrix(const std::string& text) {
    const std::string body = trim(text);
    if (body.size() < 2 || body.front() != '[' || body.back() != ']')
        throw std::invalid_argument("matrix literal must be bracketed: " + text);
    std::vector<std::vector<double>> rows;
    std::istringstream in(body.substr(1, body.size() - 2));
    std::string row_text;
    while (std::getline(in, row_text, ';')) {
        std::replace(row_text.begin(), row_text.end(), ',', ' ');
        std::istringstream row(row_text);
        std::vector<double> entries;
        std::string tok;
        while (row >> tok) {
            size_t pos = 0;
            double v;
            try {
                v = std::stod(tok, &pos);
            } catch (const std::exception&) {
                throw std::invalid_argument("matrix entry is not a number: " + tok);
            }
            if (pos != tok.size())
                throw std::invalid_argument("matrix entry is not a number: " + tok);
            entries.push_back(v);
        }
        if (!entries.empty()) rows.push_back(std::move(entries));
    }
    if (rows.empty()) throw std::invalid_argument("matrix literal is empty");
    const size_t cols = rows[0].size();
    for (const auto& r : rows)
        if (r.size() != cols)
            throw std::invalid_argument("matrix rows have unequal lengths");
    Matrix out(rows.size(), cols);
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < cols; ++j) out(i, j) = rows[i][j];
    return out;
}

Vector parse_vector(const std::string& text) {
    Matrix m = parse_matrix(text);
    if (m.rows() == 1) return m.transpose().col(0);
    if (m.cols() == 1) return m.col(0);
    throw std::invalid_argument("vector literal must be one row or one column");
}

FileConfig parse_config(const std::string& text) {
    FileConfig cfg;
    bool seen_x0 = false, seen_w0 = false, seen_loss = false;

    std::istringstream in(text);
    std::string raw;
    std::string section;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw = raw.substr(0, hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": malformed section header");
            section = line.substr(1, line.size() - 2);
            if (section != "plant" && section != "cost" && section != "network" &&
                section != "mpc" && section != "sim" && section != "paths")
                throw std::invalid_argument("config: unknown section [" + section + "]");
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": empty key or value");

        if (section == "plant") {
            if (key == "A") cfg.plant.A = parse_matrix(value);
            else if (key == "B") cfg.plant.B = parse_matrix(value);
            else throw std::invalid_argument("config: unknown key " + key + " in [plant]");
        } else if (section == "cost") {
            if (key == "Q") cfg.plant.Q = parse_matrix(value);
            else if (key == "R") cfg.plant.R = parse_matrix(value);
            else throw std::invalid_argument("config: unknown key " + key + " in [cost]");
        } else if (section == "network") {
            if (key == "g") cfg.bucket.g = parse_long(key, value);
            else if (key == "c") cfg.bucket.c = parse_long(key, value);
            else if (key == "b") cfg.bucket.b = parse_long(key, value);
            else throw std::invalid_argument("config: unknown key " + key + " in [network]");
        } else if (section == "mpc") {
            SolverOptions& so = cfg.mpc.solver;
            if (key == "N") cfg.mpc.N = static_cast<int>(parse_long(key, value));
            else if (key == "P") cfg.mpc.P = static_cast<int>(parse_long(key, value));
            else if (key == "delta_max")
                cfg.mpc.delta_max = static_cast<int>(parse_long(key, value));
            else if (key == "X_H") cfg.mpc.X.H = parse_matrix(value);
            else if (key == "X_h") cfg.mpc.X.h = parse_vector(value);
            else if (key == "U_H") cfg.mpc.U.H = parse_matrix(value);
            else if (key == "U_h") cfg.mpc.U.h = parse_vector(value);
            else if (key == "exhaustive_cap")
                so.exhaustive_cap = static_cast<int>(parse_long(key, value));
            else if (key == "beam_width")
                so.beam_width = static_cast<int>(parse_long(key, value));
            else if (key == "refine_top")
                so.refine_top = static_cast<int>(parse_long(key, value));
            else if (key == "tree_newton_iters")
                so.tree_newton_iters = static_cast<int>(parse_long(key, value));
            else if (key == "descent_iters")
                so.descent_iters = static_cast<int>(parse_long(key, value));
            else if (key == "temperature_floor")
                so.temperature_floor = parse_double(key, value);
            else if (key == "threads")
                so.threads = static_cast<int>(parse_long(key, value));
            else throw std::invalid_argument("config: unknown key " + key + " in [mpc]");
        } else if (section == "sim") {
            if (key == "x0") { cfg.x0 = parse_vector(value); seen_x0 = true; }
            else if (key == "w0") { cfg.w0 = parse_vector(value); seen_w0 = true; }
            else if (key == "beta0") cfg.beta0 = parse_long(key, value);
            else if (key == "T") cfg.T = parse_long(key, value);
            else if (key == "loss") { cfg.loss = parse_loss_spec(value); seen_loss = true; }
            else if (key == "nominal") cfg.nominal = parse_bool(key, value);
            else if (key == "blowup") cfg.blowup = parse_double(key, value);
            else if (key == "tail_start") cfg.tail_start = parse_long(key, value);
            else if (key == "tail_threshold") cfg.tail_threshold = parse_double(key, value);
            else throw std::invalid_argument("config: unknown key " + key + " in [sim]");
        } else if (section == "paths") {
            if (key == "out") cfg.out_dir = value;
            else if (key == "ingredients") cfg.ingredients_path = value;
            else throw std::invalid_argument("config: unknown key " + key + " in [paths]");
        } else {
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": key outside any section");
        }
    }

    if (cfg.plant.A.size() == 0 || cfg.plant.B.size() == 0)
        throw std::invalid_argument("config: [plant] A and B are required");
    if (cfg.plant.Q.size() == 0 || cfg.plant.R.size() == 0)
        throw std::invalid_argument("config: [cost] Q and R are required");
    cfg.plant.validate();
    cfg.bucket.validate();
    cfg.mpc.validate(cfg.bucket.base_period());
    if (!seen_x0) cfg.x0 = Vector::Zero(cfg.plant.n());
    if (!seen_w0) cfg.w0 = Vector::Zero(cfg.plant.m());
    if (!seen_loss) cfg.loss = LossModelSpec{};
    if (cfg.x0.size() != cfg.plant.n())
        throw std::invalid_argument("config: x0 dimension does not match the plant");
    if (cfg.w0.size() != cfg.plant.m())
        throw std::invalid_argument("config: w0 dimension does not match the plant");
    if (!cfg.mpc.X.unconstrained() &&
        (cfg.mpc.X.H.cols() != cfg.plant.n() || cfg.mpc.X.h.size() != cfg.mpc.X.H.rows()))
        throw std::invalid_argument("config: X halfspace dimensions inconsistent");
    if (!cfg.mpc.U.unconstrained() &&
        (cfg.mpc.U.H.cols() != cfg.plant.m() || cfg.mpc.U.h.size() != cfg.mpc.U.H.rows()))
        throw std::invalid_argument("config: U halfspace dimensions inconsistent");
    return cfg;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot read file: " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot write file: " + path);
    out << content;
}

FileConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

SimConfig make_sim_config(const FileConfig& file, const TerminalIngredients& terminal) {
    SimConfig sim;
    sim.plant = file.plant;
    sim.bucket = file.bucket;
    sim.mpc = file.mpc;
    sim.terminal = terminal;
    sim.loss = file.loss;
    sim.x0 = file.x0;
    sim.w0 = file.w0;
    sim.beta0 = file.beta0;
    sim.T = file.T;
    sim.nominal = file.nominal;
    sim.blowup = file.blowup;
    sim.tail_threshold = file.tail_threshold;
    sim.tail_start = file.tail_start;
    return sim;
}

}  // namespace stmpc
