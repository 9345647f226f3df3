#pragma once

#include <string>

#include "stmpc/sim.hpp"

namespace stmpc {

/// Parsed experiment configuration file: flat sections of key = value lines,
/// matrices row-major in brackets, unknown keys rejected.
struct FileConfig {
    PlantModel plant;
    TokenBucketSpec bucket;
    MpcConfig mpc;

    Vector x0, w0;
    long beta0 = 0;
    long T = 1;
    LossModelSpec loss;
    bool nominal = false;
    double blowup = 1e6;
    double tail_threshold = 1e-2;
    long tail_start = 60;

    std::string out_dir = "out";
    std::string ingredients_path;
};

Matrix parse_matrix(const std::string& text);
Vector parse_vector(const std::string& text);

FileConfig parse_config(const std::string& text);
FileConfig load_config(const std::string& path);

/// Assembles the runnable simulation description.
SimConfig make_sim_config(const FileConfig& file, const TerminalIngredients& terminal);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace stmpc
