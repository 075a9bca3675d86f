#pragma once

#include "sdlab/config.hpp"

#include <string>
#include <vector>

namespace sdlab {

struct CommandResult {
    std::vector<std::string> files;
    std::vector<std::string> warnings;
    bool numerical_failure = false;
};

CorruptionMatrix corruption_from_config(const ExperimentConfig& cfg, double eta);

CommandResult cmd_trajectory(const ExperimentConfig& cfg);
CommandResult cmd_phase(const ExperimentConfig& cfg);
CommandResult cmd_approx_error(const ExperimentConfig& cfg);
CommandResult cmd_theory(const ExperimentConfig& cfg);
CommandResult cmd_ingest(const ExperimentConfig& cfg);

json theory_report(const ExperimentConfig& cfg);

// max pairwise l_inf distance between outputs sharing a true label
double class_dispersion(const OutputMatrix& om, const std::vector<int>& true_labels, int k);

// point on the regular K-gon spanned by the class vertices
std::pair<double, double> simplex_projection(const Vector& y);

int run_cli(int argc, char** argv);

} // namespace sdlab
