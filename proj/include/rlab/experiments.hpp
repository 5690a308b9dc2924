#pragma once

#include "rlab/cnn1.hpp"
#include "rlab/dataset.hpp"
#include "rlab/probes.hpp"
#include "rlab/report.hpp"
#include "rlab/settings.hpp"

#include <string>
#include <vector>

namespace rlab {

struct ExperimentEntry {
    std::string name;
    std::string summary;
    ExperimentOutput (*run)(const Settings&);
};

/// Every subcommand, in the order the help text lists them.
const std::vector<ExperimentEntry>& experiment_catalog();

/// Throws ConfigError for an unknown name.
const ExperimentEntry& find_experiment(const std::string& name);

/// Checks enumerated strings, list lengths and brackets that the schema
/// alone cannot, so a bad config fails before any work starts.
void validate_settings(const Settings& s);

ExperimentOutput run_experiment(const std::string& name, const Settings& s);

// Building blocks shared by the subcommands and their tests.

ClassifierParams classifier_params(const Settings& s);
SharpnessOptions sharpness_options(const Settings& s);

/// Synthetic set from dataset.*, or an IDX pair relabelled so that
/// dataset.keep[0] becomes 0 and every other kept label 1.
Dataset dataset_from(const Settings& s);

/// The nonlinear single-layer setup of nonlinear.* at time step dt.
Cnn1Config nonlinear_config(const Settings& s, double dt);
/// Its seeded initial kernel, init_scale * N(0, 1), flattened.
std::vector<double> nonlinear_init(const Settings& s);

}  // namespace rlab
