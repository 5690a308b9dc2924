#pragma once

#include "rlab/numkit.hpp"
#include "rlab/probes.hpp"
#include "rlab/settings.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rlab {

/// Shortest decimal that reads back to the same value in the given
/// precision; non-finite values print as inf, -inf, nan.
std::string format_number(double x, Precision p = Precision::Double);

inline constexpr const char* trajectory_header = "iteration,loss,grad_inf,state_inf,sharpness,rel_l1";

/// One row per recorded state; absent observables are empty fields.
std::string trajectory_csv(const TrajectoryRecord& rec, Precision p);

/// Parses trajectory_csv output back. Empty optional columns come back as
/// empty series; single empty sharpness cells as nullopt.
TrajectoryRecord parse_trajectory_csv(const std::string& csv);

/// A small result table; cells are preformatted.
struct Table {
    std::string name;  ///< file stem
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row);
    std::string csv() const;
    /// Cell of the first row whose `key_column` equals `key`.
    const std::string& lookup(const std::string& key_column, const std::string& key, const std::string& column) const;
};

struct Series {
    std::string name;
    std::vector<double> x, y;
};

/// Minimal line chart. Non-positive values are skipped on a log axis,
/// non-finite ones always.
struct Chart {
    std::string name;  ///< file stem
    std::string title, x_label, y_label;
    bool log_y = false;
    std::vector<Series> series;

    std::string svg() const;
};

/// Series of one observable against the iteration index.
Series iteration_series(const std::string& name, const std::vector<double>& values);

struct NamedTrajectory {
    std::string name;  ///< file stem
    TrajectoryRecord record;
    Precision precision = Precision::Double;
};

struct ExperimentOutput {
    std::string experiment;
    std::vector<Table> tables;
    std::vector<NamedTrajectory> trajectories;
    std::vector<Chart> charts;
    /// Free-form key/value facts echoed into the metadata.
    std::vector<std::pair<std::string, std::string>> facts;

    const Table& table(const std::string& name) const;
    const NamedTrajectory& trajectory(const std::string& name) const;
};

/// Writes the CSVs, optional SVGs, metadata.txt (flat key = value) and
/// resolved.yaml (re-runnable config) into dir, creating it.
void write_bundle(const std::filesystem::path& dir, const ExperimentOutput& out, const Settings& settings,
                  double wall_seconds, bool svg);

}  // namespace rlab
