#include "rlab/experiments.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Stability experiments for gradient flows and small CNNs"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::vector<std::string> overrides;
    bool svg = false;
    for (const auto& e : rlab::experiment_catalog()) {
        CLI::App* sub = app.add_subcommand(e.name, e.summary);
        sub->add_option("--config", config_path, "YAML config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--set", overrides, "override one key, section.key=value (repeatable)");
        sub->add_option("--out", out_dir, "output directory (overrides the config's output key)");
        sub->add_flag("--svg", svg, "also write SVG charts");
    }
    CLI11_PARSE(app, argc, argv);
    const std::string name = app.get_subcommands().front()->get_name();

    rlab::Settings settings;
    try {
        settings.load_file(config_path);
        for (const auto& o : overrides) settings.apply_override(o);
        if (!out_dir.empty()) settings.set("output", out_dir);
        if (svg) settings.set("svg", true);
        rlab::validate_settings(settings);
    } catch (const rlab::ConfigError& e) {
        std::cerr << "restrain-lab: " << e.what() << "\n";
        return 2;
    }

    try {
        const auto t0 = std::chrono::steady_clock::now();
        const rlab::ExperimentOutput out = rlab::run_experiment(name, settings);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rlab::write_bundle(settings.text("output"), out, settings, wall, settings.flag("svg"));
        for (const auto& t : out.tables) std::cout << "# " << t.name << "\n" << t.csv();
        std::cout << "wrote " << settings.text("output") << "\n";
    } catch (const rlab::ConfigError& e) {
        std::cerr << "restrain-lab: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "restrain-lab: " << name << " failed: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
