// Command-line front end for the SDDP toolkit. Talks to the core strictly
// through the shared-library C API.

#include <CLI11.hpp>

#include <cstdio>
#include <string>

#include "sddp/sddp_c.h"

namespace {

int finish(sddp_status status) {
    if (status != SDDP_OK) {
        std::fprintf(stderr, "error: %s\n", sddp_last_error());
    }
    return static_cast<int>(status);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Supervised deep dynamic PCA toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir, bundle_path, data_path, mask_path, out_csv, table_path;
    std::string target_column = "y";
    std::string delimiter = ",";
    bool no_header = false;

    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic panel and its truth");
    simulate->add_option("--config", config_path, "Config file with a [synthetic] section")
        ->required();
    simulate->add_option("--out-dir", out_dir, "Output directory")->required();

    auto* train = app.add_subcommand("train", "Fit a pipeline and write the model bundle");
    train->add_option("--config", config_path, "Config file")->required();
    train->add_option("--out", bundle_path, "Bundle output path")->required();

    auto* forecast = app.add_subcommand("forecast", "Forecast a panel with a trained bundle");
    forecast->add_option("--bundle", bundle_path, "Model bundle")->required();
    forecast->add_option("--data", data_path, "Panel CSV")->required();
    forecast->add_option("--out", out_csv, "Predictions CSV")->required();
    forecast->add_option("--target", target_column, "Target column (default y)");
    forecast->add_option("--mask", mask_path, "Sidecar mask CSV for masked panels");
    forecast->add_option("--delimiter", delimiter, "CSV delimiter (default ,)");
    forecast->add_flag("--no-header", no_header, "CSV has no header row");

    auto* evaluate = app.add_subcommand("evaluate", "Run the repetition experiment");
    evaluate->add_option("--config", config_path, "Config file")->required();
    evaluate->add_option("--out-dir", out_dir, "Output directory")->required();

    auto* normalize =
        app.add_subcommand("normalize", "Min-max normalize an error table and compute NCE");
    normalize->add_option("--table", table_path, "Error table CSV")->required();
    normalize->add_option("--out-dir", out_dir, "Output directory")->required();

    auto* convergence =
        app.add_subcommand("convergence", "Run the factor-consistency study");
    convergence->add_option("--config", config_path, "Config file")->required();
    convergence->add_option("--out-dir", out_dir, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    if (simulate->parsed()) {
        return finish(sddp_simulate_files(config_path.c_str(), out_dir.c_str()));
    }
    if (train->parsed()) {
        return finish(sddp_train_file(config_path.c_str(), bundle_path.c_str()));
    }
    if (forecast->parsed()) {
        sddp_model* model = nullptr;
        sddp_status status = sddp_model_load(bundle_path.c_str(), &model);
        if (status != SDDP_OK) return finish(status);

        sddp_panel* panel = nullptr;
        if (!mask_path.empty()) {
            status = sddp_panel_load_masked(data_path.c_str(), mask_path.c_str(),
                                            target_column.c_str(), delimiter.c_str(),
                                            no_header ? 0 : 1, &panel);
        } else {
            status = sddp_panel_load(data_path.c_str(), target_column.c_str(),
                                     delimiter.c_str(), no_header ? 0 : 1, &panel);
        }
        if (status != SDDP_OK) {
            sddp_model_free(model);
            return finish(status);
        }
        status = sddp_forecast(model, panel, out_csv.c_str());
        sddp_panel_free(panel);
        sddp_model_free(model);
        return finish(status);
    }
    if (evaluate->parsed()) {
        return finish(sddp_evaluate_files(config_path.c_str(), out_dir.c_str()));
    }
    if (normalize->parsed()) {
        return finish(sddp_normalize_files(table_path.c_str(), out_dir.c_str()));
    }
    if (convergence->parsed()) {
        return finish(sddp_convergence_files(config_path.c_str(), out_dir.c_str()));
    }
    return 0;
}
