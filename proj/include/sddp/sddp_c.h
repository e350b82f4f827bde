/* C API for the SDDP toolkit: opaque handles, integer status codes, and a
 * thread-local error message. All functions return SDDP_OK (0) on success;
 * on failure the out-parameters are untouched and sddp_last_error() holds a
 * description. */

#ifndef SDDP_C_H
#define SDDP_C_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sddp_status {
    SDDP_OK = 0,
    SDDP_ERR_CONFIG = 1,
    SDDP_ERR_DATA = 2,
    SDDP_ERR_NUMERIC = 3
} sddp_status;

/* Message from the most recent failing call on this thread. */
const char* sddp_last_error(void);

const char* sddp_version(void);

/* ------------------------------------------------------------------ */
/* Panels                                                               */

typedef struct sddp_panel sddp_panel;

/* Loads a CSV panel (one row per time point, columns = target plus
 * predictors). delimiter may be NULL (comma). */
sddp_status sddp_panel_load(const char* path, const char* target_column,
                            const char* delimiter, int has_header, sddp_panel** out);

/* Masked loader: empty CSV cells are missing; mask_path (nullable) points
 * to a sidecar 0/1 mask of the same shape. */
sddp_status sddp_panel_load_masked(const char* path, const char* mask_path,
                                   const char* target_column, const char* delimiter,
                                   int has_header, sddp_panel** out);

sddp_status sddp_panel_save(const sddp_panel* panel, const char* path);

/* Writes values plus the sidecar mask (all ones when the panel is fully
 * observed). */
sddp_status sddp_panel_save_masked(const sddp_panel* panel, const char* path,
                                   const char* mask_path);

sddp_status sddp_panel_dims(const sddp_panel* panel, int* n_out, int* t_out);

/* Fraction of covariate cells that are missing (0 for full panels). */
sddp_status sddp_panel_missing_fraction(const sddp_panel* panel, double* out);

sddp_status sddp_panel_split(const sddp_panel* panel, double train_fraction,
                             sddp_panel** train_out, sddp_panel** test_out);

/* MCAR corruption of the covariates, deterministic in seed. */
sddp_status sddp_panel_inject_missing(const sddp_panel* panel, double rate, uint64_t seed,
                                      sddp_panel** out);

void sddp_panel_free(sddp_panel* panel);

/* ------------------------------------------------------------------ */
/* Models                                                               */

typedef struct sddp_model sddp_model;

/* Fits the pipeline named by the config's first method on the full panel
 * described by the config file and writes the bundle. */
sddp_status sddp_train_file(const char* config_path, const char* bundle_path);

sddp_status sddp_model_load(const char* bundle_path, sddp_model** out);
sddp_status sddp_model_save(const sddp_model* model, const char* bundle_path);

/* Forecasts y_{t+h} for every position of the panel; writes a CSV with
 * columns t,prediction. */
sddp_status sddp_forecast(const sddp_model* model, const sddp_panel* panel,
                          const char* out_csv);

/* In-memory variant: fills predictions[0..n-1] where n = panel length. */
sddp_status sddp_forecast_values(const sddp_model* model, const sddp_panel* panel,
                                 double* predictions, int capacity, int* written);

void sddp_model_free(sddp_model* model);

/* ------------------------------------------------------------------ */
/* File-level runners (the CLI surface)                                 */

/* Generates the synthetic panel plus truth matrices into out_dir:
 * panel.csv, factors.csv, gstar_true.csv, common.csv, truth.json. */
sddp_status sddp_simulate_files(const char* config_path, const char* out_dir);

/* Runs the repetition experiment; writes report.json, report.csv and
 * runtimes.csv into out_dir. */
sddp_status sddp_evaluate_files(const char* config_path, const char* out_dir);

/* Min-max normalizes an error table CSV; writes normalized.csv and nce.csv
 * into out_dir. */
sddp_status sddp_normalize_files(const char* table_csv, const char* out_dir);

/* Factor-consistency study; writes study.csv and summary.json. */
sddp_status sddp_convergence_files(const char* config_path, const char* out_dir);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SDDP_C_H */
