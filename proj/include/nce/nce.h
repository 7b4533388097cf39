#ifndef NCE_NCE_H
#define NCE_NCE_H

#include <stddef.h>
#include <stdint.h>

#if defined(NCE_BUILDING_LIBRARY)
#define NCE_API __attribute__((visibility("default")))
#else
#define NCE_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nce_status {
  NCE_OK = 0,
  NCE_ERR_INVALID_ARGUMENT = 1,
  NCE_ERR_CONFIG = 2,
  NCE_ERR_DOMAIN = 3,
  NCE_ERR_OUT_OF_SUPPORT = 4,
  NCE_ERR_NOT_POSITIVE_DEFINITE = 5,
  NCE_ERR_SINGULAR_A = 6,
  NCE_ERR_SINGULAR_H = 7,
  NCE_ERR_SINGULAR_OMEGA = 8,
  NCE_ERR_NON_FINITE_OBJECTIVE = 9,
  NCE_ERR_NON_FINITE_GRADIENT = 10,
  NCE_ERR_DID_NOT_CONVERGE = 11,
  NCE_ERR_LINE_SEARCH_FAILED = 12,
  NCE_ERR_MLE_DIVERGED = 13,
  NCE_ERR_REJECTION_STALL = 14,
  NCE_ERR_IO = 15,
  /* An experiment finished but at least one cell had no usable replication.
     The result is still produced. */
  NCE_PARTIAL_FAILURE = 16,
  NCE_ERR_INTERNAL = 17
} nce_status;

NCE_API const char* nce_status_string(nce_status status);
/* Message of the most recent failure on the calling thread ("" if none). */
NCE_API const char* nce_last_error(void);
NCE_API const char* nce_version(void);

/* ---- results ------------------------------------------------------------
   Every computation returns a JSON document. */
typedef struct nce_result nce_result;
NCE_API const char* nce_result_json(const nce_result* result);
NCE_API void nce_result_free(nce_result* result);

/* ---- configs ------------------------------------------------------------ */
typedef struct nce_config nce_config;
NCE_API nce_status nce_config_parse(const char* json_text, nce_config** out);
NCE_API nce_status nce_config_load(const char* path, nce_config** out);
/* The config with derived values (such as the normalizing c) filled in.
   Valid until the config is freed. */
NCE_API const char* nce_config_resolved_json(const nce_config* config);
NCE_API void nce_config_free(nce_config* config);

/* ---- fit ---------------------------------------------------------------- */
typedef struct nce_fit_options {
  const char* divergence; /* NULL: the config's, else "ojs" */
  int plugin;             /* nonzero: re-estimate beta by MLE first */
  int has_seed;
  uint64_t seed;          /* used when has_seed; else config seed or 1 */
  size_t m1;              /* 0: config value or 1000 */
  size_t m2;              /* 0: config value or 1000 */
} nce_fit_options;

NCE_API void nce_fit_options_init(nce_fit_options* options);
/* Draws a sample from the config's truth and auxiliary and fits alpha.
   Result: {alpha_hat, beta_hat?, objective, gradient_norm, iterations,
   converged, ...}. A fit that runs out of iterations still succeeds with
   converged = false. */
NCE_API nce_status nce_fit(const nce_config* config, const nce_fit_options* options, nce_result** out);

/* ---- asymptotic variance ------------------------------------------------ */
typedef struct nce_asvar_options {
  const char* divergence; /* NULL: the config's, else "ojs" */
  double lambda1;         /* <= 0: from the config, else 0.5 */
  const char* backend;    /* "quad" or "mc"; NULL: quad for gauss1d, mc otherwise */
  size_t draws;           /* Monte Carlo draws per stratum */
  uint64_t seed;
  unsigned workers;
  const char* scaled_by;  /* "m" or "m1" */
} nce_asvar_options;

NCE_API void nce_asvar_options_init(nce_asvar_options* options);
/* Sandwich blocks, asymptotic covariances, the optimal and lower-bound
   matrices, eigenvalue diagnostics and, where the auxiliary can match the
   truth, the special-case identity residuals. */
NCE_API nce_status nce_asvar(const nce_config* config, const nce_asvar_options* options, nce_result** out);
/* Only the identity residuals; "all_within_tolerance" is max residual <= 1e-4. */
NCE_API nce_status nce_validate(const nce_config* config, const nce_asvar_options* options, nce_result** out);

/* ---- experiments -------------------------------------------------------- */
typedef struct nce_experiment_options {
  int full;             /* nonzero: full sample-size grid and replications */
  unsigned workers;     /* 0: the plan's value */
  const char* out_dir;  /* NULL: write nothing */
  const char* format;   /* "csv", "json" or "svg" */
} nce_experiment_options;

NCE_API void nce_experiment_options_init(nce_experiment_options* options);
/* Runs the plan file and writes <name>.<format> (svg: one file per error
   component) plus resolved_plan.json into out_dir. The result summarizes
   the run. Returns NCE_PARTIAL_FAILURE when a cell has no usable
   replication. */
NCE_API nce_status nce_experiment(const char* plan_path, const nce_experiment_options* options, nce_result** out);

/* ---- divergences -------------------------------------------------------- */
typedef struct nce_divergence nce_divergence;
/* "kl", "chi2", "js", "ojs:<nu>" or "dpow:<beta>". */
NCE_API nce_status nce_divergence_parse(const char* name, nce_divergence** out);
/* f(x), f''(x) and psi(x) = f''(x) x; any output pointer may be NULL. */
NCE_API nce_status nce_divergence_eval(const nce_divergence* d, double x, double* f, double* fpp, double* psi);
NCE_API nce_status nce_divergence_is_robust(const nce_divergence* d, double bound, int* robust);
NCE_API void nce_divergence_free(nce_divergence* d);

#ifdef __cplusplus
}
#endif

#endif
