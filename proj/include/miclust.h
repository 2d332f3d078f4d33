/* miclust: multiple imputation for cluster analysis on continuous data.
 *
 * C interface over the C++ core. All objects are opaque handles created and
 * destroyed by the library. Functions that can fail return an int status
 * code; on failure the thread-local message from mic_last_error() describes
 * what went wrong. Output handle parameters are written only on MIC_OK.
 *
 * Handles are not thread safe: do not share one handle between threads
 * without external synchronization. Distinct handles are independent.
 */

#ifndef MICLUST_H
#define MICLUST_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. The values 2 and 3 are chosen to match the exit codes of
 * the bundled command line tool. */
#define MIC_OK 0
#define MIC_ERR_UNKNOWN 1
#define MIC_ERR_PARSE 2          /* malformed CSV or config text */
#define MIC_ERR_CHAIN_FAILURE 3  /* imputation chain or model fit broke down */
#define MIC_ERR_INVALID 4        /* bad argument or unsatisfiable request */
#define MIC_ERR_IO 5             /* file could not be opened, read or written */

typedef struct mic_dataset mic_dataset;
typedef struct mic_imputation mic_imputation;
typedef struct mic_partition mic_partition;

/* Library version as "major.minor.patch". Static storage, do not free. */
const char* mic_version(void);

/* Message for the most recent failure on this thread. Empty string when the
 * last call succeeded. The pointer stays valid until the next library call
 * on the same thread. */
const char* mic_last_error(void);

/* ---- datasets ---------------------------------------------------------- */

/* Wrap an n x p row-major array of doubles. NaN cells are treated as
 * missing. The data is copied. */
int mic_dataset_create(long long n, long long p, const double* values,
                       mic_dataset** out);

/* Read a numeric CSV with a header row. Cells equal to na_token are
 * missing. When label_column is non-NULL and non-empty, that column is
 * detached and stored as the reference partition. */
int mic_dataset_load(const char* path, const char* na_token,
                     const char* label_column, mic_dataset** out);

/* Write a CSV with a header row; missing cells become na_token. A stored
 * reference partition is appended as a final "label" column. */
int mic_dataset_save(const mic_dataset* ds, const char* path,
                     const char* na_token);

/* Draw a complete dataset from one of the built-in simulation models
 * ("I" through "XI"). The reference partition records the generating
 * component of each row. */
int mic_dataset_simulate(const char* model_id, unsigned long long seed,
                         mic_dataset** out);

/* Mask cells of a complete dataset. mechanism is "mcar" or "mar"; tau in
 * [0, 1) is the target missing fraction. For "mar", driver_col (1-based)
 * selects the always-observed column that drives missingness; it is
 * ignored for "mcar". */
int mic_dataset_ampute(const mic_dataset* ds, const char* mechanism,
                       double tau, int driver_col, unsigned long long seed,
                       mic_dataset** out);

long long mic_dataset_rows(const mic_dataset* ds);
long long mic_dataset_cols(const mic_dataset* ds);

/* Cell value; NaN when missing or out of range. */
double mic_dataset_value(const mic_dataset* ds, long long i, long long j);

/* 1 when cell (i, j) is observed, 0 when missing or out of range. */
int mic_dataset_observed(const mic_dataset* ds, long long i, long long j);

/* 1 when a reference partition is stored. */
int mic_dataset_has_labels(const mic_dataset* ds);

/* Copy the reference partition into a fresh handle. Fails with
 * MIC_ERR_INVALID when none is stored. */
int mic_dataset_labels(const mic_dataset* ds, mic_partition** out);

void mic_dataset_free(mic_dataset* ds);

/* ---- imputation -------------------------------------------------------- */

/* Fill the missing cells of ds m times. engine is one of "jm_gl",
 * "jm_norm", "fcs_homo", "fcs_hetero", "fcs_norm". k is the number of
 * mixture classes for the cluster-aware engines (ignored by "jm_norm" and
 * "fcs_norm"). burn_in, thin and iterations tune the chain schedule; pass
 * -1 to keep the engine default. predictors_csv optionally restricts the
 * conditional models of the fcs engines to a 0/1 predictor matrix read
 * from that file; pass NULL for all predictors. Observed cells are copied
 * through bit for bit. */
int mic_impute(const mic_dataset* ds, const char* engine, int k, int m,
               long long burn_in, long long thin, long long iterations,
               const char* predictors_csv, unsigned long long seed,
               mic_imputation** out);

/* Number of completed copies. */
int mic_imputation_count(const mic_imputation* imp);

/* Completed copy `index` (0-based) as a fresh dataset handle. */
int mic_imputation_copy(const mic_imputation* imp, int index,
                        mic_dataset** out);

/* Write per-iteration chain statistics (mixture weights, means, average
 * covariance trace) as CSV for convergence checks. */
int mic_imputation_save_diagnostics(const mic_imputation* imp,
                                    const char* path);

void mic_imputation_free(mic_imputation* imp);

/* ---- clustering -------------------------------------------------------- */

/* Cluster a complete dataset into k groups. method is one of "kmeans",
 * "pam", "ward", "mixture". cov_model ("shared" or "per_cluster") applies
 * to "mixture" only; pass NULL for the default. standardize selects
 * per-column scaling before distance-based methods (pass -1 for the
 * method default: on for kmeans/pam/ward, off for mixture). */
int mic_cluster(const mic_dataset* ds, const char* method, int k,
                const char* cov_model, int standardize,
                unsigned long long seed, mic_partition** out);

int mic_partition_size(const mic_partition* part);
int mic_partition_k(const mic_partition* part);

/* Copy all labels (0..k-1) into `out`, which must hold
 * mic_partition_size(part) ints. */
int mic_partition_labels(const mic_partition* part, int* out);

/* One-column CSV with header "label", one integer per row. */
int mic_partition_save(const mic_partition* part, const char* path);
int mic_partition_load(const char* path, mic_partition** out);

void mic_partition_free(mic_partition* part);

/* ---- pooling ----------------------------------------------------------- */

/* Adjusted Rand index between two partitions of the same rows. */
int mic_ari(const mic_partition* a, const mic_partition* b, double* out);

/* Consensus partition of m partitions of the same rows into k groups:
 * the average co-membership matrix is factorized and the factorization
 * refined so the result minimizes total Mirkin distance to the inputs. */
int mic_pool(const mic_partition* const* parts, int m, int k,
             unsigned long long seed, mic_partition** out);

/* Stability of one clustering method on one complete dataset, estimated
 * from b pairs of bootstrap resamples (larger means less stable). */
int mic_instability(const mic_dataset* ds, const char* method, int k,
                    const char* cov_model, int standardize, int b,
                    unsigned long long seed, double* out);

/* Total instability of a pooled analysis: the average pairwise Mirkin
 * distance between the m partitions plus the average of their within-copy
 * instabilities (pass NULL for all-zero within values). */
int mic_total_instability(const mic_partition* const* parts, int m,
                          const double* within, double* out);

/* Scan k = 2..k_max: impute the dataset m times per candidate, cluster
 * each copy, and score the candidate by total instability with b
 * bootstrap pairs per copy. Writes a "k,total_instability" table to
 * table_csv when non-NULL and stores the minimizing k in best_k. */
int mic_choose_k(const mic_dataset* ds, const char* engine,
                 const char* method, int k_max, int m, int b,
                 const char* predictors_csv, unsigned long long seed,
                 const char* table_csv, int* best_k);

/* ---- experiments ------------------------------------------------------- */

/* Run a full simulate/impute/cluster/pool experiment described by a
 * key=value config file and write the results and summary CSVs named in
 * it. threads > 0 overrides the config's worker count. See the config
 * schema in the project README. */
int mic_experiment_run(const char* config_path, int threads);

#ifdef __cplusplus
}
#endif

#endif /* MICLUST_H */
