#ifndef PLATEROD_H
#define PLATEROD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes. The values 2 to 4 coincide with the command-line exit codes.
 */
typedef enum PlaterodStatus {
  PLATEROD_STATUS_OK = 0,
  PLATEROD_STATUS_NULL_POINTER = 1,
  PLATEROD_STATUS_CONFIG = 2,
  PLATEROD_STATUS_NOT_CONVERGED = 3,
  PLATEROD_STATUS_NONPHYSICAL = 4,
  PLATEROD_STATUS_INVALID_ARGUMENT = 5,
  PLATEROD_STATUS_IO = 6,
  PLATEROD_STATUS_BUFFER_TOO_SMALL = 7,
  PLATEROD_STATUS_PANIC = 8,
} PlaterodStatus;

/*
 A configured model.
 */
typedef struct PlaterodModel PlaterodModel;

/*
 The outcome of a solve.
 */
typedef struct PlaterodSolution PlaterodSolution;

/*
 Small-data admissibility of the loads. `verdict` is 0 admissible,
 1 inadmissible, 2 indeterminate.
 */
typedef struct PlaterodAdmissibility {
  double fp_norm;
  double fr3_norm;
  double min_fr3;
  double threshold_p;
  double threshold_r;
  bool case1_holds;
  int32_t verdict;
} PlaterodAdmissibility;

/*
 One row of a δ-sweep.
 */
typedef struct PlaterodSweepRow {
  double delta;
  double elastic;
  double load;
  double total;
  double limit_energy;
  double gap;
  double min_det;
} PlaterodSweepRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *platerod_version(void);

/*
 Message of the last failure on this thread; empty after a success. Valid
 until the next call on the same thread.
 */
const char *platerod_last_error(void);

/*
 Builds a model from JSON config text. Relative table paths resolve
 against `base_dir`, which may be null for the current directory.

 # Safety
 `json` and a non-null `base_dir` must be NUL-terminated strings; `out` must
 be writable.
 */
enum PlaterodStatus platerod_model_from_json(const char *json,
                                             const char *base_dir,
                                             struct PlaterodModel **out);

/*
 Builds a model from a config file.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum PlaterodStatus platerod_model_from_file(const char *path, struct PlaterodModel **out);

/*
 Frees a model; null is ignored.

 # Safety
 `m` must come from this library and not be used afterwards.
 */
void platerod_model_free(struct PlaterodModel *m);

/*
 Number of nodal unknowns, all and unconstrained.

 # Safety
 `m` must be a live model; the outputs must be writable or null.
 */
enum PlaterodStatus platerod_model_dofs(const struct PlaterodModel *m, size_t *total, size_t *free);

/*
 Limit energy of a state of `len` nodal values.

 # Safety
 `state` must hold `len` values; `energy` must be writable.
 */
enum PlaterodStatus platerod_energy(const struct PlaterodModel *m,
                                    const double *state,
                                    size_t len,
                                    double *energy);

/*
 Admissibility of the configured loads.

 # Safety
 `m` must be a live model; `out` must be writable.
 */
enum PlaterodStatus platerod_check_forces(const struct PlaterodModel *m,
                                          struct PlaterodAdmissibility *out);

/*
 Minimizes the limit energy with the configured solver options. A solution
 is produced even when the solver does not converge; the status is then
 `NotConverged`.

 # Safety
 `m` must be a live model; `out` must be writable.
 */
enum PlaterodStatus platerod_solve(const struct PlaterodModel *m, struct PlaterodSolution **out);

/*
 Frees a solution; null is ignored.

 # Safety
 `s` must come from this library and not be used afterwards.
 */
void platerod_solution_free(struct PlaterodSolution *s);

/*
 Energy, iteration count and convergence flag of a solution.

 # Safety
 `s` must be a live solution; the outputs must be writable or null.
 */
enum PlaterodStatus platerod_solution_summary(const struct PlaterodSolution *s,
                                              double *energy,
                                              size_t *iterations,
                                              bool *converged);

/*
 Copies the nodal values of a solution. With `buf` null or `cap` too small
 only `len` is set (and `BufferTooSmall` returned for a short buffer).

 # Safety
 `buf` must hold `cap` values when non-null; `len` must be writable.
 */
enum PlaterodStatus platerod_solution_state(const struct PlaterodSolution *s,
                                            double *buf,
                                            size_t cap,
                                            size_t *len);

/*
 Rescaled 3D recovery energies of a solution for `n_deltas` decreasing
 thickness parameters at plateau parameter `n`, one row per δ.

 # Safety
 `deltas` must hold `n_deltas` values and `rows` room for as many rows.
 */
enum PlaterodStatus platerod_sweep(const struct PlaterodModel *m,
                                   const struct PlaterodSolution *s,
                                   uint32_t n,
                                   const double *deltas,
                                   size_t n_deltas,
                                   struct PlaterodSweepRow *rows);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLATEROD_H */
