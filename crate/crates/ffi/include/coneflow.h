#ifndef CONEFLOW_H
#define CONEFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Grid layout selector for [`cf_grid_new`].
 */
#define CF_MODE_AXISYMMETRIC 0

#define CF_MODE_FULL2D 1

/**
 * Status codes returned by every fallible call.
 */
typedef enum CfStatus {
  CF_OK = 0,
  CF_NULL_POINTER = 1,
  CF_INVALID_ARGUMENT = 2,
  CF_CONE_NOT_CONVEX = 3,
  CF_NOT_STAR_SHAPED = 4,
  CF_NOT_MEAN_CONVEX = 5,
  CF_NUMERICAL_FAILURE = 6,
  CF_BUFFER_TOO_SMALL = 7,
  CF_PANIC = 8,
} CfStatus;

/**
 * Opaque discretized cap.
 */
typedef struct CfGrid CfGrid;

/**
 * Opaque recorded flow run.
 */
typedef struct CfTrajectory CfTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a cap grid. `n_psi` is ignored for axisymmetric grids.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CfStatus cf_grid_new(size_t n_dim,
                          double theta_max,
                          size_t n_theta,
                          size_t n_psi,
                          uint32_t mode,
                          struct CfGrid **out);

/**
 * # Safety
 * `grid` must be null or a handle from [`cf_grid_new`] not yet freed.
 */
void cf_grid_free(struct CfGrid *grid);

/**
 * Number of nodes, or 0 for a null handle.
 *
 * # Safety
 * `grid` must be null or a live handle.
 */
size_t cf_grid_node_count(const struct CfGrid *grid);

/**
 * Quadrature of `values` over the cap against the round measure.
 *
 * # Safety
 * `grid` must be a live handle, `values` must point to `len` doubles and
 * `out` to one writable double.
 */
enum CfStatus cf_grid_integrate(const struct CfGrid *grid,
                                const double *values,
                                size_t len,
                                double *out);

/**
 * Mean curvature of the radial graph `u`, one value per node.
 *
 * # Safety
 * `u` and `h_out` must point to `len` readable and writable doubles.
 */
enum CfStatus cf_graph_mean_curvature(const struct CfGrid *grid,
                                      const double *u,
                                      size_t len,
                                      double *h_out);

/**
 * Integrates the flow from `u0` to `t_end` with default stepping and
 * records every `record_every` steps.
 *
 * # Safety
 * `u0` must point to `len` doubles and `out` to writable storage for one
 * handle.
 */
enum CfStatus cf_run_flow(const struct CfGrid *grid,
                          const double *u0,
                          size_t len,
                          double alpha,
                          double t_end,
                          size_t record_every,
                          struct CfTrajectory **out);

/**
 * Number of recorded samples, or 0 for a null handle.
 *
 * # Safety
 * `traj` must be null or a live handle.
 */
size_t cf_traj_sample_count(const struct CfTrajectory *traj);

/**
 * Number of values in one sample row.
 */
size_t cf_traj_sample_width(void);

/**
 * Copies sample `index` into `row` in timeseries column order.
 *
 * # Safety
 * `row` must point to `len` writable doubles.
 */
enum CfStatus cf_traj_sample(const struct CfTrajectory *traj,
                             size_t index,
                             double *row,
                             size_t len);

/**
 * 1 if the run reached its end time, 0 if it stopped early or `traj` is null.
 *
 * # Safety
 * `traj` must be null or a live handle.
 */
int32_t cf_traj_completed(const struct CfTrajectory *traj);

/**
 * Copies the final radius field into `out` and its time into `t_out` when
 * non-null.
 *
 * # Safety
 * `out` must point to `len` writable doubles; `t_out` may be null.
 */
enum CfStatus cf_traj_final_u(const struct CfTrajectory *traj,
                              double *out,
                              size_t len,
                              double *t_out);

/**
 * # Safety
 * `traj` must be null or a handle from [`cf_run_flow`] not yet freed.
 */
void cf_traj_free(struct CfTrajectory *traj);

/**
 * Copies the calling thread's last error message, NUL-terminated and
 * truncated to fit, into `buf`. Returns the full message length without the
 * terminator; pass a null `buf` to query it.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t cf_last_error_message(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONEFLOW_H */
