#ifndef AIVM_H
#define AIVM_H

/* Generated by cbindgen from crates/aivm-ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every API function.
 */
typedef enum AivmStatus {
  /**
   * Success.
   */
  AivmOk = 0,
  /**
   * A required pointer argument was null.
   */
  AivmNullArgument = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  AivmInvalidUtf8 = 2,
  /**
   * The query text did not parse.
   */
  AivmParseError = 3,
  /**
   * Planning failed (for example, the view tree limit was exceeded).
   */
  AivmPlanError = 4,
  /**
   * The relation name is not an atom of the query.
   */
  AivmUnknownRelation = 5,
  /**
   * The tuple arity does not match the relation schema.
   */
  AivmArityMismatch = 6,
  /**
   * Duplicate insert or delete of an absent tuple; the state is
   * unchanged.
   */
  AivmRejected = 7,
  /**
   * The enumeration procedure failed on an inconsistent plan.
   */
  AivmEnumerateError = 8,
} AivmStatus;

/**
 * Opaque engine instance.
 */
typedef struct AivmEngine AivmEngine;

/**
 * Opaque maintenance plan.
 */
typedef struct AivmPlan AivmPlan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Build a plan from query text such as `Q(A,B,C) = R(A,B), S(B,C)`.
 *
 * # Safety
 * `query` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AivmStatus aivm_plan_build(const char *query, struct AivmPlan **out);

/**
 * Restore a plan from its serialized text form.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AivmStatus aivm_plan_deserialize(const char *text, struct AivmPlan **out);

/**
 * Serialize a plan; reload it with `aivm_plan_deserialize`.
 *
 * # Safety
 * `plan` must be a live plan handle and `out` a valid pointer. Free the
 * result with `aivm_string_free`.
 */
enum AivmStatus aivm_plan_serialize(const struct AivmPlan *plan, char **out);

/**
 * Release a plan handle.
 *
 * # Safety
 * `plan` must be null or a handle not yet freed.
 */
void aivm_plan_free(struct AivmPlan *plan);

/**
 * Create an engine maintaining the plan's query over an empty database.
 *
 * # Safety
 * `plan` must be a live plan handle and `out` a valid pointer.
 */
enum AivmStatus aivm_engine_new(const struct AivmPlan *plan, struct AivmEngine **out);

/**
 * Release an engine handle.
 *
 * # Safety
 * `engine` must be null or a handle not yet freed.
 */
void aivm_engine_free(struct AivmEngine *engine);

/**
 * Insert one tuple given as string tokens in the relation's declared
 * variable order. Duplicate inserts return `AivmRejected` and leave the
 * state unchanged.
 *
 * # Safety
 * `tokens` must point to `arity` NUL-terminated strings.
 */
enum AivmStatus aivm_engine_insert(struct AivmEngine *engine,
                                   const char *relation,
                                   const char *const *tokens,
                                   uintptr_t arity);

/**
 * Delete one tuple; deletes of absent tuples return `AivmRejected`.
 *
 * # Safety
 * `tokens` must point to `arity` NUL-terminated strings.
 */
enum AivmStatus aivm_engine_delete(struct AivmEngine *engine,
                                   const char *relation,
                                   const char *const *tokens,
                                   uintptr_t arity);

/**
 * Current multiplicity-weighted result count.
 *
 * # Safety
 * `engine` must be a live engine handle and `out` a valid pointer.
 */
enum AivmStatus aivm_engine_count(const struct AivmEngine *engine, int64_t *out);

/**
 * Enumerate the current result, one `v1 v2 ... # mult` line per tuple in
 * sorted order, values in the query's head-variable order.
 *
 * # Safety
 * `engine` must be a live engine handle and `out` a valid pointer. Free
 * the result with `aivm_string_free`.
 */
enum AivmStatus aivm_engine_enumerate(struct AivmEngine *engine, char **out);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string not yet freed.
 */
void aivm_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* AIVM_H */
