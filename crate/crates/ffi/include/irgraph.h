#ifndef IRGRAPH_H
#define IRGRAPH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum IrgStatus {
  IRG_STATUS_OK = 0,
  IRG_STATUS_NULL_POINTER = 1,
  IRG_STATUS_INVALID_UTF8 = 2,
  IRG_STATUS_PARSE = 3,
  IRG_STATUS_IO = 4,
  IRG_STATUS_INVALID_GRAPH = 5,
  IRG_STATUS_INVALID_MODEL = 6,
  IRG_STATUS_INVALID_ARGUMENT = 7,
  IRG_STATUS_SINGLE_CLASS = 8,
  IRG_STATUS_PANIC = 99,
} IrgStatus;

/**
 * A dependency graph.
 */
typedef struct IrgGraph IrgGraph;

/**
 * A trained classifier with its opcode vocabulary.
 */
typedef struct IrgModel IrgModel;

typedef struct IrgBuildOptions {
  bool control_edges;
  bool memory_edges;
} IrgBuildOptions;

typedef struct IrgTopoFeatures {
  size_t num_nodes;
  size_t num_edges;
  double avg_degree_centrality;
  double avg_closeness_centrality;
  double avg_betweenness_centrality;
} IrgTopoFeatures;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *irg_last_error(void);

/**
 * Library version as a static string.
 */
const char *irg_version(void);

/**
 * Parses `.ll` text and builds its dependency graph.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum IrgStatus irg_graph_from_ll(const char *text,
                                 struct IrgBuildOptions opts,
                                 struct IrgGraph **out);

/**
 * Parses dynamic-trace text and builds its dependency graph.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum IrgStatus irg_graph_from_trace(const char *text,
                                    struct IrgBuildOptions opts,
                                    struct IrgGraph **out);

/**
 * Loads a graph JSON file, or compiles a `.ll` / `.trace` file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum IrgStatus irg_graph_load(const char *path, struct IrgGraph **out);

/**
 * Canonical JSON form of a graph. Free the result with `irg_string_free`.
 *
 * # Safety
 * `graph` must be a live handle; `out` must be writable.
 */
enum IrgStatus irg_graph_to_json(const struct IrgGraph *graph, char **out);

/**
 * # Safety
 * `graph` must be a live handle; `out` must be writable.
 */
enum IrgStatus irg_graph_node_count(const struct IrgGraph *graph, size_t *out);

/**
 * # Safety
 * `graph` must be a live handle; `out` must be writable.
 */
enum IrgStatus irg_graph_edge_count(const struct IrgGraph *graph, size_t *out);

/**
 * # Safety
 * `graph` must be a live handle; `out` must be writable.
 */
enum IrgStatus irg_graph_topo_features(const struct IrgGraph *graph, struct IrgTopoFeatures *out);

/**
 * # Safety
 * `graph` must be null or a handle not yet freed.
 */
void irg_graph_free(struct IrgGraph *graph);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum IrgStatus irg_model_load(const char *path, struct IrgModel **out);

/**
 * Malicious-class probability of one graph.
 *
 * # Safety
 * `model` and `graph` must be live handles; `out` must be writable.
 */
enum IrgStatus irg_model_predict(const struct IrgModel *model,
                                 const struct IrgGraph *graph,
                                 double *out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void irg_model_free(struct IrgModel *model);

/**
 * Mann–Whitney AUROC of `len` scores against 0/1 labels.
 *
 * # Safety
 * `scores` and `labels` must each point to `len` readable elements.
 */
enum IrgStatus irg_auroc(const double *scores, const uint8_t *labels, size_t len, double *out);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void irg_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IRGRAPH_H */
