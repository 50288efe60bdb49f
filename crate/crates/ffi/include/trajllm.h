#ifndef TRAJLLM_H
#define TRAJLLM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TrajllmStatus {
  TRAJLLM_STATUS_OK = 0,
  TRAJLLM_STATUS_NULL_POINTER = 1,
  TRAJLLM_STATUS_INVALID_ARGUMENT = 2,
  TRAJLLM_STATUS_IO = 3,
  TRAJLLM_STATUS_FORMAT = 4,
  TRAJLLM_STATUS_CHECKPOINT = 5,
  TRAJLLM_STATUS_CONFIG = 6,
  TRAJLLM_STATUS_DIVERGED = 7,
  TRAJLLM_STATUS_BUFFER_TOO_SMALL = 8,
  TRAJLLM_STATUS_PANIC = 9,
} TrajllmStatus;

// A loaded or trained model.
typedef struct TrajllmModel TrajllmModel;

// An ordered set of scenes.
typedef struct TrajllmScenes TrajllmScenes;

typedef struct TrajllmMetrics {
  double min_ade;
  double min_fde;
  double miss_rate;
  size_t sample_count;
  size_t k_modes;
} TrajllmMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *trajllm_last_error(void);

// Number of predicted future steps per trajectory.
size_t trajllm_future_steps(void);

// Loads a checkpoint file.
//
// # Safety
// `path` must be a nul-terminated string and `out` a writable pointer.
enum TrajllmStatus trajllm_model_load(const char *path, struct TrajllmModel **out);

// Trains a model from a TOML configuration document. `val` may be null.
//
// # Safety
// `config_toml` must be a nul-terminated string, `train_scenes` and `val`
// handles from this library (or null for `val`), `out` writable.
enum TrajllmStatus trajllm_model_train(const char *config_toml,
                                       const struct TrajllmScenes *train_scenes,
                                       const struct TrajllmScenes *val,
                                       struct TrajllmModel **out);

// # Safety
// `model` must be a handle from this library and `path` a nul-terminated string.
enum TrajllmStatus trajllm_model_save(const struct TrajllmModel *model, const char *path);

// # Safety
// `model` must be a handle from this library and `out` writable.
enum TrajllmStatus trajllm_model_k_modes(const struct TrajllmModel *model, size_t *out);

// Frees a model handle; null is ignored.
//
// # Safety
// `model` must be null or a handle from this library not yet freed.
void trajllm_model_free(struct TrajllmModel *model);

// Reads a scene file.
//
// # Safety
// `path` must be a nul-terminated string and `out` writable.
enum TrajllmStatus trajllm_scenes_load(const char *path, struct TrajllmScenes **out);

// Generates `count` synthetic scenes. `templates` is a comma-separated list
// of template names cycled over.
//
// # Safety
// `templates` must be a nul-terminated string and `out` writable.
enum TrajllmStatus trajllm_scenes_synthesize(const char *templates,
                                             size_t count,
                                             double noise,
                                             uint64_t seed,
                                             struct TrajllmScenes **out);

// # Safety
// `scenes` must be a handle from this library and `path` a nul-terminated string.
enum TrajllmStatus trajllm_scenes_save(const struct TrajllmScenes *scenes, const char *path);

// # Safety
// `scenes` must be a handle from this library and `out` writable.
enum TrajllmStatus trajllm_scenes_len(const struct TrajllmScenes *scenes, size_t *out);

// Frees a scene-set handle; null is ignored.
//
// # Safety
// `scenes` must be null or a handle from this library not yet freed.
void trajllm_scenes_free(struct TrajllmScenes *scenes);

// Predicts scene `index`. Writes K mode probabilities to `pi` and the
// `K x steps x 2` mode locations, row-major, to `trajectories`. `scales`
// may be null; otherwise it receives the Laplace scales in the same layout.
// Returns `BufferTooSmall` if `pi_len < K` or a trajectory buffer holds
// fewer than `K * steps * 2` values.
//
// # Safety
// Handles must come from this library; each buffer must be valid for its
// stated length.
enum TrajllmStatus trajllm_predict(const struct TrajllmModel *model,
                                   const struct TrajllmScenes *scenes,
                                   size_t index,
                                   double *pi,
                                   size_t pi_len,
                                   double *trajectories,
                                   size_t trajectories_len,
                                   double *scales);

// Evaluates a model on a scene set; `k_modes` must match the model.
//
// # Safety
// Handles must come from this library and `out` must be writable.
enum TrajllmStatus trajllm_evaluate(const struct TrajllmModel *model,
                                    const struct TrajllmScenes *scenes,
                                    size_t k_modes,
                                    struct TrajllmMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAJLLM_H */
