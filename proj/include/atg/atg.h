#ifndef ATG_ATG_H
#define ATG_ATG_H

/* C interface to the tracking library. Every object is an opaque handle
   created by *_new / *_load and released by the matching *_free. Calls
   that can fail return an atg_status; atg_last_error() then describes the
   failure for the calling thread. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum atg_status {
  ATG_OK = 0,
  ATG_ERR_VALIDATION = 1, /* a domain object failed its invariants */
  ATG_ERR_USAGE = 2,      /* precondition broken by the caller */
  ATG_ERR_NUMERIC = 3,    /* non-finite value */
  ATG_ERR_CONFIG = 4,     /* bad or unknown configuration key */
  ATG_ERR_IO = 5,
  ATG_ERR_INTERNAL = 6
} atg_status;

const char* atg_last_error(void);
const char* atg_status_name(atg_status status);
const char* atg_version(void);

/* ------------------------------------------------------------- config */

typedef struct atg_config atg_config;

atg_status atg_config_new(atg_config** out);
atg_status atg_config_load(const char* path, atg_config** out);
/* `key` is dotted ("train.alpha"); unknown keys fail with ATG_ERR_CONFIG. */
atg_status atg_config_set(atg_config* cfg, const char* key, const char* value);
/* Value of `key` (unquoted), valid until the next call on `cfg`; NULL and
   ATG_ERR_CONFIG via atg_last_error() for unknown keys. */
const char* atg_config_get(atg_config* cfg, const char* key);
atg_status atg_config_validate(const atg_config* cfg);
atg_status atg_config_save(const atg_config* cfg, const char* path);
/* Resolved YAML text, valid until the next call on `cfg`. */
const char* atg_config_text(atg_config* cfg);
void atg_config_free(atg_config* cfg);

/* ------------------------------------------------------- environments */

size_t atg_env_suite_size(void);
const char* atg_env_suite_name(size_t index); /* NULL when out of range */

/* Action indices 0..5: turn-left, turn-right, turn-left-and-move-forward,
   turn-right-and-move-forward, move-forward, no-op. */
int atg_action_from_name(const char* name); /* -1 when unknown */
const char* atg_action_name(int action);    /* NULL when out of range */

typedef struct atg_env atg_env;

/* `env` is a suite name or a spec file; NULL uses the config's env. */
atg_status atg_env_new(const atg_config* cfg, const char* env, atg_env** out);
atg_status atg_env_reset(atg_env* env, uint64_t seed);
atg_status atg_env_step(atg_env* env, int action, double* reward, int* terminal);
/* Copies the current frame as interleaved RGB bytes, row-major. Pass NULL
   to query the size through `size`. */
atg_status atg_env_observation(const atg_env* env, uint8_t* buf, size_t cap, size_t* size,
                               int* width, int* height, int* channels);
atg_status atg_env_local(const atg_env* env, double* x, double* y, double* a);
atg_status atg_env_progress(const atg_env* env, int* step, double* accumulated_reward);
void atg_env_free(atg_env* env);

/* --------------------------------------------------------------- runs */

typedef struct atg_train_result {
  int64_t global_steps;
  uint64_t updates;
  double best_validation_ar;
  size_t validations;
} atg_train_result;

typedef struct atg_eval_result {
  size_t episodes;
  double ar_mean;
  double ar_std;
  double el_mean;
  double el_std;
} atg_eval_result;

typedef struct atg_saliency_result {
  int frames;
  double mean_inside_fraction;
  double mean_box_fraction;
} atg_saliency_result;

typedef struct atg_replay_result {
  double trace_ar;
  double replay_ar;
  int trace_el;
  int replay_el;
  double max_reward_diff;
  int ok;
} atg_replay_result;

/* Progress callback for training: (global_step, validation AR) after each
   validation. May be NULL. */
typedef void (*atg_validation_fn)(int64_t global_step, double ar_mean, double el_mean,
                                  void* user);

/* All runs write into `out_dir`, creating it if needed. */
atg_status atg_train(const atg_config* cfg, const char* out_dir, atg_validation_fn on_validation,
                     void* user, atg_train_result* out);
atg_status atg_eval(const atg_config* cfg, const char* checkpoint, const char* out_dir,
                    atg_eval_result* out);
atg_status atg_baseline(const atg_config* cfg, const char* out_dir, atg_eval_result* out);
atg_status atg_saliency(const atg_config* cfg, const char* checkpoint, const char* out_dir,
                        atg_saliency_result* out);
/* `env` NULL and `seed` < 0 take both from the trace file name when it
   has the <env>_seed<k>.jsonl form, else from the config. */
atg_status atg_replay(const atg_config* cfg, const char* trace, const char* env, int64_t seed,
                      atg_replay_result* out);

/* ------------------------------------------------------------- server */

typedef struct atg_server atg_server;

/* Binds immediately; port 0 picks a free port. */
atg_status atg_server_new(const atg_config* cfg, const char* host, uint16_t port,
                          atg_server** out);
uint16_t atg_server_port(const atg_server* server);
/* Blocks until atg_server_stop is called from another thread. */
atg_status atg_server_run(atg_server* server);
void atg_server_stop(atg_server* server);
void atg_server_free(atg_server* server);

#ifdef __cplusplus
}
#endif

#endif /* ATG_ATG_H */
