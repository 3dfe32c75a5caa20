/* SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the cardioreg library. All functions return a cr_status;
 * on failure a message is available from cr_last_error() on the calling
 * thread until the next call. Handles are opaque and owned by the caller.
 */
#ifndef CARDIOREG_CARDIOREG_H
#define CARDIOREG_CARDIOREG_H

#include <stddef.h>
#include <stdint.h>

#if defined(CARDIOREG_BUILDING)
#define CR_API __attribute__((visibility("default")))
#else
#define CR_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cr_status {
  CR_OK = 0,
  CR_ERR_INVALID_ARGUMENT = 1,
  CR_ERR_CONFIG = 2,
  CR_ERR_TOPOLOGY = 3,
  CR_ERR_MALFORMED_HEADER = 4,
  CR_ERR_TRUNCATED_PAYLOAD = 5,
  CR_ERR_VERSION_MISMATCH = 6,
  CR_ERR_MISSING_INPUT = 7,
  CR_ERR_NON_CONVERGENCE = 8,
  CR_ERR_NON_FINITE = 9,
  CR_ERR_INTERNAL = 10
} cr_status;

typedef struct cr_config cr_config;
typedef struct cr_vae cr_vae;
typedef struct cr_regnet cr_regnet;
typedef struct cr_case cr_case;

CR_API const char* cr_version(void);
CR_API const char* cr_last_error(void);
CR_API const char* cr_status_name(cr_status s);
/* Process exit code for a status: 0 ok, 2 configuration or argument,
 * 3 data, 4 numerical. */
CR_API int cr_exit_code(cr_status s);

/* Strings are copied into buf (NUL-terminated, truncated to len). needed, when
 * non-null, receives the full length including the terminator. */

CR_API cr_status cr_config_default(cr_config** out);
CR_API cr_status cr_config_load(const char* path, cr_config** out);
CR_API cr_status cr_config_parse(const char* ini_text, cr_config** out);
CR_API cr_status cr_config_clone(const cr_config* cfg, cr_config** out);
CR_API void cr_config_free(cr_config* cfg);
/* key is "section.key"; the value is parsed as in the INI file. */
CR_API cr_status cr_config_set(cr_config* cfg, const char* key, const char* value);
CR_API cr_status cr_config_get(const cr_config* cfg, const char* key, char* buf, size_t len, size_t* needed);
CR_API cr_status cr_config_validate(const cr_config* cfg);
CR_API cr_status cr_config_to_ini(const cr_config* cfg, char* buf, size_t len, size_t* needed);
CR_API cr_status cr_config_hash(const cr_config* cfg, char* buf, size_t len, size_t* needed);
/* Default output location runs/<name>/<sub> when out is NULL or empty. */
CR_API cr_status cr_resolve_out(const cr_config* cfg, const char* out, const char* sub, char* buf, size_t len,
                                size_t* needed);

/* Pipeline commands. Output directories appear only on success. */
CR_API cr_status cr_simulate(const cr_config* cfg, const char* out_dir);
CR_API cr_status cr_train_vae(const cr_config* cfg, const char* data_dir, const char* out_dir);
/* vae_dir may be NULL unless reg.regulariser is "vae". */
CR_API cr_status cr_train_reg(const cr_config* cfg, const char* data_dir, const char* vae_dir, const char* out_dir);
/* source is a checkpoint directory, "gt" or "zero". */
CR_API cr_status cr_evaluate(const cr_config* cfg, const char* data_dir, const char* source, const char* out_dir);
CR_API cr_status cr_report(const cr_config* cfg, const char* const* eval_dirs, size_t n, const char* out_dir);
CR_API cr_status cr_sweep_alpha(const cr_config* cfg, const char* data_dir, const char* vae_dir, const char* out_dir);

/* Cases. Arrays are row-major; fields are [2,rows,cols] (u then v). */
CR_API cr_status cr_case_load(const char* case_dir, cr_case** out);
CR_API void cr_case_free(cr_case* c);
CR_API cr_status cr_case_shape(const cr_case* c, int* n_frames, int* rows, int* cols);
CR_API cr_status cr_case_frame(const cr_case* c, int t, double* image);
CR_API cr_status cr_case_mask(const cr_case* c, int t, uint8_t* labels);
CR_API cr_status cr_case_gt_field(const cr_case* c, int t, double* field);

/* VAE. grad is [n,4,rows,cols]; mask is [rows,cols] labels or NULL. */
CR_API cr_status cr_vae_load(const char* dir, cr_vae** out);
CR_API void cr_vae_free(cr_vae* v);
CR_API cr_status cr_vae_shape(const cr_vae* v, int* rows, int* cols, int* latent_dim);
CR_API cr_status cr_vae_score(cr_vae* v, const double* grad, int n, const uint8_t* mask, double* scores);
/* Convenience: score of the gradient of one field [2,rows,cols]. */
CR_API cr_status cr_vae_score_field(cr_vae* v, const double* field, const uint8_t* mask, double* score);

/* Registration. source and target are [n,rows,cols]; phi is [n,2,rows,cols]. */
CR_API cr_status cr_regnet_load(const char* dir, cr_regnet** out);
CR_API void cr_regnet_free(cr_regnet* r);
CR_API cr_status cr_regnet_shape(const cr_regnet* r, int* rows, int* cols);
CR_API cr_status cr_regnet_predict(cr_regnet* r, const double* source, const double* target, int n, double* phi);

#ifdef __cplusplus
}
#endif

#endif
