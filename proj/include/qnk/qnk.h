#ifndef QNK_H
#define QNK_H

/* C interface to the quasineutral kinetic lab. Every call returns a status code; on failure
   qnk_last_error() describes the problem (thread-local, valid until the next failing call). */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define QNK_API __attribute__((visibility("default")))
#else
#define QNK_API
#endif

enum {
  QNK_OK = 0,
  QNK_E_INVALID_ARGUMENT = 1,
  QNK_E_DOMAIN = 2,
  QNK_E_CONFIG = 3,
  QNK_E_NUMERICAL = 4,
  QNK_E_RESOLUTION = 5,
  QNK_E_IO = 6,
  QNK_E_S_STABILITY = 7,
  QNK_E_TABLE_RANGE = 8,
  QNK_E_SOLVABILITY = 9,
  QNK_E_QUADRATURE = 10,
  QNK_E_EXTRAPOLATION = 11,
  QNK_E_BUFFER = 12,
  QNK_E_INTERNAL = 99
};

/* scenario kinds, also usable as bits (1 << kind) in a run filter */
enum {
  QNK_KIND_PENROSE_CHECK = 0,
  QNK_KIND_INSTABILITY = 1,
  QNK_KIND_STABLE_WELL_PREPARED = 2,
  QNK_KIND_STABLE_ILL_PREPARED = 3,
  QNK_KIND_BGK_BUILD = 4,
  QNK_KIND_ION_VARIANT = 5
};

#define QNK_RUN_PARALLEL 1u

/* scenario outcome */
enum { QNK_STATUS_OK = 0, QNK_STATUS_ASSERTION_FAILED = 1, QNK_STATUS_ERROR = 2 };

typedef struct qnk_config qnk_config;
typedef struct qnk_results qnk_results;
typedef struct qnk_profile qnk_profile;

QNK_API const char* qnk_last_error(void);
QNK_API const char* qnk_version(void);

/* Strings are copied into buf (NUL-terminated). *needed, when given, receives the full size including the NUL;
   a buffer that is too small yields QNK_E_BUFFER with buf holding a truncated copy. */

QNK_API int qnk_config_load(const char* path, qnk_config** out);
QNK_API int qnk_config_parse(const char* text, qnk_config** out);
QNK_API void qnk_config_free(qnk_config* cfg);
QNK_API int qnk_config_count(const qnk_config* cfg, size_t* n);
QNK_API int qnk_config_name(const qnk_config* cfg, size_t i, char* buf, size_t len, size_t* needed);
QNK_API int qnk_config_kind(const qnk_config* cfg, size_t i, int* kind);
/* fully resolved scenario text, the same content as config.resolved */
QNK_API int qnk_config_echo(const qnk_config* cfg, size_t i, char* buf, size_t len, size_t* needed);

/* kind_mask 0 runs every scenario; otherwise only kinds whose bit is set */
QNK_API int qnk_run(const qnk_config* cfg, const char* out_dir, unsigned flags, unsigned kind_mask, qnk_results** out);
QNK_API void qnk_results_free(qnk_results* r);
QNK_API int qnk_results_count(const qnk_results* r, size_t* n);
/* pointers stay valid until qnk_results_free */
QNK_API int qnk_results_get(const qnk_results* r, size_t i, const char** name, const char** dir, int* status,
                            const char** error);

/* profile spec: kind(key=value, ...), e.g. "two_stream(T=0.25, u=2)" */
QNK_API int qnk_profile_create(const char* spec, qnk_profile** out);
QNK_API void qnk_profile_free(qnk_profile* p);
QNK_API int qnk_profile_eval(const qnk_profile* p, double v, double* mu, double* dmu);
QNK_API int qnk_penrose(const qnk_profile* p, double alpha, int* unstable, size_t* minima);
QNK_API int qnk_penrose_integral(const qnk_profile* p, double vbar, double* value);
QNK_API int qnk_dispersion(const qnk_profile* p, int n, double lambda_re, double lambda_im, double M, double* d_re,
                           double* d_im);

/* quadrature identity and oracle suite; report text goes to buf, *passed is 1 when every line passes */
QNK_API int qnk_selftest(int* passed, char* buf, size_t len, size_t* needed);

#ifdef __cplusplus
}
#endif

#endif
