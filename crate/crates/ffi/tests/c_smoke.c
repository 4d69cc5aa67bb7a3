#include <stdio.h>
#include <string.h>

#include "tcdtrack.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        TtStatus s_ = (call);                                              \
        if (s_ != TT_STATUS_OK) {                                          \
            const char *m_ = tt_last_error_message();                      \
            fprintf(stderr, "%s -> %d: %s\n", #call, s_, m_ ? m_ : "");    \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(int argc, char **argv) {
    if (argc != 3) {
        fprintf(stderr, "usage: c_smoke MODEL FRAME_DIR\n");
        return 2;
    }
    printf("tcdtrack %s\n", tt_version());

    double a[6] = {0, 0, 0, 1, 0, 0};
    double b[6] = {0, 0.5, 0, 1, 0.5, 0};
    TtPointCloud *ca = NULL, *cb = NULL;
    CHECK(tt_cloud_new(a, 2, 0, &ca));
    CHECK(tt_cloud_new(b, 2, 1, &cb));
    double d = 0;
    CHECK(tt_chamfer(ca, cb, &d));
    if (d != 1.0) {
        fprintf(stderr, "chamfer %g\n", d);
        return 1;
    }
    size_t small[1];
    if (tt_extract_correspondence(ca, cb, small, 1) != TT_STATUS_BUFFER_TOO_SMALL) return 1;
    tt_cloud_free(ca);
    tt_cloud_free(cb);

    TtModel *model = NULL;
    CHECK(tt_model_load(argv[1], &model));
    const TtPointCloud *frames[3];
    TtPointCloud *owned[3];
    for (int i = 0; i < 3; i++) {
        char path[4096];
        snprintf(path, sizeof path, "%s/frame_%04d.xyz", argv[2], i + 1);
        CHECK(tt_cloud_read_xyz(path, (size_t)i, &owned[i]));
        frames[i] = owned[i];
    }
    TtInferConfig cfg = tt_infer_config_default();
    cfg.iterations = 5;
    TtTrackingResult *result = NULL;
    CHECK(tt_track(model, frames, 3, &cfg, &result));
    size_t n = tt_cloud_len(frames[0]);
    size_t matches[4096];
    CHECK(tt_result_matches(result, 1, matches, n));
    for (size_t k = 0; k < n; k++) {
        if (matches[k] >= tt_cloud_len(frames[2])) return 1;
    }
    TtPointCloud *next = NULL;
    CHECK(tt_forecast(model, frames, 3, &cfg, &next));
    printf("pairs %zu, forecast %zu points\n", tt_result_pairs(result), tt_cloud_len(next));
    tt_cloud_free(next);
    tt_result_free(result);
    for (int i = 0; i < 3; i++) tt_cloud_free(owned[i]);
    tt_model_free(model);
    return 0;
}
