/* Minimal caller of the C interface: build one scripted pair of rank paths,
 * run detection, and print the accepted period.
 *
 *   cc -Iinclude examples/demo.c target/debug/libmementum_ffi.a \
 *      -lm -lpthread -ldl -o demo
 */
#include <stdio.h>
#include <string.h>
#include "mementum.h"

int main(void) {
    /* 30 trading days; both pairs hold rank 1 (state 2) on days 8..15. */
    uint8_t pr[30], vol[30];
    int64_t days[30];
    for (int i = 0; i < 30; i++) {
        pr[i] = 1;
        vol[i] = 1;
        days[i] = 18631 + i; /* 2021-01-04 onward, days since 1970-01-01 */
    }
    for (int i = 8; i <= 15; i++) {
        pr[i] = 2;
        vol[i] = 2;
    }

    MementumReportHandle *rep = NULL;
    MementumStatus st =
        mementum_detect(pr, vol, 30, days, 2, 2, 1, 1, false, &rep);
    if (st != MEMENTUM_STATUS_OK) {
        fprintf(stderr, "detect failed: %s\n", mementum_last_error());
        return 1;
    }

    size_t n = mementum_report_n_periods(rep);
    printf("version=%s periods=%zu\n", mementum_version(), n);
    for (size_t i = 0; i < n; i++) {
        size_t s, e;
        int64_t ds, de;
        if (mementum_report_period(rep, i, &s, &e) != MEMENTUM_STATUS_OK ||
            mementum_report_period_dates(rep, i, &ds, &de) != MEMENTUM_STATUS_OK) {
            fprintf(stderr, "accessor failed: %s\n", mementum_last_error());
            mementum_report_free(rep);
            return 1;
        }
        printf("period %zu: days [%zu, %zu], epoch [%lld, %lld]\n", i, s, e,
               (long long)ds, (long long)de);
    }
    mementum_report_free(rep);

    /* Failed calls return a negative status and leave a message. */
    st = mementum_detect(NULL, vol, 30, days, 2, 2, 1, 1, false, &rep);
    if (st != MEMENTUM_STATUS_ERR_NULL_POINTER ||
        strlen(mementum_last_error()) == 0) {
        return 1;
    }
    printf("null input rejected: %s\n", mementum_last_error());
    return 0;
}
