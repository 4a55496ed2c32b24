#include <stdio.h>
#include <string.h>
#include "sausage_perc.h"

int main(void) {
    double cap = 0.0;
    if (sp_ball_capacity(4, 1.0, &cap) != SP_STATUS_OK) return 1;
    if (cap < 19.7 || cap > 19.8) return 2;

    uint64_t count = 0;
    if (sp_count_star_contours(3, &count) != SP_STATUS_CONFIG) return 3;
    char msg[256];
    if (sp_last_error_message(msg, sizeof msg) != SP_STATUS_OK || strlen(msg) == 0) return 4;

    SpKernel *k = NULL;
    if (sp_kernel_single(0.5, &k) != SP_STATUS_OK) return 5;
    uint64_t extinct = 0;
    if (sp_kernel_extinction_count(k, 0, 200, 100, 7, &extinct) != SP_STATUS_OK) return 6;
    sp_kernel_free(k);
    if (extinct != 100) return 7;

    printf("ok\n");
    return 0;
}
