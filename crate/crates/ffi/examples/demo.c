#include <stdio.h>
#include "v2i.h"

int main(void) {
    V2iFixedPoint fp;
    if (v2i_fixed_point(10, 32, 7, 1e-10, &fp) != V2I_STATUS_OK) {
        fprintf(stderr, "%s\n", v2i_last_error_message());
        return 1;
    }
    printf("tau=%.12f p_c=%.12f\n", fp.tau, fp.p_c);

    V2iScenario *sc = NULL;
    if (v2i_scenario_parse("[traffic]\nv_kmh = 80\n", &sc) != V2I_STATUS_OK) {
        fprintf(stderr, "%s\n", v2i_last_error_message());
        return 1;
    }
    V2iMetrics m;
    V2iStatus st = v2i_solve(sc, &m);
    if (st == V2I_STATUS_OK) {
        printf("stations=%.0f delay=%.6f\n", m.stations, m.t_delay_weighted);
    }
    if (v2i_scenario_set(sc, "traffic.v_kmh", "500") != V2I_STATUS_UNIT_VIOLATION) {
        return 1;
    }
    v2i_scenario_free(sc);
    return st == V2I_STATUS_OK ? 0 : 1;
}
