#include <stdio.h>
#include <string.h>

#include "resest.h"

int main(void) {
    ResestGraph *g = NULL;
    if (resest_graph_complete(5, &g) != RESEST_STATUS_OK) return 1;
    size_t sources[] = {1, 2, 3};
    bool robust = false;
    if (resest_check_robust(g, sources, 3, 3, &robust) != RESEST_STATUS_OK || !robust) return 2;
    resest_graph_free(g);

    ResestScenario *s = NULL;
    ResestTrace *t = NULL;
    if (resest_scenario_bundled("two_sources_not_robust", &s) != RESEST_STATUS_OK) return 3;
    if (resest_simulate(s, &t) != RESEST_STATUS_CONFIG_INVALID) return 4;
    char *msg = resest_last_error();
    if (msg == NULL || strstr(msg, "robust") == NULL) return 5;
    resest_string_free(msg);
    resest_scenario_free(s);

    if (resest_scenario_bundled("clique5_swlfse", &s) != RESEST_STATUS_OK) return 6;
    if (resest_simulate(s, &t) != RESEST_STATUS_OK) return 7;
    double e = 1.0;
    if (resest_trace_state_error(t, resest_trace_steps(t) - 1, 0, &e) != RESEST_STATUS_OK) return 8;
    printf("final error %g\n", e);
    resest_trace_free(t);
    resest_scenario_free(s);
    return e < 1e-6 ? 0 : 9;
}
