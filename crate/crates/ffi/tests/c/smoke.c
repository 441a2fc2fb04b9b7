#include <math.h>
#include <stdio.h>
#include <string.h>

#include "eve.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            fprintf(stderr, "%s:%d: check failed: %s\n", __FILE__,    \
                    __LINE__, #cond);                                 \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    double p[4] = {0.6, 0.6, 0.6, 0.6};
    double v = 0.0;
    CHECK(eve_discovery_probability(p, 4, &v) == EVE_STATUS_OK);
    CHECK(fabs(v - 0.9744) < 1e-12);
    CHECK(eve_vote_accept_probability(0.8, 4, EVE_TIE_RULE_ACCEPT_TIE, &v) == EVE_STATUS_OK);
    CHECK(fabs(v - 0.9728) < 1e-12);
    CHECK(eve_count_ucas(3, 1, 3, 4) == 60);

    CHECK(eve_chernoff_error_bound(0.4, 4, &v) == EVE_STATUS_INVALID_ARGUMENT);
    CHECK(eve_last_error_message() != NULL);

    char *json = NULL;
    CHECK(eve_combined_success_json(NULL, &json) == EVE_STATUS_OK);
    CHECK(strstr(json, "\"combined\"") != NULL);
    eve_string_free(json);

    bool yes = false;
    CHECK(eve_parse_boolean_answer("Answer: no", &yes) == EVE_STATUS_OK);
    CHECK(!yes);

    EveMetrics m = eve_metrics_from_counts(2, 1, 1);
    CHECK(fabs(m.recall - 2.0 / 3.0) < 1e-12);

    EvePipeline *pipeline = NULL;
    CHECK(eve_pipeline_new("m_v = 7\n", NULL, &pipeline) == EVE_STATUS_INVALID_ARGUMENT);
    CHECK(pipeline == NULL);

    printf("eve %s: C smoke test ok\n", eve_version());
    return 0;
}
