#include <math.h>
#include <stdio.h>
#include <string.h>

#include "victimloc.h"

#define CHECK(expr)                                                          \
  do {                                                                       \
    VlStatus s_ = (expr);                                                    \
    if (s_ != VL_STATUS_OK) {                                                \
      const char *m_ = vl_last_error();                                      \
      fprintf(stderr, "%s -> %d: %s\n", #expr, (int)s_, m_ ? m_ : "");       \
      return 1;                                                              \
    }                                                                        \
  } while (0)

int main(void) {
  VlScenario *sc = NULL;
  CHECK(vl_scenario_generate(3, 6, 100.0, 7, &sc));
  VlChannelParams quiet = vl_channel_noiseless();
  double xy[6];
  bool converged = false;
  CHECK(vl_solve_trial(sc, VL_TECHNIQUE_TOA_COOP, &quiet, 0, 7, xy, 6, &converged));
  for (size_t i = 0; i < 3; i++) {
    double x, y;
    CHECK(vl_scenario_victim(sc, i, &x, &y));
    if (fabs(x - xy[2 * i]) > 1e-3 || fabs(y - xy[2 * i + 1]) > 1e-3) {
      fprintf(stderr, "victim %zu off\n", i);
      return 1;
    }
  }
  vl_scenario_free(sc);

  VlConfig *cfg = NULL;
  CHECK(vl_config_default(&cfg));
  CHECK(vl_config_set_trials(cfg, 4));
  VlTechnique t[] = {VL_TECHNIQUE_TOA_COOP, VL_TECHNIQUE_TDOA_NONCOOP};
  CHECK(vl_config_set_techniques(cfg, t, 2));
  VlResults *res = NULL;
  CHECK(vl_run_experiment(cfg, &res));
  if (vl_results_row_count(res) != 2) return 1;
  char *csv = NULL;
  CHECK(vl_results_to_csv(res, &csv));
  if (strstr(csv, "toa-coop,none,") == NULL) return 1;
  vl_string_free(csv);
  vl_results_free(res);
  if (vl_config_set_trials(cfg, 0) != VL_STATUS_CONFIG) return 1;
  vl_config_free(cfg);
  printf("ok %s\n", vl_version());
  return 0;
}
