/* Compiled as C: the public header must not need a C++ compiler. */
#include "cdfkan/cdfkan.h"

#include <math.h>
#include <stdio.h>

int capi_c_smoke(void)
{
  cdfkan_hcr_model* m = NULL;
  int idx[2] = {1, 1};
  double x[2] = {0.5, 0.5};
  double rho = 0.0;
  if (cdfkan_hcr_uniform(2, 2, &m) != CDFKAN_OK)
    return 1;
  if (cdfkan_hcr_set_coeff(m, idx, 2, 0.3) != CDFKAN_OK)
    return 2;
  if (cdfkan_hcr_density(m, x, 2, &rho) != CDFKAN_OK || fabs(rho - 1.0) > 1e-15)
    return 3;
  cdfkan_hcr_free(m);
  return 0;
}
