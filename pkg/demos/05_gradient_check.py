"""Verify the tape's gradients against central finite differences.

Every loss mode (the full objective with and without augmented views, the
SupCon baseline, plain cross entropy) is differentiated on random small
instances and compared parameter-by-parameter against (L(t+h) - L(t-h)) / 2h.
"""

import time

from sslcl import gradcheck
from sslcl.trainer import RunConfig

start = time.time()
report = gradcheck(RunConfig(), instances_per_mode=4, seed=11)
print(report.summary())
print(f"\n{len(report.rows)} (mode, parameter-group) cells checked "
      f"in {time.time() - start:.1f}s")
