"""
Running a scenario end to end
=============================

The command line runs the whole verification pipeline on a named scenario
and writes a JSON report plus CSV grids and gnuplot scripts.  The same entry
point is callable from Python.
"""

import json
import os
import tempfile

from mafoliation.cli import main

out = tempfile.mkdtemp()
status = main(["report", "heisenberg-reeb", "--out", out, "--jobs", "1"], out=open(os.devnull, "w"))
print("exit status:", status)
print(sorted(os.listdir(out)))

with open(os.path.join(out, "report.json")) as fh:
    rep = json.load(fh)
for r in rep["rules"]:
    print(f"{r['name']:>14} {r['value']:.2e} {'<=' if r['op'] == 'le' else '>='} {r['threshold']:.0e}  "
          f"{'ok' if r['pass'] else 'FAIL'}")

# %%
# The perturbed scenario is the negative control; its verdict is "fail".
status = main(["verify", "sphere-perturbed", "--jobs", "1"], out=open(os.devnull, "w"))
print("sphere-perturbed exit status:", status)

# Plot a leaf with:  gnuplot -p <out>/leaf_1.gp
