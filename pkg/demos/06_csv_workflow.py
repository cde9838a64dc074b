"""End-to-end file workflow: CSV in, structured and table reports out.

Steps:
  1. simulate a dataset and export it as a plain CSV with a header row;
  2. describe the column roles in a schema JSON (which column is the
     outcome, the treatment, a TCP, an OCP, a covariate);
  3. load it back with `load_csv`, which validates shapes and reports
     how many rows were read and dropped;
  4. estimate the treatment effect from the loaded dataset;
  5. run the same analysis through the `proxsel estimate` CLI, writing a
     machine-readable report and a human-readable table.

Run: python demos/06_csv_workflow.py
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

from proxsel import (
    SchemaMap,
    SimConfig,
    estimate_invalid_tcp_ocp,
    generate_invalid_tcp_ocp_data,
    load_csv,
)

workdir = Path(tempfile.mkdtemp(prefix="proxsel_demo_"))
config = SimConfig(n=500, p_z=4, s_z=1, p_w=3, s_w=1, y_noise_sd=1.0, seed=5)
data = generate_invalid_tcp_ocp_data(config, rep_index=0)

# --- 1. export ---------------------------------------------------------
tcp_names = [f"z{j + 1}" for j in range(data.p_z)]
ocp_names = [f"w{k + 1}" for k in range(data.p_w)]
header = ["y", "d", *tcp_names, *ocp_names]
csv_path = workdir / "study.csv"
with open(csv_path, "w", encoding="utf-8") as handle:
    handle.write(",".join(header) + "\n")
    for i in range(data.n):
        cells = [data.Y[i], data.D[i], *data.Z[i], *data.W[i]]
        handle.write(",".join(repr(float(c)) for c in cells) + "\n")
    handle.write("NA," + ",".join("0" for _ in header[1:]) + "\n")  # missing outcome
print(f"wrote {csv_path} ({data.n} good rows + 1 with a missing outcome)")

# --- 2. schema ---------------------------------------------------------
schema = SchemaMap(
    outcome_column="y",
    treatment_column="d",
    tcp_columns=tuple(tcp_names),
    ocp_columns=tuple(ocp_names),
    covariate_columns=(),
)
schema_path = workdir / "schema.json"
schema_path.write_text(json.dumps(schema.to_dict(), indent=2), encoding="utf-8")

# --- 3. load -----------------------------------------------------------
loaded = load_csv(str(csv_path), schema)
print(
    f"loaded {loaded.dataset.n} rows "
    f"(read {loaded.n_rows_read}, dropped {loaded.n_rows_dropped} with "
    "missing values)"
)

# --- 4. estimate in-process -------------------------------------------
est = estimate_invalid_tcp_ocp(loaded.dataset)
print(
    f"median-over-OCPs estimate: {est.beta_hat:.4f}"
    f"  (true effect {config.beta_true})"
)

# --- 5. the same run through the CLI -----------------------------------
structured = workdir / "report.json"
table = workdir / "report.txt"
base = [
    sys.executable, "-m", "proxsel.cli", "estimate",
    "--data", str(csv_path), "--schema", str(schema_path),
    "--mode", "median", "--lenient",
    "--subsample-n", "50", "--seed", "0",
]
subprocess.run([*base, "--out", str(structured)], check=True,
               capture_output=True)
subprocess.run([*base, "--out", str(table), "--format", "table"], check=True,
               capture_output=True)

report = json.loads(structured.read_text(encoding="utf-8"))
print(f"\nCLI structured report ({structured}):")
print(f"  beta_hat = {report['estimate']['beta_hat']:.4f}")
print(f"  95% CI   = [{report['estimate']['ci_lower']:.4f}, "
      f"{report['estimate']['ci_upper']:.4f}] "
      f"({report['estimate']['ci_method']})")

print(f"\nCLI table report ({table}):")
for line in table.read_text(encoding="utf-8").splitlines():
    print(f"  {line}")
