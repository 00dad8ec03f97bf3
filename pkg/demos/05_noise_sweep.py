"""A reduced noise sweep through the experiment runner, written to CSV."""
# %%
import tempfile
from pathlib import Path

from qsvr.experiments import ExperimentConfig, emit_reports, run_noise_sweep

config = ExperimentConfig(noise_kinds=("bitflip", "amplitude_damping"),
                          noise_strengths=(0.01, 0.1, 0.3), miscalibration_steps=5)
records = run_noise_sweep(config)

# %%
for r in sorted(records, key=lambda r: r.sort_key):
    print(f"{r.channel:18s} p={r.strength:<7.4g} AUC {r.auc:.3f}")

# %% plot-ready CSVs
with tempfile.TemporaryDirectory() as tmp:
    for path in emit_reports(records, Path(tmp)):
        print(path.name, len(path.read_text().splitlines()) - 1, "rows")
