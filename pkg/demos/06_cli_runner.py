"""
Config-driven runs
==================

Every experiment can be described by a YAML file and run from the shell:

    spindd evolve --config demos/configs/evolve_pair.yaml
    spindd compare --config demos/configs/compare_ensemble.yaml --format structured
    spindd config-reference

The same path is available in Python. Results carry a provenance header
with a digest of the configuration, and the body is byte-identical for
identical configurations and seeds.
"""
from pathlib import Path

from spindd.runner import parse_config, run

configs = Path(__file__).resolve().parent / "configs"

res = run(parse_config((configs / "toggling_pair.yaml").read_text()))
print(res.render())

res = run(parse_config((configs / "scan_flip.yaml").read_text()))
print("\n".join(res.render().splitlines()[:8]))
print("mean final fidelity per flip error:", [round(m, 4) for m in res.extra["mean_final_fidelity"]])
