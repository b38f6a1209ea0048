"""Train the link-graph network at desk scale and compare every method.

Uses the smoke profile (2 BSs, 4 antennas, 2 users, one target) so the
whole script runs in about two minutes on a laptop CPU.

Run:  python demos/03_train_and_compare.py
"""

import os
import time

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from coisac.baselines import build_model, random_beamformer, reference_beamformer
from coisac.channel import synth_channels
from coisac.profiles import PROFILES, scenario_profile, train_profile
from coisac.training import (default_gamma, evaluate_beams, model_beams, train)

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

cfg = scenario_profile("smoke")
train_set = synth_channels(cfg, 128, seed=7)
held_set = synth_channels(cfg, 64, seed=99)
gamma = default_gamma(cfg, train_set[:32])
print(f"bound threshold from the reference beamformer: gamma = {gamma:.3f} m^2")

reports = {}
results = {}
for method in ("lhgnn", "lhgnn_no_attention", "homo_gnn", "naive_conv"):
    tcfg = train_profile("smoke")
    tcfg.seed = 3
    tcfg.speb_limit = gamma
    torch.manual_seed(tcfg.seed)
    model = build_model(method, cfg, schedule=PROFILES["smoke"]["schedule"],
                        head_width=PROFILES["smoke"]["head_width"])
    t0 = time.time()
    model, report = train(model, train_set, cfg, tcfg)
    beams = model_beams(model, held_set, cfg)
    results[method] = evaluate_beams(beams, held_set, cfg, gamma=gamma)
    reports[method] = report
    print(f"{method:20s} {time.time()-t0:5.1f}s  held-out rate "
          f"{results[method]['mean_sum_rate']:.2f}  bound "
          f"{results[method]['mean_speb']:.2f}  violations "
          f"{results[method]['viol_speb_frac']:.1%}")

for name, beams_fn in (("reference", lambda s: reference_beamformer(s, cfg)),
                       ("random", lambda s: random_beamformer(0, cfg))):
    beams = np.stack([beams_fn(s) for s in held_set])
    results[name] = evaluate_beams(beams, held_set, cfg, gamma=gamma)
    print(f"{name:20s}        held-out rate {results[name]['mean_sum_rate']:.2f}  "
          f"bound {results[name]['mean_speb']:.2f}  violations "
          f"{results[name]['viol_speb_frac']:.1%}")

# --- learning curves ---------------------------------------------------------
fig, axes = plt.subplots(1, 3, figsize=(11, 3))
for method, report in reports.items():
    epochs = [r["epoch"] for r in report.records]
    axes[0].plot(epochs, [r["loss"] for r in report.records], label=method)
    axes[1].plot(epochs, [r["mean_rate"] for r in report.records], label=method)
    axes[2].semilogy(epochs, [r["mean_speb"] for r in report.records], label=method)
axes[2].axhline(gamma, color="k", ls="--", lw=0.8)
for ax, title in zip(axes, ("training loss", "mean sum rate", "mean bound")):
    ax.set_xlabel("epoch")
    ax.set_title(title)
axes[0].legend(fontsize=7)
fig.tight_layout()
fig.savefig(os.path.join(OUT, "learning_curves.png"), dpi=120)
plt.close(fig)
print("wrote learning_curves.png")

# --- rate/feasibility summary ------------------------------------------------
fig, ax = plt.subplots(figsize=(6, 3))
names = list(results)
rates = [results[m]["mean_sum_rate"] for m in names]
colors = ["C2" if results[m]["viol_speb_frac"] <= 0.1 else "C3" for m in names]
ax.bar(names, rates, color=colors)
ax.set_ylabel("held-out mean sum rate (bit/s/Hz)")
ax.set_title("green: sensing constraint held on >= 90% of samples")
plt.setp(ax.get_xticklabels(), rotation=20, ha="right", fontsize=8)
fig.tight_layout()
fig.savefig(os.path.join(OUT, "method_comparison.png"), dpi=120)
plt.close(fig)
print("wrote method_comparison.png")
