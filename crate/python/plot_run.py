#!/usr/bin/env python3
"""Plot the output directory of a simulation run.

Usage:

    python3 python/plot_run.py out/ [figure.png]

Reads states.csv, events.csv, and metrics.json and draws agent states,
triggering instants, and the error series. Saves to the given file, or
opens a window when no file is given.
"""

import json
import sys
from pathlib import Path

import matplotlib
import pandas as pd

if len(sys.argv) > 2:
    matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def main():
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    out = Path(sys.argv[1])
    states = pd.read_csv(out / "states.csv")
    events = pd.read_csv(out / "events.csv")
    metrics = json.loads((out / "metrics.json").read_text())

    fig, (ax_states, ax_events, ax_error) = plt.subplots(
        3, 1, figsize=(9, 9), sharex=True, height_ratios=[3, 1, 2]
    )

    state_cols = [c for c in states.columns if c != "t"]
    for col in state_cols:
        ax_states.plot(states["t"], states[col], lw=0.8, label=col)
    ax_states.set_ylabel("states")
    if len(state_cols) <= 12:
        ax_states.legend(fontsize=7, ncol=4)

    for reason, marker, color in [("function", "|", "tab:blue"), ("topology", "|", "tab:red")]:
        sel = events[events.reason == reason]
        ax_events.scatter(sel.time, sel.agent, marker=marker, s=60, color=color, label=reason)
    ax_events.set_ylabel("agent")
    ax_events.set_yticks(sorted(events.agent.unique()))
    ax_events.legend(fontsize=7)

    ax_error.semilogy(metrics["recorded_times"], metrics["consensus_error_norm"], lw=1.0)
    if metrics.get("observer_error"):
        ax_error.semilogy(
            metrics["recorded_times"], metrics["observer_error"], lw=1.0, label="observer error"
        )
        ax_error.legend(fontsize=7)
    ax_error.set_xlabel("t [s]")
    ax_error.set_ylabel("error")

    fig.tight_layout()
    if len(sys.argv) > 2:
        fig.savefig(sys.argv[2], dpi=150)
        print(f"wrote {sys.argv[2]}")
    else:
        plt.show()


if __name__ == "__main__":
    main()
