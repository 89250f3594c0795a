"""Figure generation for fog-relay simulation results."""

from .plots import plot_convergence, plot_vs_relays, read_episodes, read_summary

__version__ = "0.1.0"
