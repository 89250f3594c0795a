"""Seeded simulator of mobile fog relays learning when to forward IoT traffic."""

from .agent import Action, LearningParams, Observation, QTable, StateIndex
from .channel import ChannelParams, LinkGeometry, compute_psi, effective_distances, outage_probability
from .config import SimConfig, load_config
from .engine import BatchResult, EpisodeRecord, RunResult, SimulationRun, run_batch, run_experiment
from .world import WorldState, init_world

__version__ = "0.1.0"
