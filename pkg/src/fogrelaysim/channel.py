"""Closed-form outage probability of a sensor -> relay -> destination link.

The link fails when the received SNR drops below the threshold kappa.  With
noise power N0, path-loss exponent sigma and transmit powers P_I (sensor)
and P_R (relay), the outage probability is

    P_out = 1 - (1 + 2 psi^2 ln psi) * exp(-N0*kappa * D_I^sigma / P_I)

with  psi = sqrt(N0*kappa * D_S^sigma / P_R),

where D_I is the sensor-relay distance and D_S the relay-destination
distance.  Distances passed in here are already effective (movement applied
by `effective_distances`), so the formula is evaluated as a pure function
of the current geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ChannelDomainError

# Floor on any link distance; avoids the d^-sigma singularity at zero range.
DISTANCE_FLOOR = 0.1


@dataclass(frozen=True)
class ChannelParams:
    """Channel constants. Defaults follow the simulation parameter table."""

    noise_power: float = 2e-7          # N0, watts
    snr_threshold: float = 1.0         # kappa, dimensionless
    path_loss_exponent: float = 3.0    # sigma
    step_delta: float = 0.25           # magnitude of one positional change, metres

    def __post_init__(self):
        for name in ("noise_power", "snr_threshold", "path_loss_exponent", "step_delta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ChannelDomainError(f"{name} must be finite and > 0, got {v!r}")


@dataclass(frozen=True)
class LinkGeometry:
    """Effective link distances in metres (post-movement)."""

    d_sensor_relay: float   # D_I
    d_relay_dest: float     # D_S

    def __post_init__(self):
        for name, v in (("d_sensor_relay", self.d_sensor_relay),
                        ("d_relay_dest", self.d_relay_dest)):
            if not (math.isfinite(v) and v >= DISTANCE_FLOOR):
                raise ChannelDomainError(
                    f"{name} must be finite and >= {DISTANCE_FLOOR} m, got {v!r}")


def _check_positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ChannelDomainError(f"{name} must be finite and > 0, got {value!r}")


def compute_psi(p_relay: float, d_s_eff: float, params: ChannelParams) -> float:
    """psi = sqrt(N0*kappa * d^sigma / P_R) for the relay-destination hop.

    Strictly increasing in distance, strictly decreasing in relay power.
    """
    _check_positive("p_relay", p_relay)
    if not (math.isfinite(d_s_eff) and d_s_eff >= DISTANCE_FLOOR):
        raise ChannelDomainError(f"d_s_eff must be >= {DISTANCE_FLOOR} m, got {d_s_eff!r}")
    u = params.noise_power * params.snr_threshold * d_s_eff ** params.path_loss_exponent / p_relay
    return math.sqrt(u)


def raw_outage_probability(p_sensor: float, p_relay: float, geom: LinkGeometry,
                           params: ChannelParams, extra_delta: float = 0.0) -> float:
    """Unclamped outage value; may leave [0, 1] when psi > 1.

    `extra_delta` adds a constant offset to both distances, the literal
    reading of the formula (config `delta_mode = literal`); the default 0
    assumes movement was already folded into `geom`.
    """
    _check_positive("p_sensor", p_sensor)
    _check_positive("p_relay", p_relay)
    d_i = geom.d_sensor_relay + extra_delta
    d_s = geom.d_relay_dest + extra_delta
    n0k = params.noise_power * params.snr_threshold
    sigma = params.path_loss_exponent
    u = n0k * d_s ** sigma / p_relay              # u = psi^2, so 2 psi^2 ln psi = u ln u
    prefactor = 1.0 + u * math.log(u)
    exponent = n0k * d_i ** sigma / p_sensor
    raw = 1.0 - prefactor * math.exp(-exponent)
    if not math.isfinite(raw):
        raise ChannelDomainError(
            f"non-finite outage for P_I={p_sensor}, P_R={p_relay}, "
            f"D_I={d_i}, D_S={d_s}")
    return raw


def outage_probability(p_sensor: float, p_relay: float, geom: LinkGeometry,
                       params: ChannelParams, extra_delta: float = 0.0) -> float:
    """Outage probability clamped to [0, 1]."""
    raw = raw_outage_probability(p_sensor, p_relay, geom, params, extra_delta)
    if raw < 0.0:
        return 0.0
    if raw > 1.0:
        return 1.0
    return raw


def effective_distances(base: LinkGeometry, displacement: float) -> LinkGeometry:
    """Apply a signed 1-D displacement along the sensor-destination axis.

    displacement > 0 means the relay moved toward the destination, which
    lengthens the sensor hop and shortens the destination hop.  Results are
    floored at DISTANCE_FLOOR.
    """
    return LinkGeometry(
        d_sensor_relay=max(DISTANCE_FLOOR, base.d_sensor_relay + displacement),
        d_relay_dest=max(DISTANCE_FLOOR, base.d_relay_dest - displacement),
    )
