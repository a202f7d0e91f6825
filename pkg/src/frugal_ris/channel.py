"""Received-signal synthesis for the single-antenna RIS-aided downlink."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometryError, steering_from_cosines, steering_vector, wavenumber_jacobian
from .ris_coding import RisSchedule, build_schedule


def cfo_vector(nu: float, n_tx: int, ts: float) -> np.ndarray:
    """Phase ramp ``exp(j 2 pi m ts nu)`` for m = 0 .. n_tx - 1."""
    return np.exp(2j * np.pi * ts * nu * np.arange(n_tx))


def complex_normal(rng, size, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric CN(0, variance) samples."""
    scale = np.sqrt(variance / 2)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


@dataclass
class PathGains:
    ris: np.ndarray
    los: complex | None = None

    def vector(self, los: bool) -> np.ndarray:
        if los:
            if self.los is None:
                raise ValueError("direct-path gain missing")
            return np.concatenate([[self.los], self.ris])
        return np.asarray(self.ris, dtype=complex)


@dataclass(frozen=True)
class RicianParams:
    kappa_los: float
    kappa_bs_ris: tuple
    kappa_ris_ue: tuple

    def __post_init__(self):
        values = (self.kappa_los, *self.kappa_bs_ris, *self.kappa_ris_ue)
        if any(k < 0 for k in values):
            raise ValueError("Rician factors must be non-negative")

    @classmethod
    def uniform(cls, kappa: float, n_ris: int) -> "RicianParams":
        return cls(kappa, (kappa,) * n_ris, (kappa,) * n_ris)


@dataclass
class Observation:
    y: np.ndarray
    nu: float
    gains: PathGains
    aods: np.ndarray
    los: bool
    noise_free: np.ndarray = field(repr=False)


def fspl_gains(scenario, rng) -> PathGains:
    """Free-space path gains with uniform random phases.

    The direct-path phase is always drawn so that LoS and NLoS runs sharing a
    seed get identical RIS gains.
    """
    bs, ue = np.array(scenario.bs), np.array(scenario.ue)
    lam = scenario.wavelength
    d0 = np.linalg.norm(ue - bs)
    d1 = np.linalg.norm(scenario.ris_array - bs, axis=1)
    d2 = np.linalg.norm(scenario.ris_array - ue, axis=1)
    if d0 == 0 or np.any(d1 == 0) or np.any(d2 == 0):
        raise GeometryError("zero link distance")
    mag0 = lam / (4 * np.pi * d0)
    mags = lam ** 2 / (16 * np.pi ** 2 * d1 * d2)
    phases = np.exp(2j * np.pi * rng.random(1 + scenario.n_ris))
    return PathGains(ris=mags * phases[1:], los=complex(mag0 * phases[0]))


def make_schedule(scenario, rng, base_kind: str = "random", prior_position=None) -> RisSchedule:
    """Schedule for ``scenario``; directional beams aim at ``prior_position``."""
    directional = None
    if base_kind == "directional":
        target = scenario.ue if prior_position is None else prior_position
        directional = []
        layout, lam = scenario.layout, scenario.wavelength
        for aoa, aod in zip(scenario.aoas, scenario.aods(target)):
            a_in = steering_vector(aoa, layout, lam)

            def steer(u, v, a_in=a_in):
                return a_in * steering_from_cosines(u, v, layout, lam)

            directional.append((steer, layout.in_plane_from_angle(aod)))
    return build_schedule(scenario.n_ris, scenario.n_tx, scenario.layout.n_elements,
                          base_kind, rng, scenario.code_length, directional)


class SignalModel:
    """Noise-free signal model for a scenario and a RIS schedule.

    Caches the uncoded weights ``a(aoa_r) * base_r`` so that the per-RIS
    response over the M / L blocks is a single matrix-vector product.
    """

    def __init__(self, scenario, schedule: RisSchedule):
        if schedule.n_ris != scenario.n_ris:
            raise ValueError("schedule and scenario disagree on the number of RISs")
        if schedule.n_tx != scenario.n_tx:
            raise ValueError("schedule and scenario disagree on the number of transmissions")
        if schedule.n_elements != scenario.layout.n_elements:
            raise ValueError("schedule and layout disagree on the number of elements")
        self.scenario = scenario
        self.schedule = schedule
        self.layout = scenario.layout
        self.wavelength = scenario.wavelength
        self.ts = scenario.ts
        self.n_tx = scenario.n_tx
        self.n_ris = scenario.n_ris
        self.power = scenario.power
        self.noise_power = scenario.noise_power
        self.weights = [steering_vector(aoa, self.layout, self.wavelength)[:, None] * schedule.base[r]
                        for r, aoa in enumerate(scenario.aoas)]
        # (rows, cols * K) view for separable evaluation over the panel axes
        self._grids = [w.reshape(self.layout.rows, -1) for w in self.weights]
        self._ramp = 2j * np.pi * self.ts * np.arange(self.n_tx)

    def cfo(self, nu: float) -> np.ndarray:
        return np.exp(self._ramp * nu)

    def xbar(self, r: int, angle) -> np.ndarray:
        """Uncoded response of RIS ``r`` over the blocks, shape (M / L,)."""
        return self.weights[r].T @ steering_vector(angle, self.layout, self.wavelength)

    def xbar_cosines(self, r: int, u: float, v: float) -> np.ndarray:
        """`xbar` parameterised by in-plane direction cosines."""
        s1, s2 = self.layout.axis_offsets
        k = 2j * np.pi / self.wavelength
        partial = np.exp(k * v * s2) @ self._grids[r]
        return np.exp(k * u * s1) @ partial.reshape(self.layout.cols, -1)

    def xbar_grad(self, r: int, angle) -> np.ndarray:
        """Derivative of `xbar` with respect to (az, el), shape (M / L, 2)."""
        a = steering_vector(angle, self.layout, self.wavelength)
        dphase = self.layout.positions @ wavenumber_jacobian(angle, self.wavelength)
        return self.weights[r].T @ (1j * dphase * a[:, None])

    def expand(self, r: int, xbar: np.ndarray) -> np.ndarray:
        """Spread a per-block response over all M transmissions with code r."""
        return np.outer(xbar, self.schedule.code(r)).ravel()

    def response(self, r: int, angle) -> np.ndarray:
        """``x_r(angle)``: per-transmission response of RIS ``r``, shape (M,)."""
        return self.expand(r, self.xbar(r, angle))

    def design(self, nu: float, angles, los: bool) -> np.ndarray:
        """Columns ``sqrt(P) [b, x_1 * b, ..., x_R * b]`` (direct path only if ``los``)."""
        b = self.cfo(nu)
        cols = [b] if los else []
        cols += [self.response(r, angles[r]) * b for r in range(self.n_ris)]
        return np.sqrt(self.power) * np.stack(cols, axis=1)

    def noise_free(self, nu: float, angles, gains: PathGains, los: bool) -> np.ndarray:
        return self.design(nu, angles, los) @ gains.vector(los)


def ris_response(angle, schedule: RisSchedule, r: int, scenario) -> np.ndarray:
    """Per-transmission response of RIS ``r`` towards ``angle``, shape (M,)."""
    if not 0 <= r < schedule.n_ris:
        raise IndexError(f"RIS index {r} out of range")
    return SignalModel(scenario, schedule).response(r, angle)


def synthesize(scenario, schedule: RisSchedule, nu: float, los_present: bool, rng,
               gains: PathGains | None = None, model: SignalModel | None = None) -> Observation:
    """Draw one received vector: FSPL gains (unless given) and CN(0, sigma^2) noise."""
    model = SignalModel(scenario, schedule) if model is None else model
    gains = fspl_gains(scenario, rng) if gains is None else gains
    aods = scenario.aods()
    z = model.noise_free(nu, aods, gains, los_present)
    y = z + complex_normal(rng, scenario.n_tx, scenario.noise_power)
    return Observation(y=y, nu=nu, gains=gains, aods=aods, los=los_present, noise_free=z)


def synthesize_multipath(scenario, schedule: RisSchedule, nu: float, rician: RicianParams,
                         rng, los_present: bool = True, gains: PathGains | None = None,
                         model: SignalModel | None = None) -> Observation:
    """Received vector with Rician BS-UE, BS-RIS and RIS-UE channels.

    Diffuse components are drawn once per call and held across the M
    transmissions. ``noise_free`` in the result is the clean (specular-only)
    model, the reference the estimators are judged against.
    """
    model = SignalModel(scenario, schedule) if model is None else model
    gains = fspl_gains(scenario, rng) if gains is None else gains
    layout, lam = scenario.layout, scenario.wavelength
    n = layout.n_elements
    aods = scenario.aods()
    b = model.cfo(nu)
    sqrt_p = np.sqrt(model.power)

    def mix(kappa, specular, diffuse):
        return np.sqrt(kappa / (kappa + 1)) * specular + np.sqrt(1 / (kappa + 1)) * diffuse

    h_los = mix(rician.kappa_los, 1.0, complex_normal(rng, None))
    signal = np.zeros(scenario.n_tx, dtype=complex)
    if los_present:
        signal += gains.los * h_los * b
    for r in range(scenario.n_ris):
        g_in = mix(rician.kappa_bs_ris[r], steering_vector(scenario.aoas[r], layout, lam),
                   complex_normal(rng, n))
        g_out = mix(rician.kappa_ris_ue[r], steering_vector(aods[r], layout, lam),
                    complex_normal(rng, n))
        xbar = (g_in[:, None] * schedule.base[r]).T @ g_out
        signal += gains.ris[r] * model.expand(r, xbar) * b
    y = sqrt_p * signal + complex_normal(rng, scenario.n_tx, scenario.noise_power)
    clean = model.noise_free(nu, aods, gains, los_present)
    return Observation(y=y, nu=nu, gains=gains, aods=aods, los=los_present, noise_free=clean)
