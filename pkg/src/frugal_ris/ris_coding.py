"""Hadamard temporal coding of RIS phase profiles and receiver-side decoding.

Transmission ``m = k * L + l`` of RIS ``r`` uses the profile
``codes[r + 1, l] * base[r][:, k]``; code row 0 (all ones) is reserved for
the direct path. RIS indices are 0-based throughout the package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import hadamard


class CodingError(ValueError):
    """Invalid coding configuration or mismatched dimensions."""


def choose_code_length(n_ris: int, n_tx: int, override: int | None = None) -> int:
    """Smallest power of two >= n_ris + 1 dividing ``n_tx`` (or ``override``)."""
    minimum = 1 << int(np.ceil(np.log2(n_ris + 1)))
    if override is not None:
        if override < minimum or override & (override - 1):
            raise CodingError(f"code length must be a power of two >= {minimum}")
        if n_tx % override:
            raise CodingError(f"code length {override} does not divide {n_tx}")
        return override
    length = minimum
    while length <= n_tx:
        if n_tx % length == 0:
            return length
        length *= 2
    raise CodingError(f"no power-of-two code length >= {minimum} divides {n_tx}")


@dataclass(frozen=True)
class RisSchedule:
    """Coded RIS phase schedule.

    Attributes
    ----------
    codes : ndarray, shape (R + 1, L)
        Rows of a Sylvester Hadamard matrix; row 0 is constant.
    base : ndarray, shape (R, N, M / L)
        Unit-modulus base profiles, one column per block.
    """

    codes: np.ndarray
    base: np.ndarray

    @property
    def code_length(self) -> int:
        return self.codes.shape[1]

    @property
    def n_ris(self) -> int:
        return self.base.shape[0]

    @property
    def n_elements(self) -> int:
        return self.base.shape[1]

    @property
    def n_blocks(self) -> int:
        return self.base.shape[2]

    @property
    def n_tx(self) -> int:
        return self.n_blocks * self.code_length

    def code(self, r: int) -> np.ndarray:
        """Coding vector of RIS ``r`` (0-based)."""
        if not 0 <= r < self.n_ris:
            raise IndexError(f"RIS index {r} out of range")
        return self.codes[r + 1]

    def profiles(self, r: int) -> np.ndarray:
        """Full per-transmission profiles of RIS ``r``, shape (N, M)."""
        c = self.code(r)
        base = self.base[r]
        return (base[:, :, None] * c[None, None, :]).reshape(self.n_elements, self.n_tx)


def random_base(n_elements: int, n_blocks: int, rng) -> np.ndarray:
    return np.exp(2j * np.pi * rng.random((n_elements, n_blocks)))


def directional_base(steer, target_cosines, n_blocks: int, rng, spread: float = 0.02):
    """Conjugate-phase beams around a hypothesised departure direction.

    ``steer(u, v)`` must return the product of the incident steering vector and
    the departure steering vector for in-plane direction cosines ``(u, v)``.
    Each block points at the target perturbed by N(0, spread^2) in (u, v), so
    consecutive blocks are not identical.
    """
    u0, v0 = target_cosines
    cols = []
    for _ in range(n_blocks):
        du, dv = spread * rng.standard_normal(2)
        cols.append(np.conj(steer(u0 + du, v0 + dv)))
    phases = np.stack(cols, axis=1)
    return phases / np.abs(phases)


def build_schedule(n_ris: int, n_tx: int, n_elements: int, base_kind: str = "random",
                   rng=None, code_length: int | None = None, directional=None) -> RisSchedule:
    """Draw base profiles and attach Hadamard codes.

    Parameters
    ----------
    directional : sequence of (steer, target_cosines), optional
        Required for ``base_kind == "directional"``; one entry per RIS, see
        `directional_base`.
    """
    rng = np.random.default_rng() if rng is None else rng
    length = choose_code_length(n_ris, n_tx, code_length)
    codes = hadamard(length)[: n_ris + 1].astype(float)
    n_blocks = n_tx // length
    if base_kind == "random":
        base = np.stack([random_base(n_elements, n_blocks, rng) for _ in range(n_ris)])
    elif base_kind == "directional":
        if directional is None or len(directional) != n_ris:
            raise CodingError("directional profiles need one (steer, target) per RIS")
        base = np.stack([directional_base(steer, target, n_blocks, rng)
                         for steer, target in directional])
    else:
        raise CodingError(f"unknown base profile kind {base_kind!r}")
    return RisSchedule(codes=codes, base=base)


def reshape_observations(y, code_length: int) -> np.ndarray:
    """Stack consecutive length-L blocks of ``y`` as columns, shape (L, M / L)."""
    y = np.asarray(y)
    if y.ndim != 1 or y.size % code_length:
        raise CodingError(f"length {y.size} is not a multiple of {code_length}")
    return y.reshape(-1, code_length).T


def decode(Y, code) -> np.ndarray:
    """Filter the reshaped observations with one coding vector: ``Y^T c / L``."""
    Y = np.asarray(Y)
    code = np.asarray(code)
    if Y.shape[0] != code.size:
        raise CodingError(f"{Y.shape[0]} rows but code of length {code.size}")
    return Y.T @ code / code.size


def decode_all(y, schedule: RisSchedule) -> np.ndarray:
    """Decode with every code row; row 0 is the direct path. Shape (R + 1, M / L)."""
    Y = reshape_observations(y, schedule.code_length)
    return schedule.codes @ Y / schedule.code_length


def residual_interference(schedule: RisSchedule, nu: float, scenario, los: bool = True) -> float:
    """Worst-case leakage between decoded paths caused by a CFO ``nu``.

    For each path, the unit-gain contribution is synthesised at ``nu`` and
    decoded with every other code; the leaked energy is divided by the energy
    the path's own code recovers at zero CFO. The maximum over paths is
    returned, so the value is exactly zero at ``nu = 0``.
    """
    from .channel import SignalModel

    model = SignalModel(scenario, schedule)
    aods = scenario.aods()
    b = model.cfo(nu)
    paths = []
    if los:
        paths.append((0, np.ones(schedule.n_tx, dtype=complex)))
    for r in range(schedule.n_ris):
        paths.append((r + 1, model.response(r, aods[r])))
    rows = [0] * bool(los) + [r + 1 for r in range(schedule.n_ris)]
    worst = 0.0
    for own, path in paths:
        clean = decode_all(path, schedule)[own]
        shifted = decode_all(path * b, schedule)
        leak = sum(np.vdot(shifted[s], shifted[s]).real for s in rows if s != own)
        worst = max(worst, leak / np.vdot(clean, clean).real)
    return float(worst)
