"""Energy backends for candidate ranking.

The built-in model is a pairwise Lennard-Jones potential whose minimum sits
at the covalent contact distance: sigma per element is 2*r_cov*2^(-1/6), so
sigma_ij under arithmetic mixing is (r_i + r_j)*2^(-1/6). Epsilon is uniform.
Summation runs over periodic images within a distance cutoff, each unordered
pair of images counted once. Ranking only needs a repulsive core that
penalizes steric overlap; anything finer belongs to an external calculator.

External calculators plug in over a subprocess protocol: the structure is
written to the child's standard input as CIF text, and the child prints a
single floating-point energy to standard output and exits 0.
"""

import math
import subprocess
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .cif import CrystalStructure, write_cif
from .elements import covalent_radii


class ModelFailure(Exception):
    """The backend produced no usable energy for a structure."""


class EnergyModel(Protocol):
    name: str
    deterministic: bool

    def energy(self, structure: CrystalStructure) -> float: ...


@dataclass
class LennardJonesModel:
    cutoff: float = 8.0
    epsilon: float = 1.0
    name: str = "lennard-jones"
    deterministic: bool = True
    _radii: dict = field(default_factory=covalent_radii, repr=False)

    def pair_energy(self, r: float, el_a: str, el_b: str) -> float:
        sigma = (self._radii[el_a] + self._radii[el_b]) * 2.0 ** (-1.0 / 6.0)
        x = (sigma / r) ** 6
        return 4.0 * self.epsilon * (x * x - x)

    def energy(self, structure: CrystalStructure) -> float:
        lattice = structure.lattice
        n = len(structure.sites)
        if n == 0:
            return 0.0
        frac = np.array([s.frac for s in structure.sites], dtype=float)
        cell = np.array(lattice.matrix, dtype=float)

        sigma = np.empty(n)
        for i, site in enumerate(structure.sites):
            try:
                sigma[i] = self._radii[site.element]
            except KeyError:
                raise ModelFailure(f"no radius for element {site.element}")
        sigma_ij = (sigma[:, None] + sigma[None, :]) * 2.0 ** (-1.0 / 6.0)

        # wrapping the pair deltas first keeps the image search tight;
        # antisymmetry of the wrapped deltas preserves the +/- pairing
        dfrac = frac[None, :, :] - frac[:, None, :]
        dfrac -= np.round(dfrac)
        base = dfrac @ cell

        total = 0.0
        cutoff2 = self.cutoff * self.cutoff
        for shift in _image_shifts(cell, self.cutoff):
            disp = base + (np.array(shift, dtype=float) @ cell)
            d2 = np.einsum("ijk,ijk->ij", disp, disp)
            if shift == (0, 0, 0):
                mask = np.triu(np.ones((n, n), dtype=bool), k=1)
            else:
                # one representative shift per +/- pair covers every ordered
                # combination, including a site against its own image
                mask = np.ones((n, n), dtype=bool)
            if bool(np.any(mask & (d2 < 1e-12))):
                raise ModelFailure("coincident sites give an unbounded energy")
            mask &= d2 <= cutoff2
            if not mask.any():
                continue
            x = (sigma_ij[mask] ** 2 / d2[mask]) ** 3
            total += float(np.sum(4.0 * self.epsilon * (x * x - x)))
        if not math.isfinite(total):
            raise ModelFailure("energy overflow (coincident sites)")
        return total


def _image_shifts(cell: np.ndarray, cutoff: float):
    """Integer lattice shifts that can host a wrapped pair delta (components
    in [-1/2, 1/2]) within the cutoff: (0,0,0) plus one representative of
    each +/- pair."""
    inv = np.linalg.inv(cell)
    # with cart = frac @ cell, frac_i = cart @ inv[:, i]; plane spacing along
    # axis i is therefore 1 / |column i of inv|
    spacing = 1.0 / np.linalg.norm(inv, axis=0)
    bounds = [int(math.ceil(cutoff / s + 0.5)) for s in spacing]
    shifts = [(0, 0, 0)]
    for a in range(-bounds[0], bounds[0] + 1):
        for b in range(-bounds[1], bounds[1] + 1):
            for c in range(-bounds[2], bounds[2] + 1):
                if (a, b, c) > (0, 0, 0):
                    shifts.append((a, b, c))
    return shifts


@dataclass
class SubprocessEnergyModel:
    command: list[str]
    timeout: float = 120.0
    name: str = "subprocess"
    deterministic: bool = False

    def energy(self, structure: CrystalStructure) -> float:
        text = write_cif(structure)
        try:
            proc = subprocess.run(
                self.command,
                input=text.encode(),
                capture_output=True,
                timeout=self.timeout,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise ModelFailure(f"calculator failed to run: {exc}")
        if proc.returncode != 0:
            raise ModelFailure(
                f"calculator exited {proc.returncode}: {proc.stderr.decode(errors='replace').strip()}"
            )
        out = proc.stdout.decode(errors="replace").strip()
        try:
            value = float(out.split()[-1]) if out else float("nan")
        except ValueError:
            raise ModelFailure(f"calculator output not a number: {out!r}")
        if math.isnan(value):
            raise ModelFailure("calculator produced no energy value")
        return value
