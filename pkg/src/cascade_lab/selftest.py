"""Fast invariant self-test: exact identities every healthy checkout must satisfy.

Covers the transform round trip and discrete Parseval identity, coefficient
interpolation, norm homogeneity, the pure-decay and stationary limits of the
exact linear step, phase-rotation isometry, draw replay, and the power-law
fit oracle.  Runs in a few seconds; the CLI exposes it as ``selftest``.
"""

from __future__ import annotations

import numpy as np

from .experiments import fit_exponent
from .forcing import NoiseSpec, RngStream
from .integrators import ou_exact_step, phase_rotation_step, single_mode
from .spectral import (
    GridSpec,
    SpectralField,
    lattice_inner,
    sobolev_norm,
    to_physical,
    to_spectral,
)


def _random_field(grid: GridSpec, seed: int) -> SpectralField:
    rng = np.random.default_rng(seed)
    c = rng.normal(size=grid.coeff_shape) + 1j * rng.normal(size=grid.coeff_shape)
    return SpectralField(grid, c)


def run_selftest(verbose: bool = True) -> bool:
    checks: list[tuple[str, bool]] = []

    def check(name: str, ok: bool) -> None:
        checks.append((name, ok))
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'}  {name}")

    for grid in (GridSpec(1, 64, 32), GridSpec(2, 32, 16)):
        u = _random_field(grid, 7)
        back = to_spectral(to_physical(u), grid.D)
        err = float(np.abs(back.coeffs - u.coeffs).max())
        check(f"round trip n={grid.n} (max err {err:.2e})", err <= 1e-12)
        p = to_physical(u)
        quad = lattice_inner(p, p)
        coeff = float(np.sum(np.abs(u.coeffs) ** 2))
        rel = abs(quad - coeff) / coeff
        check(f"discrete Parseval n={grid.n} (rel err {rel:.2e})", rel <= 1e-12)

    grid = GridSpec(1, 64, 32)
    ok = True
    for seed in range(200):
        u = _random_field(grid, seed)
        for l, m in ((1, 2), (1, 3), (2, 3)):
            lhs = sobolev_norm(u, l) ** 2
            rhs = (sobolev_norm(u, 0) ** 2) ** (1 - l / m) * (sobolev_norm(u, m) ** 2) ** (l / m)
            ok = ok and (lhs - rhs) <= 1e-12 * rhs
    check("coefficient interpolation (200 random fields)", ok)

    u = _random_field(grid, 11)
    c = 0.3 - 1.7j
    scaled = SpectralField(grid, c * u.coeffs)
    hom = abs(sobolev_norm(scaled, 1.5) - abs(c) * sobolev_norm(u, 1.5))
    check("norm homogeneity", hom <= 1e-9 * sobolev_norm(u, 1.5))
    check("Poincare ||u||_1 >= ||u||_0", sobolev_norm(u, 1) >= sobolev_norm(u, 0))

    spec = NoiseSpec.band(grid, [0.0])
    u1 = single_mode(grid, 1)
    stepped = ou_exact_step(u1, spec, nu=1.0, dt=np.log(2.0), rng=RngStream(0, 0))
    check("pure decay over dt = ln 2 halves the mode", abs(stepped.coeffs[0] - 0.5) <= 1e-12)

    sq = GridSpec(1, 64, 64)
    v = _random_field(sq, 13)
    rotated = phase_rotation_step(v, 0.37)
    before = lattice_inner(to_physical(v), to_physical(v))
    after = lattice_inner(to_physical(rotated), to_physical(rotated))
    check("phase rotation preserves lattice L2", abs(after - before) <= 1e-12 * before)

    s1 = RngStream(123, 5).normals(17, 1, 64)
    s2 = RngStream(123, 5).normals(17, 1, 64)
    check("draw replay is bit-identical", bool(np.array_equal(s1, s2)))

    fit = fit_exponent([(0.4, 0.4**-2), (0.2, 0.2**-2), (0.1, 0.1**-2)])
    check("exponent fit oracle (alpha = 2)", abs(fit.alpha - 2.0) <= 1e-12 and fit.r2 >= 1 - 1e-12)

    good = all(ok for _, ok in checks)
    if verbose:
        print(f"selftest: {sum(ok for _, ok in checks)}/{len(checks)} checks passed")
    return good
