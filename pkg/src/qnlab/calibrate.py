"""Recompute the frozen audit constants from the calibration suite.

Run ``python -m qnlab.calibrate`` and paste the printed mapping into
:mod:`qnlab.constants`. The suite takes a few minutes on one core.
"""

from __future__ import annotations

import math
from collections import defaultdict

from . import euler, initdata
from .constants import CALIBRATION_SEEDS, MARGIN
from .harmonic import cz_bound_check, duality_check, local_vs_torus_check, wiener_check
from .torus import ScalarField, TorusGrid

SWEEP_EPS = (0.1, 0.05, 0.025, 0.0125)
WIENER_ETAS = (1e-1, 1e-2, 1e-3)


def field_suite(seed: int, n: int = 64, eps: float = 0.1, ppc: int = 16):
    """Random bounded vorticity, its strain, and the deposited F tensor of sampled data."""
    from .modulated import f_tensor
    from .pic import initial_state

    grid = TorusGrid(n)
    vort = initdata.vorticity_library("random_bounded", {"seed": seed}, grid)
    flow = euler.EulerState.from_vorticity(vort.field)
    spec = initdata.WellPreparedSpec.from_vorticity(eps, 1.0, initdata.Vorticity(flow.omega, vort.sup), n * n * ppc, seed)
    vp = initial_state(initdata.sample_well_prepared(spec), grid, eps)
    return flow, euler.strain(flow.u), f_tensor(vp, flow)


def yudovich_ratio(seed: int, n: int = 64, t_end: float = 0.25) -> float:
    grid = TorusGrid(n)
    vort = initdata.vorticity_library("random_bounded", {"seed": seed}, grid)
    state = euler.EulerState.from_vorticity(vort.field)
    umax = state.u.max_norm()
    steps = 10
    for _ in range(steps):
        state = euler.advance(state, t_end / steps)
        umax = max(umax, state.u.max_norm())
    return umax / vort.sup


def field_ratios(seeds) -> dict[str, float]:
    worst: dict[str, float] = defaultdict(float)

    def keep(name, rep):
        worst[name] = max(worst[name], rep.ratio)

    for s in seeds:
        flow, d, f = field_suite(s)
        grid = flow.grid
        keep("cz", cz_bound_check(flow.omega, constant=1.0))
        keep("bmo_local_vs_torus", local_vs_torus_check(flow.omega, constant=1.0))
        g = ScalarField(grid, d.values[0, 1])
        # sampled F against the strain, and the aligned pairing f = g
        for f_part in (ScalarField(grid, f.values[0, 1]), g):
            dual = duality_check(f_part, g, 1.0, 1.0)
            keep("duality_torus", dual["BMO_torus"])
            keep("duality_local", dual["bmo_local"])
        for eta in WIENER_ETAS:
            keep("wiener", wiener_check(ScalarField(grid, f.values[0, 0]), eta, constant=1.0))
        worst["yudovich"] = max(worst["yudovich"], yudovich_ratio(s))
    return dict(worst)


RUN_AUDITS = (
    "rho_gamma", "rho_qstar", "m2_gamma", "m2_qstar", "rho_l2",
    "interp_k2", "interp_k3", "interp_k4", "moment_ode_k2", "moment_ode_k3", "gronwall",
    "duality_torus", "duality_local",
)


def run_ratios(seeds, eps_values=SWEEP_EPS) -> dict[str, float]:
    from .harness import RunConfig, run_single

    worst: dict[str, float] = defaultdict(float)
    for eps in eps_values:
        for s in seeds:
            rep = run_single(RunConfig(eps=eps, seed=s), write=False)
            for name in RUN_AUDITS:
                worst[name] = max(worst[name], rep.audits[name].ratio)
            for eta in WIENER_ETAS:
                worst["wiener"] = max(worst["wiener"], rep.audits[f"wiener_eta{eta:g}"].ratio)
    return dict(worst)


def freeze(ratio: float, margin: float = MARGIN) -> float:
    """``margin * ratio`` rounded up to two significant digits."""
    v = margin * ratio
    if v <= 0:
        return 0.0
    scale = 10.0 ** (math.floor(math.log10(v)) - 1)
    return math.ceil(v / scale - 1e-9) * scale


def main() -> None:
    ratios = field_ratios(CALIBRATION_SEEDS)
    for name, r in run_ratios(CALIBRATION_SEEDS).items():
        ratios[name] = max(r, ratios.get(name, 0.0))
    print("FROZEN = {")
    for name in sorted(ratios):
        print(f'    "{name}": {freeze(ratios[name]):.2g},  # max ratio {ratios[name]:.4g}')
    print("}")


if __name__ == "__main__":
    main()
