"""Frozen constants for the inequality audits.

Each value is twice the largest ratio seen on the calibration suite in
:mod:`qnlab.calibrate` (rounded up to two significant digits). Audits then run
on fresh seeds with these values held fixed.
"""

CALIBRATION_SEEDS = tuple(range(10))
AUDIT_SEEDS = tuple(range(100, 110))
MARGIN = 2.0

FROZEN: dict[str, float] = {
    # harmonic audits: random bounded vorticities and final states of calibration runs
    "cz": 1.1,
    "bmo_local_vs_torus": 3.7,
    "duality_torus": 1.7,
    "duality_local": 0.91,
    "wiener": 0.74,
    "yudovich": 0.19,
    # along coupled runs, eps in {0.1, 0.05, 0.025, 0.0125}
    "rho_gamma": 0.11,
    "rho_qstar": 2.5,
    "m2_gamma": 0.0016,
    "m2_qstar": 0.69,
    "rho_l2": 3.5,
    "interp_k2": 3.5,
    "interp_k3": 3.6,
    "interp_k4": 3.4,
    "moment_ode_k2": 0.28,
    "moment_ode_k3": 0.24,
    "gronwall": 0.0074,
}
