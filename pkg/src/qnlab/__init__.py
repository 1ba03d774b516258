"""Numerical laboratory for the quasineutral limit of Vlasov-Poisson towards 2D Euler.

Modules
-------
torus      periodic grid fields, spectral operators, Green function, binary I/O
pic        particle-in-cell Vlasov-Poisson solver and diagnostics
euler      pseudo-spectral incompressible Euler in vorticity form
harmonic   maximal functions, BMO norms and inequality audits
modulated  modulated energy, its derivative terms and explicit bounds
initdata   well-prepared initial data and hypothesis checks
harness    configuration, coupled runs, sweeps and reports
"""

__version__ = "0.1.0"
