"""Linear trajectories shared by the simulator tests and the acceptance suite."""

from functools import lru_cache

import numpy as np

from pardiff.lyapunov import select_epsilons
from pardiff.models import make_barotropic_ns, make_heat, make_mhd, make_toy1d
from pardiff.spectral_sim import evolve_linear, functional_time_series, initial_data
from pardiff.symbols import evaluate_symbols, sphere_samples

MONOTONE_SLACK = 1e-9


@lru_cache(maxsize=None)
def system(name):
    return {"toy1d": make_toy1d, "ns2": lambda: make_barotropic_ns(d=2), "mhd": make_mhd,
            "ns1": lambda: make_barotropic_ns(d=1), "heat": lambda: make_heat(d=2, n2=2)}[name]()


@lru_cache(maxsize=None)
def params(name):
    sys_ = system(name)
    count = 16 if sys_.d > 1 else None
    syms = [evaluate_symbols(sys_, om) for om in sphere_samples(sys_.d, count)]
    full = select_epsilons(syms)
    reduced = select_epsilons(syms, a=1, b=0) if sys_.n1 and sys_.n2 else None
    return full, reduced


# (label, system, L, grid, preset, options, times)
CASES = [
    ("toy-single-V1", "toy1d", 1.0, 64, "single-mode", {"component": 0, "wavevector": [3]}, np.linspace(0, 3, 31)),
    ("toy-single-V2", "toy1d", 1.0, 64, "single-mode", {"component": 1, "wavevector": [1]}, np.linspace(0, 3, 31)),
    ("toy-low-mode", "toy1d", 8.0, 64, "single-mode", {"component": 0, "wavevector": [1]},
     np.linspace(0, 200, 41)),
    ("toy-random", "toy1d", 4.0, 128, "random-band", {"kmin": 0.0, "kmax": 10.0}, np.geomspace(1e-3, 50, 30)),
    ("toy-gaussian", "toy1d", 8.0, 128, "gaussian", {"width": 2.0}, np.linspace(0, 20, 21)),
    ("ns1-random", "ns1", 2.0, 64, "random-band", {}, np.linspace(0, 5, 26)),
    ("ns2-random", "ns2", 2.0, 32, "random-band", {"kmax": 6.0}, np.geomspace(1e-3, 20, 25)),
    ("ns2-gaussian", "ns2", 4.0, 32, "gaussian", {"width": 1.5}, np.linspace(0, 10, 21)),
    ("ns2-single-V1", "ns2", 1.0, 16, "single-mode", {"component": 0, "wavevector": [2, 1]},
     np.linspace(0, 4, 21)),
    ("heat-random", "heat", 1.0, 16, "random-band", {}, np.linspace(0, 1, 11)),
    ("mhd-random", "mhd", 1.0, 8, "random-band", {}, np.linspace(0, 2, 9)),
]


@lru_cache(maxsize=None)
def trajectory(label, seed=7):
    _, name, L, grid, preset, opts, times = next(c for c in CASES if c[0] == label)
    sys_ = system(name)
    field0 = initial_data(preset, sys_, L, grid, seed=seed, **opts)
    return evolve_linear(sys_, field0, times)


@lru_cache(maxsize=None)
def functional_table(label):
    name = next(c for c in CASES if c[0] == label)[1]
    full, reduced = params(name)
    return functional_time_series(system(name), trajectory(label), full, 0, reduced)


def monotone_violation(values):
    """Largest relative increase between consecutive samples (<= slack means nonincreasing)."""
    values = np.asarray(values)
    inc = np.diff(values) / np.maximum(values[:-1], 1e-300)
    return float(inc.max()) if inc.size else 0.0
