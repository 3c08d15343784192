from . import analytics, backtest, config, estimation, lattice, montecarlo, policy, qp
from .lattice import LatticeMarketSpec, ReturnPath
from .policy import PolicyTriple

__all__ = [
    "LatticeMarketSpec",
    "PolicyTriple",
    "ReturnPath",
    "analytics",
    "backtest",
    "config",
    "estimation",
    "lattice",
    "montecarlo",
    "policy",
    "qp",
]
