from .bessel import MAX_ORDER, ScaledBesselTable, scaled_bessel
from .wigner import ThreeJKey, lambda_pm, wigner3j, wigner3j_family

__all__ = [
    "MAX_ORDER",
    "ScaledBesselTable",
    "scaled_bessel",
    "ThreeJKey",
    "lambda_pm",
    "wigner3j",
    "wigner3j_family",
]
