"""Narrow ReLU nets from max-min strings: build, compile, run and analyze."""

from .affine import AffineMap, MaxMinString, eval_affine, eval_string, lipschitz_bound
from .analyzer import (
    Certificate,
    WitnessInstance,
    all_positive_region,
    certify_lower_bound,
)
from .builder import BuildTrace, build
from .compiler import compile_string, verify_compilation
from .domain import Ball, Box
from .expr import parse
from .interpolate import LabeledPointSet, interpolate
from .kernels import BACKEND
from .modulus import Empirical, Hoelder, Lipschitz, estimate_modulus, inverse_modulus
from .net import ReluNet, forward

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AffineMap",
    "Ball",
    "Box",
    "BuildTrace",
    "Certificate",
    "Empirical",
    "Hoelder",
    "LabeledPointSet",
    "Lipschitz",
    "MaxMinString",
    "ReluNet",
    "WitnessInstance",
    "all_positive_region",
    "build",
    "certify_lower_bound",
    "compile_string",
    "estimate_modulus",
    "eval_affine",
    "eval_string",
    "forward",
    "interpolate",
    "inverse_modulus",
    "lipschitz_bound",
    "parse",
    "verify_compilation",
]
