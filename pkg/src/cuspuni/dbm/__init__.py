"""Coupled Dyson Brownian motions: interpolated processes, short-range approximation and heat flows."""
from .particles import ParticleSystem, Trajectory, Variant, pad, pad_and_couple, step
from .scenario import ScenarioConfig, build_scenario
from .shifts import Regime
from .shortrange import ExponentConfig, ShortRangeDrift, ShortRangeSet, run_interpolated, run_short_range

__all__ = [
    "ParticleSystem", "Trajectory", "Variant", "pad", "pad_and_couple", "step",
    "ScenarioConfig", "build_scenario", "Regime",
    "ExponentConfig", "ShortRangeDrift", "ShortRangeSet", "run_interpolated", "run_short_range",
]
