"""The standard coupled-cusp scenario used by the checks and the command line.

The x side is the two-atom deformed Wigner flow, the y side a four-atom flat
model with the same slope. Runs last ``N^{-0.4}``; both flows reach an exact cusp
``N^{-1/2}`` after a gap-regime run ends, so the run finishes at a gap of order
``N^{-3/4}``. Minimum-regime runs start ``N^{-1/2}`` after the cusp.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ensembles import atomic, deformed_wigner, matched_four_atom
from .shifts import PROFILE_RESOLUTION, EnsembleFlow, Regime, build_shifts, build_tables
from .shortrange import ScenarioState, real_labels_mask

TIME_EXPONENT = 0.4


@dataclass(frozen=True)
class ScenarioConfig:
    N: int
    alpha: float = 0.5
    regime: Regime = Regime.GAP
    resolution: float = PROFILE_RESOLUTION
    time_nodes: int = 7

    @property
    def t_star(self) -> float:
        return self.t_end + self.N ** -0.5

    @property
    def t_end(self) -> float:
        return self.N ** -TIME_EXPONENT

    @property
    def t_range(self) -> tuple[float, float]:
        if Regime(self.regime) == Regime.GAP:
            return 0.0, self.t_end
        t0 = self.t_star + self.N ** -0.5
        return t0, t0 + self.t_end


def scenario_flows(cfg: ScenarioConfig):
    atoms, w, v = matched_four_atom(cfg.t_star)
    kw = dict(regime=cfg.regime, t_star=cfg.t_star, resolution=cfg.resolution)
    fx = EnsembleFlow(deformed_wigner(cfg.N, -cfg.t_star, beta=1), **kw)
    fy = EnsembleFlow(atomic(cfg.N, atoms, w, v), **kw)
    return fx, fy


def build_scenario(cfg: ScenarioConfig, flows=None, tables=None) -> ScenarioState:
    """Tables, shift functions and label layout; pass ``flows``/``tables`` to reuse work across ``alpha``."""
    fx, fy = flows if flows is not None else scenario_flows(cfg)
    if tables is None:
        tables = build_tables(fx, fy, cfg.N, cfg.t_range, cfg.time_nodes)
    shifts = build_shifts(tables, cfg.alpha)
    t0 = tables.x.times[0]
    left = min(f.at(t0).mass_left for f in (fx, fy))
    right = min(f.at(t0).mass_right for f in (fx, fy))
    return ScenarioState(cfg.N, cfg.alpha, tables, shifts, real_labels_mask(cfg.N, left, right))
