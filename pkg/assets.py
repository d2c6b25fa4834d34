#!/usr/bin/env python3
"""
Per-example assets
Builds the PCLF, certificate, Riccati terminal ingredients and N-step set once, caches them and hands out controllers
"""

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Dict, Any, Tuple

from cache import canonical_json, content_key, load_artifact, store_artifact
from config import ExperimentConfig, CONTROLLER_NAMES
from errors import NotStabilizable, SingularSector
from geometry import HPolytope
from mpc import (MpcProblem, StandardController, Mpc1Controller, Mpc1aController, Mpc1bController,
                 Mpc2Controller, Mpc2aController, TildeController)
from pclf import (LinearSystem, Pclf, PclfCertificate, certificate, max_contractive_set,
                  vertex_gain_bound)
from terminal import (RiccatiSolution, TerminalSet, controllable_set_N, polytopic_inner_approx,
                      restricted_dare, solve_dare, terminal_ellipsoid)

logger = logging.getLogger(__name__)

ASSET_VERSION = 1


@dataclass(eq=False)
class ExampleAssets:
    """Everything the controllers and experiments of one configuration need"""
    config: ExperimentConfig
    pclf: Pclf
    cert: PclfCertificate
    riccati: RiccatiSolution
    terminal: TerminalSet
    terminal_polytope: HPolytope
    controllable: HPolytope
    lqr: Optional[RiccatiSolution] = None
    gain_audit: Optional[float] = None
    _controllers: Dict[str, Any] = field(default_factory=dict, repr=False)

    @cached_property
    def sys(self) -> LinearSystem:
        return LinearSystem(self.config.A, self.config.B)

    @cached_property
    def problem(self) -> MpcProblem:
        c = self.config
        return MpcProblem(self.sys, c.horizon, c.Q, c.R, c.X, c.U)

    def controller(self, name: str):
        if name not in self._controllers:
            self._controllers[name] = make_controller(self, name)
        return self._controllers[name]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": ASSET_VERSION,
            "pclf": self.pclf.to_dict(),
            "certificate": self.cert.to_dict(),
            "riccati": self.riccati.to_dict(),
            "lqr": self.lqr.to_dict() if self.lqr is not None else None,
            "terminal": self.terminal.to_dict(),
            "terminal_polytope": self.terminal_polytope.to_dict(),
            "controllable": self.controllable.to_dict(),
            "gain_audit": self.gain_audit,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], config: ExperimentConfig) -> "ExampleAssets":
        return cls(
            config=config,
            pclf=Pclf.from_dict(data["pclf"]),
            cert=PclfCertificate.from_dict(data["certificate"]),
            riccati=RiccatiSolution.from_dict(data["riccati"]),
            lqr=RiccatiSolution.from_dict(data["lqr"]) if data.get("lqr") else None,
            terminal=TerminalSet.from_dict(data["terminal"]),
            terminal_polytope=HPolytope.from_dict(data["terminal_polytope"]),
            controllable=HPolytope.from_dict(data["controllable"]),
            gain_audit=data.get("gain_audit"),
        )


def make_controller(assets: ExampleAssets, name: str):
    """Controller handle by its config name"""
    problem, pclf, cert = assets.problem, assets.pclf, assets.cert
    P = assets.riccati.P
    if name == "standard":
        return StandardController(problem, P, assets.terminal_polytope)
    if name == "mpc1":
        return Mpc1Controller(problem, pclf, cert.beta_star)
    if name == "mpc1a":
        return Mpc1aController(problem, pclf, cert.beta_star, P, assets.terminal)
    if name == "mpc1b":
        return Mpc1bController(problem, pclf, cert)
    if name == "mpc2":
        return Mpc2Controller(problem, pclf, cert.decay_rate, P)
    if name == "mpc2a":
        return Mpc2aController(problem, pclf, cert.decay_rate, P, assets.terminal)
    if name == "tilde":
        return TildeController(problem, pclf, P, assets.terminal)
    raise ValueError(f"unknown controller '{name}', expected one of {CONTROLLER_NAMES}")


def build_assets(config: ExperimentConfig, jobs: int = 1) -> ExampleAssets:
    """Construct every set and certificate of `config` from scratch"""
    sys = LinearSystem(config.A, config.B)
    pclf = max_contractive_set(sys, config.X, config.U, config.eps, max_iter=config.max_iter)
    pclf.check(config.X)
    logger.info("%s: PCLF with %d rows after %d iterations", config.name, pclf.r, pclf.iterations)

    try:
        audit = vertex_gain_bound(pclf, sys, config.U)
    except SingularSector as exc:
        logger.warning("%s: vertex gain audit skipped: %s", config.name, exc)
        audit = None
    c = config.gain_bound if config.gain_bound is not None else audit
    cert = certificate(pclf, sys, config.U, config.Q, config.R, c_override=c, levels=config.levels, jobs=jobs)

    if config.riccati_input_columns:
        riccati = restricted_dare(sys, config.Q, config.R, config.riccati_input_columns)
    else:
        riccati = solve_dare(sys, config.Q, config.R)
    try:
        lqr = solve_dare(sys, config.Q, config.R)
    except NotStabilizable:
        lqr = None
    terminal = terminal_ellipsoid(riccati, config.X, config.U)
    terminal_polytope = polytopic_inner_approx(terminal, config.terminal_points)
    controllable = controllable_set_N(sys, config.X, config.U, terminal_polytope, config.horizon)
    return ExampleAssets(config=config, pclf=pclf, cert=cert, riccati=riccati, lqr=lqr, terminal=terminal,
                         terminal_polytope=terminal_polytope, controllable=controllable, gain_audit=audit)


class AssetManager:
    """Builds assets once per configuration, through the database cache when enabled"""

    def __init__(self):
        self._loaded: Dict[str, ExampleAssets] = {}

    @staticmethod
    def key(config: ExperimentConfig) -> str:
        return content_key({"version": ASSET_VERSION, **config.set_fields()})

    def get(self, config: ExperimentConfig, jobs: int = 1, use_cache: bool = True,
            persist: bool = True) -> Tuple[ExampleAssets, bool]:
        """(assets, loaded_from_cache)"""
        key = self.key(config)
        if use_cache and key in self._loaded:
            return self._loaded[key], True
        if use_cache and persist:
            payload = load_artifact(key)
            if payload is not None and payload.get("version") == ASSET_VERSION:
                assets = ExampleAssets.from_dict(payload, config)
                self._loaded[key] = assets
                return assets, True
        payload = json.loads(canonical_json(build_assets(config, jobs).to_dict()))
        if persist:
            store_artifact(key, "assets", payload, name=config.name)
        # reloaded so fresh and cached builds go through the same path
        assets = ExampleAssets.from_dict(payload, config)
        self._loaded[key] = assets
        return assets, False

    def clear(self):
        self._loaded.clear()


# Global asset manager instance
asset_manager = AssetManager()
