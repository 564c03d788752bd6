"""
Helpers shared by the CLI commands: config loading, scenario construction,
output directories and the error-to-exit-code mapping.
"""

import argparse
import functools
import json
import traceback
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from core.config import settings
from core.constants import DEFAULT_Y_REF, EXIT_UNEXPECTED
from core.exceptions import ArtifactError, ConfigError, MicrogridError
from core.koopman.builder import LiftedModel, build_lifted
from core.logging_config import get_logger, set_level
from core.microgrid.dynamics import initial_state
from core.microgrid.params import MgParams, build_params, config_digest, load_config, resolve_config_path
from core.models.artifacts import RunManifest
from core.models.numerics import IntegratorSpec
from core.models.params import ControllerWeights, MicrogridConfig
from core.models.scenario import PerturbationSpec, Scenario
from core.services.trajectory_store import TrajectoryStore

logger = get_logger("CLI")


def add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", default=settings.DEFAULT_CONFIG, help="Config path or bundled config name")
    parser.add_argument("--out", default=None, help="Output directory")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")


def add_scenario_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--mode", choices=["full", "surrogate"], default="full")
    parser.add_argument("--engage-time", type=float, default=None)
    parser.add_argument("--t-end", type=float, default=None)
    parser.add_argument("--y-ref", type=float, nargs="+", default=None, help="One value, or one per DER")
    parser.add_argument("--method", choices=["RK4", "RK45", "LSODA", "BDF", "Radau"], default=None)
    parser.add_argument("--step", type=float, default=None)
    parser.add_argument("--stride", type=float, default=None, help="Record stride, s")
    parser.add_argument("--weights", default=None, help="JSON file with controller weights")


def command(fn: Callable[[argparse.Namespace], int]) -> Callable[[argparse.Namespace], int]:
    """Maps MicrogridError to its exit code; anything else prints a traceback and returns 1."""

    @functools.wraps(fn)
    def wrapper(args: argparse.Namespace) -> int:
        if getattr(args, "log_level", None):
            set_level(args.log_level)
        try:
            return fn(args)
        except MicrogridError as e:
            logger.error(f"{type(e).__name__}: {e}")
            return e.exit_code
        except Exception as e:
            logger.error(f"Unexpected error: {e}")
            traceback.print_exc()
            return EXIT_UNEXPECTED

    return wrapper


class Context:
    """Config, parameters and (lazily) the lifted model for one command invocation."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config_path: Path = resolve_config_path(args.config)
        self.config: MicrogridConfig = load_config(self.config_path)
        self.params: MgParams = build_params(self.config)
        self._model: Optional[LiftedModel] = None

    @property
    def model(self) -> LiftedModel:
        if self._model is None:
            self._model = build_lifted(self.params)
        return self._model

    def out_dir(self, default_name: str) -> Path:
        return Path(self.args.out or Path(settings.OUTPUT_DIR) / default_name)

    def store(self, scenario: str, seed: Optional[int] = None, default_name: Optional[str] = None) -> TrajectoryStore:
        out = self.out_dir(default_name or scenario)
        flags = {k: v for k, v in vars(self.args).items() if k != "func"}
        manifest = RunManifest(
            config_path=str(self.config_path),
            config_sha256=config_digest(self.config_path),
            scenario=scenario,
            seed=seed,
            output_dir=str(out),
            mode=getattr(self.args, "mode", "full"),
            parameters=flags,
        )
        return TrajectoryStore(out, manifest)

    def y_ref(self) -> List[float]:
        given = getattr(self.args, "y_ref", None) or self.config.simulation.y_ref
        if given is None:
            return [DEFAULT_Y_REF] * self.params.m
        if len(given) == 1:
            return [float(given[0])] * self.params.m
        if len(given) != self.params.m:
            raise ConfigError(f"y_ref needs 1 or {self.params.m} values, got {len(given)}")
        return [float(v) for v in given]

    def u_const(self) -> List[float]:
        v_set = self.config.simulation.v_set
        return list(v_set) if v_set is not None else self.params.v_set().tolist()

    def weights(self) -> ControllerWeights:
        path = getattr(self.args, "weights", None)
        if not path:
            return self.config.controller
        path = Path(path)
        if not path.is_file():
            raise ArtifactError(f"weights file not found: {path}")
        try:
            return ControllerWeights.model_validate(json.loads(path.read_text()))
        except (json.JSONDecodeError, ValidationError) as e:
            raise ConfigError(f"invalid weights file {path}: {e}") from e

    def integrator(self) -> IntegratorSpec:
        sim = self.config.simulation
        args = self.args
        t_end = getattr(args, "t_end", None) or sim.t_end
        try:
            return IntegratorSpec(
                method=getattr(args, "method", None) or sim.method or settings.INTEGRATOR_METHOD,
                step=getattr(args, "step", None) or sim.step or settings.INTEGRATOR_STEP,
                rel_tol=sim.rtol or settings.RTOL,
                abs_tol=sim.atol or settings.ATOL,
                t_span=(0.0, float(t_end)),
            )
        except ValidationError as e:
            raise ConfigError(f"invalid integrator settings: {e}") from e

    def initial(self) -> np.ndarray:
        if self.config.initial is None:
            raise ConfigError(f"{self.config_path} has no [initial] table")
        return initial_state(self.params, self.config.initial)

    def scenario(self, name: str, policy: str = "constant", record_lifted: bool = False, seed: Optional[int] = None, fraction: float = 0.0) -> Scenario:
        sim = self.config.simulation
        args = self.args
        try:
            return Scenario(
                name=name,
                mode=getattr(args, "mode", "full"),
                x0=self.initial(),
                u_const=self.u_const(),
                policy=policy,
                engage_time=getattr(args, "engage_time", None) if getattr(args, "engage_time", None) is not None else sim.engage_time,
                y_ref=self.y_ref(),
                record_stride=getattr(args, "stride", None) or sim.record_stride,
                record_lifted=record_lifted,
                integrator=self.integrator(),
                perturbation=PerturbationSpec(fraction=fraction, seed=seed) if fraction else None,
            )
        except ValidationError as e:
            raise ConfigError(f"invalid scenario: {e}") from e


def split_pairs(paths: List[Path]) -> List[Tuple[str, Path, Optional[Path]]]:
    """Group <name>_full.csv / <name>_surrogate.csv with <name>_lifted.csv."""
    groups = {}
    for path in paths:
        stem = path.stem
        for suffix in ("_full", "_surrogate", "_lifted"):
            if stem.endswith(suffix):
                key = stem[: -len(suffix)]
                groups.setdefault(key, {})["lifted" if suffix == "_lifted" else "plant"] = path
    return [(key, g["plant"], g.get("lifted")) for key, g in groups.items() if "plant" in g]
