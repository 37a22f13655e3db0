"""Run configuration: plain-text `key = value` files plus flag overrides.

Files hold one dotted key per line (`solver.eta = 1e-3`); `#` starts a
comment. Unknown keys are rejected. Command-line flags override file
values; the environment variable NOPAIN_SEED is the seed of last resort.
The fully resolved configuration is echoed to the run log (stderr) so
every run records what it actually used.
"""

import os
from dataclasses import dataclass

from .boundary import PAIR_SELECTION_MODES, THRESHOLD_MODES, BoundaryConfig
from .errors import ConfigError
from .metrics import CD_VARIANTS
from .sdot import SolverConfig

SEED_ENV_VAR = "NOPAIN_SEED"


def _to_int(raw: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"expected an integer, got {raw!r}") from exc


def _to_float(raw: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"expected a number, got {raw!r}") from exc


def _to_choice(options):
    def convert(raw: str) -> str:
        if raw not in options:
            raise ConfigError(f"expected one of {options}, got {raw!r}")
        return raw
    return convert


# Every addressable key with its parser and built-in default. None defaults
# are resolved late (seed fallback chain, batch size from N).
KEY_SPECS: dict[str, tuple] = {
    "seed": (_to_int, None),
    "threads": (_to_int, None),
    "solver.batch_size": (_to_int, None),
    "solver.learning_rate": (_to_float, 1e-2),
    "solver.eta": (_to_float, 2e-3),
    "solver.patience": (_to_int, 50),
    "solver.batch_growth": (_to_float, 2.0),
    "solver.lr_decay": (_to_float, 0.8),
    "solver.max_epochs": (_to_int, 20000),
    "solver.seed": (_to_int, None),
    "solver.adam_beta1": (_to_float, 0.9),
    "solver.adam_beta2": (_to_float, 0.999),
    "solver.adam_eps": (_to_float, 1e-8),
    "boundary.k": (_to_int, 11),
    "boundary.tau": (_to_float, 1.6),
    "boundary.max_probe_attempts": (_to_int, 1000),
    "boundary.pair_selection": (_to_choice(PAIR_SELECTION_MODES), "max-angle"),
    "boundary.threshold_on": (_to_choice(THRESHOLD_MODES), "angle"),
    "boundary.seed": (_to_int, None),
    "attack.samples": (_to_int, None),
    "metrics.cd_variant": (_to_choice(CD_VARIANTS), "mean-sq"),
    "synth.modes": (_to_int, 2),
    "synth.n": (_to_int, 200),
    "synth.dim": (_to_int, 8),
    "synth.scale": (_to_float, 10.0),
    "synth.stddev": (_to_float, 0.5),
}


def parse_config_file(path) -> dict[str, str]:
    """Read raw key/value strings from a config file, rejecting unknowns."""
    values: dict[str, str] = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected `key = value`")
        key, raw = (part.strip() for part in text.split("=", 1))
        if key not in KEY_SPECS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = raw
    return values


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one CLI invocation."""

    seed: int
    threads: int
    solver: SolverConfig
    boundary: BoundaryConfig
    cd_variant: str
    synth_modes: int
    synth_n: int
    synth_dim: int
    synth_scale: float
    synth_stddev: float
    attack_samples: int | None

    def echo_lines(self) -> list[str]:
        lines = [
            f"seed = {self.seed}",
            f"threads = {self.threads}",
        ]
        for name in ("batch_size", "learning_rate", "eta", "patience",
                     "batch_growth", "lr_decay", "max_epochs", "seed",
                     "adam_beta1", "adam_beta2", "adam_eps"):
            lines.append(f"solver.{name} = {getattr(self.solver, name)}")
        for name in ("k", "tau", "max_probe_attempts", "pair_selection",
                     "threshold_on", "seed"):
            lines.append(f"boundary.{name} = {getattr(self.boundary, name)}")
        lines.append(f"attack.samples = {self.attack_samples}")
        lines.append(f"metrics.cd_variant = {self.cd_variant}")
        lines.append(f"synth.modes = {self.synth_modes}")
        lines.append(f"synth.n = {self.synth_n}")
        lines.append(f"synth.dim = {self.synth_dim}")
        lines.append(f"synth.scale = {self.synth_scale}")
        lines.append(f"synth.stddev = {self.synth_stddev}")
        return lines


def resolve(file_values: dict[str, str] | None,
            flag_values: dict[str, object] | None,
            environ: dict[str, str] | None = None) -> RunConfig:
    """Merge defaults < config file < flags, with the env-var seed fallback."""
    environ = os.environ if environ is None else environ
    merged: dict[str, object] = {k: default for k, (_, default) in KEY_SPECS.items()}
    for key, raw in (file_values or {}).items():
        merged[key] = KEY_SPECS[key][0](raw)
    for key, value in (flag_values or {}).items():
        if value is None:
            continue
        if key not in KEY_SPECS:
            raise ConfigError(f"unknown config key {key!r}")
        merged[key] = value

    seed = merged["seed"]
    if seed is None:
        env_seed = environ.get(SEED_ENV_VAR)
        if env_seed is not None:
            seed = _to_int(env_seed)
        else:
            seed = 0
    solver_seed = merged["solver.seed"] if merged["solver.seed"] is not None else seed
    boundary_seed = (merged["boundary.seed"]
                     if merged["boundary.seed"] is not None else seed)
    threads = merged["threads"]
    if threads is None:
        threads = os.cpu_count() or 1
    if threads < 1:
        raise ConfigError("threads must be >= 1")

    solver = SolverConfig(
        batch_size=merged["solver.batch_size"],
        learning_rate=merged["solver.learning_rate"],
        eta=merged["solver.eta"],
        patience=merged["solver.patience"],
        batch_growth=merged["solver.batch_growth"],
        lr_decay=merged["solver.lr_decay"],
        max_epochs=merged["solver.max_epochs"],
        seed=solver_seed,
        adam_beta1=merged["solver.adam_beta1"],
        adam_beta2=merged["solver.adam_beta2"],
        adam_eps=merged["solver.adam_eps"],
    )
    bound = BoundaryConfig(
        k=merged["boundary.k"],
        tau=merged["boundary.tau"],
        max_probe_attempts=merged["boundary.max_probe_attempts"],
        pair_selection=merged["boundary.pair_selection"],
        threshold_on=merged["boundary.threshold_on"],
        seed=boundary_seed,
    )
    return RunConfig(
        seed=seed,
        threads=threads,
        solver=solver,
        boundary=bound,
        cd_variant=merged["metrics.cd_variant"],
        synth_modes=merged["synth.modes"],
        synth_n=merged["synth.n"],
        synth_dim=merged["synth.dim"],
        synth_scale=merged["synth.scale"],
        synth_stddev=merged["synth.stddev"],
        attack_samples=merged["attack.samples"],
    )
