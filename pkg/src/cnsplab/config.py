"""Strict experiment configuration: flat `section.key = value` documents.

Every key has a default; unknown keys and malformed values are rejected, and
parsing reports the full list of errors rather than the first one, so a
config file doubles as the reproducibility record of a run.  Numeric values
accept a trailing ``pi`` multiplier (``64pi``) since box lengths are usually
multiples of pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

EXPERIMENTS = ("green_verify", "kernel_bounds", "dispersion_contrast",
               "linear_decay", "nonlinear_decay", "solver_convergence")


class ConfigError(ValueError):
    """Carries the full list of configuration problems."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def _parse_number(text: str) -> float:
    s = text.strip().lower()
    factor = 1.0
    if s.endswith("pi"):
        factor = math.pi
        s = s[:-2].strip() or "1"
    return float(s) * factor


def _parse_bool(text: str) -> bool:
    s = text.strip().lower()
    if s in ("on", "true", "yes", "1"):
        return True
    if s in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def _parse_int(text: str) -> int:
    v = _parse_number(text)
    if abs(v - round(v)) > 1e-9:
        raise ValueError(f"expected an integer, got {text!r}")
    return int(round(v))


def _parse_float_list(text: str):
    items = [s for s in text.replace(";", ",").split(",") if s.strip()]
    return tuple(_parse_number(s) for s in items)


def _parse_auto_int(text: str):
    if text.strip().lower() == "auto":
        return None
    return _parse_int(text)


def _parse_auto_float(text: str):
    if text.strip().lower() == "auto":
        return None
    return _parse_number(text)


@dataclass
class ExperimentConfig:
    experiment: str = "green_verify"
    # grid
    grid_dim: int = 2
    grid_n: int = 128
    grid_box_length: float = 64.0 * math.pi
    # model parameters
    params_mu1: float = 1.0
    params_mu2: float = 0.0
    params_kappa: float = 1.0
    params_gamma: float = 1.0
    # partition
    partition_j0: int | None = None          # None = from xi_0/2
    # initial-data profile
    profile_sigma1: float = -1.0
    profile_p: float = 2.0
    profile_amplitude: float = 1e-3
    profile_seed: int = 0
    profile_flavor: str = "random_phase"
    profile_style: str = "aa1"
    profile_jtop: int | None = None
    # stepper
    stepper_dt: float = 0.25
    stepper_scheme: str = "etd2rk"
    stepper_dealias: bool = True
    stepper_cfl_target: float = 0.5
    stepper_t_end: float | None = None       # None = box-valid horizon
    # decay harness
    decay_sigmas: tuple = (0.0,)
    decay_seeds: tuple = (0, 1, 2)
    decay_fit_lo: float | None = None        # None = t_valid/20
    decay_fit_hi: float | None = None        # None = t_valid/2
    decay_samples: int = 240
    decay_smooth: float = 1.35
    decay_r: float = 2.0
    decay_tol_exponent: float = 0.1
    decay_tol_gap: float = 0.05
    # kernel probes
    kernel_j_lo: int = -7
    kernel_oversample: int = 4
    kernel_kappas: tuple = (1.0, 0.0)
    kernel_tau_max: float = 16.0
    # output
    output_directory: str = "out"
    output_snapshot_every: int = 0
    output_csv_streams: bool = True

    def sections(self):
        """Canonical (section.key, value) pairs for echoing into manifests."""
        out = []
        for f in fields(self):
            key = f.name.replace("_", ".", 1) if "_" in f.name else f.name
            out.append((key, getattr(self, f.name)))
        return out


_SCHEMA = {
    "experiment": ("experiment", lambda s: s.strip(),
                   lambda v: v in EXPERIMENTS,
                   f"must be one of {', '.join(EXPERIMENTS)}"),
    "grid.dim": ("grid_dim", _parse_int, lambda v: v in (1, 2, 3),
                 "must be 1, 2 or 3"),
    "grid.n": ("grid_n", _parse_int,
               lambda v: v >= 8 and (v & (v - 1)) == 0,
               "n must be a power of two >= 8"),
    "grid.box_length": ("grid_box_length", _parse_number, lambda v: v > 0,
                        "must be positive"),
    "params.mu1": ("params_mu1", _parse_number, lambda v: v > 0,
                   "must be positive"),
    "params.mu2": ("params_mu2", _parse_number, lambda v: True, ""),
    "params.kappa": ("params_kappa", _parse_number, lambda v: True, ""),
    "params.gamma": ("params_gamma", _parse_number, lambda v: v > 0,
                     "must be positive"),
    "partition.j0": ("partition_j0", _parse_auto_int, lambda v: True, ""),
    "profile.sigma1": ("profile_sigma1", _parse_number, lambda v: True, ""),
    "profile.p": ("profile_p", _parse_number, lambda v: v >= 1,
                  "must be >= 1"),
    "profile.amplitude": ("profile_amplitude", _parse_number,
                          lambda v: v >= 0, "must be nonnegative"),
    "profile.seed": ("profile_seed", _parse_int, lambda v: v >= 0,
                     "must be nonnegative"),
    "profile.flavor": ("profile_flavor", lambda s: s.strip(),
                       lambda v: v in ("random_phase", "deterministic_powerlaw"),
                       "must be random_phase or deterministic_powerlaw"),
    "profile.style": ("profile_style", lambda s: s.strip(),
                      lambda v: v in ("aa1", "classical"),
                      "must be aa1 or classical"),
    "profile.jtop": ("profile_jtop", _parse_auto_int, lambda v: True, ""),
    "stepper.dt": ("stepper_dt", _parse_number, lambda v: v > 0,
                   "must be positive"),
    "stepper.scheme": ("stepper_scheme", lambda s: s.strip(),
                       lambda v: v in ("etd1", "etd2rk"),
                       "must be etd1 or etd2rk"),
    "stepper.dealias": ("stepper_dealias", _parse_bool, lambda v: True, ""),
    "stepper.cfl_target": ("stepper_cfl_target", _parse_number,
                           lambda v: v > 0, "must be positive"),
    "stepper.t_end": ("stepper_t_end", _parse_auto_float,
                      lambda v: v is None or v >= 0, "must be nonnegative"),
    "decay.sigmas": ("decay_sigmas", _parse_float_list,
                     lambda v: len(v) > 0, "must list at least one sigma"),
    "decay.seeds": ("decay_seeds", _parse_float_list,
                    lambda v: len(v) > 0, "must list at least one seed"),
    "decay.fit_lo": ("decay_fit_lo", _parse_auto_float,
                     lambda v: v is None or v > 0, "must be positive"),
    "decay.fit_hi": ("decay_fit_hi", _parse_auto_float,
                     lambda v: v is None or v > 0, "must be positive"),
    "decay.samples": ("decay_samples", _parse_int, lambda v: v >= 24,
                      "must be >= 24"),
    "decay.smooth": ("decay_smooth", _parse_number, lambda v: v >= 1.0,
                     "must be >= 1"),
    "decay.r": ("decay_r", _parse_number, lambda v: v >= 1.0,
                "must be >= 1"),
    "decay.tol_exponent": ("decay_tol_exponent", _parse_number,
                           lambda v: v > 0, "must be positive"),
    "decay.tol_gap": ("decay_tol_gap", _parse_number, lambda v: v > 0,
                      "must be positive"),
    "kernel.j_lo": ("kernel_j_lo", _parse_int, lambda v: v < 0,
                    "must be negative (low-frequency blocks)"),
    "kernel.oversample": ("kernel_oversample", _parse_int, lambda v: v >= 4,
                          "must be >= 4"),
    "kernel.kappas": ("kernel_kappas", _parse_float_list,
                      lambda v: len(v) > 0, "must list at least one kappa"),
    "kernel.tau_max": ("kernel_tau_max", _parse_number, lambda v: v > 0,
                       "must be positive"),
    "output.directory": ("output_directory", lambda s: s.strip(),
                         lambda v: len(v) > 0, "must be nonempty"),
    "output.snapshot_every": ("output_snapshot_every", _parse_int,
                              lambda v: v >= 0, "must be nonnegative"),
    "output.csv_streams": ("output_csv_streams", _parse_bool,
                           lambda v: True, ""),
}


def parse_config(text: str, overrides=()) -> ExperimentConfig:
    """Parse a config document plus `section.key=value` override strings.

    Raises ConfigError carrying every problem found (unknown keys, type
    mismatches, constraint violations), not just the first.
    """
    cfg = ExperimentConfig()
    errors = []

    def apply(key: str, raw: str, where: str):
        key = key.strip()
        if key not in _SCHEMA:
            errors.append(f"{where}: unknown key {key!r}")
            return
        attr, parse, check, msg = _SCHEMA[key]
        try:
            value = parse(raw)
        except ValueError as exc:
            errors.append(f"{where}: {key}: {exc}")
            return
        if not check(value):
            errors.append(f"{where}: {key} = {raw.strip()!r}: {msg}")
            return
        setattr(cfg, attr, value)

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            errors.append(f"line {lineno}: expected 'section.key = value', "
                          f"got {stripped!r}")
            continue
        key, raw = stripped.split("=", 1)
        apply(key, raw, f"line {lineno}")

    for ov in overrides:
        if "=" not in ov:
            errors.append(f"--set {ov!r}: expected section.key=value")
            continue
        key, raw = ov.split("=", 1)
        apply(key, raw, f"--set {ov.split('=', 1)[0]}")

    if errors:
        raise ConfigError(errors)
    cfg.decay_seeds = tuple(int(s) for s in cfg.decay_seeds)
    return cfg
