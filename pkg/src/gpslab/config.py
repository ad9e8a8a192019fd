"""Experiment configuration: TOML parsing with strict validation.

Every key is checked before any computation starts; unknown sections or keys
are rejected with the offending line number.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .errors import ConfigError


@dataclass(frozen=True)
class KernelConfig:
    alpha: float = 1.5
    family: str = "constant"
    c0: float = 1.0
    kappa: float = 0.0
    t_max: int = 100_000


@dataclass(frozen=True)
class ModelConfig:
    beta: float = 0.0
    h: float | None = None
    h_gap: float | None = None
    gamma_p: int = 1
    gamma_q: int = 1
    disorder: str = "gaussian_unit"
    master_seed: int = 0
    h_list: tuple[float, ...] = ()
    beta_list: tuple[float, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    N_list: tuple[int, ...] = (64, 128, 256)
    replicas: int = 16
    budget: float = 4.0e10
    threads: int | None = None
    out_dir: str = "out"


@dataclass(frozen=True)
class CertificateConfig:
    delta: float = 0.9
    k_scale: int | None = None
    epsilon: float = 0.5
    n_lambda: int = 8
    lambdas: tuple[float, ...] = ()
    ells: tuple[float, ...] = ()
    use_tilt: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    kernel: KernelConfig = field(default_factory=KernelConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    run: RunConfig = field(default_factory=RunConfig)
    certificate: CertificateConfig = field(default_factory=CertificateConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form (after command-line overrides).

        ``run.out_dir`` and ``run.threads`` do not affect results and are
        left out, so serial and parallel runs produce identical files.
        """
        d = self.to_dict()
        d["run"].pop("out_dir")
        d["run"].pop("threads")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, section: str, **kw) -> "ExperimentConfig":
        sec = dataclasses.replace(getattr(self, section), **kw)
        return dataclasses.replace(self, **{section: sec})

    @property
    def h(self) -> float:
        """Pinning reward; ``h_gap`` is measured from the annealed critical point."""
        return resolve_h(self)


_SECTIONS = {
    "kernel": KernelConfig,
    "model": ModelConfig,
    "run": RunConfig,
    "certificate": CertificateConfig,
}


def _line_of(text: str, section: str | None, key: str) -> int | None:
    """Best-effort line number of ``key`` (inside ``[section]`` when given)."""
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_.-]+)\s*\]", s)
        if m:
            current = m.group(1)
            if section is None and current == key:
                return no
            continue
        if current == section and re.match(rf"^{re.escape(key)}\s*=", s):
            return no
    return None


def _where(text: str, section: str | None, key: str) -> str:
    ln = _line_of(text, section, key)
    name = f"{section}.{key}" if section else f"[{key}]"
    return f"{name} (line {ln})" if ln else name


def _coerce(section: str, key: str, value, ftype: str, where: str):
    def bad(msg: str):
        raise ConfigError(f"{where}: {msg}")

    base = ftype.replace(" | None", "")
    if value is None:
        return None
    if base == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            bad("expected a number")
        return float(value)
    if base == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            bad("expected an integer")
        return int(value)
    if base == "str":
        if not isinstance(value, str):
            bad("expected a string")
        return value
    if base == "bool":
        if not isinstance(value, bool):
            bad("expected true or false")
        return value
    if base.startswith("tuple[float"):
        if not isinstance(value, list) or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
            bad("expected a list of numbers")
        return tuple(float(x) for x in value)
    if base.startswith("tuple[int"):
        if not isinstance(value, list) or not all(
                isinstance(x, int) and not isinstance(x, bool) for x in value):
            bad("expected a list of integers")
        return tuple(int(x) for x in value)
    raise AssertionError(ftype)  # pragma: no cover


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate TOML text.

    Raises
    ------
    ConfigError
        On syntax errors, unknown sections or keys, wrong types or values
        out of range. The message names the key and its line.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"TOML syntax error: {e}") from None
    parts = {}
    for sec, body in raw.items():
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown section {_where(text, None, sec)}")
        if not isinstance(body, dict):
            raise ConfigError(f"{sec} must be a table")
        cls = _SECTIONS[sec]
        types = {f.name: str(f.type) for f in dataclasses.fields(cls)}
        kw = {}
        for key, val in body.items():
            where = _where(text, sec, key)
            if key not in types:
                raise ConfigError(f"unknown key {where}")
            kw[key] = _coerce(sec, key, val, types[key], where)
        parts[sec] = cls(**kw)
    cfg = ExperimentConfig(**parts)
    validate(cfg, text)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {p}: {e}") from None
    return parse_config(text)


def validate(cfg: ExperimentConfig, text: str = "") -> None:
    """Range checks shared by files and command-line overrides."""
    def fail(sec: str, key: str, msg: str):
        raise ConfigError(f"{_where(text, sec, key)}: {msg}")

    k, m, r, c = cfg.kernel, cfg.model, cfg.run, cfg.certificate
    if not k.alpha > 0:
        fail("kernel", "alpha", "must be positive")
    if k.alpha == 1.0:
        fail("kernel", "alpha", "alpha = 1 is not supported")
    if k.family not in ("constant", "log_power"):
        fail("kernel", "family", "must be 'constant' or 'log_power'")
    if not k.c0 > 0:
        fail("kernel", "c0", "must be positive")
    if k.t_max < 1000:
        fail("kernel", "t_max", "must be at least 1000")
    if m.beta < 0:
        fail("model", "beta", "must be nonnegative")
    if m.h is not None and m.h_gap is not None:
        fail("model", "h_gap", "give either h or h_gap, not both")
    if m.gamma_p < 1:
        fail("model", "gamma_p", "must be a positive integer")
    if m.gamma_q < 1:
        fail("model", "gamma_q", "must be a positive integer")
    if m.disorder not in ("gaussian_unit", "rademacher_unit"):
        fail("model", "disorder", "must be 'gaussian_unit' or 'rademacher_unit'")
    if not 0 <= m.master_seed < 2**64:
        fail("model", "master_seed", "must be an unsigned 64-bit integer")
    if any(b < 0 for b in m.beta_list):
        fail("model", "beta_list", "entries must be nonnegative")
    if not r.N_list or any(n < 1 for n in r.N_list):
        fail("run", "N_list", "must be a nonempty list of positive integers")
    if r.replicas < 1:
        fail("run", "replicas", "must be positive")
    if not r.budget > 0:
        fail("run", "budget", "must be positive")
    if r.threads is not None and r.threads < 1:
        fail("run", "threads", "must be positive")
    if not 0 < c.delta < 1:
        fail("certificate", "delta", "must lie in (0, 1)")
    if c.k_scale is not None and c.k_scale < 1:
        fail("certificate", "k_scale", "must be positive")
    if not 0 < c.epsilon <= 1:
        fail("certificate", "epsilon", "must lie in (0, 1]")
    if c.n_lambda < 1:
        fail("certificate", "n_lambda", "must be positive")
    if any(x <= 0 for x in c.ells):
        fail("certificate", "ells", "entries must be positive")


def resolve_h(cfg: ExperimentConfig) -> float:
    """``h`` from ``model.h`` or ``h_c^a(beta) + model.h_gap`` (default 0)."""
    from .disorder import DisorderSpec

    m = cfg.model
    if m.h_gap is not None:
        return float(-DisorderSpec(m.disorder).log_Q(m.beta) + m.h_gap)
    return float(m.h) if m.h is not None else 0.0
