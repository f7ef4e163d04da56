"""Orbit records, run configuration and the on-disk JSON archive.

Records are stored one file per orbit. Floats are written as 17-significant
digit strings so a write/read round trip is bit-exact, and the file name is
a hash of the inputs that determine the orbit (masses, angle, boundary
parameters, settings), which makes repeated runs idempotent.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .boundary import RotationAngle
from .dynamics import MassModel, PhaseState

SCHEMA_VERSION = 1
ARCHIVE_ENV = "SPBC_ARCHIVE_DIR"


def _num(x):
    return f"{float(x):.17g}"


def _encode(obj):
    """Recursively replace floats by 17-digit strings."""
    if isinstance(obj, (bool, np.bool_)) or obj is None or isinstance(obj, str):
        return bool(obj) if isinstance(obj, np.bool_) else obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_num(obj.real), _num(obj.imag)]
    if isinstance(obj, np.ndarray):
        return [_encode(x) for x in obj.tolist()] if obj.dtype != complex else [_encode(complex(x)) for x in obj]
    if isinstance(obj, dict):
        return {str(k): _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(x) for x in obj]
    raise TypeError(f"cannot encode {type(obj).__name__}")


def _floats(seq):
    return [float(x) for x in seq]


@dataclass
class RunConfig:
    """Settings for every stage of a run, loadable from a JSON file."""

    N_schedule: tuple = (512,)
    N_polish: int = 2048
    grad_tol: float = 1e-10
    max_inner_iter: int = 4000
    strategy: str = "joint"
    shooting_tol: float = 1e-10
    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_step: float = 0.05
    theta_min_pi: float = 0.6
    theta_max_pi: float = 1.4
    theta_step_pi: float = 0.005
    mu_min: float = 0.2
    mu_max: float = 3.0
    mu_step: float = 0.02
    a_tests: list = field(default_factory=list)
    seed: int = 0
    stability: bool = True
    verify_tol: float = 1e-4

    def __post_init__(self):
        self.N_schedule = tuple(int(n) for n in self.N_schedule)
        self.validate()

    def validate(self):
        problems = []
        if not self.N_schedule or any(n < 4 or n > 1 << 16 for n in self.N_schedule):
            problems.append("N_schedule entries must lie in [4, 65536]")
        if not 4 <= self.N_polish <= 1 << 16:
            problems.append("N_polish must lie in [4, 65536]")
        for name in ("grad_tol", "shooting_tol", "abs_tol", "rel_tol", "verify_tol"):
            v = getattr(self, name)
            if not (0 < v < 1):
                problems.append(f"{name} must lie in (0, 1)")
        if not 0 < self.max_step <= 1:
            problems.append("max_step must lie in (0, 1]")
        if self.strategy not in ("joint", "nelder-mead"):
            problems.append("strategy must be 'joint' or 'nelder-mead'")
        if not (0 < self.theta_min_pi < self.theta_max_pi < 2 and self.theta_step_pi > 0):
            problems.append("theta range must satisfy 0 < min < max < 2 (units of pi)")
        if not (0 < self.mu_min <= self.mu_max and self.mu_step > 0):
            problems.append("mu range must satisfy 0 < min <= max with positive step")
        for a in self.a_tests:
            if len(a) != 6:
                problems.append("each a_test needs six entries")
        if problems:
            raise ValueError("; ".join(problems))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            data = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        d = asdict(self)
        d["N_schedule"] = list(self.N_schedule)
        return d

    def digest(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def theta_grid(self):
        n = int(round((self.theta_max_pi - self.theta_min_pi) / self.theta_step_pi))
        return (self.theta_min_pi + self.theta_step_pi * np.arange(n + 1)) * math.pi

    def mu_grid(self):
        n = int(round((self.mu_max - self.mu_min) / self.mu_step))
        return np.round(self.mu_min + self.mu_step * np.arange(n + 1), 12)

    def minimizer_settings(self):
        from .minimize import MinimizerSettings
        return MinimizerSettings(grad_tol=self.grad_tol, max_inner_iter=self.max_inner_iter,
                                 N_schedule=self.N_schedule, N_polish=self.N_polish)

    def integrator_settings(self):
        from .integrator import IntegratorSettings
        return IntegratorSettings(abs_tol=self.abs_tol, rel_tol=self.rel_tol, max_step=self.max_step)


@dataclass
class OrbitRecord:
    """Everything known about one orbit, in a form that survives JSON."""

    m1: float
    m2: float
    theta: float
    P: int | None
    Q: int | None
    a_star: list
    T: float
    state: list                       # 16 numbers: q1x..q4y, v1x..v4y
    action: float | None = None
    classification: dict = field(default_factory=dict)
    stability: dict = field(default_factory=dict)
    source: str = "minimize"
    settings_hash: str = ""
    tool_version: str = __version__
    flags: list = field(default_factory=list)
    shooting_residual: float | None = None

    @property
    def mu(self):
        return self.m2 / self.m1

    @property
    def masses(self):
        return MassModel(self.m1, self.m2)

    @property
    def angle(self):
        if self.P is not None:
            return RotationAngle.from_rational(self.P, self.Q)
        return RotationAngle(self.theta)

    def phase_state(self):
        return PhaseState.from_vector(np.array(self.state))

    @property
    def record_id(self):
        key = {"m1": _num(self.m1), "m2": _num(self.m2), "theta": _num(self.theta),
               "a": [_num(x) for x in self.a_star], "settings": self.settings_hash,
               "source": self.source}
        return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:16]

    def to_json(self):
        body = {"schema_version": SCHEMA_VERSION, "id": self.record_id}
        for f in fields(self):
            body[f.name] = _encode(getattr(self, f.name))
        body["mu"] = _num(self.mu)
        return json.dumps(body, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {d.get('schema_version')}")
        return cls(
            m1=float(d["m1"]), m2=float(d["m2"]), theta=float(d["theta"]),
            P=d["P"], Q=d["Q"], a_star=_floats(d["a_star"]), T=float(d["T"]),
            state=_floats(d["state"]),
            action=None if d["action"] is None else float(d["action"]),
            classification=_decode(d["classification"]),
            stability=_decode(d["stability"]),
            source=d["source"], settings_hash=d["settings_hash"],
            tool_version=d["tool_version"], flags=list(d["flags"]),
            shooting_residual=None if d["shooting_residual"] is None else float(d["shooting_residual"]),
        )


def _decode(obj):
    """Inverse of :func:`_encode` for the nested dictionaries of a record."""
    if isinstance(obj, dict):
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(x) for x in obj]
    if isinstance(obj, str):
        try:
            return float(obj)
        except ValueError:
            return obj
    return obj


def archive_dir(path=None):
    if path is not None:
        d = Path(path)
    else:
        d = Path(os.environ.get(ARCHIVE_ENV, Path.home() / ".spbc" / "archive"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_record(record, directory=None):
    """Atomically write a record; returns its path."""
    d = archive_dir(directory)
    target = d / f"{record.record_id}.json"
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(record.to_json())
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target


def read_record(record_id, directory=None):
    d = archive_dir(directory)
    p = d / f"{record_id}.json"
    if not p.exists():
        matches = sorted(d.glob(f"{record_id}*.json"))
        if len(matches) != 1:
            raise FileNotFoundError(f"no unique record matching {record_id!r} in {d}")
        p = matches[0]
    return OrbitRecord.from_json(p.read_text())


def list_records(directory=None):
    d = archive_dir(directory)
    return sorted(p.stem for p in d.glob("*.json") if not p.name.startswith(".tmp-"))
