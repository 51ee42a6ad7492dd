"""Flat ``key = value`` experiment configuration.

Lists are comma separated. Ranges use ``lo,hi,count`` and are expanded
geometrically. Unknown keys and out-of-range values raise ``ConfigError``
naming the key.
"""

import configparser
import dataclasses
import math
from dataclasses import dataclass, field, fields

from .dynamics import IIDSystem, InducedSystem, IntermittentMapSpec, RoofSpec
from .errors import ConfigError, DomainError
from .renewal import TargetSets
from .specfun import TailModel

_SECTION = "experiment"


def _floats(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _ints(text):
    return tuple(int(float(v)) for v in str(text).split(",") if v.strip())


def _fmt(v):
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class ExperimentConfig:
    # system
    mode: str = "map"
    gamma1: float = 4.0 / 3.0
    c1: float = 1.0
    roof: str = "affine:1,0.5"
    beta: float = 0.75
    c0: float = 1.0
    iid_body: str = "balanced"
    c0_map: float = 0.0
    # sets; empty interval means all of Y
    A: tuple = ()
    B: tuple = ()
    a1: float = 0.0
    a2: float = 1.0
    b1: float = 0.0
    b2: float = 0.5
    # grids
    t_ladder: tuple = (100.0, 3000.0, 6.0)
    window_h: float = 0.5
    wre_t: tuple = (1000.0, 10000.0, 3.0)
    n_list: tuple = (25, 50, 100, 200)
    llt_h_frac: float = 0.005
    llt_points: int = 241
    liminf_t: tuple = (100.0, 10000.0, 400.0)
    liminf_h: float = 2.0
    q_list: tuple = (2, 4, 8)
    aperiodic_b: tuple = (0.05, 20.0, 200.0)
    asym_b: tuple = (1e-3, 1e-1, 21.0)
    resolvent_b: tuple = (1e-6, 1e-4, 9.0)
    xval_sigma: tuple = (0.05, 0.1, 0.2)
    karamata_sigma: tuple = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    # tolerances
    srt_tol: float = 0.0
    wre_tol: float = 0.0
    llt_tol: float = 0.0
    karamata_tol: float = 0.05
    xval_tol: float = 0.02
    margin: float = 1e-3
    # budgets
    N: int = 100000
    N_llt: int = 1000000
    N_xval: int = 100000
    tail_samples: int = 0
    grid_size: int = 4096
    samples_per_cell: int = 256
    ulam_max_iter: int = 0
    max_iter: int = 10**9
    budget_seconds: float = 0.0
    # execution and output
    seed: int = 0
    shards: int = 1
    n_jobs: int = 1
    outdir: str = "renewlab_out"
    formats: tuple = ("json", "csv")

    def __post_init__(self):
        self._check()

    # -- validation ---------------------------------------------------------

    def _check(self):
        def need(ok, key, msg):
            if not ok:
                raise ConfigError(f"{key}: {msg} (got {getattr(self, key)!r})", key=key)

        need(self.mode in ("map", "iid"), "mode", "must be map or iid")
        need(self.gamma1 >= 1.0, "gamma1", "must be >= 1")
        need(0.0 < self.c1 <= 1.0, "c1", "must lie in (0, 1]")
        try:
            RoofSpec.parse(self.roof)
        except DomainError as exc:
            raise ConfigError(f"roof: {exc}", key="roof") from exc
        need(0.0 < self.beta < 1.0, "beta", "must lie in (0, 1)")
        need(self.c0 > 0.0, "c0", "must be positive")
        need(self.iid_body in ("balanced", "pareto"), "iid_body", "must be balanced or pareto")
        need(self.c0_map >= 0.0, "c0_map", "must be >= 0 (0 means fit)")
        for key in ("A", "B"):
            v = getattr(self, key)
            need(len(v) in (0, 2) and (not v or 0.0 <= v[0] < v[1] <= 1.0), key,
                 "must be empty or lo,hi inside [0, 1]")
        need(0.0 <= self.a1 < self.a2, "a2", "need 0 <= a1 < a2")
        need(0.0 <= self.b1 < self.b2, "b2", "need 0 <= b1 < b2")
        for key in ("t_ladder", "wre_t", "liminf_t", "aperiodic_b", "asym_b", "resolvent_b"):
            v = getattr(self, key)
            need(len(v) == 3 and 0 < v[0] < v[1] and v[2] >= 2, key, "must be lo,hi,count")
        need(self.window_h > 0, "window_h", "must be positive")
        need(self.liminf_h > 0, "liminf_h", "must be positive")
        need(len(self.n_list) >= 1 and all(b > a for a, b in zip(self.n_list, self.n_list[1:]))
             and self.n_list[0] >= 1, "n_list", "must be increasing positive integers")
        need(0 < self.llt_h_frac < 1, "llt_h_frac", "must lie in (0, 1)")
        need(self.llt_points >= 3, "llt_points", "must be >= 3")
        need(all(q >= 1 for q in self.q_list) and self.q_list, "q_list", "must be >= 1")
        need(all(s > 0 for s in self.xval_sigma) and self.xval_sigma, "xval_sigma",
             "must be positive")
        need(all(s > 0 for s in self.karamata_sigma) and self.karamata_sigma, "karamata_sigma",
             "must be positive")
        for key in ("srt_tol", "wre_tol", "llt_tol", "karamata_tol", "xval_tol", "margin"):
            need(getattr(self, key) >= 0, key, "must be >= 0")
        for key in ("N", "N_llt", "N_xval"):
            need(getattr(self, key) >= 1, key, "must be >= 1")
        need(self.tail_samples == 0 or self.tail_samples >= 10**4, "tail_samples",
             "must be 0 (automatic) or >= 1e4")
        need(self.grid_size >= 2, "grid_size", "must be >= 2")
        need(self.samples_per_cell >= 10, "samples_per_cell", "must be >= 10")
        need(self.max_iter >= 1, "max_iter", "must be >= 1")
        need(self.ulam_max_iter >= 0, "ulam_max_iter", "must be >= 0 (0 means automatic)")
        need(self.budget_seconds >= 0, "budget_seconds", "must be >= 0 (0 means no limit)")
        need(0 <= self.seed < 2**64, "seed", "must be a 64-bit unsigned integer")
        need(self.shards >= 1, "shards", "must be >= 1")
        need(self.n_jobs >= 1, "n_jobs", "must be >= 1")
        need(set(self.formats) <= {"json", "csv"}, "formats", "must be json and/or csv")
        if self.mode == "iid":
            try:
                IIDSystem(TailModel(self.beta, c0=self.c0), self.iid_body)
            except DomainError as exc:
                raise ConfigError(f"c0: {exc}", key="c0") from exc

    # -- derived objects ----------------------------------------------------

    @property
    def derived_beta(self):
        return self.beta if self.mode == "iid" else 1.0 / self.gamma1

    @property
    def ulam_cap(self):
        """Excursion cap of the Ulam build; long creeps near the neutral point
        cost ``cap`` steps each, so small beta gets a lower cap."""
        if self.ulam_max_iter:
            return self.ulam_max_iter
        return 10**7 if self.derived_beta >= 0.5 else 10**5

    @property
    def tail_size(self):
        """Roof samples for the tail fit; the c0 estimate has about
        ``1 / sqrt(size * S(t_hi))`` relative noise."""
        if self.tail_samples:
            return self.tail_samples
        return 10**7 if self.derived_beta >= 0.5 else 2 * 10**6

    def system(self):
        if self.mode == "iid":
            return IIDSystem(TailModel(self.beta, c0=self.c0), self.iid_body, self.max_iter)
        return InducedSystem(IntermittentMapSpec(self.gamma1, self.c1),
                             RoofSpec.parse(self.roof), self.max_iter)

    def sets(self):
        return TargetSets(self.A or None, self.B or None, (self.a1, self.a2), (self.b1, self.b2))

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_text(self):
        lines = [f"{k} = {_fmt(v)}" for k, v in self.to_dict().items()]
        return "\n".join(lines) + "\n"

    def echo(self):
        """Config plus derived quantities, for reports."""
        d = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.to_dict().items()}
        d["derived_beta"] = self.derived_beta
        return d


_CASTS = {}
for _f in fields(ExperimentConfig):
    default = _f.default
    if isinstance(default, tuple):
        if _f.name in ("n_list", "q_list"):
            _CASTS[_f.name] = _ints
        elif _f.name == "formats":
            _CASTS[_f.name] = lambda s: tuple(v.strip() for v in str(s).split(",") if v.strip())
        else:
            _CASTS[_f.name] = _floats
    elif isinstance(default, bool):
        _CASTS[_f.name] = lambda s: str(s).lower() in ("1", "true", "yes")
    elif isinstance(default, int):
        _CASTS[_f.name] = lambda s: int(float(s))
    elif isinstance(default, float):
        _CASTS[_f.name] = float
    else:
        _CASTS[_f.name] = str


def _coerce(values):
    out = {}
    for key, raw in values.items():
        if key not in _CASTS:
            raise ConfigError(f"unknown key {key!r}", key=key)
        try:
            v = _CASTS[key](raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: cannot parse {raw!r}", key=key) from exc
        if isinstance(v, float) and not math.isfinite(v):
            raise ConfigError(f"{key}: must be finite", key=key)
        out[key] = v
    return out


def parse_config_text(text, overrides=None):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = dict(cp[_SECTION])
    values.update(overrides or {})
    return ExperimentConfig(**_coerce(values))


def parse_config(path=None, overrides=None):
    """Load ``path`` (or nothing) and apply ``overrides`` (raw strings)."""
    text = ""
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, overrides)
