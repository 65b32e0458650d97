"""Pipeline configuration: an INI file with one section per stage.

Example::

    [paths]
    bsm = data/bsm_oct.csv, data/bsm_apr.csv
    sites = data/sites.csv
    out = run1

    [geofence]
    reach_ft = 150

    [model]
    family = random_poisson
    covariates = aadt_major_k, signalized, L1-Speed-%T(2Sdev)
    random = aadt_major_k

Only the ``paths`` entries may be overridden from the environment
(``DRIVEVOL_BSM``, ``DRIVEVOL_SITES``, ``DRIVEVOL_OUT``).
"""

from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, field

from .errors import ConfigError
from .geofence import DEFAULT_ARM_WIDTH_M, DEFAULT_REACH_FT, DUPLICATE, NEAREST
from .ingest import BSM_FIELDS, DEFAULT_BSM_SCHEMA
from .measures import MeasureParams
from .models import FAMILIES, ModelSpec
from .segmentation import DEFAULT_GAP_S, DEFAULT_MIN_POINTS

ENV_PATHS = {"bsm": "DRIVEVOL_BSM", "sites": "DRIVEVOL_SITES", "out": "DRIVEVOL_OUT"}


@dataclass
class PipelineConfig:
    bsm: list[str] = field(default_factory=list)
    sites: str = ""
    out: str = "out"
    bsm_schema: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_BSM_SCHEMA))
    reach_ft: float = DEFAULT_REACH_FT
    arm_width_m: float = DEFAULT_ARM_WIDTH_M
    overlap: str = DUPLICATE
    gap_s: float = DEFAULT_GAP_S
    min_points: int = DEFAULT_MIN_POINTS
    measures: MeasureParams = field(default_factory=MeasureParams)
    model: ModelSpec = field(default_factory=lambda: ModelSpec(
        covariates=["aadt_major_k", "aadt_minor_k", "signalized", "four_legged"]))
    correlation: str = "pearson"
    hotspot_measures: list[str] | None = None
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    chunk_size: int = 100_000

    def validate(self, need_paths: bool = True) -> None:
        if need_paths:
            if not self.bsm:
                raise ConfigError("paths.bsm is empty")
            for p in self.bsm + [self.sites]:
                if not p or not os.path.exists(p):
                    raise ConfigError(f"input path does not exist: {p!r}")
        if not 0 < self.reach_ft <= 3000:
            raise ConfigError("geofence.reach_ft must be in (0, 3000]")
        if not 0 < self.arm_width_m <= 200:
            raise ConfigError("geofence.arm_width_m must be in (0, 200]")
        if self.overlap not in (DUPLICATE, NEAREST):
            raise ConfigError(f"geofence.overlap must be {DUPLICATE!r} or {NEAREST!r}")
        if self.gap_s <= 0 or self.min_points < 1:
            raise ConfigError("segmentation.gap_s must be > 0 and min_points >= 1")
        m = self.measures
        if m.bin_width_mph <= 0 or m.min_bin_count < 2 or m.v_floor < 0:
            raise ConfigError("measures: bin_width_mph > 0, min_bin_count >= 2, v_floor >= 0 required")
        if tuple(m.z) != (1.0, 2.0):
            raise ConfigError("measures.z must be 1, 2")
        if self.correlation not in ("pearson", "spearman"):
            raise ConfigError("report.correlation must be pearson or spearman")
        if self.workers < 1 or self.chunk_size < 1:
            raise ConfigError("workers and chunk_size must be >= 1")

    def snapshot(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        return d


def _list(text: str) -> list[str]:
    return [p.strip() for p in text.replace("\n", ",").split(",") if p.strip()]


def _get(parser, section, key, conv, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key).strip()
    if raw == "":
        return default
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


def _bool(text: str) -> bool:
    v = text.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def load_config(path: str | None = None, overrides: dict[str, str] | None = None,
                env: dict[str, str] | None = None) -> PipelineConfig:
    """Read an INI file (optional), apply ``section.key=value`` overrides, then env path overrides."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    for dotted, value in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        section, key = dotted.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)

    base = os.path.dirname(os.path.abspath(path)) if path else os.getcwd()

    def rel(p):
        return p if os.path.isabs(p) else os.path.normpath(os.path.join(base, p))

    cfg = PipelineConfig()
    cfg.bsm = [rel(p) for p in _get(parser, "paths", "bsm", _list, [])]
    cfg.sites = rel(_get(parser, "paths", "sites", str, "")) if parser.has_option("paths", "sites") else ""
    cfg.out = rel(_get(parser, "paths", "out", str, cfg.out))
    env = os.environ if env is None else env
    if env.get(ENV_PATHS["bsm"]):
        cfg.bsm = _list(env[ENV_PATHS["bsm"]])
    if env.get(ENV_PATHS["sites"]):
        cfg.sites = env[ENV_PATHS["sites"]]
    if env.get(ENV_PATHS["out"]):
        cfg.out = env[ENV_PATHS["out"]]

    if parser.has_section("bsm_schema"):
        for key, value in parser.items("bsm_schema"):
            if key not in BSM_FIELDS:
                raise ConfigError(f"[bsm_schema] unknown field {key!r}; expected one of {BSM_FIELDS}")
            cfg.bsm_schema[key] = value.strip()

    cfg.reach_ft = _get(parser, "geofence", "reach_ft", float, cfg.reach_ft)
    cfg.arm_width_m = _get(parser, "geofence", "arm_width_m", float, cfg.arm_width_m)
    cfg.overlap = _get(parser, "geofence", "overlap", str, cfg.overlap)
    cfg.gap_s = _get(parser, "segmentation", "gap_s", float, cfg.gap_s)
    cfg.min_points = _get(parser, "segmentation", "min_points", int, cfg.min_points)

    m = MeasureParams()
    cfg.measures = MeasureParams(
        bin_width_mph=_get(parser, "measures", "bin_width_mph", float, m.bin_width_mph),
        min_bin_count=_get(parser, "measures", "min_bin_count", int, m.min_bin_count),
        v_floor=_get(parser, "measures", "v_floor", float, m.v_floor),
        z=tuple(_get(parser, "measures", "z", lambda s: [float(v) for v in _list(s)], list(m.z))),
        min_site_records=_get(parser, "measures", "min_site_records", int, m.min_site_records),
        min_site_passings=_get(parser, "measures", "min_site_passings", int, m.min_site_passings),
    )

    d = cfg.model
    family = _get(parser, "model", "family", str, d.family)
    if family not in FAMILIES:
        raise ConfigError(f"[model] family must be one of {FAMILIES}")
    try:
        cfg.model = ModelSpec(
            family=family,
            covariates=_get(parser, "model", "covariates", _list, d.covariates),
            random_covariates=_get(parser, "model", "random", _list, []),
            n_draws=_get(parser, "model", "n_draws", int, d.n_draws),
            halton_skip=_get(parser, "model", "halton_skip", int, d.halton_skip),
            intercept=_get(parser, "model", "intercept", _bool, d.intercept),
            max_iter=_get(parser, "model", "max_iter", int, d.max_iter),
        )
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from exc

    cfg.correlation = _get(parser, "report", "correlation", str, cfg.correlation)
    cfg.hotspot_measures = _get(parser, "report", "hotspot_measures", _list, None)
    cfg.workers = _get(parser, "run", "workers", int, cfg.workers)
    cfg.chunk_size = _get(parser, "run", "chunk_size", int, cfg.chunk_size)
    cfg.validate(need_paths=False)
    return cfg


def write_config(cfg: PipelineConfig, path: str) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["paths"] = {"bsm": ", ".join(cfg.bsm), "sites": cfg.sites, "out": cfg.out}
    parser["bsm_schema"] = dict(cfg.bsm_schema)
    parser["geofence"] = {"reach_ft": repr(cfg.reach_ft), "arm_width_m": repr(cfg.arm_width_m),
                          "overlap": cfg.overlap}
    parser["segmentation"] = {"gap_s": repr(cfg.gap_s), "min_points": str(cfg.min_points)}
    m = cfg.measures
    parser["measures"] = {"bin_width_mph": repr(m.bin_width_mph), "min_bin_count": str(m.min_bin_count),
                          "v_floor": repr(m.v_floor), "z": ", ".join(f"{z:g}" for z in m.z),
                          "min_site_records": str(m.min_site_records),
                          "min_site_passings": str(m.min_site_passings)}
    s = cfg.model
    parser["model"] = {"family": s.family, "covariates": ", ".join(s.covariates),
                       "random": ", ".join(s.random_covariates), "n_draws": str(s.n_draws)}
    parser["report"] = {"correlation": cfg.correlation}
    with open(path, "w") as fh:
        parser.write(fh)
