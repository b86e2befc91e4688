"""INI run configuration with strict keys and a stable content hash."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError, InputDomainError
from .handover import CopVector, HandoverConfig
from .optimizer import AnnealingSchedule, Constraints, ObjectiveWeights
from .radio import NetworkConfig, PropagationModel
from .surrogate import DEFAULT_PARAMS, MODEL_KINDS, ModelKind
from .sweep import SEED_POLICIES, SweepGrid

SECTIONS = ("network", "propagation", "handover", "sweep", "model", "optimizer", "output")

_NETWORK_KEYS = ("area_side", "macro_count_per_band", "small_cell_count", "user_density", "tti",
                 "sim_duration", "master_seed", "prb_demand", "site_jitter")
_PROPAGATION_KEYS = ("ple_near", "ple_far", "breakpoint_distance", "shadowing_sigma",
                     "shadowing_grid_resolution")
_HANDOVER_KEYS = ("a3_hyst", "a5_hyst", "a2_ttt", "a2_threshold", "a2_hyst", "qout", "ho_execution_time")


@dataclass(frozen=True)
class SweepSettings:
    grid: SweepGrid = field(default_factory=SweepGrid)
    seed_policy: str = "common"
    grid_subsample: int | None = None


@dataclass(frozen=True)
class ModelSettings:
    kinds: tuple[str, ...] = MODEL_KINDS
    optimizer_kind: str = "gbt"
    test_fraction: float = 0.2
    params: dict = field(default_factory=dict, hash=False)  # kind -> overrides
    background_size: int = 200

    def model_kind(self, name: str) -> ModelKind:
        return ModelKind(name, dict(self.params.get(name, {})))


@dataclass(frozen=True)
class OptimizerSettings:
    weights: ObjectiveWeights = ObjectiveWeights(0.33, 0.33)
    constraints: Constraints = Constraints()
    schedule: AnnealingSchedule = AnnealingSchedule()
    sa_runs: int = 50


@dataclass(frozen=True)
class RunConfig:
    net: NetworkConfig = field(default_factory=NetworkConfig)
    prop: PropagationModel = field(default_factory=PropagationModel)
    handover: HandoverConfig = field(default_factory=HandoverConfig)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    model: ModelSettings = field(default_factory=ModelSettings)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    out_dir: str = "out"

    @property
    def master_seed(self) -> int:
        return self.net.master_seed

    def with_seed(self, seed: int) -> "RunConfig":
        net = dataclasses.replace(self.net, master_seed=int(seed))
        return dataclasses.replace(self, net=net)

    def with_out(self, out_dir: str) -> "RunConfig":
        return dataclasses.replace(self, out_dir=str(out_dir))

    def sha256(self) -> str:
        """Hash of the effective settings; the output directory is excluded."""
        return hashlib.sha256(canonical_text(self).encode()).hexdigest()


# --- value parsing ---------------------------------------------------------------------


def _int(raw: str, key: str) -> int:
    try:
        return int(raw.strip())
    except ValueError:
        raise ConfigurationError(f"{key}: expected an integer, got {raw!r}", key) from None


def _float(raw: str, key: str) -> float:
    try:
        return float(raw.strip())
    except ValueError:
        raise ConfigurationError(f"{key}: expected a number, got {raw!r}", key) from None


def _bool(raw: str, key: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"{key}: expected a boolean, got {raw!r}", key)


def _list(raw: str, key: str, conv) -> tuple:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if not parts:
        raise ConfigurationError(f"{key}: empty list", key)
    return tuple(conv(p, key) for p in parts)


def _typed(default, raw: str, key: str):
    if isinstance(default, bool):
        return _bool(raw, key)
    if isinstance(default, int):
        return _int(raw, key)
    return _float(raw, key)


def _cio(raw: str) -> dict:
    """``serving-target:value`` pairs, e.g. ``0-6:2.0, 3-7:-1``."""
    out = {}
    for tok in raw.replace(",", " ").split():
        try:
            pair, val = tok.split(":")
            s, t = pair.split("-")
            out[(int(s), int(t))] = float(val)
        except ValueError:
            raise ConfigurationError(f"cio: malformed entry {tok!r}", "cio") from None
    return out


def _section(cp: configparser.ConfigParser, name: str) -> dict:
    return dict(cp.items(name)) if cp.has_section(name) else {}


def _reject_unknown(section: str, items: dict, allowed) -> None:
    for key in items:
        if key not in allowed:
            raise ConfigurationError(f"unknown key {key!r} in [{section}]", key)


def _dataclass_overrides(section: str, items: dict, defaults, keys) -> dict:
    _reject_unknown(section, items, keys)
    return {k: _typed(getattr(defaults, k), v, k) for k, v in items.items()}


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    cp.optionxform = str  # keep key case so typos are reported verbatim
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}", "") from exc
    for s in cp.sections():
        if s not in SECTIONS:
            raise ConfigurationError(f"unknown section [{s}]", s)

    try:
        net = NetworkConfig(**_dataclass_overrides("network", _section(cp, "network"), NetworkConfig(),
                                                   _NETWORK_KEYS))
        prop = PropagationModel(**_dataclass_overrides("propagation", _section(cp, "propagation"),
                                                       PropagationModel(), _PROPAGATION_KEYS))
        ho_items = _section(cp, "handover")
        cio = _cio(ho_items.pop("cio")) if "cio" in ho_items else {}
        handover = HandoverConfig(**_dataclass_overrides("handover", ho_items, HandoverConfig(),
                                                         _HANDOVER_KEYS), cio=cio)
        sweep = _parse_sweep(_section(cp, "sweep"))
        model = _parse_model(_section(cp, "model"))
        optimizer = _parse_optimizer(_section(cp, "optimizer"))
    except InputDomainError as exc:
        raise ConfigurationError(str(exc), _guess_key(str(exc))) from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc), _guess_key(str(exc))) from exc

    out_items = _section(cp, "output")
    _reject_unknown("output", out_items, ("dir",))
    return RunConfig(net, prop, handover, sweep, model, optimizer, out_items.get("dir", "out").strip())


def _guess_key(message: str) -> str:
    head = message.split()[0] if message else ""
    return head.split("=")[0].rstrip(":")


def _parse_sweep(items: dict) -> SweepSettings:
    allowed = ("ttt_values", "a5_ttt_values", "a3_ttt_values", "th1_range", "th2_range", "off_range",
               "seed_policy", "grid_subsample")
    _reject_unknown("sweep", items, allowed)
    kw = {}
    for key in ("ttt_values", "a5_ttt_values", "a3_ttt_values"):
        if key in items:
            kw[key] = _list(items[key], key, _int)
    for key in ("th1_range", "th2_range", "off_range"):
        if key in items:
            vals = _list(items[key], key, _float)
            if len(vals) != 3:
                raise ConfigurationError(f"{key}: expected 'min, max, step'", key)
            kw[key] = vals
    grid = SweepGrid(**kw)
    axes = grid.axes()
    # both grid corners inside the allowed ranges means every point is
    try:
        grid.cop_at([0] * 5).validate()
        grid.cop_at([len(a) - 1 for a in axes]).validate()
        for t in axes[0] + axes[3]:
            CopVector(int(t), -96.0, -96.0, int(t), 0.0).validate()
    except InputDomainError as exc:
        raise ConfigurationError(str(exc), _guess_key(str(exc))) from exc
    policy = items.get("seed_policy", "common").strip()
    if policy not in SEED_POLICIES:
        raise ConfigurationError(f"seed_policy must be one of {SEED_POLICIES}", "seed_policy")
    sub = items.get("grid_subsample", "").strip()
    subsample = _int(sub, "grid_subsample") if sub and sub.lower() != "none" else None
    if subsample is not None and subsample <= 0:
        raise ConfigurationError("grid_subsample must be positive", "grid_subsample")
    return SweepSettings(grid, policy, subsample)


def _parse_model(items: dict) -> ModelSettings:
    params: dict = {}
    base = {}
    for key, raw in items.items():
        if "." in key:
            kind, hp = key.split(".", 1)
            if kind not in MODEL_KINDS or hp not in DEFAULT_PARAMS[kind]:
                raise ConfigurationError(f"unknown key {key!r} in [model]", key)
            params.setdefault(kind, {})[hp] = _typed(DEFAULT_PARAMS[kind][hp], raw, key)
        elif key in ("kinds", "optimizer_kind", "test_fraction", "background_size"):
            base[key] = raw
        else:
            raise ConfigurationError(f"unknown key {key!r} in [model]", key)
    kinds = MODEL_KINDS
    if "kinds" in base:
        kinds = tuple(base["kinds"].replace(",", " ").split())
        for k in kinds:
            if k not in MODEL_KINDS:
                raise ConfigurationError(f"kinds: unknown model kind {k!r}", "kinds")
    opt_kind = base.get("optimizer_kind", "gbt").strip()
    if opt_kind not in MODEL_KINDS:
        raise ConfigurationError(f"optimizer_kind: unknown model kind {opt_kind!r}", "optimizer_kind")
    tf = _float(base.get("test_fraction", "0.2"), "test_fraction")
    if not 0 < tf < 1:
        raise ConfigurationError("test_fraction must lie in (0, 1)", "test_fraction")
    bg = _int(base.get("background_size", "200"), "background_size")
    if bg <= 0:
        raise ConfigurationError("background_size must be positive", "background_size")
    settings = ModelSettings(kinds, opt_kind, tf, params, bg)
    for k in MODEL_KINDS:
        try:
            settings.model_kind(k)
        except ValueError as exc:
            raise ConfigurationError(str(exc), f"{k}.") from exc
    return settings


def _parse_optimizer(items: dict) -> OptimizerSettings:
    allowed = ("alpha", "beta", "load_threshold_1700", "load_threshold_2100", "load_threshold_3500",
               "initial_temp", "final_temp", "cooling_ratio", "budget", "neighbor_radius", "seed",
               "sa_runs")
    _reject_unknown("optimizer", items, allowed)
    f = {k: v.strip() for k, v in items.items()}
    try:
        w = ObjectiveWeights(_float(f.get("alpha", "0.33"), "alpha"), _float(f.get("beta", "0.33"), "beta"))
    except InputDomainError as exc:
        raise ConfigurationError(str(exc), "alpha") from exc
    thr = []
    for band in ("1700", "2100", "3500"):
        key = f"load_threshold_{band}"
        thr.append(_float(f.get(key, "100"), key))
    try:
        c = Constraints(tuple(thr))
    except InputDomainError as exc:
        raise ConfigurationError(str(exc), "load_threshold") from exc
    cr = f.get("cooling_ratio", "")
    try:
        sched = AnnealingSchedule(
            initial_temp=_float(f.get("initial_temp", "1.0"), "initial_temp"),
            cooling_ratio=_float(cr, "cooling_ratio") if cr and cr.lower() != "auto" else None,
            budget=_int(f.get("budget", "2500"), "budget"),
            neighbor_radius=_int(f.get("neighbor_radius", "1"), "neighbor_radius"),
            seed=_int(f.get("seed", "0"), "seed"),
            final_temp=_float(f.get("final_temp", "0.001"), "final_temp"),
        )
    except InputDomainError as exc:
        raise ConfigurationError(str(exc), _guess_key(str(exc))) from exc
    runs = _int(f.get("sa_runs", "50"), "sa_runs")
    if runs < 1:
        raise ConfigurationError("sa_runs must be at least 1", "sa_runs")
    return OptimizerSettings(w, c, sched, runs)


def load_config(path=None) -> RunConfig:
    """Read a config file; ``None`` gives the built-in defaults."""
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}", "config")
    return parse_config(p.read_text())


# --- canonical rendering -----------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    if v is None:
        return "none"
    return str(v)


def canonical_text(cfg: RunConfig) -> str:
    """Every effective setting in INI form, in a fixed order."""
    lines = ["[network]"]
    lines += [f"{k} = {_fmt(getattr(cfg.net, k))}" for k in _NETWORK_KEYS]
    for b in cfg.net.bands:
        lines.append(f"band.{b.band_id} = {_fmt(dataclasses.astuple(b))}")
    lines.append("[propagation]")
    lines += [f"{k} = {_fmt(getattr(cfg.prop, k))}" for k in _PROPAGATION_KEYS]
    lines.append("[handover]")
    lines += [f"{k} = {_fmt(getattr(cfg.handover, k))}" for k in _HANDOVER_KEYS]
    cio = sorted(cfg.handover.cio.items())
    lines.append("cio = " + ", ".join(f"{s}-{t}:{v!r}" for (s, t), v in cio))
    g = cfg.sweep.grid
    lines.append("[sweep]")
    lines += [f"{n} = {_fmt(a)}" for n, a in zip(
        ("a5_ttt_ms", "a5_th1_dbm", "a5_th2_dbm", "a3_ttt_ms", "a3_off_db"), g.axes())]
    lines.append(f"seed_policy = {cfg.sweep.seed_policy}")
    lines.append(f"grid_subsample = {_fmt(cfg.sweep.grid_subsample)}")
    m = cfg.model
    lines.append("[model]")
    lines.append(f"kinds = {_fmt(m.kinds)}")
    lines.append(f"optimizer_kind = {m.optimizer_kind}")
    lines.append(f"test_fraction = {_fmt(m.test_fraction)}")
    lines.append(f"background_size = {m.background_size}")
    for k in MODEL_KINDS:
        for hp, v in sorted(m.model_kind(k).params.items()):
            lines.append(f"{k}.{hp} = {_fmt(v)}")
    o = cfg.optimizer
    s = o.schedule
    lines.append("[optimizer]")
    lines.append(f"alpha = {_fmt(o.weights.alpha)}")
    lines.append(f"beta = {_fmt(o.weights.beta)}")
    lines.append(f"load_thresholds = {_fmt(o.constraints.load_thresholds)}")
    lines.append(f"initial_temp = {_fmt(s.initial_temp)}")
    lines.append(f"final_temp = {_fmt(s.final_temp)}")
    lines.append(f"cooling_ratio = {_fmt(s.cooling_ratio)}")
    lines.append(f"budget = {s.budget}")
    lines.append(f"neighbor_radius = {s.neighbor_radius}")
    lines.append(f"seed = {s.seed}")
    lines.append(f"sa_runs = {o.sa_runs}")
    return "\n".join(lines) + "\n"
