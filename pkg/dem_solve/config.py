"""
Experiment configuration documents (schema version 1).

A config is one JSON object; `ExperimentConfig.from_dict` validates it, rejects
unknown keys at every level and collects every problem into a ConfigError.
"""
import json
import logging
from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from .assembly import AD_SCHEMES, GRADIENT_MODES, VOLUME_RULES, TractionSpec
from .errors import ConfigError, DemSolveError
from .graph import ADJACENCY_MODES
from .grid import FACE_TAGS
from .materials import MaterialModel, material_from_dict, material_to_dict
from .models import DEFAULT_WIDTHS, NetworkSpec
from .training import TrainConfig
from .utils import load_config

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
REQUIRED_KEYS = ("geometry", "material", "network", "tractions")
TOP_LEVEL_KEYS = (
    "schema_version",
    "logging_level",
    "geometry",
    "material",
    "network",
    "graph",
    "gradient_mode",
    "quadrature",
    "dirichlet",
    "tractions",
    "train",
    "localization_threshold",
    "output_dir",
    "oracle",
)
SECTION_KEYS = {
    "geometry": ("lengths", "dims"),
    "network": ("kind", "layer_widths", "cheb_order", "seed"),
    "graph": ("radius", "adjacency"),
    "quadrature": ("volume", "ad_scheme"),
    "dirichlet": ("face",),
    "train": ("learning_rate", "max_epochs", "inner_iters_per_epoch", "rel_loss_tol", "history_size", "seed"),
    "oracle": ("enabled", "tol", "load_steps", "max_iter"),
}
MATERIAL_KEYS = {"linear_elastic": ("kind", "E", "nu"), "neo_hookean": ("kind", "C10", "D1")}


@dataclass(frozen=True)
class Geometry:
    lengths: Tuple[float, float, float] = (4.0, 1.0, 1.0)
    dims: Tuple[int, int, int] = (37, 10, 10)


@dataclass(frozen=True)
class GraphConfig:
    radius: Union[str, float] = "auto"
    adjacency: str = "binary"


@dataclass(frozen=True)
class Quadrature:
    volume: str = "gauss_2x2x2"
    ad_scheme: str = "trapezoid"


@dataclass(frozen=True)
class OracleConfig:
    enabled: bool = True
    tol: Optional[float] = None
    load_steps: int = 20
    max_iter: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.load_steps, bool) or not isinstance(self.load_steps, int):
            raise ValueError(f"load_steps must be an integer, got {self.load_steps!r}")
        if self.load_steps < 1:
            raise ValueError(f"load_steps must be >= 1, got {self.load_steps}")


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: Geometry
    material: MaterialModel
    network: NetworkSpec
    tractions: Tuple[TractionSpec, ...]
    graph: GraphConfig = GraphConfig()
    gradient_mode: str = "sf"
    quadrature: Quadrature = Quadrature()
    dirichlet_face: str = "x0"
    train: TrainConfig = TrainConfig()
    localization_threshold: Optional[float] = None
    output_dir: str = "reports/run"
    oracle: OracleConfig = OracleConfig()
    logging_level: str = "INFO"
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ExperimentConfig":
        """
        Validate a config document.

        Raises:
            ConfigError: With one diagnostic per problem found.
        """
        if not isinstance(d, dict):
            raise ConfigError(["config must be a JSON object"])
        errors: List[str] = []
        _unknown(d, TOP_LEVEL_KEYS, "", errors)
        for key in REQUIRED_KEYS:
            if key not in d:
                errors.append(f"missing required key '{key}'")
        for section, allowed in SECTION_KEYS.items():
            value = d.get(section, {})
            if not isinstance(value, dict):
                errors.append(f"'{section}' must be an object")
            else:
                _unknown(value, allowed, f"{section}.", errors)
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            errors.append(f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}")
        if errors:
            raise ConfigError(errors)

        parts: Dict[str, Any] = {}
        _build(parts, "geometry", errors, lambda: _geometry(d["geometry"]))
        _build(parts, "material", errors, lambda: _material(d["material"]))
        _build(parts, "network", errors, lambda: _network(d["network"]))
        _build(parts, "tractions", errors, lambda: _tractions(d["tractions"]))
        _build(parts, "graph", errors, lambda: _graph(d.get("graph", {})))
        _build(parts, "quadrature", errors, lambda: _quadrature(d.get("quadrature", {})))
        _build(parts, "train", errors, lambda: TrainConfig(**d.get("train", {})))
        _build(parts, "oracle", errors, lambda: OracleConfig(**d.get("oracle", {})))

        _reconcile_seeds(d, parts, errors)

        mode = d.get("gradient_mode", "sf")
        if mode not in GRADIENT_MODES:
            errors.append(f"gradient_mode must be one of {GRADIENT_MODES}, got {mode!r}")
        face = d.get("dirichlet", {}).get("face", "x0")
        if face not in FACE_TAGS:
            errors.append(f"dirichlet.face must be one of {FACE_TAGS}, got {face!r}")
        threshold = d.get("localization_threshold")
        if threshold is not None and not (isinstance(threshold, (int, float)) and threshold > 0):
            errors.append(f"localization_threshold must be a positive number, got {threshold!r}")
        if errors:
            raise ConfigError(errors)

        return cls(
            gradient_mode=mode,
            dirichlet_face=face,
            localization_threshold=None if threshold is None else float(threshold),
            output_dir=str(d.get("output_dir", "reports/run")),
            logging_level=str(d.get("logging_level", "INFO")),
            schema_version=version,
            **parts,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "logging_level": self.logging_level,
            "geometry": {"lengths": list(self.geometry.lengths), "dims": list(self.geometry.dims)},
            "material": material_to_dict(self.material),
            "network": {**asdict(self.network), "layer_widths": list(self.network.layer_widths)},
            "graph": asdict(self.graph),
            "gradient_mode": self.gradient_mode,
            "quadrature": asdict(self.quadrature),
            "dirichlet": {"face": self.dirichlet_face},
            "tractions": [{"surface": t.surface, "traction": list(t.traction)} for t in self.tractions],
            "train": asdict(self.train),
            "localization_threshold": self.localization_threshold,
            "output_dir": self.output_dir,
            "oracle": asdict(self.oracle),
        }

    def with_overrides(self, **changes: Any) -> "ExperimentConfig":
        return replace(self, **changes)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, network=replace(self.network, seed=seed), train=replace(self.train, seed=seed))

    def with_load(self, load: float) -> "ExperimentConfig":
        """Replace the y-component of every traction by a signed load."""
        tractions = tuple(
            TractionSpec(t.surface, (t.traction[0], float(load), t.traction[2])) for t in self.tractions
        )
        return replace(self, tractions=tractions)

    def with_dims(self, dims: Sequence[int]) -> "ExperimentConfig":
        return replace(self, geometry=replace(self.geometry, dims=tuple(int(n) for n in dims)))


def _unknown(d: Dict[str, Any], allowed: Sequence[str], prefix: str, errors: List[str]) -> None:
    for key in d:
        if key not in allowed:
            errors.append(f"unknown key '{prefix}{key}'")


def _build(parts: Dict[str, Any], name: str, errors: List[str], factory) -> None:
    try:
        parts[name] = factory()
    except (DemSolveError, ValueError, TypeError, KeyError) as exc:
        errors.append(f"{name}: {exc}")


def _reconcile_seeds(d: Dict[str, Any], parts: Dict[str, Any], errors: List[str]) -> None:
    """network.seed and train.seed name one run seed; either may be given alone."""
    if "network" not in parts or "train" not in parts:
        return
    net_seed = d["network"].get("seed")
    train_seed = d.get("train", {}).get("seed")
    if net_seed is not None and train_seed is not None:
        if net_seed != train_seed:
            errors.append(f"network.seed ({net_seed!r}) and train.seed ({train_seed!r}) disagree")
    elif train_seed is not None:
        parts["network"] = replace(parts["network"], seed=parts["train"].seed)
    elif net_seed is not None:
        parts["train"] = replace(parts["train"], seed=parts["network"].seed)


def _triple(value, cast, name: str) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ValueError(f"{name} must be a list of 3 numbers, got {value!r}")
    return tuple(cast(v) for v in value)


def _geometry(d: Dict[str, Any]) -> Geometry:
    g = Geometry(
        lengths=_triple(d.get("lengths", Geometry.lengths), float, "lengths"),
        dims=_triple(d.get("dims", Geometry.dims), int, "dims"),
    )
    if any(n < 2 for n in g.dims):
        raise ValueError(f"dims must all be >= 2, got {g.dims}")
    if any(L <= 0 for L in g.lengths):
        raise ValueError(f"lengths must all be > 0, got {g.lengths}")
    return g


def _material(d: Dict[str, Any]) -> MaterialModel:
    kind = d.get("kind")
    if kind not in MATERIAL_KEYS:
        raise ValueError(f"kind must be one of {tuple(MATERIAL_KEYS)}, got {kind!r}")
    extra = [k for k in d if k not in MATERIAL_KEYS[kind]]
    if extra:
        raise ValueError(f"unknown keys {extra}")
    missing = [k for k in MATERIAL_KEYS[kind] if k not in d]
    if missing:
        raise ValueError(f"missing keys {missing}")
    return material_from_dict(d)


def _network(d: Dict[str, Any]) -> NetworkSpec:
    return NetworkSpec(
        kind=d.get("kind", "gcn"),
        layer_widths=tuple(d.get("layer_widths", DEFAULT_WIDTHS)),
        cheb_order=int(d.get("cheb_order", 1)),
        seed=int(d.get("seed", 0)),
    )


def _tractions(items) -> Tuple[TractionSpec, ...]:
    if not isinstance(items, list) or not items:
        raise ValueError("must be a non-empty list")
    out = []
    for item in items:
        extra = [k for k in item if k not in ("surface", "traction")]
        if extra:
            raise ValueError(f"unknown keys {extra}")
        out.append(TractionSpec(item["surface"], _triple(item["traction"], float, "traction")))
    return tuple(out)


def _graph(d: Dict[str, Any]) -> GraphConfig:
    radius = d.get("radius", "auto")
    if radius != "auto" and not (isinstance(radius, (int, float)) and radius > 0):
        raise ValueError(f"radius must be 'auto' or a positive number, got {radius!r}")
    adjacency = d.get("adjacency", "binary")
    if adjacency not in ADJACENCY_MODES:
        raise ValueError(f"adjacency must be one of {ADJACENCY_MODES}, got {adjacency!r}")
    return GraphConfig(radius=radius if radius == "auto" else float(radius), adjacency=adjacency)


def _quadrature(d: Dict[str, Any]) -> Quadrature:
    q = Quadrature(volume=d.get("volume", "gauss_2x2x2"), ad_scheme=d.get("ad_scheme", "trapezoid"))
    if q.volume not in VOLUME_RULES:
        raise ValueError(f"volume must be one of {VOLUME_RULES}, got {q.volume!r}")
    if q.ad_scheme not in AD_SCHEMES:
        raise ValueError(f"ad_scheme must be one of {AD_SCHEMES}, got {q.ad_scheme!r}")
    return q


def load_experiment(path: str) -> ExperimentConfig:
    try:
        doc = load_config(path)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path} is not valid JSON: {exc}"]) from None
    return ExperimentConfig.from_dict(doc)
