"""JSON run configuration: schema validation, defaults, and typed sections."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .assembly import PlacementModel, TaperModel, calibrate_rolloff
from .chiplet import AlignmentModel, ChipletDesign
from .emitters import SpeciesParams, get_species
from .implant import ImplantSpec
from .spectra import ScanConfig, default_scan
from .tuning import ActuatorConfig


class ConfigError(ValueError):
    pass


def load_schema(name: str = "config.schema.json") -> dict:
    return json.loads(resources.files("qmctwin").joinpath("schemas", name).read_text())


def _fill_defaults(raw: dict, schema: dict) -> dict:
    out = copy.deepcopy(raw)
    for key, sub in schema.get("properties", {}).items():
        if key not in out and "default" in sub:
            out[key] = copy.deepcopy(sub["default"])
        if sub.get("type") == "object" and isinstance(out.get(key), dict):
            out[key] = _fill_defaults(out[key], sub)
    return out


@dataclass
class RunConfig:
    species: SpeciesParams
    implant: ImplantSpec
    design: ChipletDesign
    alignment: AlignmentModel
    placement: PlacementModel
    taper: TaperModel
    scan: ScanConfig
    actuator: ActuatorConfig
    seed: int = 42
    trials: int = 100_000
    workers: int = 1
    output_dir: Path = Path("out")
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def chiplet(self) -> dict:
        return self.raw["chiplet"]

    @property
    def assembly(self) -> dict:
        return self.raw["assembly"]

    def digest(self) -> str:
        """Hash of every setting that can change outputs (not the directory or worker count)."""
        body = {k: v for k, v in self.raw.items() if k not in ("output_dir", "workers")}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def build_config(raw: dict | None = None) -> RunConfig:
    """Validate a config mapping, fill defaults and build the typed sections."""
    raw = {} if raw is None else raw
    schema = load_schema()
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {e.message}")
    cfg = _fill_defaults(raw, schema)

    section = "species"
    try:
        sp = cfg["species"]
        overrides = {k: v for k, v in sp.items() if k != "name" and v is not None}
        species = get_species(sp["name"], **overrides)

        section = "implant"
        implant = ImplantSpec(species=species, **cfg["implant"])

        section = "chiplet"
        ch = cfg["chiplet"]
        design = ChipletDesign(
            n_channels=ch["n_channels"], waveguide_width_nm=ch["waveguide_width_nm"],
            waveguide_height_nm=ch["waveguide_height_nm"], channel_pitch_nm=ch["channel_pitch_nm"],
            min_emitters_per_channel=ch["min_emitters_per_channel"])
        alignment = AlignmentModel(ch["sigma_offset_nm"], ch["rotation_mrad_sigma"])

        section = "assembly"
        asm = cfg["assembly"]
        placement = PlacementModel(asm["success_prob"], asm["offset_mean_nm"], asm["offset_std_nm"])
        taper = TaperModel({602.0: asm["eta0_602"], 737.0: asm["eta0_737"]},
                           calibrate_rolloff(asm["rolloff_offset_nm"], asm["rolloff_drop"]))

        section = "scan"
        sc = {k: v for k, v in cfg["scan"].items() if v is not None}
        scan = default_scan(species, **sc)

        section = "actuator"
        actuator = ActuatorConfig(**cfg["actuator"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc

    return RunConfig(species, implant, design, alignment, placement, taper, scan, actuator,
                     seed=cfg["seed"], trials=cfg["trials"], workers=cfg["workers"],
                     output_dir=Path(cfg["output_dir"]), raw=cfg)


def read_raw(path) -> dict:
    """Parse a config file without validating it."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return raw


def load_config(path) -> RunConfig:
    return build_config(read_raw(path))
