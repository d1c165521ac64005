"""Shared value types: model rates, configurations, atomic measures and seeds."""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import zlib
from dataclasses import asdict, dataclass, field
from os import PathLike
from typing import Iterable, Mapping

import numpy as np

_RATE_FIELDS = ("c", "s", "d", "m")


@dataclass(frozen=True)
class ModelParams:
    """Rates of the two-type mean-field system.

    Parameters
    ----------
    c, s, d, m : float
        Migration, selection, resampling and mutation intensity, all >= 0.
    n_sites : int
        Number of sites N.
    beta1, beta2, beta3 : float
        Exponents of the general rate scaling. The defaults (0, 0, 1) give
        per-site mutation m/N with unscaled migration and selection.
    """

    c: float
    s: float
    d: float
    m: float
    n_sites: int = 1
    beta1: float = 0.0
    beta2: float = 0.0
    beta3: float = 1.0

    def __post_init__(self) -> None:
        for name in _RATE_FIELDS + ("beta1", "beta2", "beta3"):
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating, np.integer)) or isinstance(value, bool):
                raise TypeError(f"{name} must be a real number, got {value!r}")
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
            object.__setattr__(self, name, float(value))
        if isinstance(self.n_sites, bool) or int(self.n_sites) != self.n_sites or self.n_sites < 1:
            raise ValueError(f"n_sites must be a positive integer, got {self.n_sites!r}")
        object.__setattr__(self, "n_sites", int(self.n_sites))

    # The single-class model has k = 1, so the migration exponent vanishes.
    @property
    def migration_rate(self) -> float:
        """Effective migration rate c."""
        return self.c

    @property
    def selection_rate(self) -> float:
        """Effective selection rate s * N**(-beta2)."""
        return self.s * self.n_sites ** (-self.beta2)

    @property
    def site_mutation_rate(self) -> float:
        """Per-site mutation rate m * N**(-beta3)."""
        return self.m * self.n_sites ** (-self.beta3)

    def with_sites(self, n_sites: int) -> "ModelParams":
        return ModelParams(self.c, self.s, self.d, self.m, n_sites, self.beta1, self.beta2, self.beta3)

    def to_dict(self) -> dict:
        return asdict(self)


def load_model_params(path: str | PathLike, section: str = "model",
                      require_sites: bool = True) -> ModelParams:
    """Read :class:`ModelParams` from an INI-style key-value file.

    Every rate must be present; nothing is filled in silently.
    """
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    if not parser.has_section(section):
        raise ValueError(f"config {path} has no [{section}] section")
    return params_from_mapping(dict(parser.items(section)), require_sites=require_sites)


def params_from_mapping(values: Mapping[str, object], require_sites: bool = True) -> ModelParams:
    """Build :class:`ModelParams` from string or numeric values, requiring all rates."""
    missing = [k for k in _RATE_FIELDS if k not in values]
    if require_sites and "n_sites" not in values:
        missing.append("n_sites")
    if missing:
        raise ValueError(f"missing required parameter(s): {', '.join(missing)}")
    kwargs: dict = {k: float(values[k]) for k in _RATE_FIELDS}
    if "n_sites" in values:
        kwargs["n_sites"] = int(values["n_sites"])
    for k in ("beta1", "beta2", "beta3"):
        if k in values:
            kwargs[k] = float(values[k])
    return ModelParams(**kwargs)


@dataclass(frozen=True)
class Configuration:
    """Type-2 fractions across the sites; type-1 fractions are ``1 - x2``."""

    x2: np.ndarray
    time: float = 0.0

    def __post_init__(self) -> None:
        arr = np.array(self.x2, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("x2 must be one-dimensional")
        if arr.size and (np.any(~np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("every x2 entry must lie in [0, 1]")
        if not math.isfinite(self.time) or self.time < 0:
            raise ValueError("time must be finite and >= 0")
        arr.flags.writeable = False
        object.__setattr__(self, "x2", arr)
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def zeros(cls, n_sites: int, time: float = 0.0) -> "Configuration":
        return cls(np.zeros(n_sites), time)

    @property
    def x1(self) -> np.ndarray:
        return 1.0 - self.x2

    @property
    def n_sites(self) -> int:
        return int(self.x2.shape[0])


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite atomic measure on [0, 1] stored as parallel location/mass arrays."""

    locations: np.ndarray = field(default_factory=lambda: np.zeros(0))
    masses: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        loc = np.array(self.locations, dtype=np.float64).reshape(-1)
        mass = np.array(self.masses, dtype=np.float64).reshape(-1)
        if loc.shape != mass.shape:
            raise ValueError("locations and masses must have equal length")
        if loc.size:
            if np.any(~np.isfinite(loc)) or loc.min() < 0.0 or loc.max() > 1.0:
                raise ValueError("atom locations must lie in [0, 1]")
            if np.any(~np.isfinite(mass)) or mass.min() < 0.0:
                raise ValueError("atom masses must be finite and >= 0")
        loc.flags.writeable = False
        mass.flags.writeable = False
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "masses", mass)

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[float, float]]) -> "AtomicMeasure":
        pairs = list(atoms)
        if not pairs:
            return cls()
        loc, mass = zip(*pairs)
        return cls(np.array(loc), np.array(mass))

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.locations.tolist(), self.masses.tolist()))

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def __len__(self) -> int:
        return int(self.locations.shape[0])

    def canonical(self) -> "AtomicMeasure":
        """Merge atoms at equal locations, drop zero masses and sort by location."""
        keep = self.masses > 0
        if not keep.any():
            return AtomicMeasure()
        loc, inv = np.unique(self.locations[keep], return_inverse=True)
        mass = np.bincount(inv, weights=self.masses[keep])
        return AtomicMeasure(loc, mass)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["location", "mass"])
        for loc, mass in zip(self.locations, self.masses):
            writer.writerow([repr(float(loc)), repr(float(mass))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "AtomicMeasure":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != ["location", "mass"]:
            raise ValueError(f"expected header location,mass, got {header}")
        rows = [(float(a), float(b)) for a, b in reader]
        return cls.from_atoms(rows)


@dataclass(frozen=True)
class SeedSpec:
    """Coordinates of one random stream: master seed, replica index and label."""

    master_seed: int
    replica_index: int = 0
    stream_label: str = "main"

    def __post_init__(self) -> None:
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if int(self.replica_index) < 0:
            raise ValueError("replica_index must be >= 0")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "replica_index", int(self.replica_index))

    def replica(self, index: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, index, self.stream_label)

    def labelled(self, label: str) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.replica_index, label)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SeedSpec":
        return cls(**json.loads(text))


def derive_stream(seed: SeedSpec) -> np.random.Generator:
    """Return an independent counter-based generator for ``seed``.

    The label is hashed with CRC-32 so the derivation is stable across runs
    and interpreter versions.
    """
    label_key = zlib.crc32(seed.stream_label.encode("utf-8"))
    seq = np.random.SeedSequence(entropy=seed.master_seed, spawn_key=(seed.replica_index, label_key))
    return np.random.Generator(np.random.Philox(seq))
