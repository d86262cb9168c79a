"""Benchmark reference profiles: CSV ingestion and comparison with computed lines.

Reference files are plain CSV with ``#`` metadata lines followed by a
two-column header and data rows::

    # source: ...
    # quantity: u
    # line: x=0.5
    y,u
    0.0000,0.00000
    ...
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .fields import LineProfile

REFERENCE_QUANTITIES = ("u", "v", "vorticity")
_LINE = re.compile(r"^\s*([xy])\s*=\s*([-+0-9.eE]+)\s*$")


class ReferenceFormatError(ValueError):
    pass


@dataclass
class ReferenceProfile:
    source: str
    abscissa: np.ndarray
    values: np.ndarray
    quantity: str
    axis: str
    coordinate: float

    def __post_init__(self):
        self.abscissa = np.asarray(self.abscissa, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.abscissa.shape != self.values.shape or self.abscissa.ndim != 1:
            raise ValueError("abscissa and values must be 1D arrays of equal length")
        if self.abscissa.size == 0:
            raise ValueError("reference profile has no data rows")
        if np.any(np.diff(self.abscissa) <= 0):
            raise ValueError("reference abscissa must be strictly increasing")
        if self.quantity not in REFERENCE_QUANTITIES:
            raise ValueError(f"unknown reference quantity {self.quantity!r}; expected one of {REFERENCE_QUANTITIES}")
        if self.axis not in ("x", "y"):
            raise ValueError(f"line axis must be 'x' or 'y', got {self.axis!r}")

    @property
    def line(self) -> str:
        return f"{self.axis}={self.coordinate:g}"


def parse_line_spec(text: str) -> tuple[str, float]:
    m = _LINE.match(text)
    if not m:
        raise ValueError(f"bad line specification {text!r}; expected e.g. 'x=0.5'")
    return m.group(1), float(m.group(2))


def load_reference(path) -> ReferenceProfile:
    path = Path(path)
    text = path.read_text()
    meta: dict[str, str] = {}
    header = None
    xs, ys = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].partition(":")
            if sep:
                meta[key.strip().lower()] = val.strip()
            continue
        parts = [p.strip() for p in line.split(",")]
        if header is None:
            if len(parts) != 2:
                raise ReferenceFormatError(f"{path}:{lineno}: header must have two columns, got {len(parts)}")
            header = parts
            continue
        if len(parts) != 2:
            raise ReferenceFormatError(f"{path}:{lineno}: expected 2 values, got {len(parts)}")
        try:
            a, b = float(parts[0]), float(parts[1])
        except ValueError:
            raise ReferenceFormatError(f"{path}:{lineno}: non-numeric value in {line!r}") from None
        if not (np.isfinite(a) and np.isfinite(b)):
            raise ReferenceFormatError(f"{path}:{lineno}: non-finite value in {line!r}")
        xs.append(a)
        ys.append(b)
    if header is None:
        raise ReferenceFormatError(f"{path}: empty reference file")
    if not xs:
        raise ReferenceFormatError(f"{path}: no data rows")
    quantity = meta.get("quantity", header[1])
    if "line" not in meta:
        raise ReferenceFormatError(f"{path}: missing '# line:' metadata")
    try:
        axis, coord = parse_line_spec(meta["line"])
    except ValueError as exc:
        raise ReferenceFormatError(f"{path}: {exc}") from None
    along = "y" if axis == "x" else "x"
    if header[0] != along:
        raise ReferenceFormatError(f"{path}: first column must be {along!r} for line {meta['line']}, got {header[0]!r}")
    xs_a = np.asarray(xs)
    if np.any(np.diff(xs_a) <= 0):
        bad = int(np.flatnonzero(np.diff(xs_a) <= 0)[0]) + 1
        raise ReferenceFormatError(f"{path}: abscissa not strictly increasing at data row {bad + 1}")
    try:
        return ReferenceProfile(
            source=meta.get("source", path.name),
            abscissa=xs_a,
            values=np.asarray(ys),
            quantity=quantity,
            axis=axis,
            coordinate=coord,
        )
    except ValueError as exc:
        raise ReferenceFormatError(f"{path}: {exc}") from None


def shipped_reference_path(name: str) -> Path:
    """Path of a reference CSV bundled with the package, e.g. ``ghia_re100_u_x0.5.csv``."""
    p = resources.files("sbp_ins") / "data" / name
    if not p.is_file():
        raise FileNotFoundError(f"no shipped reference named {name!r}")
    return Path(str(p))


def shipped_references() -> list[str]:
    return sorted(p.name for p in (resources.files("sbp_ins") / "data").iterdir() if p.name.endswith(".csv"))


@dataclass
class ComparisonReport:
    quantity: str
    line: str
    abscissa: np.ndarray
    computed: np.ndarray
    reference: np.ndarray
    source: str = ""
    deviations: np.ndarray = field(init=False)

    def __post_init__(self):
        self.deviations = np.abs(self.computed - self.reference)

    @property
    def max_abs(self) -> float:
        return float(self.deviations.max())

    @property
    def mean_abs(self) -> float:
        return float(self.deviations.mean())

    def passed(self, threshold: float) -> bool:
        return self.max_abs < threshold

    def summary(self) -> str:
        i = int(np.argmax(self.deviations))
        return (
            f"{self.quantity} on {self.line} vs {self.source}: max |dev| {self.max_abs:.4e} "
            f"(at {self.abscissa[i]:.4f}), mean |dev| {self.mean_abs:.4e}, {self.abscissa.size} points"
        )


def compare_to_reference(profile: LineProfile, reference: ReferenceProfile) -> ComparisonReport:
    """Deviation of a computed profile at the reference abscissae.

    A profile sampled at exactly the reference abscissae is compared point
    by point; otherwise it is linearly interpolated, which requires the
    profile to span the reference range.
    """
    if profile.quantity != reference.quantity:
        raise ValueError(f"quantity mismatch: computed {profile.quantity!r}, reference {reference.quantity!r}")
    if profile.axis != reference.axis or not np.isclose(profile.coordinate, reference.coordinate, atol=1e-12):
        raise ValueError(f"line mismatch: computed {profile.line}, reference {reference.line}")
    a = np.asarray(profile.abscissa, dtype=float)
    if a.shape == reference.abscissa.shape and np.array_equal(a, reference.abscissa):
        computed = np.asarray(profile.values, dtype=float)
    else:
        tol = 1e-12 * max(1.0, np.ptp(a))
        if reference.abscissa[0] < a.min() - tol or reference.abscissa[-1] > a.max() + tol:
            raise ValueError(
                f"reference abscissa [{reference.abscissa[0]:g}, {reference.abscissa[-1]:g}] "
                f"outside computed range [{a.min():g}, {a.max():g}]"
            )
        order = np.argsort(a)
        computed = np.interp(reference.abscissa, a[order], np.asarray(profile.values)[order])
    return ComparisonReport(
        quantity=reference.quantity,
        line=reference.line,
        abscissa=reference.abscissa.copy(),
        computed=computed,
        reference=reference.values.copy(),
        source=reference.source,
    )
