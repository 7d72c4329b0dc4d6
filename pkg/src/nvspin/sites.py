"""Site table ingestion, validation, stability ranking and family detection.

A site table has ten columns per 13C lattice position::

    id  a_zz  a_nd  a_iso  delta0  tau0  cos_zz  r_cz  r_cxy  r_cn

(hfi values in kHz, distances in Angstrom). Tab or comma separated; '#'
comment lines, blank lines and one leading header row are allowed.
Printed strings are kept alongside the parsed floats so that published
values can be reconciled against their rounding intervals.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.cluster.hierarchy import fclusterdata

from .errors import AmbiguousFamily, EmptyFamily, ParseError
from .hfi import z_rotation
from .observables import TAU_SENTINEL, delta0_interval, printed_interval, tau0_interval

__all__ = [
    "COLUMNS",
    "SiteRecord",
    "parse_table",
    "load_published",
    "read_sites",
    "store_json",
    "RecordCheck",
    "ValidationReport",
    "validate",
    "rank_by_lifetime",
    "classify_axial",
    "FamilyTolerance",
    "Family",
    "FamilyAverage",
    "classify_families",
    "family_average",
    "read_xyz",
    "carbon_sites",
]

COLUMNS = ("id", "a_zz", "a_nd", "a_iso", "delta0", "tau0", "cos_zz", "r_cz", "r_cxy", "r_cn")
STORE_FORMAT = "nvspin-sites"
GEOMETRY_TOL = 0.02  # Angstrom, two units of the printed 0.01
STABLE_TAU = 1e3
NONSECULAR_D_KHZ = 2.87e6


@dataclass(frozen=True)
class SiteRecord:
    id: int
    a_zz: float
    a_nd: float
    a_iso: float
    delta0_printed: float
    tau0_printed: float
    cos_zz_printed: float
    r_cz: float
    r_cxy: float
    r_cn: float
    printed: tuple = field(default=(), compare=False, repr=False)

    @property
    def gamma0(self):
        """Recomputed Gamma_0 = A_nd^2 / (A_nd^2 + A_ZZ^2)."""
        if self.a_nd == 0:
            return 0.0
        return self.a_nd**2 / (self.a_nd**2 + self.a_zz**2)

    @property
    def tau0(self):
        """Recomputed tau_0 = 1/Gamma_0 (inf for a non-flipping site)."""
        g = self.gamma0
        return math.inf if g == 0 else 1.0 / g

    @property
    def delta0(self):
        return math.hypot(self.a_zz, self.a_nd)

    def text(self, column):
        """Printed string of ``column``; falls back to repr of the float."""
        if self.printed:
            return self.printed[COLUMNS.index(column)]
        value = getattr(self, _ATTR[column])
        if column == "tau0" and math.isinf(value):
            return "1e+10"
        return repr(value)


_ATTR = {
    "id": "id",
    "a_zz": "a_zz",
    "a_nd": "a_nd",
    "a_iso": "a_iso",
    "delta0": "delta0_printed",
    "tau0": "tau0_printed",
    "cos_zz": "cos_zz_printed",
    "r_cz": "r_cz",
    "r_cxy": "r_cxy",
    "r_cn": "r_cn",
}


def _looks_numeric(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _record_from_cells(cells, line, source):
    if len(cells) != len(COLUMNS):
        raise ParseError(f"expected {len(COLUMNS)} columns, got {len(cells)}", line, source)
    values = []
    for name, cell in zip(COLUMNS, cells):
        try:
            v = float(cell)
        except ValueError:
            raise ParseError(f"column {name!r}: non-numeric value {cell!r}", line, source) from None
        if not math.isfinite(v):
            raise ParseError(f"column {name!r}: non-finite value {cell!r}", line, source)
        values.append(v)
    sid = values[0]
    if sid != int(sid) or sid < 1:
        raise ParseError(f"site id must be a positive integer, got {cells[0]!r}", line, source)
    tau = values[5]
    if tau >= TAU_SENTINEL:
        tau = math.inf
    return SiteRecord(
        id=int(sid),
        a_zz=values[1],
        a_nd=values[2],
        a_iso=values[3],
        delta0_printed=values[4],
        tau0_printed=tau,
        cos_zz_printed=values[6],
        r_cz=values[7],
        r_cxy=values[8],
        r_cn=values[9],
        printed=tuple(cells),
    )


def parse_table(stream, source=None):
    """Parse a TSV/CSV site table into SiteRecords.

    Raises :class:`ParseError` (with the 1-based line number) for a wrong
    column count, a non-numeric cell or a duplicate id.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    records = []
    seen = {}
    first_row = True
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "\t" in line:
            cells = [c.strip() for c in line.split("\t")]
        else:
            cells = [c.strip() for c in next(csv.reader([line]))]
        if first_row and cells and not _looks_numeric(cells[0]):
            first_row = False
            continue  # header
        first_row = False
        rec = _record_from_cells(cells, lineno, source)
        if rec.id in seen:
            raise ParseError(f"duplicate site id {rec.id} (first seen on line {seen[rec.id]})", lineno, source)
        seen[rec.id] = lineno
        records.append(rec)
    return records


def load_published():
    """The bundled NV-13C site table (510 positions)."""
    text = resources.files("nvspin.data").joinpath("sites.tsv").read_text(encoding="utf-8")
    return parse_table(text, source="sites.tsv")


def store_json(records):
    """Normalized JSON site store; printed strings are kept verbatim."""
    return json.dumps(
        {
            "format": STORE_FORMAT,
            "version": 1,
            "columns": list(COLUMNS),
            "rows": [[r.text(c) for c in COLUMNS] for r in records],
        },
        indent=1,
    )


def _parse_store(text, source):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, source) from None
    if not isinstance(doc, dict) or doc.get("format") != STORE_FORMAT:
        raise ParseError(f"not an {STORE_FORMAT} store", None, source)
    if list(doc.get("columns", [])) != list(COLUMNS):
        raise ParseError("store columns do not match the site table layout", None, source)
    out = io.StringIO()
    for row in doc.get("rows", []):
        out.write("\t".join(str(c) for c in row) + "\n")
    out.seek(0)
    return parse_table(out, source)


def read_sites(path):
    """Read a site table or a JSON site store from ``path``."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return _parse_store(text, str(path))
    return parse_table(io.StringIO(text), str(path))


# --- validation -------------------------------------------------------------


def _overlap(a, b):
    return a[0] <= b[1] and b[0] <= a[1]


def _gap(calc, printed):
    """Distance between two intervals in units of the printed half-width (0 if they overlap)."""
    if _overlap(calc, printed):
        return 0.0
    half = (printed[1] - printed[0]) / 2 or 1.0
    return max(printed[0] - calc[1], calc[0] - printed[1]) / half


@dataclass(frozen=True)
class RecordCheck:
    id: int
    delta0_ok: bool
    tau0_ok: bool
    geometry_ok: bool
    ranges_ok: bool
    delta0_calc: tuple
    delta0_gap: float
    tau0_gap: float
    geometry_residual: float
    nonsecular_scale: float

    @property
    def ok(self):
        return self.delta0_ok and self.tau0_ok and self.geometry_ok and self.ranges_ok


def _check(rec):
    d_calc = delta0_interval(rec.text("a_zz"), rec.text("a_nd"))
    d_print = printed_interval(rec.text("delta0"))
    t_calc = tau0_interval(rec.text("a_zz"), rec.text("a_nd"))
    if math.isinf(rec.tau0_printed):
        t_ok = t_calc[1] >= TAU_SENTINEL
        t_gap = 0.0 if t_ok else (TAU_SENTINEL - t_calc[1]) / TAU_SENTINEL
    else:
        t_print = printed_interval(rec.text("tau0"))
        t_ok = _overlap(t_calc, t_print)
        t_gap = _gap(t_calc, t_print)
    geo = abs(math.hypot(rec.r_cz, rec.r_cxy) - rec.r_cn)
    ranges = rec.a_nd >= 0 and rec.r_cxy >= 0 and rec.r_cn > 0 and -1.0 <= rec.cos_zz_printed <= 1.0
    # second-order shift of the m_S = +-1 levels from the transverse couplings;
    # A_XX + A_YY = 3 A_iso - A_ZZ
    a_perp = 3.0 * rec.a_iso - rec.a_zz
    scale = (0.5 * a_perp**2 + rec.a_nd**2) / NONSECULAR_D_KHZ
    return RecordCheck(
        id=rec.id,
        delta0_ok=_overlap(d_calc, d_print),
        tau0_ok=t_ok,
        geometry_ok=geo <= GEOMETRY_TOL + 1e-9,
        ranges_ok=ranges,
        delta0_calc=d_calc,
        delta0_gap=_gap(d_calc, d_print),
        tau0_gap=t_gap,
        geometry_residual=geo,
        nonsecular_scale=scale,
    )


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    CHECKS = ("delta0", "tau0", "geometry", "ranges")

    def __len__(self):
        return len(self.checks)

    def passed(self, check):
        return sum(1 for c in self.checks if getattr(c, f"{check}_ok"))

    def failures(self, check=None):
        if check is None:
            return [c for c in self.checks if not c.ok]
        return [c for c in self.checks if not getattr(c, f"{check}_ok")]

    @property
    def all_ok(self):
        return all(c.ok for c in self.checks)

    def verdicts(self):
        """{id: (delta0_ok, tau0_ok, geometry_ok, ranges_ok)}"""
        return {c.id: (c.delta0_ok, c.tau0_ok, c.geometry_ok, c.ranges_ok) for c in self.checks}

    def worst(self, n=5):
        def badness(c):
            return (not c.ok, c.delta0_gap + c.tau0_gap + c.geometry_residual / GEOMETRY_TOL)

        return sorted(self.checks, key=lambda c: (badness(c), -c.id), reverse=True)[:n]

    def summary(self):
        return f"{len(self)} rows, {self.passed('delta0')} Δ₀-consistent"

    def render(self):
        lines = [self.summary()]
        for name in self.CHECKS:
            lines.append(f"{name}: {self.passed(name)}/{len(self)} pass")
        bad = self.failures("delta0")
        if bad:
            lo = min(c.nonsecular_scale for c in bad)
            lines.append(
                f"delta0 failures: {len(bad)}, non-secular scale >= {lo:.3g} kHz "
                "(printed splitting likely includes terms beyond the secular formula)"
            )
        lines.append("worst offenders:")
        for c in self.worst():
            if c.ok:
                break
            flags = ",".join(n for n in self.CHECKS if not getattr(c, f"{n}_ok"))
            lines.append(
                f"  id={c.id} failed={flags} delta0_gap={c.delta0_gap:.3g} "
                f"tau0_gap={c.tau0_gap:.3g} geometry_residual={c.geometry_residual:.3g} "
                f"nonsecular_scale={c.nonsecular_scale:.3g}"
            )
        return "\n".join(lines) + "\n"


def validate(records):
    """Check every record against its own printed columns; never raises."""
    checks = sorted((_check(r) for r in records), key=lambda c: c.id)
    return ValidationReport(tuple(checks))


# --- ranking and classification ----------------------------------------------


def rank_by_lifetime(records, top_k=None):
    """Records ordered by recomputed tau_0, longest first; ties by ascending id."""
    ordered = sorted(records, key=lambda r: (-r.tau0, r.id))
    if top_k is None:
        return ordered
    return ordered[: max(int(top_k), 0)]


def classify_axial(records, xy_tol=0.01):
    """Ids of sites within ``xy_tol`` Angstrom of the NV axis, sorted."""
    return sorted(r.id for r in records if r.r_cxy <= xy_tol)


@dataclass(frozen=True)
class FamilyTolerance:
    a_zz: float = 5.0
    a_nd: float = 1.0
    r_cz: float = 0.1
    r_cxy: float = 0.15

    def as_array(self):
        return np.array([self.a_zz, self.a_nd, self.r_cz, self.r_cxy])


@dataclass(frozen=True)
class Family:
    label: str
    member_ids: tuple
    geometry_ok: bool | None = None

    @property
    def kind(self):
        if self.label.startswith("St"):
            return "St"
        return self.label.split(":", 1)[0]

    def __len__(self):
        return len(self.member_ids)


@dataclass(frozen=True)
class FamilyAverage:
    label: str
    n: int
    a_zz: float
    a_nd: float
    gamma0: float
    delta0: float
    cos_zz: float
    r_cn: float
    r_cz: float
    r_cxy: float

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _components(features, tol):
    """Single-linkage clusters: connected components of the 'within tolerance' graph."""
    n = len(features)
    if n < 2:
        return [list(range(n))]
    labels = fclusterdata(features / tol, t=1.0, criterion="distance", metric="chebyshev", method="single")
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(i)
    return list(groups.values())


def classify_families(
    records,
    tol=None,
    geometry=None,
    stable_tau=STABLE_TAU,
    axial_tol=0.01,
    geometry_tol=0.1,
):
    """Group sites into families of near-equivalent positions.

    Non-axial sites are clustered by single linkage on (A_ZZ, A_nd, R_CZ,
    R_CXY) with per-feature tolerances. Clusters containing a site with
    recomputed tau_0 >= ``stable_tau`` become St1, St2, ... in order of
    descending |mean A_ZZ| (ties broken by ascending mean R_CXY). Axial
    sites form one ``Axial`` family and everything else is ``Other:<tag>``.

    ``geometry`` maps site id -> (x, y, z) in NV-PACS; when given, each St
    family is checked for closure under +-120 degree rotations about Z.
    """
    tol = FamilyTolerance() if tol is None else tol
    records = sorted(records, key=lambda r: r.id)
    axial = set(classify_axial(records, axial_tol))
    rest = [r for r in records if r.id not in axial]
    families = []
    if axial:
        families.append(Family("Axial", tuple(sorted(axial))))
    if not rest:
        return families
    feats = np.array([[r.a_zz, r.a_nd, r.r_cz, r.r_cxy] for r in rest])
    clusters = [[rest[i] for i in idx] for idx in _components(feats, tol.as_array())]
    stable, other = [], []
    for c in clusters:
        (stable if any(r.tau0 >= stable_tau for r in c) else other).append(c)
    stable.sort(key=lambda c: (-abs(np.mean([r.a_zz for r in c])), np.mean([r.r_cxy for r in c])))
    for k, c in enumerate(stable, start=1):
        ids = tuple(sorted(r.id for r in c))
        label = f"St{k}"
        if len(ids) not in (3, 6):
            warnings.warn(
                f"stability cluster {label} {list(ids)} has {len(ids)} members (expected 3 or 6)",
                AmbiguousFamily,
                stacklevel=2,
            )
        geo = None if geometry is None else _rotation_closed(ids, geometry, geometry_tol)
        families.append(Family(label, ids, geo))
    for c in sorted(other, key=lambda c: min(r.id for r in c)):
        ids = tuple(sorted(r.id for r in c))
        families.append(Family(f"Other:c{ids[0]}", ids))
    return families


def _rotation_closed(ids, geometry, tol):
    missing = [i for i in ids if i not in geometry]
    if missing:
        return None
    pts = np.array([geometry[i] for i in ids], dtype=float)
    for angle in (120.0, -120.0):
        rot = pts @ z_rotation(angle).T
        d = np.linalg.norm(rot[:, None, :] - pts[None, :, :], axis=2)
        if np.any(d.min(axis=1) > tol):
            return False
    return True


def family_average(family, records):
    """Column means over the family members; Gamma_0 is the mean of member Gamma_0."""
    by_id = {r.id: r for r in records}
    members = [by_id[i] for i in family.member_ids if i in by_id]
    if not members:
        raise EmptyFamily(f"family {family.label} has no members in the given records")

    def mean(attr):
        return float(np.mean([getattr(r, attr) for r in members]))

    return FamilyAverage(
        label=family.label,
        n=len(members),
        a_zz=mean("a_zz"),
        a_nd=mean("a_nd"),
        gamma0=mean("gamma0"),
        delta0=mean("delta0_printed"),
        cos_zz=mean("cos_zz_printed"),
        r_cn=mean("r_cn"),
        r_cz=mean("r_cz"),
        r_cxy=mean("r_cxy"),
    )


# --- geometry files ----------------------------------------------------------


def read_xyz(stream, source=None):
    """Parse a standard XYZ file into a list of (element, np.array([x, y, z]))."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = stream.read().splitlines()
    if not lines:
        return []
    try:
        count = int(lines[0].split()[0])
    except (ValueError, IndexError):
        raise ParseError("first line must hold the atom count", 1, source) from None
    atoms = []
    for k in range(count):
        lineno = k + 3
        if lineno > len(lines):
            raise ParseError(f"expected {count} atoms, file ends after {k}", lineno, source)
        parts = lines[lineno - 1].split()
        if len(parts) < 4:
            raise ParseError("atom line needs 'ELEM x y z'", lineno, source)
        try:
            xyz = np.array([float(p) for p in parts[1:4]])
        except ValueError:
            raise ParseError(f"non-numeric coordinate in {lines[lineno - 1]!r}", lineno, source) from None
        atoms.append((parts[0], xyz))
    return atoms


def carbon_sites(atoms):
    """Site id -> coordinates, numbering carbon atoms 1, 2, ... in file order."""
    out = {}
    k = 0
    for elem, xyz in atoms:
        if elem.upper() == "C":
            k += 1
            out[k] = xyz
    return out
