"""CIF 1.1 subset reader/writer for experimental crystal structures.

Supported input: the first data_ block; cell parameters; the atom_site loop
(label, type_symbol, fract_x/y/z, occupancy, disorder_group); symmetry
operation loops (_symmetry_equiv_pos_as_xyz or _space_group_symop_operation_xyz),
expanded to P1 at parse time; and the geom_bond loop with translation codes in
_geom_bond_site_symmetry_2 ("." or "1_555" style). Numeric values may carry
standard-uncertainty parentheses ("1.234(5)"). Unknown data names are ignored.

Output is always P1 with explicit fractional coordinates and, when bonds are
present, a geom_bond loop with the same translation codes.
"""

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .elements import ATOMIC_NUMBERS, normalize_symbol


class MalformedCif(Exception):
    """Raised when a CIF cannot be interpreted under the supported subset."""


@dataclass(frozen=True)
class Lattice:
    a: float
    b: float
    c: float
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0:
            raise ValueError("cell lengths must be positive")
        for ang in (self.alpha, self.beta, self.gamma):
            if not 0.0 < ang < 180.0:
                raise ValueError("cell angles must lie in (0, 180)")
        if self.volume <= 0 or math.isnan(self.volume):
            raise ValueError("cell angles do not define a positive volume")

    @property
    def matrix(self) -> np.ndarray:
        """Row vectors a, b, c in Cartesian coordinates (Angstrom)."""
        al, be, ga = (math.radians(x) for x in (self.alpha, self.beta, self.gamma))
        cx = self.c * math.cos(be)
        cy = self.c * (math.cos(al) - math.cos(be) * math.cos(ga)) / math.sin(ga)
        cz2 = self.c**2 - cx**2 - cy**2
        cz = math.sqrt(max(cz2, 0.0))
        return np.array([
            [self.a, 0.0, 0.0],
            [self.b * math.cos(ga), self.b * math.sin(ga), 0.0],
            [cx, cy, cz],
        ])

    @property
    def volume(self) -> float:
        al, be, ga = (math.radians(x) for x in (self.alpha, self.beta, self.gamma))
        ca, cb, cg = math.cos(al), math.cos(be), math.cos(ga)
        arg = 1.0 - ca**2 - cb**2 - cg**2 + 2.0 * ca * cb * cg
        if arg <= 0:
            return float("nan")
        return self.a * self.b * self.c * math.sqrt(arg)

    def frac_to_cart(self, frac) -> np.ndarray:
        return np.asarray(frac, dtype=float) @ self.matrix

    def cart_to_frac(self, cart) -> np.ndarray:
        return np.asarray(cart, dtype=float) @ np.linalg.inv(self.matrix)


@dataclass
class Site:
    label: str
    element: str
    frac: tuple[float, float, float]
    occupancy: float = 1.0
    disorder_group: int | None = None


BondTriple = tuple[int, int, tuple[int, int, int]]


@dataclass
class CrystalStructure:
    lattice: Lattice
    sites: list[Site]
    explicit_bonds: list[BondTriple] = field(default_factory=list)
    provenance: str = ""
    name: str = "structure"

    def validate(self) -> None:
        labels = [s.label for s in self.sites]
        if len(set(labels)) != len(labels):
            raise ValueError("site labels must be unique")
        for s in self.sites:
            if s.element not in ATOMIC_NUMBERS:
                raise ValueError(f"unknown element {s.element!r} at site {s.label}")
            if not 0.0 < s.occupancy <= 1.0:
                raise ValueError(f"occupancy of {s.label} outside (0, 1]")
        n = len(self.sites)
        for i, j, shift in self.explicit_bonds:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError("bond references a missing site")
            if i == j and shift == (0, 0, 0):
                raise ValueError("self-bond with zero image shift")

    def copy(self) -> "CrystalStructure":
        return CrystalStructure(
            lattice=self.lattice,
            sites=[replace(s) for s in self.sites],
            explicit_bonds=list(self.explicit_bonds),
            provenance=self.provenance,
            name=self.name,
        )

    def element_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for s in self.sites:
            counts[s.element] = counts.get(s.element, 0) + 1
        return counts


# ---------------------------------------------------------------------------
# tokenizer

_NUMERIC_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)(\(\d+\))?([eE][+-]?\d+)?$")


def _tokenize(text: str):
    """Yield CIF tokens: tags, bare values, quoted values, semicolon blocks."""
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith(";"):
            block = [line[1:]]
            i += 1
            while i < len(lines) and not lines[i].startswith(";"):
                block.append(lines[i])
                i += 1
            if i >= len(lines):
                raise MalformedCif("unterminated semicolon text block")
            yield "\n".join(block)
            i += 1
            continue
        pos = 0
        n = len(line)
        while pos < n:
            ch = line[pos]
            if ch in " \t":
                pos += 1
                continue
            if ch == "#":
                break
            if ch in "'\"":
                end = line.find(ch, pos + 1)
                if end < 0:
                    raise MalformedCif("unterminated quoted string")
                yield line[pos + 1:end]
                pos = end + 1
                continue
            m = re.match(r"\S+", line[pos:])
            yield m.group(0)
            pos += m.end()
        i += 1


def _parse_number(token: str) -> float:
    m = _NUMERIC_RE.match(token)
    if not m:
        raise MalformedCif(f"expected a number, got {token!r}")
    return float(m.group(1) + (m.group(3) or ""))


def _parse_symop(op: str) -> tuple[np.ndarray, np.ndarray]:
    """Parse 'x, -y+1/2, z' style operator into (rotation, translation)."""
    rot = np.zeros((3, 3))
    trans = np.zeros(3)
    parts = op.lower().replace(" ", "").split(",")
    if len(parts) != 3:
        raise MalformedCif(f"bad symmetry operation {op!r}")
    axis = {"x": 0, "y": 1, "z": 2}
    term_re = re.compile(r"([+-]?)(\d+/\d+|\d*\.?\d+|[xyz])")
    for row, part in enumerate(parts):
        pos = 0
        while pos < len(part):
            m = term_re.match(part, pos)
            if not m:
                raise MalformedCif(f"bad symmetry operation {op!r}")
            sign = -1.0 if m.group(1) == "-" else 1.0
            body = m.group(2)
            if body in axis:
                rot[row, axis[body]] += sign
            elif "/" in body:
                num, den = body.split("/")
                trans[row] += sign * float(num) / float(den)
            else:
                trans[row] += sign * float(body)
            pos = m.end()
    return rot, trans


def _parse_bond_code(code: str) -> tuple[int, int, int]:
    """Translation part of a geom_bond site-symmetry code ('.', '1_555', '1 555')."""
    code = code.strip()
    if code in (".", "", "?", "1"):
        return (0, 0, 0)
    m = re.match(r"^(\d+)[_ ](\d)(\d)(\d)$", code)
    if not m:
        raise MalformedCif(f"unsupported bond symmetry code {code!r}")
    if m.group(1) != "1":
        raise MalformedCif("only identity symmetry (code 1) supported in bond loops")
    return tuple(int(d) - 5 for d in m.groups()[1:])  # type: ignore[return-value]


def _format_bond_code(shift: tuple[int, int, int]) -> str:
    if shift == (0, 0, 0):
        return "."
    digits = []
    for s in shift:
        if not -4 <= s <= 4:
            raise MalformedCif("image shift out of range for 1_xyz codes")
        digits.append(str(s + 5))
    return "1_" + "".join(digits)


# ---------------------------------------------------------------------------
# parsing

def _split_items(text: str):
    """Group the token stream of the first data block into (tag, value) items
    and loops [(tags, rows)]."""
    tokens = list(_tokenize(text))
    start = 0
    for idx, tok in enumerate(tokens):
        if tok.lower().startswith("data_"):
            start = idx + 1
            break
    items: dict[str, str] = {}
    loops: list[tuple[list[str], list[list[str]]]] = []
    i = start
    n = len(tokens)
    while i < n:
        tok = tokens[i]
        low = tok.lower()
        if low.startswith("data_"):
            break  # later blocks ignored
        if low == "loop_":
            i += 1
            tags: list[str] = []
            while i < n and tokens[i].startswith("_"):
                tags.append(tokens[i].lower())
                i += 1
            values: list[str] = []
            while i < n:
                t = tokens[i]
                tl = t.lower()
                if t.startswith("_") or tl == "loop_" or tl.startswith("data_"):
                    break
                values.append(t)
                i += 1
            if not tags:
                raise MalformedCif("loop_ without data names")
            if len(values) % len(tags) != 0:
                raise MalformedCif("loop row length does not match its data names")
            rows = [values[k:k + len(tags)] for k in range(0, len(values), len(tags))]
            loops.append((tags, rows))
            continue
        if tok.startswith("_"):
            if i + 1 >= n:
                raise MalformedCif(f"data name {tok} has no value")
            items[low] = tokens[i + 1]
            i += 2
            continue
        raise MalformedCif(f"unexpected token {tok!r}")
    return items, loops


def _find_loop(loops, *needles):
    for tags, rows in loops:
        if any(any(nd in t for t in tags) for nd in needles):
            return tags, rows
    return None


_MISSING = (".", "?")


def parse_cif(text: str) -> CrystalStructure:
    """Parse a CIF document into a P1 CrystalStructure.

    Raises MalformedCif for anything outside the supported subset.
    """
    items, loops = _split_items(text)

    try:
        lattice = Lattice(
            a=_parse_number(items["_cell_length_a"]),
            b=_parse_number(items["_cell_length_b"]),
            c=_parse_number(items["_cell_length_c"]),
            alpha=_parse_number(items["_cell_angle_alpha"]),
            beta=_parse_number(items["_cell_angle_beta"]),
            gamma=_parse_number(items["_cell_angle_gamma"]),
        )
    except KeyError as exc:
        raise MalformedCif(f"missing cell parameter {exc.args[0]}") from None
    except ValueError as exc:
        raise MalformedCif(str(exc)) from None

    atom_loop = _find_loop(loops, "_atom_site_fract_x")
    if atom_loop is None:
        raise MalformedCif("missing atom_site loop")
    tags, rows = atom_loop

    def col(name):
        return tags.index(name) if name in tags else None

    c_label = col("_atom_site_label")
    c_type = col("_atom_site_type_symbol")
    c_x, c_y, c_z = (col(f"_atom_site_fract_{ax}") for ax in "xyz")
    c_occ = col("_atom_site_occupancy")
    c_dis = col("_atom_site_disorder_group")
    if c_label is None or c_x is None or c_y is None or c_z is None:
        raise MalformedCif("atom_site loop must provide label and fractional coordinates")

    sites: list[Site] = []
    for row in rows:
        label = row[c_label]
        raw_type = row[c_type] if c_type is not None and row[c_type] not in _MISSING else label
        element = normalize_symbol(raw_type) or normalize_symbol(re.sub(r"[\d'].*$", "", raw_type) or "")
        if element is None:
            raise MalformedCif(f"cannot determine element for site {label!r}")
        frac = tuple(_parse_number(row[c]) for c in (c_x, c_y, c_z))
        occupancy = 1.0
        if c_occ is not None and row[c_occ] not in _MISSING:
            occupancy = _parse_number(row[c_occ])
            if 1.0 < occupancy <= 1.0 + 1e-6:
                occupancy = 1.0
            if not 0.0 < occupancy <= 1.0:
                raise MalformedCif(f"occupancy of {label!r} outside (0, 1]")
        group: int | None = None
        if c_dis is not None and row[c_dis] not in _MISSING:
            group = _parse_disorder_group(row[c_dis])
        sites.append(Site(label, element, frac, occupancy, group))

    ops = _symmetry_ops(items, loops)
    if len(ops) > 1:
        sites = _expand_symmetry(lattice, sites, ops)

    labels = {}
    for idx, s in enumerate(sites):
        if s.label in labels:
            raise MalformedCif(f"duplicate site label {s.label!r}")
        labels[s.label] = idx

    bonds: list[BondTriple] = []
    bond_loop = _find_loop(loops, "_geom_bond_atom_site_label_1")
    if bond_loop is not None:
        btags, brows = bond_loop
        b1 = btags.index("_geom_bond_atom_site_label_1")
        b2 = btags.index("_geom_bond_atom_site_label_2")
        bs = btags.index("_geom_bond_site_symmetry_2") if "_geom_bond_site_symmetry_2" in btags else None
        for row in brows:
            for lab in (row[b1], row[b2]):
                if lab not in labels:
                    raise MalformedCif(f"bond references unknown site {lab!r}")
            shift = _parse_bond_code(row[bs]) if bs is not None else (0, 0, 0)
            i, j = labels[row[b1]], labels[row[b2]]
            if i == j and shift == (0, 0, 0):
                raise MalformedCif("self-bond with zero image shift")
            bonds.append((i, j, shift))

    name = "structure"
    for tok in _tokenize(text):
        if tok.lower().startswith("data_") and len(tok) > 5:
            name = tok[5:]
            break

    structure = CrystalStructure(
        lattice=lattice,
        sites=sites,
        explicit_bonds=bonds,
        provenance=items.get("_curation_provenance", ""),
        name=name,
    )
    try:
        structure.validate()
    except ValueError as exc:
        raise MalformedCif(str(exc)) from None
    return structure


def _parse_disorder_group(token: str) -> int:
    try:
        return int(token)
    except ValueError:
        pass
    if len(token) == 1 and token.isalpha():
        return ord(token.upper()) - ord("A") + 1
    raise MalformedCif(f"unsupported disorder group tag {token!r}")


def _symmetry_ops(items, loops):
    ops = []
    for key in ("_symmetry_equiv_pos_as_xyz", "_space_group_symop_operation_xyz"):
        found = None
        for tags, rows in loops:
            if key in tags:
                found = [row[tags.index(key)] for row in rows]
                break
        if found is None and key in items:
            found = [items[key]]
        if found:
            ops = [_parse_symop(op) for op in found]
            break
    if not ops:
        ops = [(np.eye(3), np.zeros(3))]
    return ops


def _expand_symmetry(lattice: Lattice, sites: list[Site], ops) -> list[Site]:
    """Apply every operator to every site, wrapping into [0, 1) and merging
    images closer than 1e-3 (fractional)."""
    out: list[Site] = []
    positions: list[np.ndarray] = []
    counters: dict[str, int] = {}
    for site in sites:
        frac = np.array(site.frac, dtype=float)
        for rot, trans in ops:
            new = (rot @ frac + trans) % 1.0
            merged = False
            for pos in positions:
                delta = new - pos
                delta -= np.round(delta)
                if np.all(np.abs(delta) < 1e-3):
                    merged = True
                    break
            if merged:
                continue
            counters[site.label] = counters.get(site.label, 0) + 1
            label = site.label if counters[site.label] == 1 else f"{site.label}_{counters[site.label]}"
            out.append(Site(label, site.element, tuple(new), site.occupancy, site.disorder_group))
            positions.append(new)
    return out


# ---------------------------------------------------------------------------
# writing

def write_cif(structure: CrystalStructure) -> str:
    """Serialize a P1 structure; coordinates survive a round trip to 1e-6."""
    try:
        structure.validate()
    except ValueError as exc:
        raise MalformedCif(str(exc)) from None
    lat = structure.lattice
    lines = [f"data_{structure.name}"]
    if structure.provenance:
        lines.append(f"_curation_provenance '{structure.provenance}'")
    lines += [
        f"_cell_length_a {lat.a:.6f}",
        f"_cell_length_b {lat.b:.6f}",
        f"_cell_length_c {lat.c:.6f}",
        f"_cell_angle_alpha {lat.alpha:.6f}",
        f"_cell_angle_beta {lat.beta:.6f}",
        f"_cell_angle_gamma {lat.gamma:.6f}",
        "loop_",
        "_atom_site_label",
        "_atom_site_type_symbol",
        "_atom_site_fract_x",
        "_atom_site_fract_y",
        "_atom_site_fract_z",
        "_atom_site_occupancy",
        "_atom_site_disorder_group",
    ]
    for s in structure.sites:
        group = str(s.disorder_group) if s.disorder_group is not None else "."
        lines.append(
            f"{s.label} {s.element} {s.frac[0]:.6f} {s.frac[1]:.6f} {s.frac[2]:.6f} "
            f"{s.occupancy:.6f} {group}"
        )
    if structure.explicit_bonds:
        lines += [
            "loop_",
            "_geom_bond_atom_site_label_1",
            "_geom_bond_atom_site_label_2",
            "_geom_bond_site_symmetry_2",
        ]
        for i, j, shift in structure.explicit_bonds:
            lines.append(
                f"{structure.sites[i].label} {structure.sites[j].label} {_format_bond_code(shift)}"
            )
    return "\n".join(lines) + "\n"
