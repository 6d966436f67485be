"""Molecular and crystal fixture geometry shared across the test suite.

Molecules are built in local cartesian coordinates with bond lengths that
sit safely inside the default covalent thresholds (scale 1.15, margin 0),
then placed into boxes large enough that separate molecules never bond.
"""

import math

import numpy as np

from mofcurator.cif import CrystalStructure, Lattice, Site

CC_AROMATIC = 1.39
CC_SINGLE = 1.50
CO_CARBOXYL = 1.26
CO_DOUBLE = 1.22
CN_AMIDE = 1.45
CH = 1.09
OH = 0.96


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def rot_xy(v, degrees):
    """Rotate a vector about the z axis."""
    a = math.radians(degrees)
    c, s = math.cos(a), math.sin(a)
    x, y, z = v
    return np.array([c * x - s * y, s * x + c * y, z])


Molecule = tuple[list[str], list[np.ndarray]]


def water() -> Molecule:
    half = math.radians(104.5 / 2)
    return (
        ["O", "H", "H"],
        [
            np.zeros(3),
            np.array([OH * math.cos(half), OH * math.sin(half), 0.0]),
            np.array([OH * math.cos(half), -OH * math.sin(half), 0.0]),
        ],
    )


def _methyl_hydrogens(carbon, toward):
    """Three H on a methyl carbon, tetrahedral to the bond pointing at
    `toward`."""
    axis = unit(carbon - toward)
    ref = np.array([0.0, 0.0, 1.0])
    if abs(np.dot(ref, axis)) > 0.9:
        ref = np.array([1.0, 0.0, 0.0])
    u = unit(np.cross(axis, ref))
    v = np.cross(axis, u)
    out = []
    cos_t, sin_t = 1.0 / 3.0, math.sqrt(8.0) / 3.0
    for k in range(3):
        phi = 2.0 * math.pi * k / 3.0
        d = cos_t * axis + sin_t * (math.cos(phi) * u + math.sin(phi) * v)
        out.append(carbon + CH * d)
    return out


def dmf() -> Molecule:
    """(CH3)2N-CHO, planar skeleton in xy."""
    n = np.zeros(3)
    cm1 = n + CN_AMIDE * np.array([math.cos(math.radians(90)), math.sin(math.radians(90)), 0])
    cm2 = n + CN_AMIDE * np.array([math.cos(math.radians(210)), math.sin(math.radians(210)), 0])
    cc = n + CN_AMIDE * np.array([math.cos(math.radians(330)), math.sin(math.radians(330)), 0])
    o = cc + CO_DOUBLE * np.array([math.cos(math.radians(30)), math.sin(math.radians(30)), 0])
    hc = cc + CH * np.array([math.cos(math.radians(270)), math.sin(math.radians(270)), 0])
    els = ["N", "C", "C", "C", "O", "H"]
    coords = [n, cm1, cm2, cc, o, hc]
    for carbon in (cm1, cm2):
        for h in _methyl_hydrogens(carbon, n):
            els.append("H")
            coords.append(h)
    return els, coords


def benzene() -> Molecule:
    els, coords = [], []
    for k in range(6):
        d = np.array([math.cos(math.radians(60 * k)), math.sin(math.radians(60 * k)), 0])
        els.append("C")
        coords.append(CC_AROMATIC * d)
    for k in range(6):
        d = np.array([math.cos(math.radians(60 * k)), math.sin(math.radians(60 * k)), 0])
        els.append("H")
        coords.append((CC_AROMATIC + CH) * d)
    return els, coords


def _carboxyl(ring_c, outward, protonated):
    """Carboxyl group atoms attached at ring_c: C, O, O (H last if acid)."""
    c = ring_c + CC_SINGLE * outward
    o1 = c + CO_CARBOXYL * rot_xy(outward, 60)
    o2 = c + CO_CARBOXYL * rot_xy(outward, -60)
    els = ["C", "O", "O"]
    coords = [c, o1, o2]
    if protonated:
        els.append("H")
        coords.append(o1 + OH * unit(o1 - c))
    return els, coords


def benzoic_acid(acid_h=True) -> Molecule:
    """C6H5-COOH; acid_h=False gives the skeleton missing only the O-H."""
    els, coords = [], []
    ring = []
    for k in range(6):
        d = np.array([math.cos(math.radians(60 * k)), math.sin(math.radians(60 * k)), 0])
        ring.append(CC_AROMATIC * d)
        els.append("C")
        coords.append(ring[-1])
    for k in range(1, 6):  # H on every ring carbon except the substituted one
        d = unit(ring[k])
        els.append("H")
        coords.append(ring[k] + CH * d)
    ce, cc = _carboxyl(ring[0], unit(ring[0]), acid_h)
    els.extend(ce)
    coords.extend(cc)
    return els, coords


def btpdc(aromatic_h=True) -> Molecule:
    """Benzo[b]thiophene-2,6-dicarboxylate dianion (C10H4O4S if H kept)."""
    hexv = [
        CC_AROMATIC
        * np.array([math.cos(math.radians(60 * k)), math.sin(math.radians(60 * k)), 0])
        for k in range(6)
    ]
    # thiophene fused on the V0-V1 edge: ring order C7a(V0)-S-C2-C3-C3a(V1)
    mid = (hexv[0] + hexv[1]) / 2
    out_dir = unit(mid)
    r5 = CC_AROMATIC / (2 * math.sin(math.radians(36)))
    center5 = mid + out_dir * r5 * math.cos(math.radians(36))
    phi0 = math.atan2(*(hexv[0] - center5)[1::-1])
    phi1 = math.atan2(*(hexv[1] - center5)[1::-1])
    delta = (phi1 - phi0 + math.pi) % (2 * math.pi) - math.pi
    step = -math.copysign(math.radians(72), delta)
    penta = [
        center5 + r5 * np.array([math.cos(phi0 + j * step), math.sin(phi0 + j * step), 0])
        for j in range(5)
    ]
    s_pos, c2, c3 = penta[1], penta[2], penta[3]

    els = ["C"] * 6 + ["S", "C", "C"]
    coords = hexv + [s_pos, c2, c3]
    for group in (
        _carboxyl(c2, unit(c2 - center5), False),
        _carboxyl(hexv[4], unit(hexv[4]), False),
    ):
        els.extend(group[0])
        coords.extend(group[1])
    if aromatic_h:
        for v in (hexv[2], hexv[3], hexv[5]):
            els.append("H")
            coords.append(v + CH * unit(v))
        els.append("H")
        coords.append(c3 + CH * unit(c3 - center5))
    return els, coords


def bare(mol: Molecule) -> Molecule:
    els, coords = mol
    keep = [(e, c) for e, c in zip(els, coords) if e != "H"]
    return [e for e, _ in keep], [c for _, c in keep]


def recentered(mol: Molecule) -> Molecule:
    els, coords = mol
    centroid = np.mean(np.asarray(coords), axis=0)
    return els, [c - centroid for c in coords]


def assemble(lattice: Lattice, placements, name="fixture") -> CrystalStructure:
    """placements: iterable of (molecule, center_cart) or
    (molecule, center_cart, occupancy, disorder_group)."""
    sites = []
    counts: dict[str, int] = {}
    for item in placements:
        mol, center = item[0], np.asarray(item[1], dtype=float)
        occ = item[2] if len(item) > 2 else 1.0
        group = item[3] if len(item) > 3 else None
        els, coords = mol
        for el, xyz in zip(els, coords):
            counts[el] = counts.get(el, 0) + 1
            frac = lattice.cart_to_frac(xyz + center) % 1.0
            sites.append(
                Site(
                    label=f"{el}{counts[el]}",
                    element=el,
                    frac=tuple(float(x) for x in frac),
                    occupancy=occ,
                    disorder_group=group,
                )
            )
    return CrystalStructure(lattice=lattice, sites=sites, name=name)


def cubic(a: float) -> Lattice:
    return Lattice(a, a, a, 90.0, 90.0, 90.0)


# ---------------------------------------------------------------------------
# whole-structure fixtures

def water_box(n=2, a=12.0) -> CrystalStructure:
    spots = [(2.0, 2.0, 2.0), (8.0, 8.0, 8.0), (2.0, 8.0, 5.0), (8.0, 2.0, 5.0)]
    return assemble(cubic(a), [(water(), spots[i]) for i in range(n)], name="waterbox")


def dmf_box() -> CrystalStructure:
    return assemble(cubic(15.0), [(dmf(), (4.0, 4.0, 4.0)), (dmf(), (11.0, 11.0, 11.0))], name="dmfbox")


def benzoic_box(with_water=True, acid_h=True) -> CrystalStructure:
    placements = [(recentered(benzoic_acid(acid_h)), (7.0, 7.0, 7.0))]
    if with_water:
        placements.append((water(), (7.0, 7.0, 13.5)))
    return assemble(cubic(17.0), placements, name="benzoicbox")


def btpdc_box() -> CrystalStructure:
    return assemble(cubic(18.0), [(recentered(btpdc()), (9.0, 9.0, 9.0))], name="btpdcbox")


def zno_framework(a=16.0, b=14.0, c=14.0, guests=True) -> CrystalStructure:
    """A -Zn-O- chain spanning x (Zn-O 2.0 A), with one free DMF and two
    free waters in the pore space when guests is True."""
    lat = Lattice(a, b, c, 90.0, 90.0, 90.0)
    placements = []
    n_units = int(a // 4)
    for i in range(n_units):
        placements.append(((["Zn"], [np.zeros(3)]), (4.0 * i, 2.0, 2.0)))
        placements.append(((["O"], [np.zeros(3)]), (4.0 * i + 2.0, 2.0, 2.0)))
    if guests:
        placements.append((recentered(dmf()), (4.0, 8.0, 8.0)))
        placements.append((water(), (11.0, 6.0, 6.0)))
        placements.append((water(), (11.0, 10.0, 10.0)))
    return assemble(lat, placements, name="znoframework")


ZNO_FORMULA = "(ZnO)4·DMF·2(H2O)"


def piclas() -> CrystalStructure:
    """Disordered Dy/btpdc/DMF/water assembly in a 40 A cube.

    Contents: 8 isolated Dy, 8 clean btpdc, 4 disordered btpdc pairs
    (complete A + heavy-only B at +3.2 A in z, occupancy 0.5, untagged),
    4 disordered DMF pairs (complete A group 1 + heavy-only B group 2,
    occupancy 0.5, B at +3.2 A in x), 8 full-occupancy waters.
    """
    linker = recentered(btpdc())
    linker_bare = recentered(bare(btpdc()))
    solvent = recentered(dmf())
    solvent_bare = recentered(bare(dmf()))

    placements = []
    ys = (5.0, 15.0, 25.0, 35.0)
    # clean linkers: two x columns, z = 5 layer
    for x in (10.0, 30.0):
        for y in ys:
            placements.append((linker, (x, y, 5.0)))
    # disordered linker pairs: x = 10 column, z = 15 layer
    for y in ys:
        placements.append((linker, (10.0, y, 15.0), 0.5, None))
        placements.append((linker_bare, (10.0, y, 15.0 + 3.2), 0.5, None))
    # disordered DMF pairs: z = 27 layer, B out of plane like the linkers
    for y in ys:
        placements.append((solvent, (10.0, y, 27.0), 0.5, 1))
        placements.append((solvent_bare, (10.0, y, 27.0 + 3.2), 0.5, 2))
    # waters and Dy: z = 35 layer
    for x, kind in ((5.0, "water"), (25.0, "water"), (15.0, "dy"), (35.0, "dy")):
        for y in ys:
            if kind == "water":
                placements.append((water(), (x, y, 35.0)))
            else:
                placements.append(((["Dy"], [np.zeros(3)]), (x, y, 35.0)))
    return assemble(cubic(40.0), placements, name="PICLAS")


PICLAS_FORMULA = "[Dy2(btpdc)3·DMF·2(H2O)]"
PICLAS_ABBREVIATIONS = {"H2btpdc": "benzo[b]thiophene-2,6-dicarboxylic acid"}
