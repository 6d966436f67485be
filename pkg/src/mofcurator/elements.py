"""Element symbols, atomic numbers, covalent radii, and metal classification."""

from functools import lru_cache
from importlib import resources

SYMBOLS = (
    "H", "He",
    "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar",
    "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr",
    "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
    "In", "Sn", "Sb", "Te", "I", "Xe",
    "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy",
    "Ho", "Er", "Tm", "Yb", "Lu",
    "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg",
    "Tl", "Pb", "Bi", "Po", "At", "Rn",
    "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf",
    "Es", "Fm", "Md", "No", "Lr",
    "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn",
    "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
)

ATOMIC_NUMBERS = {sym: z for z, sym in enumerate(SYMBOLS, start=1)}

# Nonmetals plus metalloids; everything else counts as a metal for
# coordination-flexibility purposes.
_NONMETALS = frozenset({
    "H", "He", "B", "C", "N", "O", "F", "Ne", "Si", "P", "S", "Cl", "Ar",
    "Ge", "As", "Se", "Br", "Kr", "Sb", "Te", "I", "Xe", "At", "Rn", "Ts", "Og",
})

NOBLE_GASES = frozenset({"He", "Ne", "Ar", "Kr", "Xe", "Rn", "Og"})


def is_metal(symbol: str) -> bool:
    return symbol not in _NONMETALS


def atomic_number(symbol: str) -> int:
    return ATOMIC_NUMBERS[symbol]


def normalize_symbol(raw: str) -> str | None:
    """Normalize a CIF type symbol like 'DY3+' or 'o1-' to an element symbol.

    Returns None when no element can be recognized.
    """
    token = raw.strip()
    # strip trailing oxidation-state / charge decorations: Dy3+, O1-, Cu+
    while token and (token[-1] in "+-" or token[-1].isdigit()):
        token = token[:-1]
    if not token:
        return None
    sym = token[0].upper() + token[1:].lower()
    return sym if sym in ATOMIC_NUMBERS else None


@lru_cache(maxsize=1)
def covalent_radii() -> dict[str, float]:
    """Single-bond covalent radius table shipped with the package, in Angstrom."""
    radii: dict[str, float] = {}
    text = resources.files("mofcurator.data").joinpath("covalent_radii.txt").read_text()
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        sym, value = line.split()
        radii[sym] = float(value)
    return radii


def covalent_radius(symbol: str) -> float:
    return covalent_radii()[symbol]
