"""Structural formula parsing: "[Dy2(btpdc)3·DMF·2(H2O)]" -> component specs.

Units inside the (optional) outer brackets are separated by centered dots,
'*', or whitespace. Each unit is an element run ("Dy2", "Cu2I2"), a
parenthesized name with a leading or trailing multiplicity ("(btpdc)3",
"2(H2O)", "(H2O)0.5"), or a bare name ("DMF"). Multiplicities may be
fractional. An element run containing H ("H2O", "NH3") is read as a molecule
name, not as separate elements. A trailing charge sign marks a counterion.
"""

import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .elements import ATOMIC_NUMBERS, is_metal


class UnparseableFormula(Exception):
    """Raised when a structural formula cannot be tokenized."""


class ComponentRole(Enum):
    METAL_NODE = "metal_node"
    LINKER = "linker"
    SOLVENT = "solvent"
    GUEST = "guest"
    COUNTERION = "counterion"


_SOLVENT_NAMES = {
    "water", "h2o", "methanol", "meoh", "ethanol", "etoh", "acetonitrile",
    "mecn", "dmf", "dimethylformamide", "n,n-dimethylformamide", "dma",
    "dimethylacetamide", "n,n-dimethylacetamide", "def", "diethylformamide",
    "n,n-diethylformamide", "dmso", "dimethylsulfoxide", "thf",
    "tetrahydrofuran", "dioxane", "1,4-dioxane", "chloroform", "dcm",
    "dichloromethane",
}

_SEPARATORS = "·⋅∙‧*"  # centered dots and asterisk


@dataclass
class ComponentSpec:
    name: str
    multiplicity: Fraction
    role: ComponentRole
    charge_hint: int = 0


_COEF_RE = re.compile(r"(\d+/\d+|\d+\.\d+|\d+)")
_ELEMENT_RUN_RE = re.compile(r"([A-Z][a-z]?)(\d*\.?\d*)")


def _coef(token: str) -> Fraction:
    if "/" in token:
        num, den = token.split("/")
        return Fraction(int(num), int(den))
    return Fraction(token)


def _strip_charge(name: str) -> tuple[str, int]:
    """Split a trailing charge marker: 'NO3-' -> ('NO3', -1), 'Ca2+' handled
    by element parsing first, '(SO4)2-' -> charge -2."""
    m = re.search(r"(\d*)([+-])$", name)
    if not m:
        return name, 0
    magnitude = int(m.group(1)) if m.group(1) else 1
    sign = 1 if m.group(2) == "+" else -1
    return name[:m.start()], sign * magnitude


def _element_run(token: str) -> list[tuple[str, Fraction]] | None:
    """Parse the whole token as an element sequence, or return None."""
    pos = 0
    out = []
    while pos < len(token):
        m = _ELEMENT_RUN_RE.match(token, pos)
        if not m or m.group(1) not in ATOMIC_NUMBERS:
            return None
        count = Fraction(m.group(2)) if m.group(2) else Fraction(1)
        out.append((m.group(1), count))
        pos = m.end()
    return out or None


def _role_for_name(name: str, charge: int) -> ComponentRole:
    if charge != 0:
        return ComponentRole.COUNTERION
    if name.lower() in _SOLVENT_NAMES:
        return ComponentRole.SOLVENT
    return ComponentRole.LINKER


def parse_structural_formula(text: str) -> list[ComponentSpec]:
    raw = text.strip()
    if not raw:
        raise UnparseableFormula("empty formula")
    if raw.startswith("[") and raw.endswith("]"):
        raw = raw[1:-1]
    for sep in _SEPARATORS:
        raw = raw.replace(sep, " ")
    segments = raw.split()
    if not segments:
        raise UnparseableFormula(f"no components in {text!r}")

    specs: list[ComponentSpec] = []
    for segment in segments:
        specs.extend(_parse_segment(segment, text))
    if not specs:
        raise UnparseableFormula(f"no components in {text!r}")
    return specs


def _parse_segment(segment: str, whole: str) -> list[ComponentSpec]:
    out: list[ComponentSpec] = []
    pos = 0
    n = len(segment)
    while pos < n:
        lead = Fraction(1)
        m = _COEF_RE.match(segment, pos)
        # a leading coefficient must be followed by a unit, not end the segment
        if m and m.end() < n:
            lead = _coef(m.group(1))
            pos = m.end()
        if pos < n and segment[pos] == "(":
            depth = 1
            end = pos + 1
            while end < n and depth:
                depth += segment[end] == "("
                depth -= segment[end] == ")"
                end += 1
            if depth:
                raise UnparseableFormula(f"unbalanced parentheses in {whole!r}")
            name = segment[pos + 1:end - 1]
            pos = end
            trail = Fraction(1)
            m2 = _COEF_RE.match(segment, pos)
            if m2:
                after = segment[m2.end():m2.end() + 1]
                if after in ("+", "-"):
                    pass  # digits belong to a charge marker, handled below
                else:
                    trail = _coef(m2.group(1))
                    pos = m2.end()
            charge = 0
            mc = re.match(r"(\d*)([+-])", segment[pos:])
            if mc:
                magnitude = int(mc.group(1)) if mc.group(1) else 1
                charge = magnitude if mc.group(2) == "+" else -magnitude
                pos += mc.end()
            name, inner_charge = _strip_charge(name)
            charge = charge or inner_charge
            if not name:
                raise UnparseableFormula(f"empty name in {whole!r}")
            mult = lead * trail
            out.append(ComponentSpec(name, mult, _role_for_name(name, charge), charge))
            continue
        m3 = re.match(r"[^()\s]+", segment[pos:])
        if not m3:
            raise UnparseableFormula(f"cannot tokenize {whole!r}")
        token = m3.group(0)
        pos += len(token)
        name, charge = _strip_charge(token)
        if not name or not any(c.isalpha() for c in name):
            raise UnparseableFormula(f"cannot tokenize {whole!r}")
        elements = _element_run(name)
        if elements and not any(e == "H" for e, _ in elements):
            if charge != 0 and len(elements) == 1 and elements[0][1] == 1:
                el = elements[0][0]
                out.append(ComponentSpec(el, lead, ComponentRole.COUNTERION, charge))
                continue
            if charge != 0:
                out.append(ComponentSpec(name, lead, ComponentRole.COUNTERION, charge))
                continue
            for el, count in elements:
                role = ComponentRole.METAL_NODE if is_metal(el) else ComponentRole.GUEST
                out.append(ComponentSpec(el, lead * count, role))
            continue
        out.append(ComponentSpec(name, lead, _role_for_name(name, charge), charge))
    for spec in out:
        if spec.multiplicity <= 0:
            raise UnparseableFormula(f"nonpositive multiplicity in {whole!r}")
    return out
