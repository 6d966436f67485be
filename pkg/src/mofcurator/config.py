"""INI configuration shared by the command-line tools.

Precedence: command-line flags override config values; environment
variables override neither (credentials excepted: the chat backend reads
its API key from MOFCURATOR_API_KEY only).

Recognized sections and keys, all optional:

    [bonds]
    scale = 1.15          covalent radius sum multiplier
    margin = 0.0          additive distance margin (angstrom)

    [matching]
    threshold = 0.5       minimum score for a refcode/MOF pairing
    formula = 0.4         per-signal weights
    cell = 0.3
    space_group = 0.1
    metal = 0.1
    volume = 0.1

    [energy]
    backend = lj          "lj" or "subprocess"
    command =             shell words for the subprocess calculator
    timeout = 120.0

    [repair]
    candidate_cap = 256
    assignment_cap = 64

    [agents]
    endpoint =            chat-completions URL for live sessions
    model = default
    temperature = 0.0
"""

import configparser
import shlex
from dataclasses import dataclass, field
from pathlib import Path

from .crystal import BondPolicy
from .energy import EnergyModel, LennardJonesModel, SubprocessEnergyModel


@dataclass
class Config:
    bond_scale: float = 1.15
    bond_margin: float = 0.0
    match_threshold: float = 0.5
    match_weights: dict = field(default_factory=dict)
    energy_backend: str = "lj"
    energy_command: str = ""
    energy_timeout: float = 120.0
    candidate_cap: int = 256
    assignment_cap: int = 64
    endpoint: str = ""
    model: str = "default"
    temperature: float = 0.0

    def bond_policy(self) -> BondPolicy:
        return BondPolicy(scale=self.bond_scale, margin=self.bond_margin)

    def energy_model(self) -> EnergyModel:
        return make_energy_model(
            self.energy_backend
            if not self.energy_command
            else f"subprocess:{self.energy_command}",
            timeout=self.energy_timeout,
        )


def make_energy_model(spec: str, timeout: float = 120.0) -> EnergyModel:
    """"lj" or "subprocess:<command line>" (command parsed with shell rules)."""
    if spec in ("", "lj", "lennard-jones"):
        return LennardJonesModel()
    if spec == "subprocess":
        raise ValueError("subprocess energy backend needs a command: subprocess:<cmd>")
    if spec.startswith("subprocess:"):
        command = shlex.split(spec.split(":", 1)[1])
        if not command:
            raise ValueError("empty subprocess energy command")
        return SubprocessEnergyModel(command=command, timeout=timeout)
    raise ValueError(f"unknown energy backend {spec!r}")


def load_config(path: str | Path | None = None) -> Config:
    cfg = Config()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    read = parser.read(str(path))
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")

    def get(section, key, cast, default):
        if parser.has_option(section, key):
            return cast(parser.get(section, key))
        return default

    cfg.bond_scale = get("bonds", "scale", float, cfg.bond_scale)
    cfg.bond_margin = get("bonds", "margin", float, cfg.bond_margin)
    cfg.match_threshold = get("matching", "threshold", float, cfg.match_threshold)
    for signal in ("formula", "cell", "space_group", "metal", "volume"):
        if parser.has_option("matching", signal):
            cfg.match_weights[signal] = float(parser.get("matching", signal))
    cfg.energy_backend = get("energy", "backend", str, cfg.energy_backend)
    cfg.energy_command = get("energy", "command", str, cfg.energy_command)
    cfg.energy_timeout = get("energy", "timeout", float, cfg.energy_timeout)
    cfg.candidate_cap = get("repair", "candidate_cap", int, cfg.candidate_cap)
    cfg.assignment_cap = get("repair", "assignment_cap", int, cfg.assignment_cap)
    cfg.endpoint = get("agents", "endpoint", str, cfg.endpoint)
    cfg.model = get("agents", "model", str, cfg.model)
    cfg.temperature = get("agents", "temperature", float, cfg.temperature)
    return cfg
