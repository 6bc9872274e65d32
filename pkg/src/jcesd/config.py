"""Simulation configuration and its JSON file form."""

import json
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional, Tuple, Union

from .errors import InvalidArgumentError

RECEIVERS = ("semiblind", "pilot_orthogonal", "pilot_nonorthogonal")


def _array_shape(n) -> Tuple[int, int]:
    """Most square ``rows x cols`` factorization with ``rows <= cols``."""
    rows = max(r for r in range(1, int(n ** 0.5) + 1) if n % r == 0)
    return rows, n // rows


@dataclass
class SimConfig:
    """All knobs of a Monte-Carlo run.

    Field names double as the keys of the JSON config file.  ``snr_db`` is
    the ratio of the per-stream signal power at the combiner output to the
    per-antenna noise variance.  ``mcs_index`` selects a row of the MCS
    table, ``"auto"`` runs link adaptation over the table, and ``None``
    sends uncoded ``modulation``-QAM.
    """

    k: int = 4
    n_s: int = 2
    n_t: int = 64
    n_r: int = 8
    n_t_rf: int = 16
    n_r_rf: int = 4
    j: int = 48
    t: int = 14
    n_c: int = 2
    n_f: int = 8
    n_iter: int = 5
    kappa_max: float = 1e4
    llr_threshold: float = 15.0
    modulation: int = 16
    mcs_index: Optional[Union[int, str]] = None
    snr_db: List[float] = field(default_factory=lambda: [10.0])
    seeds: List[int] = field(default_factory=lambda: [0])
    receiver: Union[str, List[str]] = "semiblind"
    strict_fail: bool = False
    num_ttis: int = 20
    num_paths: int = 4
    max_delay: Optional[float] = 0.5
    rolloff: float = 0.3
    augment: bool = True
    rb_size: int = 12
    baseline_interp: str = "delay"
    decode_margin: float = 0.55

    def __post_init__(self):
        if isinstance(self.receiver, str):
            self.receiver = [self.receiver]
        self.receiver = list(self.receiver)
        for r in self.receiver:
            if r not in RECEIVERS:
                raise InvalidArgumentError(f"unknown receiver {r!r}; choose from {RECEIVERS}")
        if len(set(self.receiver)) != len(self.receiver):
            raise InvalidArgumentError("receiver list has duplicates")
        for name in ("k", "n_s", "n_t", "n_r", "n_t_rf", "n_r_rf", "j", "t", "n_c", "n_f",
                     "num_ttis", "num_paths", "rb_size"):
            if int(getattr(self, name)) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")
        if self.n_iter < 0:
            raise InvalidArgumentError("n_iter must be >= 0")
        if self.j % self.n_f:
            raise InvalidArgumentError(f"n_f={self.n_f} must divide j={self.j}")
        if self.n_t % self.n_t_rf:
            raise InvalidArgumentError(f"n_t_rf={self.n_t_rf} must divide n_t={self.n_t}")
        if self.n_s > self.n_r_rf or self.n_r_rf > self.n_r:
            raise InvalidArgumentError("need n_s <= n_r_rf <= n_r")
        if self.k * self.n_s > self.n_t_rf:
            raise InvalidArgumentError("k*n_s streams exceed n_t_rf RF chains")
        if self.t < self.n_s:
            raise InvalidArgumentError("t must leave room for n_s pilots")
        if self.mcs_index not in (None, "auto") and not isinstance(self.mcs_index, int):
            raise InvalidArgumentError("mcs_index must be an integer, 'auto' or null")
        self.snr_db = [float(s) for s in self.snr_db]
        self.seeds = [int(s) for s in self.seeds]
        if self.baseline_interp not in ("linear", "delay"):
            raise InvalidArgumentError("baseline_interp must be 'linear' or 'delay'")

    @property
    def tx_array(self):
        return _array_shape(self.n_t)

    @property
    def rx_array(self):
        return _array_shape(self.n_r)

    def to_dict(self):
        return asdict(self)


def config_from_dict(d) -> SimConfig:
    known = {f.name for f in fields(SimConfig)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise InvalidArgumentError(f"unknown config keys: {', '.join(unknown)}")
    return SimConfig(**d)


def load_config(path) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise InvalidArgumentError("config file must hold a JSON object")
    return config_from_dict(data)
