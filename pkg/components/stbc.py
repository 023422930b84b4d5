"""
Orthogonal space-time block codes for LoRa chirp frames
Code tables, encoding across slots and antennas, and channel-weighted linear combining
"""

import logging
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from components.lora_modem import modulate_batch
from utils.errors import ConstructionError, DomainError

logger = logging.getLogger(__name__)

ORTHOGONALITY_TOL = 1e-10

# Formal code tables, one row per time slot and one column per transmit antenna
_CODE_TABLES = {
    "SISO": ([["g1"]], 1),
    "G2": ([
        ["g1", "g2"],
        ["-g2*", "g1*"],
    ], 1),
    "G4": ([
        ["g1", "g2", "g3", "g4"],
        ["-g2", "g1", "-g4", "g3"],
        ["-g3", "g4", "g1", "-g2"],
        ["-g4", "-g3", "g2", "g1"],
        ["g1*", "g2*", "g3*", "g4*"],
        ["-g2*", "g1*", "-g4*", "g3*"],
        ["-g3*", "g4*", "g1*", "-g2*"],
        ["-g4*", "-g3*", "g2*", "g1*"],
    ], 2),
}
_CODE_TABLES["G3"] = ([row[:3] for row in _CODE_TABLES["G4"][0]], 2)

CODE_NAMES = ("SISO", "G2", "G3", "G4")
_CODE_BY_ANTENNAS = {1: "SISO", 2: "G2", 3: "G3", 4: "G4"}

_ENTRY_PATTERN = re.compile(r"^\s*([+-]?)\s*g(\d+)\s*(\*?)\s*$")


@dataclass(frozen=True)
class CodeEntry:
    """One formal entry of a code matrix: 0 or sign * g_j, optionally conjugated."""
    kind: str
    source_index: int = None
    sign: int = 0
    conjugated: bool = False

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def symbol(cls, source_index, sign=1, conjugated=False):
        if sign not in (1, -1):
            raise ConstructionError(f"entry sign must be +1 or -1, got {sign!r}")
        if source_index < 1:
            raise ConstructionError(f"symbol index must start at 1, got {source_index!r}")
        return cls("symbol", source_index, sign, bool(conjugated))

    @classmethod
    def parse(cls, token):
        """Parse '0', 'g2', '-g2*' style tokens."""
        if str(token).strip() == "0":
            return cls.zero()
        match = _ENTRY_PATTERN.match(str(token))
        if match is None:
            raise ConstructionError(f"cannot parse code entry {token!r}")
        sign, index, star = match.groups()
        return cls.symbol(int(index), -1 if sign == "-" else 1, star == "*")

    @property
    def is_zero(self):
        return self.kind == "zero"

    def __str__(self):
        if self.is_zero:
            return "0"
        return f"{'-' if self.sign < 0 else ''}g{self.source_index}{'*' if self.conjugated else ''}"


@dataclass(frozen=True)
class StbcCode:
    """
    U x M matrix of formal entries spreading J symbols over U slots and M antennas.

    Attributes:
        name: Code name
        entries: Tuple of U rows, each a tuple of M CodeEntry
        u_cons: Orthogonality constant, G^H G = u_cons * sum|g_j|^2 * I
    """
    name: str
    entries: tuple
    u_cons: int

    @classmethod
    def from_rows(cls, name, rows, u_cons):
        entries = tuple(tuple(CodeEntry.parse(token) for token in row) for row in rows)
        widths = {len(row) for row in entries}
        if len(widths) != 1:
            raise ConstructionError(f"code {name}: rows have different lengths {sorted(widths)}")
        return cls(name, entries, u_cons)

    @property
    def slots(self):
        return len(self.entries)

    @property
    def antennas(self):
        return len(self.entries[0])

    @property
    def symbols_per_block(self):
        return max(
            (e.source_index for row in self.entries for e in row if not e.is_zero),
            default=0,
        )

    @property
    def rate(self):
        return self.symbols_per_block / self.slots

    def index_arrays(self):
        """
        Numeric form of the entry matrix.

        Returns:
            tuple: (index, sign, conjugated) arrays of shape (U, M); index is
                   zero-based and zero entries carry index 0 with sign 0
        """
        index = np.zeros((self.slots, self.antennas), dtype=np.int64)
        sign = np.zeros((self.slots, self.antennas))
        conjugated = np.zeros((self.slots, self.antennas), dtype=bool)
        for u, row in enumerate(self.entries):
            for m, entry in enumerate(row):
                if entry.is_zero:
                    continue
                index[u, m] = entry.source_index - 1
                sign[u, m] = entry.sign
                conjugated[u, m] = entry.conjugated
        return index, sign, conjugated

    def evaluate(self, g):
        """Substitute numbers for the formal symbols and return the U x M matrix."""
        g = np.asarray(g, dtype=complex)
        if g.shape != (self.symbols_per_block,):
            raise DomainError(
                f"code {self.name} needs {self.symbols_per_block} symbols, got shape {g.shape}"
            )
        index, sign, conjugated = self.index_arrays()
        values = g[index]
        return sign * np.where(conjugated, values.conj(), values)

    def __str__(self):
        return "\n".join(" ".join(f"{str(e):>5}" for e in row) for row in self.entries)


@dataclass(frozen=True)
class CombiningTerm:
    slot: int
    tx_antenna: int
    conj_received: bool
    conj_channel: bool
    sign: int


@dataclass(frozen=True)
class CombiningPlan:
    """
    Linear combining rule per symbol.

    terms[j] lists the (slot, tx antenna) pairs carrying g_{j+1}; every receive
    antenna n is summed with the same pattern. The result is multiplied by
    1/sqrt(repetitions) so that the desired amplitude is X*sqrt(Es/(rM)) and
    the noise variance per dimension is X*N0/2.
    """
    code_name: str
    slots: int
    antennas: int
    terms: tuple
    repetitions: int

    @property
    def symbols_per_block(self):
        return len(self.terms)

    @property
    def scale(self):
        return 1.0 / np.sqrt(self.repetitions)


@lru_cache(maxsize=None)
def code_matrix(name):
    """
    Formal matrix of a named code.

    Args:
        name (str): One of SISO, G2, G3, G4

    Returns:
        StbcCode: Immutable code
    """
    key = str(name).upper()
    if key not in _CODE_TABLES:
        raise DomainError(f"unknown code {name!r}, expected one of {', '.join(CODE_NAMES)}")
    rows, u_cons = _CODE_TABLES[key]
    return StbcCode.from_rows(key, rows, u_cons)


def code_for_antennas(m):
    """Default code for M transmit antennas."""
    if m not in _CODE_BY_ANTENNAS:
        raise DomainError(f"no code for M={m!r} transmit antennas, expected 1..4")
    return code_matrix(_CODE_BY_ANTENNAS[m])


def orthogonality_residual(code, g):
    """Largest entry of |G^H G - u_cons * sum|g|^2 * I| for the given symbols."""
    matrix = code.evaluate(g)
    gram = matrix.conj().T @ matrix
    target = code.u_cons * np.sum(np.abs(np.asarray(g)) ** 2) * np.eye(code.antennas)
    return float(np.max(np.abs(gram - target)))


@lru_cache(maxsize=None)
def derive_combining_plan(code):
    """
    Build the linear combining plan of an orthogonal code.

    An entry s*g_j at (u, m) contributes s * conj(h_hat[m, n]) * r[u, n];
    an entry s*g_j^* contributes s * h_hat[m, n] * conj(r[u, n]).

    Args:
        code (StbcCode): Code satisfying G^H G = u_cons * sum|g|^2 * I

    Returns:
        CombiningPlan: Immutable plan shared across blocks

    Raises:
        ConstructionError: The code is not orthogonal or symbols do not repeat
                           evenly across columns
    """
    rng = np.random.default_rng(0)
    for _ in range(8):
        g = rng.standard_normal(code.symbols_per_block) + 1j * rng.standard_normal(code.symbols_per_block)
        scale = np.sum(np.abs(g) ** 2)
        if orthogonality_residual(code, g) > ORTHOGONALITY_TOL * max(1.0, scale):
            raise ConstructionError(f"code {code.name} is not orthogonal")

    terms = []
    repetitions = None
    for j in range(1, code.symbols_per_block + 1):
        symbol_terms = []
        per_column = np.zeros(code.antennas, dtype=int)
        for u, row in enumerate(code.entries):
            for m, entry in enumerate(row):
                if entry.is_zero or entry.source_index != j:
                    continue
                per_column[m] += 1
                symbol_terms.append(
                    CombiningTerm(u, m, entry.conjugated, not entry.conjugated, entry.sign)
                )
        if not symbol_terms or np.any(per_column != per_column[0]):
            raise ConstructionError(
                f"code {code.name}: symbol g{j} appears {per_column.tolist()} times per column"
            )
        if repetitions is None:
            repetitions = int(per_column[0])
        elif repetitions != per_column[0]:
            raise ConstructionError(f"code {code.name}: symbols repeat unevenly")
        terms.append(tuple(symbol_terms))

    plan = CombiningPlan(code.name, code.slots, code.antennas, tuple(terms), repetitions)
    logger.debug("Combining plan for %s: %d terms per symbol, repetitions=%d",
                 code.name, len(terms[0]), repetitions)
    return plan


def encode_block(symbols, code, cfg):
    """
    Map J symbols onto the U x M slot/antenna grid.

    Args:
        symbols: J integer LoRa symbols
        code (StbcCode): Code to apply
        cfg (ModulationConfig): Modulation parameters

    Returns:
        np.ndarray: Frames of shape (U, M, 2^SF), each scaled by 1/sqrt(M)
    """
    symbols = np.asarray(symbols)
    if symbols.shape != (code.symbols_per_block,):
        raise DomainError(
            f"code {code.name} encodes {code.symbols_per_block} symbols per block, got shape {symbols.shape}"
        )
    return encode_batch(symbols[None, :], code, cfg)[0]


def encode_batch(symbols, code, cfg):
    """Vectorized encode_block over a leading block axis: (B, J) -> (B, U, M, 2^SF)."""
    symbols = np.asarray(symbols)
    if symbols.ndim != 2 or symbols.shape[1] != code.symbols_per_block:
        raise DomainError(
            f"expected symbols of shape (blocks, {code.symbols_per_block}), got {symbols.shape}"
        )
    frames = modulate_batch(symbols, cfg)
    index, sign, conjugated = code.index_arrays()
    slots = frames[:, index]
    slots = np.where(conjugated[None, :, :, None], slots.conj(), slots)
    return slots * (sign[None, :, :, None] / np.sqrt(code.antennas))


def combine(rx_slots, h_hat, plan):
    """
    Combine received slots into one frame per symbol.

    Args:
        rx_slots: Received frames of shape (U, N, 2^SF)
        h_hat: Channel estimate of shape (M, N)
        plan (CombiningPlan): Plan of the transmitted code

    Returns:
        np.ndarray: Combined frames of shape (J, 2^SF), fed to demod_dft
    """
    rx_slots = np.asarray(rx_slots)
    h_hat = np.asarray(h_hat)
    if rx_slots.ndim != 3 or h_hat.ndim != 2:
        raise DomainError("combine expects rx_slots (U, N, K) and h_hat (M, N)")
    return combine_batch(rx_slots[None], h_hat[None], plan)[0]


def combine_batch(rx_slots, h_hat, plan):
    """Vectorized combine over a leading block axis: (B, U, N, K), (B, M, N) -> (B, J, K)."""
    rx_slots = np.asarray(rx_slots)
    h_hat = np.asarray(h_hat)
    if rx_slots.ndim != 4 or h_hat.ndim != 3:
        raise DomainError("combine_batch expects rx_slots (B, U, N, K) and h_hat (B, M, N)")
    blocks, slots, receivers, chips = rx_slots.shape
    if slots != plan.slots:
        raise DomainError(f"plan for {plan.code_name} needs {plan.slots} slots, got {slots}")
    if h_hat.shape != (blocks, plan.antennas, receivers):
        raise DomainError(
            f"channel estimate shape {h_hat.shape} does not match "
            f"(blocks={blocks}, M={plan.antennas}, N={receivers})"
        )

    rx_conj = rx_slots.conj()
    h_conj = h_hat.conj()
    combined = np.zeros((blocks, plan.symbols_per_block, chips), dtype=complex)
    for j, symbol_terms in enumerate(plan.terms):
        for term in symbol_terms:
            weights = h_conj[:, term.tx_antenna, :] if term.conj_channel else h_hat[:, term.tx_antenna, :]
            received = rx_conj[:, term.slot] if term.conj_received else rx_slots[:, term.slot]
            combined[:, j] += term.sign * np.einsum("bn,bnk->bk", weights, received)
    return combined * plan.scale
