"""Transient fault models and fault-space enumeration.

Nine models: four instruction-level (skip, bit-flip, byte-set,
byte-clear, applied to the fetched word and never persisted to the
image) and five register-level (clear, fill, bit-flip, byte-set,
byte-clear).  Register faults come in two temporal modes: transient
(visible only to the instruction executing at the faulted cycle,
after which the pre-fault value is restored unless that instruction
itself wrote the register) and until-overwrite (the corruption
persists until the next architectural write).  Instruction faults
are always transient.

Fault cycles are dynamic execution cycles counted from the campaign
window start (cycle 0 = the instruction at the window's start
symbol).  Bit index 0 is the least significant bit (bit-flip XORs
``1 << bit``); byte index 0 is the most significant byte, so byte
faults at index 0 hit the opcode byte of an instruction word.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Iterator, NamedTuple, Optional


class FaultModel(IntEnum):
    INSTR_SKIP = 0
    INSTR_BIT_FLIP = 1
    INSTR_BYTE_SET = 2
    INSTR_BYTE_CLEAR = 3
    REG_CLEAR = 4
    REG_FILL = 5
    REG_BIT_FLIP = 6
    REG_BYTE_SET = 7
    REG_BYTE_CLEAR = 8

    @property
    def is_register(self) -> bool:
        return self >= FaultModel.REG_CLEAR

    @property
    def csv_name(self) -> str:
        return _MODEL_NAMES[self]


_MODEL_NAMES = {
    FaultModel.INSTR_SKIP: "instr_skip",
    FaultModel.INSTR_BIT_FLIP: "instr_bit_flip",
    FaultModel.INSTR_BYTE_SET: "instr_byte_set",
    FaultModel.INSTR_BYTE_CLEAR: "instr_byte_clear",
    FaultModel.REG_CLEAR: "reg_clear",
    FaultModel.REG_FILL: "reg_fill",
    FaultModel.REG_BIT_FLIP: "reg_bit_flip",
    FaultModel.REG_BYTE_SET: "reg_byte_set",
    FaultModel.REG_BYTE_CLEAR: "reg_byte_clear",
}

MODEL_BY_NAME = {name: model for model, name in _MODEL_NAMES.items()}

ALL_MODELS = frozenset(FaultModel)
INSTRUCTION_MODELS = frozenset(m for m in FaultModel if not m.is_register)
REGISTER_MODELS = frozenset(m for m in FaultModel if m.is_register)

# locations per model: bit faults address 32 bits, byte faults 4 bytes
_LOCATION_COUNTS = {
    FaultModel.INSTR_SKIP: 1,
    FaultModel.INSTR_BIT_FLIP: 32,
    FaultModel.INSTR_BYTE_SET: 4,
    FaultModel.INSTR_BYTE_CLEAR: 4,
    FaultModel.REG_CLEAR: 1,
    FaultModel.REG_FILL: 1,
    FaultModel.REG_BIT_FLIP: 32,
    FaultModel.REG_BYTE_SET: 4,
    FaultModel.REG_BYTE_CLEAR: 4,
}

NUM_REGISTERS = 16


class Temporal(IntEnum):
    TRANSIENT = 0
    UNTIL_OVERWRITE = 1

    @property
    def csv_name(self) -> str:
        return "transient" if self is Temporal.TRANSIENT else "until_overwrite"


class FaultSpec(NamedTuple):
    """One point in fault space.

    ``reg`` is None for instruction models; ``index`` is the bit or
    byte location and None for skip/clear/fill.  ``cycle`` is
    relative to the campaign window start.
    """

    cycle: int
    model: FaultModel
    reg: Optional[int] = None
    index: Optional[int] = None
    temporal: Temporal = Temporal.TRANSIENT

    @property
    def location(self) -> str:
        """Compact location token used in report CSVs."""
        if self.model.is_register:
            base = f"r{self.reg}"
            if self.model == FaultModel.REG_BIT_FLIP:
                return f"{base}.bit{self.index}"
            if self.model in (FaultModel.REG_BYTE_SET, FaultModel.REG_BYTE_CLEAR):
                return f"{base}.byte{self.index}"
            return base
        if self.model == FaultModel.INSTR_BIT_FLIP:
            return f"bit{self.index}"
        if self.model in (FaultModel.INSTR_BYTE_SET, FaultModel.INSTR_BYTE_CLEAR):
            return f"byte{self.index}"
        return "-"


@dataclass(frozen=True)
class FaultWindow:
    """Symbol-delimited injection window resolved against a
    fault-free trace."""

    start_symbol: str
    halt_symbol: str
    start_cycle: int
    halt_cycle: int

    def __post_init__(self):
        if self.halt_cycle <= self.start_cycle:
            raise ValueError("window halt cycle must come after start cycle")

    @property
    def length(self) -> int:
        return self.halt_cycle - self.start_cycle


class EmptyWindowError(Exception):
    pass


class WrongModelKindError(Exception):
    pass


def normalize_models(models: Iterable[FaultModel]) -> tuple:
    """Sorted, deduplicated model tuple (the canonical enumeration
    order)."""
    return tuple(sorted(set(models)))


def _iter_cycle(cycle: int, models: tuple) -> Iterator[FaultSpec]:
    for model in models:
        count = _LOCATION_COUNTS[model]
        if not model.is_register:
            if model == FaultModel.INSTR_SKIP:
                yield FaultSpec(cycle, model)
            else:
                for index in range(count):
                    yield FaultSpec(cycle, model, index=index)
        else:
            for temporal in (Temporal.TRANSIENT, Temporal.UNTIL_OVERWRITE):
                for reg in range(NUM_REGISTERS):
                    if count == 1:
                        yield FaultSpec(cycle, model, reg=reg, temporal=temporal)
                    else:
                        for index in range(count):
                            yield FaultSpec(cycle, model, reg=reg, index=index, temporal=temporal)


def enumerate_fault_space(window: FaultWindow, models: Iterable[FaultModel] = ALL_MODELS):
    """Yield every FaultSpec for the window, deterministically
    ordered: cycle-major, then model, then temporal/register/location.
    """
    ms = normalize_models(models)
    length = window.length
    if length == 0:
        raise EmptyWindowError(f"window [{window.start_symbol}, {window.halt_symbol}) is empty")
    for cycle in range(length):
        yield from _iter_cycle(cycle, ms)


def single_cycle_menu(models: Iterable[FaultModel] = ALL_MODELS) -> tuple:
    """All specs for one cycle (cycle field 0); the per-cycle fault
    menu the glitch emulation samples from."""
    return tuple(_iter_cycle(0, normalize_models(models)))


def fault_space_size(length: int, models: Iterable[FaultModel] = ALL_MODELS) -> int:
    """Closed-form count; always equals the enumeration length."""
    per_cycle = 0
    for model in set(models):
        count = _LOCATION_COUNTS[model]
        if model.is_register:
            per_cycle += 2 * NUM_REGISTERS * count
        else:
            per_cycle += count
    return length * per_cycle


def _corrupt(value: int, model: FaultModel, index: Optional[int]) -> int:
    if model in (FaultModel.INSTR_BIT_FLIP, FaultModel.REG_BIT_FLIP):
        return value ^ (1 << index)
    if model in (FaultModel.INSTR_BYTE_SET, FaultModel.REG_BYTE_SET):
        return value | (0xFF << (8 * (3 - index)))
    if model in (FaultModel.INSTR_BYTE_CLEAR, FaultModel.REG_BYTE_CLEAR):
        return value & ~(0xFF << (8 * (3 - index))) & 0xFFFFFFFF
    if model == FaultModel.REG_CLEAR:
        return 0
    if model == FaultModel.REG_FILL:
        return 0xFFFFFFFF
    raise WrongModelKindError(f"{model.csv_name} has no value transform")


def apply_instruction_fault(word: int, spec: FaultSpec) -> int:
    """Corrupted encoding for a fetched instruction word."""
    if spec.model.is_register or spec.model == FaultModel.INSTR_SKIP:
        raise WrongModelKindError(f"{spec.model.csv_name} is not an instruction-word transform")
    return _corrupt(word & 0xFFFFFFFF, spec.model, spec.index)


def apply_register_fault(state, spec: FaultSpec) -> int:
    """Corrupt a register in place; returns the pre-fault value so a
    transient fault can be undone by the engine."""
    if not spec.model.is_register:
        raise WrongModelKindError(f"{spec.model.csv_name} is not a register fault")
    old = state.regs[spec.reg]
    state.regs[spec.reg] = _corrupt(old, spec.model, spec.index)
    return old
