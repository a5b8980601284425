"""Failsafe target scenarios: shipped programs, host oracle and the
ActionOptions codec.

Each scenario is a MiniISA program that reads one input word,
executes a compare/branch decision ladder and writes a four-word
ActionOptions record to a fixed output region (pre-zeroed, so a
skipped store naturally reads back as action 0).  The host oracle
reimplements the same decision logic in Python, independently of the
assembly, and defines the golden output the emulated run must match.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from typing import Optional

from . import asm

ACTION_NONE = 0
ACTION_WARNING = 1
ACTION_HOLD = 5
ACTION_RTL = 6
ACTION_LAND = 7
ACTION_DISARM = 9
ACTION_FLIGHT_TERMINATION = 10

VALID_ACTION_CODES = frozenset(
    (
        ACTION_NONE,
        ACTION_WARNING,
        ACTION_HOLD,
        ACTION_RTL,
        ACTION_LAND,
        ACTION_DISARM,
        ACTION_FLIGHT_TERMINATION,
    )
)

CAUSE_NONE = 0
CAUSE_RC_LOSS = 1
CAUSE_BATTERY_CRITICAL = 2
CAUSE_BATTERY_EMERGENCY = 3

CLEAR_ON_MODE_CHANGE_OR_DISARM = 1

BATTERY_OK = 0
BATTERY_CRITICAL = 1
BATTERY_EMERGENCY = 2


class OutOfBoundsError(Exception):
    pass


@dataclass(frozen=True)
class ActionOptions:
    """Failsafe decision record as written by the target programs."""

    action: int
    cause: int
    allow_user_takeover: int
    clear_condition: int

    @property
    def is_valid_action(self) -> bool:
        return self.action in VALID_ACTION_CODES

    def as_tuple(self) -> tuple:
        return (self.action, self.cause, self.allow_user_takeover, self.clear_condition)


NO_FAILSAFE = ActionOptions(ACTION_NONE, CAUSE_NONE, 0, 0)


def decode_action_options(mem, base: int) -> ActionOptions:
    """Read the four consecutive output words; raw observation, no
    validation."""
    if base % 4:
        raise OutOfBoundsError(f"output base 0x{base:x} not word-aligned")
    if base < 0 or base + 16 > len(mem):
        raise OutOfBoundsError(f"output region at 0x{base:x} outside memory")
    words = [int.from_bytes(mem[base + 4 * i : base + 4 * i + 4], "big") for i in range(4)]
    return ActionOptions(*words)


@dataclass(frozen=True)
class Scenario:
    id: str
    source: str
    entry_symbol: str
    start_symbol: str
    halt_symbol: str
    input_base: int
    output_base: int
    input_name: str
    input_doc: str
    canonical_input: int
    valid_inputs: tuple
    golden: ActionOptions


def _manifest() -> dict:
    text = resources.files("glitchsim.targets").joinpath("scenarios.json").read_text()
    return json.loads(text)


def scenario_ids() -> tuple:
    return tuple(_manifest()["scenarios"].keys())


def load_scenario(scenario_id: str) -> Scenario:
    entries = _manifest()["scenarios"]
    if scenario_id not in entries:
        raise KeyError(f"unknown scenario {scenario_id!r}; known: {', '.join(entries)}")
    entry = entries[scenario_id]
    source = resources.files("glitchsim.targets").joinpath(entry["program"]).read_text()
    golden = ActionOptions(**entry["golden"])
    return Scenario(
        id=scenario_id,
        source=source,
        entry_symbol=entry["entry_symbol"],
        start_symbol=entry["start_symbol"],
        halt_symbol=entry["halt_symbol"],
        input_base=entry["input_base"],
        output_base=entry["output_base"],
        input_name=entry["input_name"],
        input_doc=entry["input_doc"],
        canonical_input=entry["canonical_input"],
        valid_inputs=tuple(entry["valid_inputs"]),
        golden=golden,
    )


def scenario_program(scenario: Scenario) -> str:
    """The shipped assembly source for a scenario."""
    return scenario.source


def golden_output(scenario: Scenario, input_value: Optional[int] = None) -> ActionOptions:
    """Host-side reference implementation of the failsafe decision
    logic, independent of the shipped assembly."""
    value = scenario.canonical_input if input_value is None else input_value
    if scenario.id == "rc_loss":
        if value != 0:
            return NO_FAILSAFE
        return ActionOptions(ACTION_RTL, CAUSE_RC_LOSS, 1, CLEAR_ON_MODE_CHANGE_OR_DISARM)
    if scenario.id in ("battery_critical", "battery_emergency"):
        if value == BATTERY_EMERGENCY:
            return ActionOptions(
                ACTION_LAND, CAUSE_BATTERY_EMERGENCY, 1, CLEAR_ON_MODE_CHANGE_OR_DISARM
            )
        if value == BATTERY_CRITICAL:
            return ActionOptions(
                ACTION_RTL, CAUSE_BATTERY_CRITICAL, 1, CLEAR_ON_MODE_CHANGE_OR_DISARM
            )
        return NO_FAILSAFE
    raise KeyError(f"no oracle for scenario {scenario.id!r}")


def build_image(scenario: Scenario, input_value: Optional[int] = None):
    """Assemble the scenario and patch its input word.

    Returns (MemoryImage, SymbolTable, entry address).
    """
    image, symbols = asm.assemble(scenario.source)
    if input_value is not None and input_value != scenario.canonical_input:
        offset = scenario.input_base - image.data_base
        if not 0 <= offset <= len(image.data) - 4:
            raise OutOfBoundsError("input word outside the data segment")
        data = bytearray(image.data)
        data[offset : offset + 4] = (input_value & 0xFFFFFFFF).to_bytes(4, "big")
        image = replace(image, data=bytes(data), code_words=None)
    entry = symbols[scenario.entry_symbol]
    return image, symbols, entry
