"""MiniISA: a deterministic 32-bit micro-ISA interpreter.

Word layout (big-endian): bits[31:24] opcode, bits[23:20] rd,
bits[19:16] rs1, bits[15:12] rs2, bits[15:0] imm16.  The immediate
field overlaps rs2; which fields an opcode consumes is fixed by the
opcode, and bits outside those fields are don't-care (so e.g. any
word with opcode 0x00 executes as NOP).  Decoding is total: every
32-bit word is either an Instruction or an InvalidOpcode value.

Execution model: one instruction per cycle, no pipeline.  Registers
R0-R12 are general purpose, R13 = SP, R14 = LR, R15 = PC.  Flags are
Z and N only, updated by CMP/CMPI and by the data-processing ops
(ADD, SUB, AND, ORR, EOR, LSL, LSR); plain moves do not touch them.
Reads of R15 yield the address of the executing instruction; a data
op that targets R15 performs a control transfer to the written value.

Memory is a single byte-addressed space (default 64 KiB code bank +
64 KiB data bank).  Words are stored big-endian, so byte index 0 of
a word is its most significant byte.  The loaded code extent is
read-only and is also the fetch-legal region: the PC leaving it is a
HardFault, as are unaligned or out-of-bounds data accesses, invalid
opcodes, and RET with LR == 0 (an empty call chain).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional

M32 = 0xFFFFFFFF

DEFAULT_CODE_BASE = 0x0000
DEFAULT_DATA_BASE = 0x10000
DEFAULT_MEM_SIZE = 0x20000

OP_NOP = 0x00
OP_HALT = 0x01
OP_TRIG = 0x02
OP_MOVI = 0x10
OP_MOV = 0x11
OP_ADD = 0x12
OP_SUB = 0x13
OP_AND = 0x14
OP_ORR = 0x15
OP_EOR = 0x16
OP_LSL = 0x17
OP_LSR = 0x18
OP_CMP = 0x20
OP_CMPI = 0x21
OP_B = 0x30
OP_BEQ = 0x31
OP_BNE = 0x32
OP_BLT = 0x33
OP_BGE = 0x34
OP_LDR = 0x40
OP_STR = 0x41
OP_BL = 0x50
OP_RET = 0x51

MNEMONICS = {
    OP_NOP: "NOP",
    OP_HALT: "HALT",
    OP_TRIG: "TRIG",
    OP_MOVI: "MOVI",
    OP_MOV: "MOV",
    OP_ADD: "ADD",
    OP_SUB: "SUB",
    OP_AND: "AND",
    OP_ORR: "ORR",
    OP_EOR: "EOR",
    OP_LSL: "LSL",
    OP_LSR: "LSR",
    OP_CMP: "CMP",
    OP_CMPI: "CMPI",
    OP_B: "B",
    OP_BEQ: "BEQ",
    OP_BNE: "BNE",
    OP_BLT: "BLT",
    OP_BGE: "BGE",
    OP_LDR: "LDR",
    OP_STR: "STR",
    OP_BL: "BL",
    OP_RET: "RET",
}

OPCODES = {name: op for op, name in MNEMONICS.items()}

_BRANCH_OPS = frozenset((OP_B, OP_BEQ, OP_BNE, OP_BLT, OP_BGE, OP_BL))
_COND_BRANCH_OPS = frozenset((OP_BEQ, OP_BNE, OP_BLT, OP_BGE))
_ALU3_OPS = frozenset((OP_ADD, OP_SUB, OP_AND, OP_ORR, OP_EOR))
_SHIFT_OPS = frozenset((OP_LSL, OP_LSR))
_MEM_OPS = frozenset((OP_LDR, OP_STR))


class Instruction(NamedTuple):
    """Decoded instruction.

    ``imm`` holds the opcode's immediate interpretation: imm16 for
    MOVI/CMPI, signed word-relative rel16 for branches, imm12 byte
    offset for LDR/STR and the 4-bit shift amount for LSL/LSR.
    """

    op: int
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0


class InvalidOpcode(NamedTuple):
    """Decode result for a word whose opcode byte is unassigned."""

    word: int


class HardFaultCause(Enum):
    INVALID_OPCODE = "invalid_opcode"
    UNALIGNED_ACCESS = "unaligned_access"
    OUT_OF_BOUNDS_ACCESS = "out_of_bounds_access"
    PC_OUT_OF_CODE = "pc_out_of_code"
    STACK_UNDERFLOW = "stack_underflow"


@dataclass(frozen=True)
class HardFault:
    cause: HardFaultCause
    cycle: int


class HardFaultError(Exception):
    """Raised by step() when execution hard-faults."""

    def __init__(self, fault: HardFault):
        super().__init__(f"{fault.cause.value} at cycle {fault.cycle}")
        self.fault = fault


class RunStatus(Enum):
    HALTED = "halted"
    HARDFAULT = "hardfault"
    HANG = "hang"


@dataclass
class MemoryImage:
    """Loadable code + data segments with their load addresses."""

    code: bytes
    data: bytes = b""
    code_base: int = DEFAULT_CODE_BASE
    data_base: int = DEFAULT_DATA_BASE
    code_words: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.code) % 4:
            raise ValueError("code length must be a multiple of 4")
        if self.code_base % 4:
            raise ValueError("code base must be word-aligned")

    @property
    def code_end(self) -> int:
        return self.code_base + len(self.code)

    def words(self) -> tuple:
        """Code as a tuple of big-endian 32-bit words (cached)."""
        if self.code_words is None:
            code = self.code
            self.code_words = tuple(
                int.from_bytes(code[i : i + 4], "big") for i in range(0, len(code), 4)
            )
        return self.code_words


_DECODE_CACHE: dict = {}
_MISS = object()


def _decode_fields(word: int):
    op = word >> 24
    if op not in MNEMONICS:
        return None
    rd = (word >> 20) & 0xF
    rs1 = (word >> 16) & 0xF
    rs2 = (word >> 12) & 0xF
    if op in _BRANCH_OPS:
        imm = word & 0xFFFF
        if imm >= 0x8000:
            imm -= 0x10000
    elif op in _MEM_OPS:
        imm = word & 0xFFF
    elif op in _SHIFT_OPS:
        imm = word & 0xF
    else:
        imm = word & 0xFFFF
    return Instruction(op, rd, rs1, rs2, imm)


def decode(word: int):
    """Decode a 32-bit word; total over all 2**32 values.

    Returns an Instruction for assigned opcodes, InvalidOpcode
    otherwise.  Don't-care field bits are ignored, so non-canonical
    words decode to the same Instruction as their canonical form.
    """
    word &= M32
    d = _DECODE_CACHE.get(word, _MISS)
    if d is _MISS:
        d = _decode_fields(word)
        _DECODE_CACHE[word] = d
    return d if d is not None else InvalidOpcode(word)


def encode(instr: Instruction) -> int:
    """Canonical word for an instruction (inverse of decode)."""
    op = instr.op
    if op not in MNEMONICS:
        raise ValueError(f"unknown opcode 0x{op:02x}")
    word = op << 24
    if op in (OP_NOP, OP_HALT, OP_TRIG, OP_RET):
        return word
    if op == OP_MOVI:
        _check_range(instr.imm, 0, 0xFFFF, "imm16")
        return word | (instr.rd << 20) | instr.imm
    if op == OP_MOV:
        return word | (instr.rd << 20) | (instr.rs1 << 16)
    if op in _ALU3_OPS:
        return word | (instr.rd << 20) | (instr.rs1 << 16) | (instr.rs2 << 12)
    if op in _SHIFT_OPS:
        _check_range(instr.imm, 0, 0xF, "shift amount")
        return word | (instr.rd << 20) | (instr.rs1 << 16) | instr.imm
    if op == OP_CMP:
        return word | (instr.rs1 << 16) | (instr.rs2 << 12)
    if op == OP_CMPI:
        _check_range(instr.imm, 0, 0xFFFF, "imm16")
        return word | (instr.rs1 << 16) | instr.imm
    if op in _BRANCH_OPS:
        _check_range(instr.imm, -0x8000, 0x7FFF, "rel16")
        return word | (instr.imm & 0xFFFF)
    if op in _MEM_OPS:
        _check_range(instr.imm, 0, 0xFFF, "imm12")
        return word | (instr.rd << 20) | (instr.rs1 << 16) | instr.imm
    raise ValueError(f"unhandled opcode 0x{op:02x}")


def _check_range(value: int, lo: int, hi: int, what: str):
    if not lo <= value <= hi:
        raise ValueError(f"{what} {value} out of range [{lo}, {hi}]")


def disassemble_word(word: int, addr: Optional[int] = None, labels: Optional[dict] = None) -> str:
    """Render one word as assembly text.

    ``labels`` maps addresses to names for branch targets; without it
    (or without ``addr``) branch targets render as absolute hex.
    Invalid words render as a raw ``.word`` line.
    """
    d = decode(word)
    if isinstance(d, InvalidOpcode):
        return f".word 0x{word:08X} ; invalid"
    op = d.op
    name = MNEMONICS[op]
    if op in (OP_NOP, OP_HALT, OP_TRIG, OP_RET):
        return name
    if op == OP_MOVI:
        return f"{name} R{d.rd}, #{d.imm}"
    if op == OP_MOV:
        return f"{name} R{d.rd}, R{d.rs1}"
    if op in _ALU3_OPS:
        return f"{name} R{d.rd}, R{d.rs1}, R{d.rs2}"
    if op in _SHIFT_OPS:
        return f"{name} R{d.rd}, R{d.rs1}, #{d.imm}"
    if op == OP_CMP:
        return f"{name} R{d.rs1}, R{d.rs2}"
    if op == OP_CMPI:
        return f"{name} R{d.rs1}, #{d.imm}"
    if op in _BRANCH_OPS:
        if addr is None:
            return f"{name} {d.imm:+d}"
        target = (addr + 4 + d.imm * 4) & M32
        if labels and target in labels:
            return f"{name} {labels[target]}"
        return f"{name} 0x{target:04X}"
    if op == OP_LDR or op == OP_STR:
        if d.imm:
            return f"{name} R{d.rd}, [R{d.rs1}, #{d.imm}]"
        return f"{name} R{d.rd}, [R{d.rs1}]"
    raise AssertionError(f"unhandled opcode 0x{op:02x}")


def regs_written(d: Instruction) -> tuple:
    """General-purpose registers architecturally written by an
    instruction (the PC is written by every instruction and is not
    listed)."""
    op = d.op
    if op == OP_MOVI or op == OP_MOV or op == OP_LDR or op in _ALU3_OPS or op in _SHIFT_OPS:
        return (d.rd,)
    if op == OP_BL:
        return (14,)
    return ()


class MachineState:
    """Register file, flags, memory and cycle counter for one run.

    Never shared between runs; every run owns its state exclusively.
    """

    __slots__ = (
        "regs",
        "z",
        "n",
        "mem",
        "cycle",
        "halted",
        "trigger_cycle",
        "fault",
        "code_base",
        "code_end",
        "mem_size",
        "_words",
    )

    def __init__(self, image: MemoryImage, entry: int = 0, mem_size: int = DEFAULT_MEM_SIZE):
        if image.code_end > mem_size:
            raise ValueError("code segment does not fit in memory")
        if image.data_base + len(image.data) > mem_size:
            raise ValueError("data segment does not fit in memory")
        if entry % 4 or not image.code_base <= entry < image.code_end:
            raise ValueError(f"entry 0x{entry:x} not word-aligned inside the code region")
        mem = bytearray(mem_size)
        mem[image.code_base : image.code_end] = image.code
        if image.data:
            mem[image.data_base : image.data_base + len(image.data)] = image.data
        self.mem = mem
        self.mem_size = mem_size
        self.regs = [0] * 16
        self.regs[15] = entry
        self.z = False
        self.n = False
        self.cycle = 0
        self.halted = False
        self.trigger_cycle: Optional[int] = None
        self.fault: Optional[HardFault] = None
        self.code_base = image.code_base
        self.code_end = image.code_end
        self._words = image.words()

    @property
    def pc(self) -> int:
        return self.regs[15]


@dataclass
class ExecutionResult:
    status: RunStatus
    state: MachineState
    fault: Optional[HardFault] = None
    trigger_cycle: Optional[int] = None
    trace: Optional[list] = None


def _execute(state: MachineState, max_steps: int, plan=None, trace=None, write_log=None):
    """Advance ``state`` by at most ``max_steps`` instructions.

    ``plan`` maps absolute cycle -> list of fault events; each event
    is a callable hook ``(state, word) -> (skip, word, restores)``
    supplied by the fault engine.  ``trace`` collects (cycle, pc,
    word) per fetch; ``write_log`` collects (cycle, addr) per store.
    On HardFault, sets ``state.fault`` and stops.
    """
    regs = state.regs
    mem = state.mem
    words = state._words
    code_base = state.code_base
    code_end = state.code_end
    mem_size = state.mem_size
    cache = _DECODE_CACHE
    z = state.z
    n = state.n
    cycle = state.cycle
    trig = state.trigger_cycle
    pc = regs[15]
    plan_get = plan.get if plan else None
    steps = 0
    fault_cause = None
    halted = state.halted

    while steps < max_steps and not halted:
        restores = None
        word_mods = None
        skip = False
        if plan_get is not None:
            events = plan_get(cycle)
            if events:
                state.z = z
                state.n = n
                state.cycle = cycle
                skip, word_mods, restores = events[0](state, events[1])
                pc = regs[15]

        # fetch
        if pc < code_base or pc >= code_end:
            fault_cause = HardFaultCause.PC_OUT_OF_CODE
            break
        if pc & 3:
            fault_cause = HardFaultCause.UNALIGNED_ACCESS
            break
        word = words[(pc - code_base) >> 2]
        if word_mods:
            for spec_word in word_mods:
                word = spec_word(word)
        if trace is not None:
            trace.append((cycle, pc, word))

        if skip:
            if restores:
                for r, old in restores:
                    if r != 15:
                        regs[r] = old
            pc += 4
            regs[15] = pc
            cycle += 1
            steps += 1
            continue

        d = cache.get(word, _MISS)
        if d is _MISS:
            d = _decode_fields(word)
            cache[word] = d
        if d is None:
            fault_cause = HardFaultCause.INVALID_OPCODE
            break

        op = d[0]
        next_pc = pc + 4

        if op == OP_MOVI:
            if d[1] == 15:
                next_pc = d[4]
            else:
                regs[d[1]] = d[4]
        elif op == OP_STR:
            addr = (regs[d[2]] + d[4]) & M32
            if addr & 3:
                fault_cause = HardFaultCause.UNALIGNED_ACCESS
                break
            if addr + 4 > mem_size or (code_base <= addr < code_end):
                fault_cause = HardFaultCause.OUT_OF_BOUNDS_ACCESS
                break
            mem[addr : addr + 4] = regs[d[1]].to_bytes(4, "big")
            if write_log is not None:
                write_log.append((cycle, addr))
        elif op == OP_LDR:
            addr = (regs[d[2]] + d[4]) & M32
            if addr & 3:
                fault_cause = HardFaultCause.UNALIGNED_ACCESS
                break
            if addr + 4 > mem_size:
                fault_cause = HardFaultCause.OUT_OF_BOUNDS_ACCESS
                break
            v = int.from_bytes(mem[addr : addr + 4], "big")
            if d[1] == 15:
                next_pc = v
            else:
                regs[d[1]] = v
        elif op == OP_CMPI:
            t = (regs[d[2]] - d[4]) & M32
            z = t == 0
            n = t >= 0x80000000
        elif op == OP_CMP:
            t = (regs[d[2]] - regs[d[3]]) & M32
            z = t == 0
            n = t >= 0x80000000
        elif op == OP_B:
            next_pc = pc + 4 + d[4] * 4
        elif op == OP_BEQ:
            if z:
                next_pc = pc + 4 + d[4] * 4
        elif op == OP_BNE:
            if not z:
                next_pc = pc + 4 + d[4] * 4
        elif op == OP_BLT:
            if n:
                next_pc = pc + 4 + d[4] * 4
        elif op == OP_BGE:
            if not n:
                next_pc = pc + 4 + d[4] * 4
        elif op == OP_MOV:
            if d[1] == 15:
                next_pc = regs[d[2]]
            else:
                regs[d[1]] = regs[d[2]]
        elif op == OP_ADD:
            v = (regs[d[2]] + regs[d[3]]) & M32
            z = v == 0
            n = v >= 0x80000000
            if d[1] == 15:
                next_pc = v
            else:
                regs[d[1]] = v
        elif op == OP_SUB:
            v = (regs[d[2]] - regs[d[3]]) & M32
            z = v == 0
            n = v >= 0x80000000
            if d[1] == 15:
                next_pc = v
            else:
                regs[d[1]] = v
        elif op == OP_AND:
            v = regs[d[2]] & regs[d[3]]
            z = v == 0
            n = v >= 0x80000000
            if d[1] == 15:
                next_pc = v
            else:
                regs[d[1]] = v
        elif op == OP_ORR:
            v = regs[d[2]] | regs[d[3]]
            z = v == 0
            n = v >= 0x80000000
            if d[1] == 15:
                next_pc = v
            else:
                regs[d[1]] = v
        elif op == OP_EOR:
            v = regs[d[2]] ^ regs[d[3]]
            z = v == 0
            n = v >= 0x80000000
            if d[1] == 15:
                next_pc = v
            else:
                regs[d[1]] = v
        elif op == OP_LSL:
            v = (regs[d[2]] << d[4]) & M32
            z = v == 0
            n = v >= 0x80000000
            if d[1] == 15:
                next_pc = v
            else:
                regs[d[1]] = v
        elif op == OP_LSR:
            v = regs[d[2]] >> d[4]
            z = v == 0
            n = v >= 0x80000000
            if d[1] == 15:
                next_pc = v
            else:
                regs[d[1]] = v
        elif op == OP_NOP:
            pass
        elif op == OP_TRIG:
            if trig is None:
                trig = cycle
        elif op == OP_HALT:
            halted = True
        elif op == OP_BL:
            regs[14] = (pc + 4) & M32
            next_pc = pc + 4 + d[4] * 4
        elif op == OP_RET:
            lr = regs[14]
            if lr == 0:
                fault_cause = HardFaultCause.STACK_UNDERFLOW
                break
            next_pc = lr
        else:  # pragma: no cover - opcode table is exhaustive
            raise AssertionError(f"unhandled opcode 0x{op:02x}")

        if restores:
            written = regs_written(d)
            for r, old in restores:
                if r != 15 and r not in written:
                    regs[r] = old

        pc = next_pc & M32
        regs[15] = pc
        cycle += 1
        steps += 1

    state.z = z
    state.n = n
    state.cycle = cycle
    state.trigger_cycle = trig
    state.halted = halted
    regs[15] = pc
    if fault_cause is not None:
        state.fault = HardFault(fault_cause, cycle)


def step(state: MachineState) -> MachineState:
    """Execute exactly one instruction, mutating ``state``.

    Raises HardFaultError on a fault; raises ValueError if the state
    is already terminal.
    """
    if state.halted or state.fault is not None:
        raise ValueError("machine already halted or faulted")
    _execute(state, 1)
    if state.fault is not None:
        raise HardFaultError(state.fault)
    return state


def run(
    image: MemoryImage,
    entry: int = 0,
    budget: int = 1 << 20,
    trace: bool = False,
    mem_size: int = DEFAULT_MEM_SIZE,
) -> ExecutionResult:
    """Run from ``entry`` until HALT, HardFault or budget exhaustion.

    Identical inputs produce bit-identical results.
    """
    if budget <= 0:
        raise ValueError("cycle budget must be positive")
    state = MachineState(image, entry, mem_size)
    tr = [] if trace else None
    _execute(state, budget, trace=tr)
    if state.fault is not None:
        status = RunStatus.HARDFAULT
    elif state.halted:
        status = RunStatus.HALTED
    else:
        status = RunStatus.HANG
    return ExecutionResult(status, state, state.fault, state.trigger_cycle, tr)
