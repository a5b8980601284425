"""Two-pass assembler and disassembler for MiniISA.

Source grammar, one statement per line:

    [label:] [mnemonic operands | .org ADDR | .word V[, V...]]  [; comment]

Labels match ``[A-Za-z_][A-Za-z0-9_]*``.  Immediates are written with
``#`` (decimal or 0x-hex); memory operands as ``[Rn]`` or
``[Rn, #off]``; branch targets as a label or an absolute address.
Register aliases SP (R13), LR (R14) and PC (R15) are accepted.

``.org`` moves the location counter.  The first contiguous run of
emitted bytes forms the code segment; everything after the first gap
forms the data segment (internal gaps zero-filled).  Branch offsets
are PC-relative in words, counted from the instruction after the
branch.  Out-of-range immediates are a hard error, never truncated.

Disassembly listings (``ADDR: WORD  MNEMONIC ...`` with interleaved
label and ``.org`` lines) are themselves valid assembler input: a
leading ``hex: hexword`` pair on a line is recognized as a listing
prefix and skipped, so assemble -> disassemble -> assemble is a
fixpoint at the image level.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .isa import (
    OPCODES,
    OP_ADD,
    OP_AND,
    OP_B,
    OP_BEQ,
    OP_BGE,
    OP_BL,
    OP_BLT,
    OP_BNE,
    OP_CMP,
    OP_CMPI,
    OP_EOR,
    OP_HALT,
    OP_LDR,
    OP_LSL,
    OP_LSR,
    OP_MOV,
    OP_MOVI,
    OP_NOP,
    OP_ORR,
    OP_RET,
    OP_STR,
    OP_SUB,
    OP_TRIG,
    DEFAULT_DATA_BASE,
    Instruction,
    MemoryImage,
    disassemble_word,
    encode,
)


class AssemblyError(Exception):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownMnemonicError(AssemblyError):
    pass


class UndefinedLabelError(AssemblyError):
    pass


class DuplicateLabelError(AssemblyError):
    pass


class ImmediateOutOfRangeError(AssemblyError):
    pass


class SymbolTable:
    """Label name -> word-aligned address map."""

    def __init__(self, entries: Optional[dict] = None):
        self.entries: dict = dict(entries) if entries else {}

    def __getitem__(self, name: str) -> int:
        return self.entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, name: str, default=None):
        return self.entries.get(name, default)

    def by_address(self) -> dict:
        """Address -> name map; first name wins on aliased addresses."""
        out: dict = {}
        for name, addr in sorted(self.entries.items(), key=lambda kv: (kv[1], kv[0])):
            out.setdefault(addr, name)
        return out

    def items(self):
        return self.entries.items()


_LABEL_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_LISTING_PREFIX_RE = re.compile(r"^\s*[0-9A-Fa-f]{1,8}:\s+[0-9A-Fa-f]{8}(?:\s+|$)")
_REG_ALIASES = {"SP": 13, "LR": 14, "PC": 15}
_MEM_RE = re.compile(r"^\[\s*([A-Za-z][A-Za-z0-9]*)\s*(?:,\s*(#\S+)\s*)?\]$")


def _parse_reg(tok: str, line: int) -> int:
    t = tok.upper()
    if t in _REG_ALIASES:
        return _REG_ALIASES[t]
    if t.startswith("R") and t[1:].isdigit():
        idx = int(t[1:])
        if 0 <= idx <= 15:
            return idx
    raise AssemblyError(f"bad register {tok!r}", line)


def _parse_int(text: str, line: int) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise AssemblyError(f"bad number {text!r}", line) from None


def _parse_imm(tok: str, line: int) -> int:
    if not tok.startswith("#"):
        raise AssemblyError(f"immediate must start with '#': {tok!r}", line)
    return _parse_int(tok[1:], line)


def _split_operands(text: str) -> list:
    """Split on commas that are not inside a [...] memory operand."""
    parts = []
    depth = 0
    cur = []
    for ch in text:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail:
        parts.append(tail)
    return parts


@dataclass
class _Item:
    line: int
    addr: int
    kind: str  # "instr" | "word"
    mnemonic: str = ""
    operands: tuple = ()
    value: int = 0


def _strip_line(raw: str) -> str:
    text = raw.split(";", 1)[0]
    m = _LISTING_PREFIX_RE.match(text)
    if m:
        text = text[m.end() :]
    return text.strip()


def assemble(source: str):
    """Assemble MiniISA source into (MemoryImage, SymbolTable)."""
    symbols: dict = {}
    items: list = []
    loc = 0

    # pass 1: collect labels and layout
    for lineno, raw in enumerate(source.splitlines(), start=1):
        text = _strip_line(raw)
        if not text:
            continue
        while True:
            m = re.match(r"^([A-Za-z_][A-Za-z0-9_]*):\s*", text)
            if not m:
                break
            name = m.group(1)
            if name in symbols:
                raise DuplicateLabelError(f"duplicate label {name!r}", lineno)
            symbols[name] = loc
            text = text[m.end() :]
        if not text:
            continue
        fields = text.split(None, 1)
        head = fields[0]
        rest = fields[1] if len(fields) > 1 else ""
        if head == ".org":
            new_loc = _parse_int(rest.strip(), lineno)
            if new_loc % 4:
                raise AssemblyError(".org address must be word-aligned", lineno)
            loc = new_loc
            continue
        if head == ".word":
            values = [v.strip() for v in rest.split(",")] if rest.strip() else []
            if not values:
                raise AssemblyError(".word needs at least one value", lineno)
            for v in values:
                items.append(_Item(lineno, loc, "word", value=_parse_int(v, lineno)))
                loc += 4
            continue
        mnemonic = head.upper()
        if mnemonic not in OPCODES:
            raise UnknownMnemonicError(f"unknown mnemonic {head!r}", lineno)
        items.append(_Item(lineno, loc, "instr", mnemonic, tuple(_split_operands(rest))))
        loc += 4

    # pass 2: encode
    chunks: list = []
    for item in items:
        if item.kind == "word":
            chunks.append((item.addr, (item.value & 0xFFFFFFFF).to_bytes(4, "big"), item.line))
            continue
        word = _encode_statement(item, symbols)
        chunks.append((item.addr, word.to_bytes(4, "big"), item.line))

    return _build_image(chunks), SymbolTable(symbols)


def _encode_statement(item: _Item, symbols: dict) -> int:
    op = OPCODES[item.mnemonic]
    ops = item.operands
    line = item.line

    def need(count: int):
        if len(ops) != count:
            raise AssemblyError(
                f"{item.mnemonic} expects {count} operand(s), got {len(ops)}", line
            )

    try:
        if op in (OP_NOP, OP_HALT, OP_TRIG, OP_RET):
            need(0)
            return encode(Instruction(op))
        if op == OP_MOVI:
            need(2)
            return encode(Instruction(op, rd=_parse_reg(ops[0], line), imm=_parse_imm(ops[1], line)))
        if op == OP_MOV:
            need(2)
            return encode(
                Instruction(op, rd=_parse_reg(ops[0], line), rs1=_parse_reg(ops[1], line))
            )
        if op in (OP_ADD, OP_SUB, OP_AND, OP_ORR, OP_EOR):
            need(3)
            return encode(
                Instruction(
                    op,
                    rd=_parse_reg(ops[0], line),
                    rs1=_parse_reg(ops[1], line),
                    rs2=_parse_reg(ops[2], line),
                )
            )
        if op in (OP_LSL, OP_LSR):
            need(3)
            return encode(
                Instruction(
                    op,
                    rd=_parse_reg(ops[0], line),
                    rs1=_parse_reg(ops[1], line),
                    imm=_parse_imm(ops[2], line),
                )
            )
        if op == OP_CMP:
            need(2)
            return encode(
                Instruction(op, rs1=_parse_reg(ops[0], line), rs2=_parse_reg(ops[1], line))
            )
        if op == OP_CMPI:
            need(2)
            return encode(Instruction(op, rs1=_parse_reg(ops[0], line), imm=_parse_imm(ops[1], line)))
        if op in (OP_B, OP_BEQ, OP_BNE, OP_BLT, OP_BGE, OP_BL):
            need(1)
            target = _resolve_target(ops[0], symbols, line)
            if target % 4:
                raise AssemblyError(f"branch target 0x{target:x} not word-aligned", line)
            rel = (target - (item.addr + 4)) // 4
            return encode(Instruction(op, imm=rel))
        if op in (OP_LDR, OP_STR):
            need(2)
            m = _MEM_RE.match(ops[1])
            if not m:
                raise AssemblyError(f"bad memory operand {ops[1]!r}", line)
            base = _parse_reg(m.group(1), line)
            off = _parse_imm(m.group(2), line) if m.group(2) else 0
            return encode(Instruction(op, rd=_parse_reg(ops[0], line), rs1=base, imm=off))
    except ValueError as exc:
        raise ImmediateOutOfRangeError(str(exc), line) from None
    raise UnknownMnemonicError(f"unknown mnemonic {item.mnemonic!r}", line)


def _resolve_target(tok: str, symbols: dict, line: int) -> int:
    if _LABEL_RE.match(tok):
        if tok not in symbols:
            raise UndefinedLabelError(f"undefined label {tok!r}", line)
        return symbols[tok]
    return _parse_int(tok, line)


def _build_image(chunks: list) -> MemoryImage:
    if not chunks:
        raise AssemblyError("no code emitted")
    chunks = sorted(chunks, key=lambda c: c[0])
    for (a1, b1, l1), (a2, b2, l2) in zip(chunks, chunks[1:]):
        if a2 < a1 + len(b1):
            raise AssemblyError(f"overlapping emission at 0x{a2:x}", l2)

    # first contiguous run = code; the rest (gaps zero-filled) = data
    code_base = chunks[0][0]
    code = bytearray()
    i = 0
    addr = code_base
    while i < len(chunks) and chunks[i][0] == addr:
        code.extend(chunks[i][1])
        addr += len(chunks[i][1])
        i += 1
    if i == len(chunks):
        return MemoryImage(bytes(code), b"", code_base, DEFAULT_DATA_BASE)
    data_base = chunks[i][0]
    data_end = chunks[-1][0] + len(chunks[-1][1])
    data = bytearray(data_end - data_base)
    for a, b, _line in chunks[i:]:
        data[a - data_base : a - data_base + len(b)] = b
    return MemoryImage(bytes(code), bytes(data), code_base, data_base)


def disassemble(image: MemoryImage, symbols: Optional[SymbolTable] = None) -> str:
    """Listing for an image: one line per word, labels interleaved.

    The output reassembles to the same image when fed back through
    assemble() (branch targets render as labels where the symbol
    table covers them, absolute addresses otherwise).
    """
    labels = symbols.by_address() if symbols else {}
    lines: list = []

    def emit_segment(base: int, blob: bytes, as_code: bool):
        lines.append(f"        .org 0x{base:04X}")
        for off in range(0, len(blob), 4):
            addr = base + off
            word = int.from_bytes(blob[off : off + 4], "big")
            if addr in labels:
                lines.append(f"{labels[addr]}:")
            if as_code:
                text = disassemble_word(word, addr, labels)
            else:
                text = f".word 0x{word:08X}"
            lines.append(f"{addr:04x}: {word:08x}  {text}")

    emit_segment(image.code_base, image.code, True)
    if image.data:
        lines.append("")
        emit_segment(image.data_base, image.data, False)
    return "\n".join(lines) + "\n"


_META_CODE_BASE = ".code_base"
_META_CODE_SIZE = ".code_size"
_META_DATA_BASE = ".data_base"
_META_DATA_SIZE = ".data_size"


def save_image(image: MemoryImage, bin_path) -> None:
    """Write code bytes followed by data bytes (segment geometry goes
    in the sidecar symbol file)."""
    with open(bin_path, "wb") as fh:
        fh.write(image.code)
        fh.write(image.data)


def save_symbols(symbols: SymbolTable, image: MemoryImage, sym_path) -> None:
    """name<TAB>hex-address lines; dotted reserved names carry the
    segment geometry."""
    rows = [
        (_META_CODE_BASE, image.code_base),
        (_META_CODE_SIZE, len(image.code)),
        (_META_DATA_BASE, image.data_base),
        (_META_DATA_SIZE, len(image.data)),
    ]
    rows.extend(sorted(symbols.items(), key=lambda kv: (kv[1], kv[0])))
    with open(sym_path, "w") as fh:
        for name, value in rows:
            fh.write(f"{name}\t0x{value:04x}\n")


def load_symbols(sym_path):
    """Return (SymbolTable, metadata dict) from a sidecar file."""
    entries: dict = {}
    meta: dict = {}
    with open(sym_path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                name, value = line.split("\t")
                addr = int(value, 0)
            except ValueError:
                raise AssemblyError(f"bad symbol line {raw!r}", lineno) from None
            if name.startswith("."):
                meta[name] = addr
            else:
                entries[name] = addr
    return SymbolTable(entries), meta


def load_image(bin_path, sym_path=None):
    """Load a flat binary (+ optional sidecar) into (MemoryImage,
    SymbolTable).  Without a sidecar the whole file is code at 0."""
    blob = open(bin_path, "rb").read()
    if sym_path is None:
        return MemoryImage(blob), SymbolTable()
    symbols, meta = load_symbols(sym_path)
    code_base = meta.get(_META_CODE_BASE, 0)
    code_size = meta.get(_META_CODE_SIZE, len(blob))
    data_base = meta.get(_META_DATA_BASE, DEFAULT_DATA_BASE)
    code = blob[:code_size]
    data = blob[code_size:]
    return MemoryImage(code, data, code_base, data_base), symbols
