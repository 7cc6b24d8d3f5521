"""Register-machine interpreter for linear genetic programs.

A program is an ordered list of instructions over 8 registers and a
read-only observation vector. Every instruction stores
``constant * op(lhs, rhs)`` into its destination register; the output is
register 0 after the last line.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Sequence

N_REGISTERS = 8

inf = math.inf
nan = math.nan


class ProgramError(ValueError):
    """A program is structurally invalid (bad register/observation index, empty)."""


class Opcode(enum.IntEnum):
    ADD = 0
    SUB = 1
    MUL = 2
    DIV = 3
    MAX = 4
    EXP = 5
    LOG = 6
    SIN = 7
    COS = 8
    TAN = 9
    MOD = 10

    @property
    def arity(self) -> int:
        return 1 if self in _UNARY else 2


_UNARY = frozenset({Opcode.EXP, Opcode.LOG, Opcode.SIN, Opcode.COS, Opcode.TAN})


def _div(a, b):
    try:
        return a / b
    except ZeroDivisionError:
        if a != a or a == 0.0:
            return nan
        sign = math.copysign(1.0, a) * math.copysign(1.0, b)
        return math.copysign(inf, sign)


def _max(a, b):
    if a != a or b != b:
        return nan
    return a if a >= b else b


def _exp(a):
    try:
        return math.exp(a)
    except OverflowError:
        return inf


def _log(a):
    if a > 0.0:
        return math.log(a)
    return nan


def _sin(a):
    try:
        return math.sin(a)
    except ValueError:
        return nan


def _cos(a):
    try:
        return math.cos(a)
    except ValueError:
        return nan


def _tan(a):
    try:
        return math.tan(a)
    except ValueError:
        return nan


def _mod(a, b):
    try:
        return math.fmod(a, b)
    except ValueError:
        # zero divisor or infinite dividend
        return nan


_FUNCS = {
    Opcode.DIV: _div,
    Opcode.MAX: _max,
    Opcode.EXP: _exp,
    Opcode.LOG: _log,
    Opcode.SIN: _sin,
    Opcode.COS: _cos,
    Opcode.TAN: _tan,
    Opcode.MOD: _mod,
}


def apply_opcode(op: Opcode, a: float, b: float = 0.0) -> float:
    """Apply ``op`` to operands with unprotected IEEE-style semantics.

    Division by zero gives a signed infinity, log of a non-positive value
    and modulo by zero give NaN. Nothing raises.
    """
    if op == Opcode.ADD:
        return a + b
    if op == Opcode.SUB:
        return a - b
    if op == Opcode.MUL:
        return a * b
    if op.arity == 1:
        return _FUNCS[op](a)
    return _FUNCS[op](a, b)


def sanitize_bid(raw: float) -> float:
    """Map NaN to -inf so that argmax over bids is always defined."""
    return -inf if raw != raw else raw


@dataclass(frozen=True)
class Operand:
    kind: str  # "r" (register) or "s" (observation)
    index: int

    def __str__(self) -> str:
        return f"{self.kind}{self.index}"

    @classmethod
    def parse(cls, text: str) -> Operand:
        text = text.strip()
        if len(text) < 2 or text[0] not in "rs" or not text[1:].isdigit():
            raise ProgramError(f"bad operand {text!r}")
        return cls(text[0], int(text[1:]))


@dataclass(frozen=True)
class Instruction:
    dest: int
    op: Opcode
    lhs: Operand
    rhs: Operand
    const: float

    def __str__(self) -> str:
        return format_instruction(self)


def format_instruction(ins: Instruction) -> str:
    return f"r{ins.dest} <- {ins.const.hex()} * {ins.op.name.lower()}({ins.lhs}, {ins.rhs})"


_LINE_RE = re.compile(
    r"^\s*r(\d+)\s*<-\s*(\S+)\s*\*\s*([a-z]+)\(\s*([rs]\d+)\s*,\s*([rs]\d+)\s*\)\s*$"
)


def parse_instruction(text: str) -> Instruction:
    m = _LINE_RE.match(text)
    if m is None:
        raise ProgramError(f"cannot parse instruction {text!r}")
    dest, const, op, lhs, rhs = m.groups()
    try:
        opcode = Opcode[op.upper()]
    except KeyError:
        raise ProgramError(f"unknown opcode {op!r}") from None
    try:
        value = float.fromhex(const) if "0x" in const.lower() else float(const)
    except ValueError:
        raise ProgramError(f"bad constant {const!r}") from None
    return Instruction(int(dest), opcode, Operand.parse(lhs), Operand.parse(rhs), value)


def effective_lines(lines: Sequence[Instruction]) -> list[Instruction]:
    """Lines that can influence register 0 at the end of execution."""
    needed = {0}
    kept = []
    for ins in reversed(lines):
        if ins.dest not in needed:
            continue
        kept.append(ins)
        needed.discard(ins.dest)
        if ins.lhs.kind == "r":
            needed.add(ins.lhs.index)
        if ins.op.arity == 2 and ins.rhs.kind == "r":
            needed.add(ins.rhs.index)
    kept.reverse()
    return kept


_INLINE = {Opcode.ADD: "+", Opcode.SUB: "-", Opcode.MUL: "*"}
_CODE_NS = {f"_{op.name.lower()}": fn for op, fn in _FUNCS.items()}
_CODE_NS.update(inf=inf, nan=nan)


def _src(operand: Operand) -> str:
    return f"r{operand.index}" if operand.kind == "r" else f"s[{operand.index}]"


def _compile(lines: Sequence[Instruction]):
    body = ["def _prog(s):", "    r0 = r1 = r2 = r3 = r4 = r5 = r6 = r7 = 0.0"]
    for ins in effective_lines(lines):
        a = _src(ins.lhs)
        c = repr(ins.const)
        if ins.op in _INLINE:
            expr = f"({a} {_INLINE[ins.op]} {_src(ins.rhs)})"
        elif ins.op.arity == 1:
            expr = f"_{ins.op.name.lower()}({a})"
        else:
            expr = f"_{ins.op.name.lower()}({a}, {_src(ins.rhs)})"
        body.append(f"    r{ins.dest} = ({c}) * {expr}")
    body.append("    return r0")
    ns = dict(_CODE_NS)
    exec("\n".join(body), ns)  # noqa: S102 - source is generated from validated instructions
    return ns["_prog"]


class Program:
    """An immutable linear program built for observations of length ``n_inputs``.

    Calling the program runs a compiled version with intron lines stripped;
    it is bit-identical to :func:`execute_program`.
    """

    __slots__ = ("lines", "n_inputs", "_fn")

    def __init__(self, lines: Sequence[Instruction], n_inputs: int):
        lines = tuple(lines)
        if not lines:
            raise ProgramError("a program needs at least one line")
        for ins in lines:
            if not 0 <= ins.dest < N_REGISTERS:
                raise ProgramError(f"destination register {ins.dest} out of range")
            for operand in (ins.lhs, ins.rhs):
                limit = N_REGISTERS if operand.kind == "r" else n_inputs
                if not 0 <= operand.index < limit:
                    raise ProgramError(f"operand {operand} out of range")
        object.__setattr__(self, "lines", lines)
        object.__setattr__(self, "n_inputs", n_inputs)
        object.__setattr__(self, "_fn", None)

    def __setattr__(self, name, value):
        raise AttributeError("Program is immutable")

    def __len__(self) -> int:
        return len(self.lines)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Program):
            return NotImplemented
        return self.n_inputs == other.n_inputs and self.lines == other.lines

    def __hash__(self) -> int:
        return hash((self.n_inputs, self.lines))

    def __repr__(self) -> str:
        return f"Program({len(self.lines)} lines, n_inputs={self.n_inputs})"

    def __getstate__(self):
        return (self.lines, self.n_inputs)

    def __setstate__(self, state):
        object.__setattr__(self, "lines", state[0])
        object.__setattr__(self, "n_inputs", state[1])
        object.__setattr__(self, "_fn", None)

    def __call__(self, observation: Sequence[float]) -> float:
        fn = self._fn
        if fn is None:
            fn = _compile(self.lines)
            object.__setattr__(self, "_fn", fn)
        try:
            return fn(observation)
        except IndexError:
            raise ProgramError(
                f"observation of length {len(observation)} too short for {self!r}"
            ) from None

    def copy(self) -> Program:
        """A distinct Program object with the same lines (shares the compiled code)."""
        twin = Program.__new__(Program)
        object.__setattr__(twin, "lines", self.lines)
        object.__setattr__(twin, "n_inputs", self.n_inputs)
        object.__setattr__(twin, "_fn", self._fn)
        return twin

    def replace_lines(self, lines: Sequence[Instruction]) -> Program:
        return Program(lines, self.n_inputs)

    def to_text(self) -> str:
        return "\n".join(format_instruction(ins) for ins in self.lines)

    @classmethod
    def from_text(cls, text: str, n_inputs: int) -> Program:
        return cls([parse_instruction(l) for l in text.splitlines() if l.strip()], n_inputs)

    def to_dict(self) -> dict:
        return {
            "n_inputs": self.n_inputs,
            "lines": [
                [ins.dest, ins.op.name, str(ins.lhs), str(ins.rhs), ins.const.hex()]
                for ins in self.lines
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> Program:
        try:
            lines = [
                Instruction(
                    int(dest), Opcode[op], Operand.parse(lhs), Operand.parse(rhs),
                    float.fromhex(const),
                )
                for dest, op, lhs, rhs, const in data["lines"]
            ]
            return cls(lines, int(data["n_inputs"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProgramError(f"malformed program record: {exc}") from None


def execute_program(program: Program, observation: Sequence[float]) -> float:
    """Reference interpreter: zeroed registers, every line in order, return r0."""
    regs = [0.0] * N_REGISTERS
    obs = observation
    n = len(obs)
    for ins in program.lines:
        lhs, rhs = ins.lhs, ins.rhs
        if lhs.kind == "r":
            a = regs[lhs.index]
        elif lhs.index < n:
            a = float(obs[lhs.index])
        else:
            raise ProgramError(f"observation index {lhs.index} out of range ({n})")
        if ins.op.arity == 1:
            b = 0.0
        elif rhs.kind == "r":
            b = regs[rhs.index]
        elif rhs.index < n:
            b = float(obs[rhs.index])
        else:
            raise ProgramError(f"observation index {rhs.index} out of range ({n})")
        regs[ins.dest] = ins.const * apply_opcode(ins.op, a, b)
    return regs[0]
