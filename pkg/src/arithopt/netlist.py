"""Gate-level netlists: construction, simulation, timing, and structural HDL.

Netlists are flat lists of primitive cells (AND/XOR/OR, full/half adders,
prefix combine cells, constants) over integer wire ids. Simulation is
bit-parallel: every wire carries a vector of 64-case machine words, so
exhaustive multiplier verification runs as a handful of numpy bitwise ops per
cell.
"""
from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ct import FULL_ADDER, HALF_ADDER, CompressorTree, validate_ct
from .prefix import PrefixBitmap, canonical_parents, serial_prefix, validate_prefix


class IllegalDesignError(ValueError):
    """Netlist construction was asked to lower an illegal design."""


class HdlParseError(ValueError):
    pass


# Cell pin tables: kind -> (input pins, output pins).
CELL_PINS = {
    "and": (("a", "b"), ("y",)),
    "or": (("a", "b"), ("y",)),
    "xor": (("a", "b"), ("y",)),
    "fa": (("a", "b", "cin"), ("sum", "cout")),
    "ha": (("a", "cin"), ("sum", "cout")),
    "black": (("gh", "ph", "gl", "pl"), ("g", "p")),
    "gray": (("gh", "ph", "gl"), ("g",)),
    "const0": ((), ("y",)),
    "const1": ((), ("y",)),
}

_HDL_PRIMS = {
    "and": "AND2",
    "or": "OR2",
    "xor": "XOR2",
    "fa": "FA",
    "ha": "HA",
    "black": "BLACK",
    "gray": "GRAY",
}
_HDL_KINDS = {v: k for k, v in _HDL_PRIMS.items()}


@dataclass(frozen=True)
class TimingModel:
    """Unit-gate delay and area table; the single editable source of QoR constants.

    ``delay`` maps (cell kind, input pin, output pin) to a pin-pair delay;
    ``area`` maps cell kind to its unit-gate area. Simple gates cost 1,
    XOR-class gates 2; FA/HA/combine-cell figures decompose accordingly.
    """

    area: dict
    delay: dict

    @classmethod
    def unit_gate(cls) -> "TimingModel":
        area = {
            "and": 1.0,
            "or": 1.0,
            "xor": 2.0,
            "fa": 7.0,
            "ha": 3.0,
            "black": 3.0,
            "gray": 3.0,
            "const0": 0.0,
            "const1": 0.0,
        }
        delay: dict = {}
        for pin in ("a", "b"):
            delay[("and", pin, "y")] = 1.0
            delay[("or", pin, "y")] = 1.0
            delay[("xor", pin, "y")] = 2.0
        for out in ("sum", "cout"):
            delay[("fa", "a", out)] = 4.0
            delay[("fa", "b", out)] = 4.0
            delay[("fa", "cin", out)] = 2.0
        for pin in ("a", "cin"):
            delay[("ha", pin, "sum")] = 2.0
            delay[("ha", pin, "cout")] = 1.0
        for pin in ("gh", "ph", "gl", "pl"):
            delay[("black", pin, "g")] = 2.0
            delay[("black", pin, "p")] = 2.0
        for pin in ("gh", "ph", "gl"):
            delay[("gray", pin, "g")] = 2.0
        return cls(area=area, delay=delay)

    def with_delay(self, key: tuple, value: float) -> "TimingModel":
        delay = dict(self.delay)
        delay[key] = value
        return TimingModel(area=dict(self.area), delay=delay)


DEFAULT_TIMING = TimingModel.unit_gate()


@dataclass
class Cell:
    kind: str
    name: str
    ins: tuple[int, ...]
    outs: tuple[int, ...]


@dataclass
class Netlist:
    """Flat structural netlist with named input/output ports (LSB-first)."""

    name: str
    inputs: dict[str, list[int]] = field(default_factory=dict)
    outputs: dict[str, list[int]] = field(default_factory=dict)
    cells: list[Cell] = field(default_factory=list)
    wire_count: int = 0

    def new_wire(self) -> int:
        w = self.wire_count
        self.wire_count += 1
        return w

    def add_input(self, name: str, width: int) -> list[int]:
        if name in self.inputs:
            raise ValueError(f"duplicate input port {name!r}")
        wires = [self.new_wire() for _ in range(width)]
        self.inputs[name] = wires
        return wires

    def set_output(self, name: str, wires: list[int]) -> None:
        if name in self.outputs:
            raise ValueError(f"duplicate output port {name!r}")
        self.outputs[name] = list(wires)

    def add_cell(self, kind: str, name: str, ins: tuple[int, ...]) -> tuple[int, ...]:
        in_pins, out_pins = CELL_PINS[kind]
        if len(ins) != len(in_pins):
            raise ValueError(f"{kind} expects {len(in_pins)} inputs, got {len(ins)}")
        outs = tuple(self.new_wire() for _ in out_pins)
        self.cells.append(Cell(kind, name, tuple(ins), outs))
        return outs

    def driver_map(self) -> dict[int, tuple[Cell, str]]:
        """Wire -> (driving cell, output pin); input-port wires are absent."""
        drivers: dict[int, tuple[Cell, str]] = {}
        for cell in self.cells:
            for pin, w in zip(CELL_PINS[cell.kind][1], cell.outs):
                if w in drivers:
                    raise ValueError(f"wire {w} has multiple drivers")
                drivers[w] = (cell, pin)
        return drivers

    def topo_cells(self) -> list[Cell]:
        """Cells in dependency order; raises on cycles or undriven inputs."""
        driven = set()
        for wires in self.inputs.values():
            driven.update(wires)
        pending = list(self.cells)
        ordered: list[Cell] = []
        while pending:
            progressed = False
            remaining = []
            for cell in pending:
                if all(w in driven for w in cell.ins):
                    ordered.append(cell)
                    driven.update(cell.outs)
                    progressed = True
                else:
                    remaining.append(cell)
            if not progressed:
                raise ValueError("netlist has a cycle or an undriven cell input")
            pending = remaining
        return ordered

    def check(self) -> None:
        """Structural invariants: single driver, acyclic, inputs driven, outputs exist."""
        drivers = self.driver_map()
        port_wires = {w for wires in self.inputs.values() for w in wires}
        ordered = self.topo_cells()
        assert len(ordered) == len(self.cells)
        for cell in self.cells:
            for w in cell.ins:
                if w not in drivers and w not in port_wires:
                    raise ValueError(f"cell {cell.name} input wire {w} undriven")
        for name, wires in self.outputs.items():
            for w in wires:
                if w not in drivers and w not in port_wires:
                    raise ValueError(f"output {name} wire {w} undriven")


def simulate(nl: Netlist, inputs: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Evaluate the netlist over packed 64-case words.

    ``inputs[port]`` has shape [width, words] with bit j of word w holding the
    port bit for case 64*w + j. Returns same-shaped arrays per output port.
    """
    words = None
    for port, wires in nl.inputs.items():
        arr = inputs[port]
        if arr.shape[0] != len(wires):
            raise ValueError(f"port {port} expects width {len(wires)}")
        words = arr.shape[1] if words is None else words
        if arr.shape[1] != words:
            raise ValueError("inconsistent word counts across ports")
    if words is None:
        words = 1
    vals = np.zeros((nl.wire_count, words), dtype=np.uint64)
    for port, wires in nl.inputs.items():
        vals[list(wires)] = inputs[port].astype(np.uint64)
    ones = np.uint64(0xFFFFFFFFFFFFFFFF)
    for cell in nl.topo_cells():
        k = cell.kind
        if k == "and":
            vals[cell.outs[0]] = vals[cell.ins[0]] & vals[cell.ins[1]]
        elif k == "or":
            vals[cell.outs[0]] = vals[cell.ins[0]] | vals[cell.ins[1]]
        elif k == "xor":
            vals[cell.outs[0]] = vals[cell.ins[0]] ^ vals[cell.ins[1]]
        elif k == "fa":
            a, b, c = (vals[w] for w in cell.ins)
            vals[cell.outs[0]] = a ^ b ^ c
            vals[cell.outs[1]] = (a & b) | (a & c) | (b & c)
        elif k == "ha":
            a, c = (vals[w] for w in cell.ins)
            vals[cell.outs[0]] = a ^ c
            vals[cell.outs[1]] = a & c
        elif k == "black":
            gh, ph, gl, pl = (vals[w] for w in cell.ins)
            vals[cell.outs[0]] = gh | (ph & gl)
            vals[cell.outs[1]] = ph & pl
        elif k == "gray":
            gh, ph, gl = (vals[w] for w in cell.ins)
            vals[cell.outs[0]] = gh | (ph & gl)
        elif k == "const0":
            vals[cell.outs[0]] = 0
        elif k == "const1":
            vals[cell.outs[0]] = ones
        else:
            raise ValueError(f"cannot simulate cell kind {k!r}")
    return {name: vals[list(wires)] for name, wires in nl.outputs.items()}


def static_timing(nl: Netlist, timing: TimingModel = DEFAULT_TIMING) -> np.ndarray:
    """Arrival time per wire under the pin-pair delay table (inputs arrive at 0)."""
    arr = np.zeros(nl.wire_count, dtype=np.float64)
    for cell in nl.topo_cells():
        in_pins, out_pins = CELL_PINS[cell.kind]
        for pin_out, w_out in zip(out_pins, cell.outs):
            t = 0.0
            for pin_in, w_in in zip(in_pins, cell.ins):
                t = max(t, arr[w_in] + timing.delay[(cell.kind, pin_in, pin_out)])
            arr[w_out] = t
    return arr


def critical_path(nl: Netlist, timing: TimingModel = DEFAULT_TIMING) -> float:
    arr = static_timing(nl, timing)
    worst = 0.0
    for wires in nl.outputs.values():
        for w in wires:
            worst = max(worst, float(arr[w]))
    return worst


def total_area(nl: Netlist, timing: TimingModel = DEFAULT_TIMING) -> float:
    return float(sum(timing.area[cell.kind] for cell in nl.cells))


class _Bit:
    """A live partial-product bit during compressor-tree lowering."""

    __slots__ = ("wire", "arrival", "seq")

    def __init__(self, wire: int, arrival: float, seq: int):
        self.wire = wire
        self.arrival = arrival
        self.seq = seq


class _CtLowering:
    """Shared PPG + compressor-tree lowering used by both netlist builders."""

    def __init__(self, nl: Netlist, tree: CompressorTree, timing: TimingModel):
        self.nl = nl
        self.tree = tree
        self.timing = timing
        self._seq = 0
        self._const0: int | None = None

    def _bit(self, wire: int, arrival: float) -> _Bit:
        self._seq += 1
        return _Bit(wire, arrival, self._seq)

    def const0(self) -> int:
        if self._const0 is None:
            (self._const0,) = self.nl.add_cell("const0", "const0", ())
        return self._const0

    def build_ppg(self) -> list[list[_Bit]]:
        n = self.tree.n
        a = self.nl.add_input("a", n)
        b = self.nl.add_input("b", n)
        columns: list[list[_Bit]] = [[] for _ in range(2 * n)]
        d_and = self.timing.delay[("and", "a", "y")]
        for c in range(2 * n - 1):
            ordinal = 0
            for i in range(max(0, c - n + 1), min(c, n - 1) + 1):
                j = c - i
                (y,) = self.nl.add_cell("and", f"and_c{c}_{ordinal}", (a[i], b[j]))
                columns[c].append(self._bit(y, d_and))
                ordinal += 1
        return columns

    def reduce(self, columns: list[list[_Bit]]) -> list[list[_Bit]]:
        """Run all reduction stages; earliest-arriving bits feed FAs first."""
        t = self.tree
        d = self.timing.delay
        for s in range(t.stages):
            sums: list[list[_Bit]] = [[] for _ in range(t.columns)]
            carries: list[list[_Bit]] = [[] for _ in range(t.columns)]
            leftover: list[list[_Bit]] = [[] for _ in range(t.columns)]
            for c in range(t.columns):
                avail = sorted(columns[c], key=lambda bit: (bit.arrival, bit.seq))
                n_fa = int(t.counts[FULL_ADDER, c, s])
                n_ha = int(t.counts[HALF_ADDER, c, s])
                if 3 * n_fa + 2 * n_ha > len(avail):
                    raise IllegalDesignError(
                        f"stage {s} column {c} consumes more bits than available"
                    )
                pos = 0
                for i in range(n_fa):
                    x1, x2, x3 = avail[pos : pos + 3]
                    pos += 3
                    sum_w, cout_w = self.nl.add_cell(
                        "fa", f"fa_c{c}_s{s}_{i}", (x1.wire, x2.wire, x3.wire)
                    )
                    t_sum = max(
                        x1.arrival + d[("fa", "a", "sum")],
                        x2.arrival + d[("fa", "b", "sum")],
                        x3.arrival + d[("fa", "cin", "sum")],
                    )
                    t_cout = max(
                        x1.arrival + d[("fa", "a", "cout")],
                        x2.arrival + d[("fa", "b", "cout")],
                        x3.arrival + d[("fa", "cin", "cout")],
                    )
                    sums[c].append(self._bit(sum_w, t_sum))
                    if c + 1 < t.columns:
                        carries[c + 1].append(self._bit(cout_w, t_cout))
                for i in range(n_ha):
                    x1, x2 = avail[pos : pos + 2]
                    pos += 2
                    sum_w, cout_w = self.nl.add_cell(
                        "ha", f"ha_c{c}_s{s}_{i}", (x1.wire, x2.wire)
                    )
                    t_sum = max(x1.arrival, x2.arrival) + d[("ha", "a", "sum")]
                    t_cout = max(x1.arrival, x2.arrival) + d[("ha", "a", "cout")]
                    sums[c].append(self._bit(sum_w, t_sum))
                    if c + 1 < t.columns:
                        carries[c + 1].append(self._bit(cout_w, t_cout))
                leftover[c] = avail[pos:]
            columns = [carries[c] + sums[c] + leftover[c] for c in range(t.columns)]
        return columns

    def final_rows(self, columns: list[list[_Bit]]) -> tuple[list[int], list[int], list[float]]:
        """Two addend rows (missing bits tied to 0) plus per-column worst arrival."""
        row_a, row_b, arrivals = [], [], []
        for c in range(self.tree.columns):
            bits = columns[c]
            if len(bits) > 2:
                raise IllegalDesignError(f"column {c} ends with {len(bits)} bits")
            row_a.append(bits[0].wire if len(bits) >= 1 else self.const0())
            row_b.append(bits[1].wire if len(bits) >= 2 else self.const0())
            arrivals.append(max((bit.arrival for bit in bits), default=0.0))
        return row_a, row_b, arrivals


@dataclass
class CtNetlistResult:
    netlist: Netlist
    row_a: list[int]
    row_b: list[int]
    arrivals: list[float]


def build_ct_netlist(
    tree: CompressorTree, timing: TimingModel = DEFAULT_TIMING
) -> CtNetlistResult:
    """Lower a legal compressor tree to gates (AND-array generator included).

    Deterministic interconnection: within each column/stage the available bits
    are sorted by arrival time (ties by creation order) and the earliest bits
    feed full adders, then half adders; leftovers pass through. The two
    surviving rows come out as ports ``row_a``/``row_b``.
    """
    if validate_ct(tree):
        raise IllegalDesignError("compressor tree violates design rules")
    nl = Netlist(name=f"ct{tree.n}")
    lowering = _CtLowering(nl, tree, timing)
    columns = lowering.build_ppg()
    columns = lowering.reduce(columns)
    row_a, row_b, arrivals = lowering.final_rows(columns)
    nl.set_output("row_a", row_a)
    nl.set_output("row_b", row_b)
    return CtNetlistResult(nl, row_a, row_b, arrivals)


def _lower_prefix(
    nl: Netlist,
    p: PrefixBitmap,
    a_wires: list[int],
    b_wires: list[int],
    cin: int | None,
) -> tuple[list[int], int]:
    """Emit generate/propagate bits, combine cells, and sum XORs.

    Carry-in is folded into bit 0's generate (g0' = g0 | p0 & cin) so group
    cells over [0, i] spans never need a propagate output and stay gray.
    Returns (sum wires, carry-out wire).
    """
    n = p.n
    if validate_prefix(p):
        raise IllegalDesignError("prefix bitmap violates design rules")
    if not p.has_all_outputs():
        raise IllegalDesignError("prefix bitmap lacks carry-output nodes (i, 0)")
    g: dict[tuple[int, int], int] = {}
    pr: dict[tuple[int, int], int] = {}
    p_raw0 = None
    for i in range(n):
        (gi,) = nl.add_cell("and", f"g_i{i}", (a_wires[i], b_wires[i]))
        (pi,) = nl.add_cell("xor", f"p_i{i}", (a_wires[i], b_wires[i]))
        if i == 0:
            p_raw0 = pi
            if cin is not None:
                (t,) = nl.add_cell("and", "cin_and", (pi, cin))
                (gi,) = nl.add_cell("or", "cin_or", (gi, t))
        g[(i, i)] = gi
        pr[(i, i)] = pi
    nodes = [
        (i, j)
        for i in range(n)
        for j in range(i)
        if p.bits[i, j]
    ]
    nodes.sort(key=lambda ij: (ij[0] - ij[1], ij[0]))
    for i, j in nodes:
        (ui, uk), (li, lj) = canonical_parents(p, i, j)
        up = (ui, uk)
        lo = (li, lj)
        if j == 0:
            (gw,) = nl.add_cell(
                "gray", f"gray_i{i}_j{j}", (g[up], pr[up], g[lo])
            )
            g[(i, j)] = gw
        else:
            gw, pw = nl.add_cell(
                "black", f"black_i{i}_j{j}", (g[up], pr[up], g[lo], pr[lo])
            )
            g[(i, j)] = gw
            pr[(i, j)] = pw
    sums = []
    for i in range(n):
        p_i = p_raw0 if i == 0 else pr[(i, i)]
        if i == 0:
            if cin is None:
                sums.append(p_i)
            else:
                (s0,) = nl.add_cell("xor", "sum_s0", (p_i, cin))
                sums.append(s0)
        else:
            (si,) = nl.add_cell("xor", f"sum_s{i}", (p_i, g[(i - 1, 0)]))
            sums.append(si)
    return sums, g[(n - 1, 0)]


def build_prefix_netlist(p: PrefixBitmap) -> Netlist:
    """Standalone adder from a prefix bitmap: computes a + b + cin."""
    nl = Netlist(name=f"cpa{p.n}")
    a = nl.add_input("a", p.n)
    b = nl.add_input("b", p.n)
    (cin,) = nl.add_input("cin", 1)
    sums, cout = _lower_prefix(nl, p, a, b, cin)
    nl.set_output("sum", sums)
    nl.set_output("cout", [cout])
    return nl


def assemble_multiplier(
    tree: CompressorTree,
    cpa: PrefixBitmap | None = None,
    timing: TimingModel = DEFAULT_TIMING,
) -> Netlist:
    """Full multiplier: AND-array generator, compressor tree, prefix adder.

    The adder spans 2n bits with carry-in 0; a missing ``cpa`` falls back to
    the serial chain. The final carry-out has weight 2^(2n) and is provably 0
    for any reachable input (the live bits always sum to a*b < 2^(2n)), so it
    is dropped.
    """
    if validate_ct(tree):
        raise IllegalDesignError("compressor tree violates design rules")
    if cpa is None:
        cpa = serial_prefix(2 * tree.n)
    if cpa.n != 2 * tree.n:
        raise ValueError(
            f"adder width {cpa.n} does not match multiplier columns {2 * tree.n}"
        )
    nl = Netlist(name=f"mult{tree.n}")
    lowering = _CtLowering(nl, tree, timing)
    columns = lowering.build_ppg()
    columns = lowering.reduce(columns)
    row_a, row_b, _ = lowering.final_rows(columns)
    sums, _cout = _lower_prefix(nl, cpa, row_a, row_b, cin=None)
    nl.set_output("p", sums)
    return nl


def _wire_expr(nl: Netlist) -> dict[int, str]:
    expr: dict[int, str] = {}
    for port, wires in nl.inputs.items():
        if len(wires) == 1:
            expr[wires[0]] = port
        else:
            for i, w in enumerate(wires):
                expr[w] = f"{port}[{i}]"
    return expr


def emit_hdl(nl: Netlist) -> str:
    """Deterministic structural HDL text; re-emission is byte-identical.

    Cell instance names carry the structural position (kind, column, stage,
    ordinal), constants become assigns, output ports are wired by assigns.
    """
    expr = _wire_expr(nl)
    lines = [f"module {nl.name} ("]
    ports = []
    for port, wires in nl.inputs.items():
        rng = f"[{len(wires) - 1}:0] " if len(wires) > 1 else ""
        ports.append(f"  input {rng}{port}")
    for port, wires in nl.outputs.items():
        rng = f"[{len(wires) - 1}:0] " if len(wires) > 1 else ""
        ports.append(f"  output {rng}{port}")
    lines.append(",\n".join(ports))
    lines.append(");")
    const_assigns = []
    for cell in nl.cells:
        for w in cell.outs:
            expr.setdefault(w, f"n{w}")
        if cell.kind in ("const0", "const1"):
            bit = "1'b0" if cell.kind == "const0" else "1'b1"
            const_assigns.append(f"  assign {expr[cell.outs[0]]} = {bit};")
    wire_decls = sorted({w for cell in nl.cells for w in cell.outs})
    for w in wire_decls:
        lines.append(f"  wire {expr[w]};")
    lines.extend(const_assigns)
    for cell in nl.cells:
        if cell.kind in ("const0", "const1"):
            continue
        in_pins, out_pins = CELL_PINS[cell.kind]
        conns = [f".{pin}({expr[w]})" for pin, w in zip(in_pins, cell.ins)]
        conns += [f".{pin}({expr[w]})" for pin, w in zip(out_pins, cell.outs)]
        lines.append(f"  {_HDL_PRIMS[cell.kind]} {cell.name} ( {', '.join(conns)} );")
    for port, wires in nl.outputs.items():
        for i, w in enumerate(wires):
            lhs = f"{port}[{i}]" if len(wires) > 1 else port
            lines.append(f"  assign {lhs} = {expr[w]};")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


_RE_PORT = re.compile(r"^\s*(input|output)\s*(?:\[(\d+):0\])?\s*(\w+)$")
_RE_WIRE = re.compile(r"^\s*wire\s+(\w+);$")
_RE_ASSIGN = re.compile(r"^\s*assign\s+([\w\[\]]+)\s*=\s*([\w\[\]']+);$")
_RE_INST = re.compile(r"^\s*(\w+)\s+(\w+)\s*\(\s*(.*)\s*\);$")
_RE_CONN = re.compile(r"\.(\w+)\(([^)]*)\)")


def parse_hdl(text: str) -> Netlist:
    """Parse the emitter's structural subset back into a netlist."""
    lines = [ln.rstrip() for ln in text.splitlines() if ln.strip()]
    if not lines[0].startswith("module"):
        raise HdlParseError("expected module header")
    name = lines[0].split()[1].rstrip("(").strip()
    nl = Netlist(name=name)
    wire_ids: dict[str, int] = {}
    out_ports: dict[str, int] = {}
    i = 1
    while i < len(lines) and not lines[i].startswith(");"):
        for part in lines[i].split(","):
            part = part.strip().rstrip(",")
            if not part:
                continue
            m = _RE_PORT.match(part)
            if not m:
                raise HdlParseError(f"bad port decl: {part!r}")
            direction, msb, pname = m.groups()
            width = int(msb) + 1 if msb is not None else 1
            if direction == "input":
                wires = nl.add_input(pname, width)
                if width == 1:
                    wire_ids[pname] = wires[0]
                else:
                    for k, w in enumerate(wires):
                        wire_ids[f"{pname}[{k}]"] = w
            else:
                out_ports[pname] = width
                nl.outputs[pname] = [-1] * width
        i += 1
    i += 1

    def resolve(tok: str) -> int:
        if tok not in wire_ids:
            raise HdlParseError(f"unknown wire {tok!r}")
        return wire_ids[tok]

    def bind_output(lhs: str, w: int) -> bool:
        mm = re.match(r"(\w+)\[(\d+)\]$", lhs)
        if mm and mm.group(1) in out_ports:
            nl.outputs[mm.group(1)][int(mm.group(2))] = w
            return True
        if lhs in out_ports:
            nl.outputs[lhs][0] = w
            return True
        return False

    while i < len(lines):
        line = lines[i]
        i += 1
        if line.startswith("endmodule"):
            break
        m = _RE_WIRE.match(line)
        if m:
            wire_ids[m.group(1)] = nl.new_wire()
            continue
        m = _RE_ASSIGN.match(line)
        if m:
            lhs, rhs = m.groups()
            if rhs in ("1'b0", "1'b1"):
                kind = "const0" if rhs == "1'b0" else "const1"
                if lhs in wire_ids:
                    w = wire_ids[lhs]
                    nl.cells.append(Cell(kind, f"{kind}_{w}", (), (w,)))
                else:
                    (w,) = nl.add_cell(kind, f"{kind}_{nl.wire_count}", ())
                    if not bind_output(lhs, w):
                        raise HdlParseError(f"assign target {lhs!r} unknown")
            else:
                w = resolve(rhs)
                if not bind_output(lhs, w):
                    if lhs in wire_ids:
                        wire_ids[lhs] = w
                    else:
                        raise HdlParseError(f"assign target {lhs!r} unknown")
            continue
        m = _RE_INST.match(line)
        if m:
            prim, cname, conns = m.groups()
            if prim not in _HDL_KINDS:
                raise HdlParseError(f"unknown primitive {prim!r}")
            kind = _HDL_KINDS[prim]
            pin_map = dict(_RE_CONN.findall(conns))
            in_pins, out_pins = CELL_PINS[kind]
            ins = tuple(resolve(pin_map[p]) for p in in_pins)
            outs = tuple(resolve(pin_map[p]) for p in out_pins)
            nl.cells.append(Cell(kind, cname, ins, outs))
            continue
        raise HdlParseError(f"cannot parse line: {line!r}")
    for pname, wires in nl.outputs.items():
        if any(w < 0 for w in wires):
            raise HdlParseError(f"output port {pname} not fully assigned")
    return nl


def pack_cases(bits: np.ndarray) -> np.ndarray:
    """Pack a 0/1 vector of cases into uint64 words, case index = 64*w + lane."""
    m = bits.shape[0]
    words = (m + 63) // 64
    padded = np.zeros(words * 64, dtype=np.uint64)
    padded[:m] = bits.astype(np.uint64)
    lanes = np.arange(64, dtype=np.uint64)
    return np.bitwise_or.reduce(padded.reshape(words, 64) << lanes, axis=1)


@dataclass
class VerifyResult:
    ok: bool
    counterexample: dict | None = None

    def to_json(self) -> dict:
        return {"ok": self.ok, "counterexample": self.counterexample}


def _verify_chunk(nl: Netlist, n: int, lo: int, hi: int) -> VerifyResult:
    idx = np.arange(lo, hi, dtype=np.uint64)
    a = idx >> np.uint64(n)
    b = idx & np.uint64((1 << n) - 1)
    inputs = {
        "a": np.stack([pack_cases((a >> np.uint64(i)) & np.uint64(1)) for i in range(n)]),
        "b": np.stack([pack_cases((b >> np.uint64(i)) & np.uint64(1)) for i in range(n)]),
    }
    if "cin" in nl.inputs:
        inputs["cin"] = np.zeros((1, inputs["a"].shape[1]), dtype=np.uint64)
    got = simulate(nl, inputs)["p"]
    prod = a * b
    expect = np.stack(
        [pack_cases((prod >> np.uint64(i)) & np.uint64(1)) for i in range(2 * n)]
    )
    diff = got != expect
    if not diff.any():
        return VerifyResult(True)
    bad_words = np.nonzero(diff.any(axis=0))[0]
    w = int(bad_words[0])
    mism = np.bitwise_or.reduce(got[:, w] ^ expect[:, w])
    lane = int(np.nonzero((mism >> np.arange(64, dtype=np.uint64)) & np.uint64(1))[0][0])
    case = lo + 64 * w + lane
    av, bv = case >> n, case & ((1 << n) - 1)
    got_val = 0
    for i in range(2 * n):
        got_val |= int((got[i, w] >> np.uint64(lane)) & np.uint64(1)) << i
    return VerifyResult(
        False, {"a": int(av), "b": int(bv), "got": got_val, "expected": int(av * bv)}
    )


def verify_exhaustive(nl: Netlist, n: int, jobs: int = 1) -> VerifyResult:
    """Simulate every (a, b) pair; pass iff p == a*b for all 2^(2n) cases.

    The case space shards on word boundaries across ``jobs`` workers and the
    verdicts merge by logical AND; the reported counterexample is always the
    smallest failing case.
    """
    if n > 10:
        raise ValueError("exhaustive verification is limited to n <= 10")
    total = 1 << (2 * n)
    chunk = max(64, ((total // max(1, jobs)) + 63) // 64 * 64)
    ranges = [(lo, min(lo + chunk, total)) for lo in range(0, total, chunk)]
    if jobs > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda r: _verify_chunk(nl, n, *r), ranges))
    else:
        results = [_verify_chunk(nl, n, *r) for r in ranges]
    for res in results:
        if not res.ok:
            return res
    return VerifyResult(True)
