"""Deterministic synthetic corpora for the evaluation suites.

Two generators live here:

* :func:`vocab_mismatch_suite` builds repositories whose target blocks are
  generic control logic (clock, reset, state) while the surrounding module
  and its datapath carry the descriptive vocabulary. Queries name the
  module's purpose and describe the control behaviour generically, so only
  containment links the query to its answer.
* :func:`debug_cases` builds small hierarchical designs, each with one
  known faulty driver block and an observed faulty signal.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from ..graph.model import block_id, signal_id
from ..retrieval import Level
from .benchmark import BenchmarkQuery

# module words per module; four repositories of six
_THEMES: list[list[tuple[str, ...]]] = [
    [("division", "square", "root"), ("floating", "point", "multiply"),
     ("barrel", "shifter"), ("leading", "zero", "count"), ("saturating", "adder"),
     ("fixed", "point", "scale")],
    [("uart", "transmit"), ("spi", "master"), ("i2c", "slave"), ("ethernet", "mac"),
     ("pcie", "link"), ("usb", "endpoint")],
    [("instruction", "decode"), ("branch", "predictor"), ("register", "rename"),
     ("load", "store", "queue"), ("cache", "tag"), ("tlb", "lookup")],
    [("aes", "round"), ("sha", "digest"), ("crc", "checksum"), ("parity", "encoder"),
     ("hamming", "corrector"), ("lfsr", "scrambler")],
]
REPO_LABELS = ["arith", "periph", "cpu", "crypto"]


@dataclass(frozen=True)
class _Control:
    phrase: str
    regs: tuple[tuple[str, int], ...]  # name, width
    inputs: tuple[tuple[str, int], ...]
    body: str


_CONTROLS = [
    _Control("count increment when enable is set", (("count", 8),), (("enable", 1),),
             "if (rst) count <= 8'd0;\n    else if (enable) count <= count + 8'd1;"),
    _Control("next state register update", (("state", 2),), (("next_state", 2),),
             "if (rst) state <= 2'd0;\n    else state <= next_state;"),
    _Control("ready flag from valid and busy", (("ready", 1),), (("valid", 1), ("busy", 1)),
             "if (rst) ready <= 1'b0;\n    else ready <= valid & ~busy;"),
    _Control("stage valid bit tracking", (("stage_valid", 1),), (("in_valid", 1),),
             "if (rst) stage_valid <= 1'b0;\n    else stage_valid <= in_valid;"),
    _Control("timer clear and advance", (("timer", 16),), (("clear", 1),),
             "if (rst) timer <= 16'd0;\n    else if (clear) timer <= 16'd0;\n"
             "    else timer <= timer + 16'd1;"),
    _Control("hold value on load", (("hold", 1),), (("load", 1), ("data_bit", 1)),
             "if (rst) hold <= 1'b0;\n    else if (load) hold <= data_bit;"),
]

CONTROL_BLOCK_ORDINAL = 1
# unrelated sibling modules per debugging repository
AUX_MODULES = 3


def _decl(direction: str, name: str, width: int) -> str:
    rng = f" [{width - 1}:0]" if width > 1 else ""
    return f"{direction}{rng} {name}"


def _module_text(name: str, words: tuple[str, ...], control: _Control) -> str:
    stem = "_".join(words)
    a, b = f"{words[0]}_operand", f"{words[-1]}_operand"
    res, flag = f"{stem}_result", f"{stem}_flag"
    ports = [_decl("input", "clk", 1), _decl("input", "rst", 1)]
    ports += [_decl("input", n, w) for n, w in control.inputs]
    ports += [_decl("input", a, 16), _decl("input", b, 16)]
    ports += [_decl("output reg", n, w) for n, w in control.regs]
    ports += [_decl("output", res, 16), _decl("output", flag, 1)]
    port_text = ",\n  ".join(ports)
    return (
        f"module {name} (\n  {port_text}\n);\n"
        f"  assign {res} = {a} + {b};\n"
        f"  always @(posedge clk) begin\n    {control.body}\n  end\n"
        f"  assign {flag} = {res}[15] ^ {a}[0];\n"
        "endmodule\n"
    )


@dataclass(frozen=True)
class SyntheticSuite:
    files: dict[str, str]  # relative path -> source
    queries: list[BenchmarkQuery]

    def write(self, root: str | os.PathLike[str]) -> None:
        for rel, text in sorted(self.files.items()):
            path = Path(root, rel)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")


def vocab_mismatch_suite() -> SyntheticSuite:
    """24 block-level queries over four repositories of six modules each."""
    files: dict[str, str] = {}
    queries: list[BenchmarkQuery] = []
    for r, (repo, themes) in enumerate(zip(REPO_LABELS, _THEMES)):
        for m, words in enumerate(themes):
            # rotate so each repository pairs themes with different control kinds
            control = _CONTROLS[(m + r) % len(_CONTROLS)]
            name = "_".join(words)
            rel = f"{repo}/{name}.v"
            files[rel] = _module_text(name, words, control)
            target = block_id(rel, f"{name}.always", CONTROL_BLOCK_ORDINAL)
            text = f"{control.phrase} in the {' '.join(words)} module"
            queries.append(BenchmarkQuery(f"{repo}-{m:02d}", Level.BLOCK, text,
                                          frozenset({target}), repo))
    return SyntheticSuite(files, queries)


# -- debugging fixtures ---------------------------------------------------------


@dataclass(frozen=True)
class DebugCase:
    name: str
    files: dict[str, str]
    faulty_signal: str
    faulty_block: str

    def write(self, root: str | os.PathLike[str]) -> None:
        SyntheticSuite(self.files, []).write(root)


def _peripherals(prefix: str, count: int) -> dict[str, str]:
    """Unrelated sibling modules that pad the repository with blocks."""
    out = {}
    for i in range(count):
        name = f"{prefix}_aux{i}"
        out[f"{name}.v"] = (
            f"module {name} (input clk, input rst, input [7:0] din, output reg [7:0] acc,\n"
            f"  output [7:0] mirror, output parity);\n"
            f"  always @(posedge clk) begin\n"
            f"    if (rst) acc <= 8'd0;\n    else acc <= acc + din;\n  end\n"
            f"  assign mirror = {{acc[0], acc[1], acc[2], acc[3], acc[4], acc[5], acc[6], acc[7]}};\n"
            f"  assign parity = ^acc;\n"
            "endmodule\n"
        )
    return out


def _aux_instances(prefix: str, count: int) -> str:
    return "".join(
        f"  wire [7:0] aux_acc{i}, aux_mirror{i};\n  wire aux_parity{i};\n"
        f"  {prefix}_aux{i} u_aux{i} (.clk(clk), .rst(rst), .din(din), .acc(aux_acc{i}),\n"
        f"    .mirror(aux_mirror{i}), .parity(aux_parity{i}));\n"
        for i in range(count)
    )


def _case_pipeline(idx: int, stages: int, faulty_stage: int, observe_output: bool
                   ) -> DebugCase:
    """Register pipeline with one wrong stage update.

    The faulty signal is the stage register itself or, when the last stage
    is faulty and ``observe_output`` is set, the output assigned from it.
    """
    prefix = f"pipe{idx}"
    top = f"{prefix}_top"
    lines = [f"module {top} (input clk, input rst, input [7:0] din, output [7:0] dout);"]
    for s in range(stages):
        lines.append(f"  reg [7:0] stage{s};")
    lines.append(_aux_instances(prefix, AUX_MODULES).rstrip("\n"))
    for s in range(stages):
        src = "din" if s == 0 else f"stage{s - 1}"
        op = "-" if s == faulty_stage else "+"
        lines.append(f"  always @(posedge clk) begin\n    if (rst) stage{s} <= 8'd0;\n"
                     f"    else stage{s} <= {src} {op} 8'd{s + 1};\n  end")
    lines.append(f"  assign dout = stage{stages - 1};")
    lines.append("endmodule")
    rel = f"{top}.v"
    files = {rel: "\n".join(lines) + "\n", **_peripherals(prefix, AUX_MODULES)}
    last = faulty_stage == stages - 1
    name = "dout" if observe_output and last else f"stage{faulty_stage}"
    faulty = block_id(rel, f"{top}.always", AUX_MODULES + faulty_stage)
    return DebugCase(f"pipeline{idx}", files, signal_id(rel, top, name), faulty)


def _case_mux(idx: int, observe_output: bool) -> DebugCase:
    """Combinational select tree with a wrongly wired arm."""
    prefix = f"mux{idx}"
    top = f"{prefix}_top"
    rel = f"{top}.v"
    text = (
        f"module {top} (input clk, input rst, input [1:0] sel, input [7:0] din,\n"
        f"  input [7:0] a, input [7:0] b, input [7:0] c, output [7:0] y, output reg [7:0] y_q);\n"
        "  reg [7:0] picked;\n"
        + _aux_instances(prefix, AUX_MODULES) +
        "  always @(*) begin\n"
        "    case (sel)\n"
        "      2'd0: picked = a;\n"
        "      2'd1: picked = a;\n"
        "      default: picked = c;\n"
        "    endcase\n"
        "  end\n"
        "  assign y = picked;\n"
        "  always @(posedge clk) begin\n"
        "    if (rst) y_q <= 8'd0;\n    else y_q <= y;\n  end\n"
        "endmodule\n"
    )
    files = {rel: text, **_peripherals(prefix, AUX_MODULES)}
    faulty = block_id(rel, f"{top}.always", AUX_MODULES)
    observed = "y" if observe_output else "picked"
    return DebugCase(f"mux{idx}", files, signal_id(rel, top, observed), faulty)


def _case_fsm(idx: int, observe_output: bool) -> DebugCase:
    """Two-process FSM whose next-state logic has a wrong transition."""
    prefix = f"fsm{idx}"
    top = f"{prefix}_top"
    rel = f"{top}.v"
    text = (
        f"module {top} (input clk, input rst, input start, input done, input [7:0] din,\n"
        "  output busy);\n"
        "  reg [1:0] state, next_state;\n"
        + _aux_instances(prefix, AUX_MODULES) +
        "  always @(posedge clk) begin\n"
        "    if (rst) state <= 2'd0;\n    else state <= next_state;\n  end\n"
        "  always @(*) begin\n"
        "    next_state = state;\n"
        "    case (state)\n"
        "      2'd0: if (start) next_state = 2'd1;\n"
        "      2'd1: if (done) next_state = 2'd1;\n"
        "      default: next_state = 2'd0;\n"
        "    endcase\n"
        "  end\n"
        "  assign busy = state == 2'd1;\n"
        "endmodule\n"
    )
    files = {rel: text, **_peripherals(prefix, AUX_MODULES)}
    faulty = block_id(rel, f"{top}.always", AUX_MODULES + 1)
    observed = "next_state" if not observe_output else "state"
    return DebugCase(f"fsm{idx}", files, signal_id(rel, top, observed), faulty)


def _case_assign_chain(idx: int) -> DebugCase:
    """Faulty output driven by one assign block through a single TEMP."""
    prefix = f"chain{idx}"
    top = f"{prefix}_top"
    rel = f"{top}.v"
    text = (
        f"module {top} (input clk, input rst, input [7:0] din, input [7:0] p,\n"
        "  input [7:0] q, output [7:0] sum, output [7:0] diff);\n"
        + _aux_instances(prefix, AUX_MODULES) +
        "  assign sum = p & q;\n"
        "  assign diff = p - q;\n"
        "endmodule\n"
    )
    files = {rel: text, **_peripherals(prefix, AUX_MODULES)}
    faulty = block_id(rel, f"{top}.assign", AUX_MODULES)
    return DebugCase(f"chain{idx}", files, signal_id(rel, top, "sum"), faulty)


def debug_cases() -> list[DebugCase]:
    """Ten hierarchical designs, each with a known faulty driver block."""
    return [
        _case_pipeline(0, 4, 1, False),
        _case_pipeline(1, 5, 4, True),
        _case_pipeline(2, 3, 2, True),
        _case_pipeline(3, 6, 4, False),
        _case_mux(4, True),
        _case_mux(5, False),
        _case_fsm(6, False),
        _case_fsm(7, True),
        _case_assign_chain(8),
        _case_assign_chain(9),
    ]
