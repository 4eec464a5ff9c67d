"""Experiment configuration: a small block-structured text format with line-numbered errors.

    # comment
    omega = 1.0
    r1 = 1.0
    grid { L = 2.0; Nx = 32 }
    bump { center = [0, 0, 0]; radius = 0.8; amp_re = -0.1; amp_im = 0 }

Statements end at ';' or a newline. Values are numbers, quoted strings, bare
words or (nested) lists. `bump` and `perturbation` blocks may repeat.
"""
from __future__ import annotations

import hashlib
import math
import os
import re
from dataclasses import dataclass, field

from ._accel import worker_count
from .errors import ConfigError
from .forward import SolverConfig, SphereQuadrature
from .medium import Bump, Grid3

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<str>"[^"\n]*")
  | (?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?(?![A-Za-z_]))
  | (?P<word>[A-Za-z_][A-Za-z0-9_.\-]*)
  | (?P<punct>[{}\[\]=;,])
""", re.VERBOSE)


@dataclass
class Entry:
    key: str
    value: object       # scalar, list or Block
    line: int


@dataclass
class Block:
    name: str
    entries: list = field(default_factory=list)
    line: int = 0


def _tokenize(text: str):
    pos, line = 0, 1
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ConfigError(f"line {line}: unexpected character {text[pos]!r}")
        kind = m.lastgroup
        tok = m.group()
        if kind == "nl":
            out.append(("sep", "\n", line))
            line += 1
        elif kind == "punct" and tok == ";":
            out.append(("sep", ";", line))
        elif kind not in ("ws", "comment"):
            out.append((kind, tok, line))
        pos = m.end()
    out.append(("eof", "", line))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def skip_sep(self):
        while self.peek()[0] == "sep":
            self.i += 1

    def block(self, name: str, line: int, closing: bool) -> Block:
        blk = Block(name, [], line)
        while True:
            self.skip_sep()
            kind, tok, ln = self.peek()
            if kind == "eof":
                if closing:
                    raise ConfigError(f"line {line}: block '{name}' is not closed")
                return blk
            if kind == "punct" and tok == "}":
                if not closing:
                    raise ConfigError(f"line {ln}: unmatched '}}'")
                self.take()
                return blk
            if kind != "word":
                raise ConfigError(f"line {ln}: expected a key, found {tok!r}")
            self.take()
            k2, t2, l2 = self.take()
            if k2 == "punct" and t2 == "{":
                blk.entries.append(Entry(tok, self.block(tok, ln, True), ln))
            elif k2 == "punct" and t2 == "=":
                blk.entries.append(Entry(tok, self.value(), ln))
                k3, t3, l3 = self.peek()
                if not (k3 in ("sep", "eof") or (k3 == "punct" and t3 == "}")):
                    raise ConfigError(f"line {l3}: expected ';' or newline after value of '{tok}'")
            else:
                raise ConfigError(f"line {l2}: expected '=' or '{{' after '{tok}'")

    def value(self):
        kind, tok, ln = self.take()
        if kind == "num":
            return float(tok) if any(c in tok for c in ".eE") else int(tok)
        if kind == "str":
            return tok[1:-1]
        if kind == "word":
            return {"true": True, "false": False}.get(tok, tok)
        if kind == "punct" and tok == "[":
            items = []
            while True:
                while self.peek()[0] == "sep" and self.peek()[1] == "\n":
                    self.take()
                if self.peek()[:2] == ("punct", "]"):
                    self.take()
                    return items
                items.append(self.value())
                while self.peek()[0] == "sep" and self.peek()[1] == "\n":
                    self.take()
                k2, t2, l2 = self.take()
                if (k2, t2) == ("punct", "]"):
                    return items
                if (k2, t2) != ("punct", ","):
                    raise ConfigError(f"line {l2}: expected ',' or ']' in list")
        raise ConfigError(f"line {ln}: expected a value, found {tok!r}")


def parse(text: str) -> Block:
    """Parse config text into a Block tree (no schema applied)."""
    return _Parser(text).block("<root>", 0, False)


# ---------------------------------------------------------------- schema

def _num(v, key, line, positive=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"line {line}: '{key}' must be a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"line {line}: '{key}' must be an integer, got {v!r}")
    if not math.isfinite(v) or (positive and not v > 0):
        raise ConfigError(f"line {line}: '{key}' must be {'positive' if positive else 'finite'}, got {v!r}")
    return int(v) if integer else float(v)


def _vec3(v, key, line):
    if not isinstance(v, list) or len(v) != 3:
        raise ConfigError(f"line {line}: '{key}' must be a list of three numbers")
    return tuple(_num(x, key, line) for x in v)


def _numlist(v, key, line, positive=False):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"line {line}: '{key}' must be a non-empty list of numbers")
    return tuple(_num(x, key, line, positive) for x in v)


def _fields(blk: Block, schema: dict, repeat=()):
    """Check keys against schema {key: converter}; return {key: value} and {key: [Block...]}."""
    seen, blocks = {}, {k: [] for k in repeat}
    for e in blk.entries:
        if e.key in repeat:
            if not isinstance(e.value, Block):
                raise ConfigError(f"line {e.line}: '{e.key}' must be a block")
            blocks[e.key].append(e.value)
            continue
        if e.key not in schema:
            where = "" if blk.name == "<root>" else f" in block '{blk.name}'"
            raise ConfigError(f"line {e.line}: unknown key '{e.key}'{where}")
        if e.key in seen:
            raise ConfigError(f"line {e.line}: duplicate key '{e.key}'")
        conv = schema[e.key]
        if conv is Block:
            if not isinstance(e.value, Block):
                raise ConfigError(f"line {e.line}: '{e.key}' must be a block")
            seen[e.key] = e.value
        else:
            if isinstance(e.value, Block):
                raise ConfigError(f"line {e.line}: '{e.key}' must be a value, not a block")
            seen[e.key] = conv(e.value, e.key, e.line)
    return seen, blocks


def _pos(v, k, ln):
    return _num(v, k, ln, positive=True)


def _posint(v, k, ln):
    return _num(v, k, ln, positive=True, integer=True)


def _str(v, k, ln):
    if not isinstance(v, str):
        raise ConfigError(f"line {ln}: '{k}' must be a string")
    return v


def _bump(blk: Block) -> Bump:
    f, _ = _fields(blk, {"center": _vec3, "radius": _pos, "amp_re": _num, "amp_im": _num,
                         "order": _posint})
    for req in ("center", "radius"):
        if req not in f:
            raise ConfigError(f"line {blk.line}: block '{blk.name}' needs '{req}'")
    try:
        return Bump(f["center"], f["radius"], complex(f.get("amp_re", 0.0), f.get("amp_im", 0.0)),
                    f.get("order"))
    except ConfigError as exc:
        raise ConfigError(f"line {blk.line}: {exc}") from None


def _quad(blk: Block | None, default: SphereQuadrature) -> SphereQuadrature:
    if blk is None:
        return default
    f, _ = _fields(blk, {"r": _pos, "n_theta": _posint, "n_phi": _posint})
    return SphereQuadrature(f.get("r", default.r), f.get("n_theta", default.n_theta),
                            f.get("n_phi", default.n_phi))


@dataclass(frozen=True)
class VerifySettings:
    p: tuple = (1.0, 0.5, 0.0)
    rho_identity: float = 4.0
    rho_chain: tuple = (2.0, 4.0, 8.0)
    rho_decay: tuple = (2.0, 4.0, 8.0, 16.0)
    rho_alessandrini: float = 2.0
    samples: int = 10
    r2: float = 1.5
    identity_tol: float = 1e-6
    alessandrini_spread: float = 3.0
    slope_tol: float = 0.25


@dataclass(frozen=True)
class RunConfig:
    grid: Grid3
    omega: float = 1.0
    r1: float = 1.0
    m: int = 6
    norm_budget: float | None = None
    method: str = "real"
    workers: int = 1
    rho_min: float | None = None
    bumps: tuple = ()
    perturbation: tuple = ()
    solver: SolverConfig = SolverConfig()
    near: SphereQuadrature = SphereQuadrature(1.25, 16, 32)
    far: SphereQuadrature = SphereQuadrature(1.0, 8, 16)
    alphas: tuple = (0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    tau: float = 0.5
    r2: float = 2.0
    eps: float = 1.0
    pair_id: str = "pair"
    alpha: float = 1.0
    rho: tuple = (4.0,)
    p: tuple = ((1.0, 0.0, 0.0),)
    phantom1: str | None = None
    phantom2: str | None = None
    verify: VerifySettings = VerifySettings()

    def effective_workers(self) -> int:
        return worker_count(self.workers)

    def canonical(self) -> str:
        """The effective configuration (defaults filled in) in the input syntax."""
        f = _fmt
        out = [f"omega = {f(self.omega)}", f"r1 = {f(self.r1)}", f"m = {self.m}"]
        if self.norm_budget is not None:
            out.append(f"norm_budget = {f(self.norm_budget)}")
        out += [f'method = "{self.method}"', f"workers = {self.workers}"]
        if self.rho_min is not None:
            out.append(f"rho_min = {f(self.rho_min)}")
        out.append(f"grid {{ L = {f(self.grid.L)}; Nx = {self.grid.Nx} }}")
        for name, bumps in (("bump", self.bumps), ("perturbation", self.perturbation)):
            for b in bumps:
                s = (f"{name} {{ center = {f(list(b.center))}; radius = {f(b.radius)}; "
                     f"amp_re = {f(b.amplitude.real)}; amp_im = {f(b.amplitude.imag)}")
                if b.order is not None:
                    s += f"; order = {b.order}"
                out.append(s + " }")
        sv = self.solver
        out.append(f"solver {{ tol = {f(sv.tol)}; maxiter = {sv.maxiter}; restart = {sv.restart} }}")
        for name, q in (("near", self.near), ("far", self.far)):
            out.append(f"{name} {{ r = {f(q.r)}; n_theta = {q.n_theta}; n_phi = {q.n_phi} }}")
        out.append(f"sweep {{ alphas = {f(list(self.alphas))}; tau = {f(self.tau)}; r2 = {f(self.r2)}; "
                   f'eps = {f(self.eps)}; pair_id = "{self.pair_id}" }}')
        out.append(f"reconstruct {{ alpha = {f(self.alpha)} }}")
        out.append(f"faddeev {{ rho = {f(list(self.rho))}; p = {f([list(q) for q in self.p])} }}")
        vs = self.verify
        out.append("verify { " + "; ".join(
            f"{k} = {f(list(v) if isinstance(v, tuple) else v)}" for k, v in vs.__dict__.items()) + " }")
        for k in ("phantom1", "phantom2"):
            if getattr(self, k) is not None:
                out.append(f'{k} = "{getattr(self, k)}"')
        return "\n".join(out) + "\n"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def load(text: str) -> RunConfig:
    root = parse(text)
    schema = {"omega": _pos, "r1": _pos, "m": _posint, "norm_budget": _pos, "method": _str,
            "workers": _posint, "rho_min": _pos, "phantom1": _str, "phantom2": _str,
            "grid": Block, "solver": Block, "near": Block, "far": Block, "sweep": Block,
            "reconstruct": Block, "faddeev": Block, "verify": Block}
    top, rep = _fields(root, schema, repeat=("bump", "perturbation"))
    kw = {k: top[k] for k in ("omega", "r1", "m", "norm_budget", "method", "workers", "rho_min",
                              "phantom1", "phantom2") if k in top}
    if kw.get("method", "real") not in ("real", "spectral"):
        raise ConfigError(f"method must be 'real' or 'spectral', got {kw['method']!r}")
    r1 = kw.get("r1", 1.0)
    if "grid" in top:
        g, _ = _fields(top["grid"], {"L": _pos, "Nx": _posint})
        try:
            grid = Grid3(g.get("L", 2.0 * r1), g.get("Nx", 32))
        except ConfigError as exc:
            raise ConfigError(f"line {top['grid'].line}: {exc}") from None
    else:
        grid = Grid3(2.0 * r1, 32)
    kw["grid"] = grid
    kw["bumps"] = tuple(_bump(b) for b in rep["bump"])
    kw["perturbation"] = tuple(_bump(b) for b in rep["perturbation"])
    if "solver" in top:
        s, _ = _fields(top["solver"], {"tol": _pos, "maxiter": _posint, "restart": _posint})
        kw["solver"] = SolverConfig(**s)
    kw["near"] = _quad(top.get("near"), RunConfig.near)
    kw["far"] = _quad(top.get("far"), RunConfig.far)
    if "sweep" in top:
        s, _ = _fields(top["sweep"], {"alphas": lambda v, k, ln: _numlist(v, k, ln), "tau": _pos,
                                      "r2": _pos, "eps": _pos, "pair_id": _str})
        kw.update(s)
    if "reconstruct" in top:
        s, _ = _fields(top["reconstruct"], {"alpha": _num})
        kw.update(s)
    if "faddeev" in top:
        s, _ = _fields(top["faddeev"], {"rho": lambda v, k, ln: _numlist(v, k, ln, True),
                                        "p": _plist})
        kw.update(s)
    if "verify" in top:
        s, _ = _fields(top["verify"], {
            "p": _vec3, "rho_identity": _pos, "rho_chain": lambda v, k, ln: _numlist(v, k, ln, True),
            "rho_decay": lambda v, k, ln: _numlist(v, k, ln, True), "rho_alessandrini": _pos,
            "samples": _posint, "r2": _pos, "identity_tol": _pos, "alessandrini_spread": _pos,
            "slope_tol": _pos})
        kw["verify"] = VerifySettings(**s)
    return RunConfig(**kw)


def _plist(v, key, line):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"line {line}: '{key}' must be a list of 3-vectors")
    if all(isinstance(x, (int, float)) for x in v):
        return (_vec3(v, key, line),)
    return tuple(_vec3(x, key, line) for x in v)


def load_file(path: str | os.PathLike) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        return load(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
