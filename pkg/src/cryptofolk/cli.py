"""Command line: analyze, compile, simulate, verify, attack-crypto.

Exit status 0 means success or a passed check, 1 a failed verification, 2 a
usage or input error.  Every command is deterministic given ``--seed``.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .adversaries import AdversarySpecError, parse_spec, suite_specs
from .bundle import BundleFormatError, parse_bundle, serialize_bundle
from .compiler import compile_graphical, compile_ne, compile_sp
from .crypto.hybrids import (
    ReadingAdversary,
    counter_distinguisher,
    ind_mult_experiment,
    pke_multi_hybrid_game,
    prf_hybrid,
    prf_ideal_experiment,
    prf_multi_instance_game,
    prf_real_experiment,
)
from .crypto.pke import PKE_KINDS, scheme_for
from .crypto.prf import PRF_KINDS
from .engine import measure_gain, resume_match, run_match
from .equilibrium import correlated_equilibrium, punishment_strategy
from .game import (
    GameFormatError,
    Polynomial,
    UnsupportedGameError,
    parse_graphical_game,
    parse_stage_game,
)

WORKERS_ENV = "CRYPTOFOLK_WORKERS"
CONTROLS = tuple(f"prf-{k}" for k in PRF_KINDS) + tuple(f"pke-{k}" for k in PKE_KINDS)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{message}\n{self.format_usage().rstrip()}")


def _frac(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _load_game(path: str):
    text = _read(path)
    first = next((ln.split()[0] for ln in text.splitlines() if ln.split() and not ln.startswith("#")), "")
    if first == "graphical":
        return parse_graphical_game(text)
    return parse_stage_game(text)


def _load_bundle(path: str):
    return parse_bundle(_read(path))


def cmd_analyze(args, out: TextIO) -> int:
    game = _load_game(args.game)
    g = game.to_stage_game() if hasattr(game, "to_stage_game") else game
    out.write(f"game {g.name} players {g.num_players} actions {' '.join(map(str, g.actions))}\n")
    out.write(f"a {_frac(g.max_payoff)} b {_frac(g.min_payoff)}\n")
    for j in range(g.num_players):
        d, v = punishment_strategy(g, j)
        out.write(f"minimax {j} {_frac(v)}\n")
        for s, p in d.probs.items():
            out.write(f"punish {j} {','.join(map(str, s)) or '-'} {_frac(p)}\n")
    for a, p in correlated_equilibrium(g).probs.items():
        out.write(f"ce {','.join(map(str, a))} {_frac(p)}\n")
    return 0


def cmd_compile(args, out: TextIO) -> int:
    game = _load_game(args.game)
    try:
        q = Polynomial.parse(args.q)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    kw = dict(prf=args.prf, pke=args.pke)
    if hasattr(game, "to_stage_game"):
        bundle = compile_graphical(game, q, subgame_perfect=args.subgame_perfect, **kw)
    elif args.subgame_perfect:
        bundle = compile_sp(game, q, **kw)
    else:
        bundle = compile_ne(game, q, **kw)
    text = serialize_bundle(bundle)
    if args.output == "-":
        out.write(text)
    else:
        Path(args.output).write_text(text)
    return 0


def _read_history(path: str, c: int) -> np.ndarray:
    rows = []
    for ln in _read(path).splitlines():
        ln = ln.split("#", 1)[0].strip()
        if ln:
            try:
                rows.append([int(x) for x in ln.split()])
            except ValueError:
                raise UsageError(f"bad history line {ln!r}") from None
    if any(len(r) != c for r in rows):
        raise UsageError(f"every history line needs {c} actions")
    return np.array(rows, dtype=np.int64).reshape(-1, c)


def _read_memories(path: str, c: int) -> list[bytes | None]:
    out: list[bytes | None] = []
    for ln in _read(path).splitlines():
        ln = ln.strip()
        if not ln:
            continue
        try:
            out.append(None if ln == "-" else bytes.fromhex(ln))
        except ValueError:
            raise UsageError(f"memory lines must be hex or '-': {ln!r}") from None
    if len(out) != c:
        raise UsageError(f"need one memory line per player ({c})")
    return out


def cmd_simulate(args, out: TextIO) -> int:
    from .adversaries import build_adversary
    from .engine import honest_machines

    bundle = _load_bundle(args.bundle)
    c = bundle.num_players
    machines = honest_machines(bundle)
    if args.deviator:
        if not 0 <= args.player < c:
            raise UsageError(f"no player {args.player}")
        machines[args.player] = build_adversary(args.deviator, bundle, args.player,
                                                white_box=args.white_box)
    history = _read_history(args.resume_history, c) if args.resume_history else None
    memories = _read_memories(args.memory, c) if args.memory else None
    if history is None and memories is None:
        tr = run_match(bundle, machines, args.horizon, args.seed, white_box=args.white_box)
    else:
        if history is None:
            history = np.zeros((0, c), dtype=np.int64)
        tr = resume_match(bundle, machines, history, memories, args.horizon, args.seed,
                          white_box=args.white_box)
    text = tr.to_text()
    if args.output == "-":
        out.write(text)
    else:
        Path(args.output).write_text(text)
    return 0


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def cmd_verify(args, out: TextIO) -> int:
    bundle = _load_bundle(args.bundle)
    if args.runs < 1:
        raise UsageError("--runs must be positive")
    if not 0 < args.beta < 1:
        raise UsageError("--beta must lie in (0, 1)")
    specs = sorted(args.spec) if args.spec else suite_specs(bundle)
    for s in specs:
        parse_spec(s)
    if bundle.variant != "SP":
        specs = [s for s in specs if s != "keythief"]
    players = range(bundle.num_players) if args.player is None else [args.player]
    jobs = [(s, i) for s in specs for i in players]

    def job(item):
        s, i = item
        return measure_gain(bundle, s, i, args.runs, args.beta, args.seed,
                            horizon=args.horizon, white_box=s == "keythief")

    with ThreadPoolExecutor(_workers()) as pool:
        results = list(pool.map(job, jobs))
    out.write("spec player gain radius bound verdict\n")
    for r in results:
        out.write(r.row() + "\n")
    failed = sum(not r.passed for r in results)
    out.write(f"summary {len(results) - failed}/{len(results)} passed\n")
    return 1 if failed else 0


def cmd_attack(args, out: TextIO) -> int:
    family, _, kind = args.control.partition("-")
    trials, seed = args.trials, args.seed
    if family == "prf":
        n, q = 8, 4
        adv = prf_multi_instance_game(kind, n, q, counter_distinguisher, trials, seed)
        t1 = prf_hybrid(kind, n, q, counter_distinguisher, 1, trials, seed)
        tq = prf_hybrid(kind, n, q, counter_distinguisher, q + 1, trials, seed)
        real = prf_real_experiment(kind, n, q, counter_distinguisher, trials, seed)
        ideal = prf_ideal_experiment(n, q, counter_distinguisher, trials, seed)
        out.write(f"control {args.control} n={n} q={q} trials={trials}\n")
        out.write(f"endpoint first_hybrid==real {'yes' if t1.digest == real.digest else 'no'}\n")
        out.write(f"endpoint last_hybrid==ideal {'yes' if tq.digest == ideal.digest else 'no'}\n")
        broken = adv.advantage > adv.radius
        out.write(f"counter-distinguisher advantage={adv.advantage:.6f} radius={adv.radius:.6f} "
                  f"{'DISTINGUISHED' if broken else 'indistinguishable'}\n")
        ok = t1.digest == real.digest and tq.digest == ideal.digest
    else:
        n, f, g = 4, 3, 2
        scheme = scheme_for(kind)
        adversary = ReadingAdversary()
        e1 = ind_mult_experiment(scheme, n, f, g, adversary, 1, trials, seed)
        e0 = ind_mult_experiment(scheme, n, f, g, adversary, 0, trials, seed)
        h11 = pke_multi_hybrid_game(scheme, n, f, g, adversary, (1, 1), trials, seed)
        hlast = pke_multi_hybrid_game(scheme, n, f, g, adversary, (g + 1, f), trials, seed)
        out.write(f"control {args.control} n={n} f={f} g={g} trials={trials}\n")
        out.write(f"endpoint (1,1)==IND-MULT_1 {'yes' if h11.digest == e1.digest else 'no'}\n")
        out.write(f"endpoint ({g + 1},{f})==IND-MULT_0 {'yes' if hlast.digest == e0.digest else 'no'}\n")
        advantage = abs(e1.mean - e0.mean)
        radius = e1.radius + e0.radius
        broken = advantage > radius
        out.write(f"reading-adversary advantage={advantage:.6f} radius={radius:.6f} "
                  f"{'DISTINGUISHED' if broken else 'indistinguishable'}\n")
        ok = h11.digest == e1.digest and hlast.digest == e0.digest
    return 1 if broken or not ok else 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cryptofolk", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="command")

    a = sub.add_parser("analyze", help="minimax values, punishments and a correlated equilibrium")
    a.add_argument("game")
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("compile", help="build a strategy bundle")
    c.add_argument("game")
    c.add_argument("-q", required=True, help="polynomial q(n), e.g. 'n' or '2n^2+1'")
    c.add_argument("--subgame-perfect", action="store_true")
    c.add_argument("-o", "--output", required=True, help="bundle path, or - for stdout")
    c.add_argument("--prf", choices=PRF_KINDS, default="reference")
    c.add_argument("--pke", choices=PKE_KINDS, default="reference")
    c.set_defaults(func=cmd_compile)

    s = sub.add_parser("simulate", help="play one match and print its transcript")
    s.add_argument("bundle")
    s.add_argument("--horizon", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--deviator", help="adversary spec for --player")
    s.add_argument("--player", type=int, default=0)
    s.add_argument("--resume-history", help="file with one line of actions per round")
    s.add_argument("--memory", help="file with one hex memory line (or -) per player")
    s.add_argument("--white-box", action="store_true", help="enable the memory-reading test hook")
    s.add_argument("-o", "--output", default="-")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="measure every suite adversary's gain")
    v.add_argument("bundle")
    v.add_argument("--runs", type=int, default=100)
    v.add_argument("--beta", type=float, default=0.01)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--horizon", type=int)
    v.add_argument("--player", type=int)
    v.add_argument("--spec", action="append", help="restrict to these adversaries (repeatable)")
    v.set_defaults(func=cmd_verify)

    k = sub.add_parser("attack-crypto", help="hybrid harness with positive and negative controls")
    k.add_argument("--control", required=True, choices=CONTROLS)
    k.add_argument("--trials", type=int, default=1000)
    k.add_argument("--seed", type=int, default=0)
    k.set_defaults(func=cmd_attack)
    return p


def run_cli(argv: Sequence[str] | None = None, stdout: TextIO | None = None,
            stderr: TextIO | None = None) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        err.write(f"cryptofolk: error: {exc}\n")
        return 2
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 2
    if not getattr(args, "func", None):
        err.write(parser.format_usage())
        return 2
    try:
        return args.func(args, out)
    except (UsageError, GameFormatError, BundleFormatError, AdversarySpecError,
            UnsupportedGameError, ValueError) as exc:
        err.write(f"cryptofolk: error: {exc}\n")
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
