"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion k: PASS|FAIL (...)`` line and the
session summary repeats them.  They are slow (tens of minutes in total).
"""
from __future__ import annotations

import io
import itertools
import math
import time
from fractions import Fraction
from functools import lru_cache

import numpy as np
import pytest

from conftest import Q_N, record_criterion, small_games
from cryptofolk.adversaries import (
    build_adversary,
    hybrid_punishment_payoff,
    hybrid_transcript,
    suite_specs,
)
from cryptofolk.bundle import serialize_bundle, validate_bundle
from cryptofolk.calibration import (
    build_sequence,
    discounted_payoff_eventually_periodic,
    sequence_length,
    discount_denominator,
    truncation_horizon,
)
from cryptofolk.cli import run_cli
from cryptofolk.compiler import compile_graphical, compile_ne, compile_sp
from cryptofolk.crypto import scheme_for
from cryptofolk.crypto.hybrids import (
    CoinAdversary,
    counter_distinguisher,
    ind_mult_experiment,
    pke_multi_hybrid_game,
    prf_hybrid,
    prf_ideal_experiment,
    prf_multi_instance_game,
    prf_real_experiment,
)
from cryptofolk.engine import honest_machines, measure_gain, parse_transcript, run_match
from cryptofolk.equilibrium import JointDistribution, correlated_equilibrium
from cryptofolk.game import StageGame, random_stage_game
from cryptofolk.machines import MachineMemory, honest_step_sp
from test_compiler import _random_graphical

pytestmark = pytest.mark.slow

BETA = 0.01


def _cli(*argv: str) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    code = run_cli(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


# -- criterion 1: exact bound checks against an integer oracle ---------------------------

# e < S_K + (K+1)/(K * K!) where S_K = sum_{k<K} 1/k!, so this is strictly below 1/e.
_K = 14
INV_E_LOWER = 1 / (sum(Fraction(1, math.factorial(k)) for k in range(_K))
                   + Fraction(_K + 1, _K * math.factorial(_K)))


def _periodic_value(utils: list[int], f: int) -> tuple[int, int]:
    """Payoff of ``utils`` repeated forever at delta = 1/f, as an integer ratio.

    With x = (f-1)/f the value is N / (f^L - (f-1)^L) where
    N = sum_t u_t (f-1)^t f^(L-1-t), accumulated right to left.
    """
    acc, power = 0, 1
    for u in reversed(utils):
        acc = u * power + (f - 1) * acc
        power *= f
    length = len(utils)
    return acc, f**length - (f - 1) ** length


@lru_cache(maxsize=None)
def _contracts_below_inv_e(f: int) -> bool:
    # ((f-1)/f)^f <= INV_E_LOWER, by integer cross-multiplication
    return (f - 1) ** f * INV_E_LOWER.denominator <= INV_E_LOWER.numerator * f**f


def _random_sigma(rng: np.random.Generator, g: StageGame) -> JointDistribution:
    weights = rng.integers(0, 5, size=g.num_profiles)
    weights[int(rng.integers(0, g.num_profiles))] += 1
    total = int(weights.sum())
    return JointDistribution({g.profile_at(k): Fraction(int(w), total)
                              for k, w in enumerate(weights) if w})


def _bound_violations(g: StageGame, sigma: JointDistribution, q: int) -> list[str]:
    n, c = g.size, g.num_players
    a, b = int(g.max_payoff), int(g.min_payoff)
    r = a - b
    w = (r * q + 1) * n**c
    f = r * w * q
    assert w == sequence_length(r, q, n, c) and f == discount_denominator(r, w, q)
    profiles = [p for p in sorted(sigma.probs) for _ in range(int(w * sigma.probs[p]))]
    assert list(build_sequence(g, sigma, w).profiles) == profiles
    horizon = n * f
    assert truncation_horizon(g, Fraction(1, f))[0] == horizon
    shift = horizon % len(profiles)
    bad = []
    if not _contracts_below_inv_e(f):
        bad.append(f"x^f > 1/e at f={f}")
    for i in range(c):
        utils = [int(g.utility_of(i, p)) for p in profiles]
        target = sum(pr * int(g.utility_of(i, p)) for p, pr in sigma.probs.items()) - Fraction(1, q)
        if Fraction(sum(utils), len(utils)) < target:
            bad.append(f"average player {i}")
        num, den = _periodic_value(utils, f)
        if num * target.denominator < target.numerator * den:
            bad.append(f"discounted player {i}")
        # infinite minus truncated = x^T * (value of the play from round T onward)
        tail_num, tail_den = _periodic_value(utils[shift:] + utils[:shift], f)
        if tail_num > a * tail_den:
            bad.append(f"truncation player {i}")
        if abs(tail_num) > max(a, -b) * tail_den:
            bad.append(f"truncation magnitude player {i}")
    return bad


def test_criterion1_exact_bounds():
    start = time.monotonic()
    rng = np.random.default_rng(2024)
    assert float(INV_E_LOWER) < math.exp(-1)
    checked, violations = 0, []
    for n, a, b in itertools.product((2, 3), (1, 2), (-2, -1)):
        for k in range(25):
            g = random_stage_game(rng, (n,) * 3, b, a, f"l{n}{a}{b}{k}")
            assert (g.max_payoff, g.min_payoff) == (a, b)
            sigma = correlated_equilibrium(g) if k % 2 == 0 else _random_sigma(rng, g)
            violations += _bound_violations(g, sigma, n)
            checked += 1
            if k < 2 and n == 2:
                f = discount_denominator(a - b, sequence_length(a - b, n, n, 3), n)
                seq = build_sequence(g, sigma, sequence_length(a - b, n, n, 3)).profiles
                lib = discounted_payoff_eventually_periodic([], seq, Fraction(1, f), g)
                ours = [Fraction(*_periodic_value([int(g.utility_of(i, p)) for p in seq], f))
                        for i in range(3)]
                assert list(lib) == ours
    elapsed = time.monotonic() - start
    passed = checked >= 200 and not violations and elapsed <= 300
    record_criterion(1, passed, f"{checked} games, {len(violations)} violations, {elapsed:.0f}s")
    assert passed, violations[:10]


# -- criterion 2: NE gain suite ----------------------------------------------------------


def test_criterion2_ne_gain_suite():
    start = time.monotonic()
    pool = [compile_ne(g, Q_N) for g in small_games(60, seed=7)]
    bundles = sorted(pool, key=lambda b: b.params.horizon)[:20]
    failures, rows, worst = [], 0, Fraction(-10)
    for k, b in enumerate(bundles):
        player = k % 3
        for spec in suite_specs(b):
            est = measure_gain(b, spec, player, runs=10_000, beta=BETA, seed=k)
            rows += 1
            worst = max(worst, est.gain)
            if not est.passed:
                failures.append(f"bundle {k}: {est.row()}")
    elapsed = time.monotonic() - start
    passed = not failures and len(bundles) >= 20 and elapsed <= 1800
    record_criterion(2, passed, f"{len(bundles)} bundles, {rows} rows, {len(failures)} failures, "
                                f"max gain {float(worst):.4f}, {elapsed:.0f}s")
    assert passed, failures[:10]


# -- criterion 3: SP resume grid, memory fuzz, block shape -------------------------------


def _memory_profiles(rng, snapshot) -> dict[str, list[bytes | None]]:
    return {
        "coherent": list(snapshot),
        "corrupted": [rng.bytes(int(rng.integers(1, 48))) for _ in snapshot],
        "stripped": [MachineMemory.from_bytes(m).stripped().to_bytes() for m in snapshot],
    }


def _resume_rounds(b, t0: int) -> list[int]:
    m, ell = b.m, b.ell
    return [max(t0 - 1, 1), t0 + 1, t0 + 1 + m // 2, t0 + m, t0 + m + 1,
            t0 + m + ell // 2, t0 + m + ell, t0 + m + ell + 2, t0 + m + ell + 9]


def _block_shape_ok(b, player: int) -> bool:
    block = b.m + b.ell
    machines = honest_machines(b)
    machines[player] = build_adversary("phase1:0", b, player)
    tr = run_match(b, machines, horizon=3 * (block + 1), seed=1)
    runs = [(k, len(list(grp))) for k, grp in itertools.groupby(tr.phases.tolist())]
    return all(length == (1 if k == 1 else b.m if k == 2 else b.ell)
               for k, length in runs[:-1])


def _returns_to_offset(b, player: int, t0: int) -> bool:
    block = b.m + b.ell
    machines = honest_machines(b)
    machines[player] = build_adversary(f"once:{t0}", b, player)
    tr = run_match(b, machines, horizon=t0 + 1 + block + 40, seed=2)
    after = t0 + 1 + block
    return bool((tr.actions[after:] == b.seq_window(t0, 40)).all()
                and (tr.phases[after:] == 1).all())


def test_criterion3_subgame_perfection():
    start = time.monotonic()
    pool = [compile_sp(g, Q_N) for g in small_games(40, seed=11)]
    bundles = [b for b in pool if b.params.r == 1][:10]
    rng = np.random.default_rng(3)
    failures, points, rows = [], 0, 0
    for k, b in enumerate(bundles):
        period = len(b.sequence)
        target = k % 3
        for source, t0 in enumerate((3, period + 5)):
            deviator = (target + 1 + source) % 3
            machines = honest_machines(b)
            machines[deviator] = build_adversary(f"once:{t0}", b, deviator)
            cuts = _resume_rounds(b, t0)
            tr = run_match(b, machines, horizon=max(cuts) + 1, seed=100 + k, snapshot_rounds=cuts)
            for cut in cuts:
                times = tuple(cut + d for d in (0, 1, period // 2, period - 1, period + 3))
                for label, mem in _memory_profiles(rng, tr.snapshots[cut]).items():
                    points += 1
                    for spec in suite_specs(b, times):
                        est = measure_gain(b, spec, target, runs=20, beta=BETA, seed=points,
                                           history=tr.actions[:cut], memories=mem)
                        rows += 1
                        if not est.passed:
                            failures.append(f"bundle {k} cut {cut} {label}: {est.row()}")
        for player in range(3):
            if not _block_shape_ok(b, player):
                failures.append(f"bundle {k}: block length for player {player}")
            if not _returns_to_offset(b, player, 7 + player):
                failures.append(f"bundle {k}: no return to sq for player {player}")

    traps = 0
    injections = 0
    for k, b in enumerate(bundles):
        histories = []
        for t0 in (2, 9):
            hist = b.seq_window(0, t0 + 1 + b.m + b.ell + 3).copy()
            hist[t0, 0] ^= 1
            histories += [hist[: t0 + 1 + s] for s in (0, 1, b.m // 2, b.m, b.m + 1, b.m + b.ell // 2,
                                                      b.m + b.ell, b.m + b.ell + 2)]
        for s in range(10_000):
            hist = histories[s % len(histories)]
            raw = rng.bytes(int(rng.integers(0, 80))) if s % 2 else bytes(
                MachineMemory(variant="SP", block=int(rng.integers(0, 20)),
                              sk=int(rng.integers(0, 1 << 30)),
                              seed=int(rng.integers(0, 1 << 30))).to_bytes())
            player = s % 3
            injections += 1
            try:
                action, mem = honest_step_sp(b, hist, raw, s, player=player)
            except Exception:  # noqa: BLE001 -- any escape is a trap
                traps += 1
                continue
            if not (0 <= action < b.game.actions[player] and isinstance(mem, bytes)):
                traps += 1
    elapsed = time.monotonic() - start
    passed = len(bundles) >= 10 and points >= 50 * len(bundles) and not failures and traps == 0
    record_criterion(3, passed, f"{len(bundles)} bundles, {points} resume points, {rows} rows, "
                                f"{len(failures)} failures, {traps}/{injections} traps, {elapsed:.0f}s")
    assert passed, failures[:10]


# -- criterion 4: negative controls ------------------------------------------------------


def _perturbed_parity(rng: np.random.Generator, alpha: int = 2) -> StageGame:
    """Parity payoffs scaled by a random sign per player, plus a 0/1 perturbation."""
    signs = rng.choice([-1, 1], size=3)
    rows = []
    for a in itertools.product(range(2), repeat=3):
        s = 1 if sum(a) % 2 == 0 else -1
        rows.append(tuple(int(s * signs[i] * alpha + rng.integers(0, 2)) for i in range(3)))
    return StageGame((2, 2, 2), tuple(rows), "perturbed-parity")


def _predictable_margin(b, j: int) -> Fraction:
    """Worst-case best-reply payoff against a known punishment draw, minus the sequence average."""
    g = b.game
    reply = min(max(g.utility_of(j, g.insert(j, x, o)) for x in range(g.actions[j]))
                for o in b.punishments[j].probs)
    return reply - b.sequence.averages[j]


def test_criterion4_negative_controls(tmp_path):
    start = time.monotonic()
    rng = np.random.default_rng(42)
    chosen = []
    while len(chosen) < 8:
        g = _perturbed_parity(rng)
        probe = compile_ne(g, Q_N)
        margins = [_predictable_margin(probe, j) for j in range(3)]
        j = max(range(3), key=margins.__getitem__)
        if margins[j] >= 2:
            chosen.append((g, j))
    failures, worst = [], None
    for k, (g, j) in enumerate(chosen):
        for bundle, spec in ((compile_ne(g, Q_N, prf="constant"), "predictor:constant"),
                             (compile_ne(g, Q_N, pke="identity"), "eavesdrop:identity")):
            est = measure_gain(bundle, spec, j, runs=1000, beta=BETA, seed=k)
            excess = est.gain - Fraction(est.bound).limit_denominator(10**9)
            worst = excess if worst is None else min(worst, excess)
            if est.passed:
                failures.append(f"game {k}: control not detected: {est.row()}")
            path = tmp_path / f"c{k}-{spec.split(':')[0]}.bundle"
            path.write_text(serialize_bundle(bundle))
            code, out, _ = _cli("verify", str(path), "--runs", "200", "--player", str(j),
                                "--spec", spec)
            if code != 1:
                failures.append(f"game {k}: verify exit {code} for {spec}")
    elapsed = time.monotonic() - start
    passed = not failures
    record_criterion(4, passed, f"{len(chosen)} games x 2 controls, {len(failures)} misses, "
                                f"min excess over bound {float(worst):.3f}, {elapsed:.0f}s")
    assert passed, failures


# -- criterion 5: hybrid harness ----------------------------------------------------------


def _parity_distinguisher(n, oracles, rng):
    return int(oracles[0](int(rng.integers(0, 1 << n))) % 2)


def test_criterion5_hybrids(sp_bundle):
    problems = []
    for seed in range(6):
        for player in range(3):
            h3 = hybrid_transcript(sp_bundle, "H3", "never", seed, player)
            dep = hybrid_transcript(sp_bundle, "deployed", "never", seed, player)
            if h3.to_text() != dep.to_text():
                problems.append(f"H3 != deployed seed {seed} player {player}")
    h1_gaps = []
    for player in range(3):
        est = hybrid_punishment_payoff(sp_bundle, "H1", "never", runs=200, seed=5, player=player)
        h1_gaps.append(abs(float(est.mean)))
        if abs(float(est.mean)) > est.radius + float(est.slack):
            problems.append(f"H1 player {player}: mean {float(est.mean):.4f}")

    n, q, trials = 6, 3, 60
    real = prf_real_experiment("reference", n, q, _parity_distinguisher, trials, seed=9)
    ideal = prf_ideal_experiment(n, q, _parity_distinguisher, trials, seed=9)
    if prf_hybrid("reference", n, q, _parity_distinguisher, 1, trials, seed=9).digest != real.digest:
        problems.append("PRF hybrid i=1")
    if prf_hybrid("reference", n, q, _parity_distinguisher, q + 1, trials, seed=9).digest != ideal.digest:
        problems.append("PRF hybrid i=q+1")

    scheme = scheme_for("reference")
    f, gk = 3, 2
    one = ind_mult_experiment(scheme, 4, f, gk, CoinAdversary(), 1, 40, seed=9)
    zero = ind_mult_experiment(scheme, 4, f, gk, CoinAdversary(), 0, 40, seed=9)
    if pke_multi_hybrid_game(scheme, 4, f, gk, CoinAdversary(), (1, 1), 40, seed=9).digest != one.digest:
        problems.append("PKE hybrid (1,1)")
    if pke_multi_hybrid_game(scheme, 4, f, gk, CoinAdversary(), (gk + 1, f), 40, seed=9).digest != zero.digest:
        problems.append("PKE hybrid (g+1,f)")

    adv = prf_multi_instance_game("counter", 8, 3, counter_distinguisher, 1000, seed=4)
    if adv.advantage < 0.9:
        problems.append(f"counter advantage {adv.advantage}")
    record_criterion(5, not problems, f"max |H1 mean| {max(h1_gaps):.4f}, "
                                      f"counter advantage {adv.advantage:.3f}, {len(problems)} problems")
    assert not problems, problems


# -- criterion 6: determinism and audit ---------------------------------------------------


def _payoffs_rederived(text: str) -> bool:
    parsed = parse_transcript(text)
    x = 1 - parsed.delta
    for i in range(len(parsed.payoffs)):
        # integer Horner over scaled utilities keeps this exact and fast
        acc = Fraction(0)
        for u in reversed(parsed.utilities):
            acc = u[i] + x * acc
        if parsed.delta * acc != parsed.payoffs[i]:
            return False
    return True


def test_criterion6_determinism_and_audit(tmp_path):
    from conftest import parity_game
    from cryptofolk.game import serialize_stage_game

    game = tmp_path / "parity.game"
    game.write_text(serialize_stage_game(parity_game()))
    mismatches, audited = [], 0
    commands = [
        ("analyze", str(game)),
        ("compile", str(game), "-q", "n", "-o", "-"),
        ("compile", str(game), "-q", "n+1", "--subgame-perfect", "-o", "-"),
        ("attack-crypto", "--control", "prf-counter", "--trials", "200", "--seed", "3"),
        ("attack-crypto", "--control", "pke-reference", "--trials", "200", "--seed", "3"),
    ]
    bundle_paths = []
    for variant in ("ne", "sp"):
        path = tmp_path / f"{variant}.bundle"
        extra = ["--subgame-perfect"] if variant == "sp" else []
        _cli("compile", str(game), "-q", "n", "-o", str(path), *extra)
        bundle_paths.append(path)
        commands.append(("verify", str(path), "--runs", "30", "--seed", "4", "--spec", "once:2",
                         "--spec", "phase1:0"))
        for dev in ("once:3", "phase1:0", "never"):
            commands.append(("simulate", str(path), "--seed", "5", "--horizon", "300",
                             "--deviator", dev, "--player", "2"))
    for argv in commands:
        first, second = _cli(*argv), _cli(*argv)
        if first != second:
            mismatches.append(" ".join(argv[:1]))
        if argv[0] == "simulate":
            audited += 1
            if not _payoffs_rederived(first[1]):
                mismatches.append("payoff audit " + " ".join(argv[-3:]))

    validated = 0
    games = small_games(10, seed=31) + [parity_game()]
    for g in games:
        for compile_ in (compile_ne, compile_sp):
            validate_bundle(compile_(g, Q_N))
            validated += 1
    record_criterion(6, not mismatches, f"{len(commands)} commands replayed, {audited} transcripts "
                                        f"audited, {validated} bundles validated")
    assert not mismatches, mismatches


# -- criterion 7: graphical games --------------------------------------------------------


def test_criterion7_graphical_games():
    from cryptofolk.equilibrium import graphical_punishment_strategy, punishment_strategy

    rng = np.random.default_rng(77)
    problems, instances = [], 0
    shapes = {f"cycle{c}": [[(i - 1) % c, (i + 1) % c] for i in range(c)] for c in range(5, 9)}
    shapes["star6"] = [[1, 2, 3, 4, 5]] + [[0]] * 5
    shapes["path6"] = [[1]] + [[i - 1, i + 1] for i in range(1, 5)] + [[4]]
    for name, neighbors in shapes.items():
        gg = _random_graphical(rng, neighbors)
        explicit = gg.to_stage_game()
        instances += 1
        for j in range(gg.num_players):
            dist, value = graphical_punishment_strategy(gg, j)
            if value != punishment_strategy(explicit, j)[1]:
                problems.append(f"{name}: mm_{j} differs")
            others = [i for i in range(gg.num_players) if i != j]
            for s in dist.probs:
                if any(s[pos] != 0 for pos, i in enumerate(others) if i not in gg.neighbors[j]):
                    problems.append(f"{name}: punishment of {j} uses a non-neighbor")
                    break
        if gg.num_profiles <= 64:
            a = compile_graphical(gg, Q_N)
            b = compile_ne(explicit, Q_N)
            validate_bundle(a)
            if a.minimax != b.minimax:
                problems.append(f"{name}: compiled minimax differs")
    record_criterion(7, not problems, f"{instances} graphical instances, {len(problems)} problems")
    assert not problems, problems
