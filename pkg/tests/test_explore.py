import random

import pytest

from s2arq.channel import DROP_RANDOM_EXISTING, AdversaryPolicy
from s2arq.codec import CodecParams
from s2arq.engine import run_scripted
from s2arq.explore import (
    NO_EDGE,
    _efficient_successors,
    _fa_successors,
    coverage_starts,
    debris_universe,
    explore_convergence,
    explore_first_attempt,
    explore_many,
    to_scripted_actions,
)
from s2arq.faults import Configuration, arbitrary_configuration, safe_configuration
from s2arq.protocol import FIRST_ATTEMPT, ScriptedSource

P = CodecParams(1, 1, 1)
REPLAY = AdversaryPolicy(drop_on_full=DROP_RANDOM_EXISTING)


def _final(sim):
    return (sim.sender, sim.receiver, tuple(e.packet for e in sim.chan_sr.in_flight),
            tuple(e.packet for e in sim.chan_rs.in_flight))


def _expected(state):
    return (state[0], state[1], tuple(x for x, _ in state[2]), tuple(x for x, _ in state[3]))


def _replay(cfg, path):
    acts, batches = to_scripted_actions(cfg, path, P)
    _, sim = run_scripted(cfg, acts, P, ScriptedSource(batches), REPLAY, fairness_k=10**9)
    return sim


def test_explorer_paths_replay_in_the_engine():
    rng = random.Random(0)
    for trial in range(60):
        cfg = arbitrary_configuration(trial, P)
        state = (cfg.sender, cfg.receiver, tuple((x, NO_EDGE) for x in cfg.chan_sr),
                 tuple((a, NO_EDGE) for a in cfg.chan_rs), 0, 0)
        path = []
        for _ in range(25):
            action, state, _, _ = rng.choice(list(_efficient_successors(state, P)))
            path.append(action)
        assert _final(_replay(cfg, path)) == _expected(state)


def test_first_attempt_paths_replay_in_the_engine():
    rng = random.Random(1)
    cfg = safe_configuration(0, P, variant=FIRST_ATTEMPT)
    msgs = ((0,), (1,), (1,), (0,))
    debris = debris_universe(P)
    for _ in range(60):
        state = (cfg.sender, cfg.receiver, (), (), 0, False)
        path = []
        for _ in range(25):
            action, state, _ = rng.choice(list(_fa_successors(state, P, msgs, debris)))
            path.append(action)
        assert _final(_replay(cfg, path)) == _expected(state)


def test_safe_start_is_immediately_terminal():
    res = explore_convergence(safe_configuration(0, P), P, depth=10)
    assert res.states == 1 and not res.violations


def test_small_exhaustive_run_is_within_bounds():
    starts = coverage_starts(P, seeds_per_mode=20)
    assert len(starts) > 20
    res = explore_many(starts, P, depth=8)
    assert res.violations == []
    assert res.max_fetches <= 4 and res.max_deliveries <= 4 and res.max_chain <= 8


def test_tight_bounds_produce_replayable_counterexamples():
    cfg = next(c for c in (arbitrary_configuration(s, P) for s in range(50))
               if explore_convergence(c, P, 8, max_fetches=0).violations)
    v = explore_convergence(cfg, P, 8, max_fetches=0).violations[0]
    assert v["fetches"] == 1
    start = Configuration.from_dict(v["start"])
    acts, batches = to_scripted_actions(start, v["path"], P)
    trace, _ = run_scripted(start, acts, P, ScriptedSource(batches), REPLAY, fairness_k=10**9)
    assert len(trace.fetch_events) == 1


def test_first_attempt_majority_is_sound_under_single_debris():
    msgs = ((1,), (0,), (1,))
    res = explore_first_attempt(P, depth=18, messages=msgs, y=1)
    assert res.violations == [] and res.max_deliveries >= 2


def test_explorer_rejects_other_capacities():
    with pytest.raises(ValueError):
        explore_convergence(safe_configuration(0, CodecParams(1, 1, 2)), CodecParams(1, 1, 2), 3)
