"""Automata construction, projection, determinization, Kripke product."""

from itertools import product

import numpy as np
import pytest

from secrl.automata import (
    KripkeStructure,
    Nfa,
    automaton_to_text,
    complement,
    determinize,
    kripke_product,
    project_existential,
    quantifier_eliminate,
    twtl_to_dfa,
)
from secrl.errors import AlphabetMismatch, LabelMismatch, WidthError
from secrl.spec_lang import parse
from secrl.spec_lang import formula as F
from secrl.spec_lang.semantics import satisfies_word

from conftest import event, random_inner

EVENTS = [event(), event("a"), event("b"), event("a", "b")]


def all_words(symbols, max_len):
    yield ()
    for n in range(1, max_len + 1):
        yield from product(symbols, repeat=n)


def test_dfa_matches_monitor_hand_cases():
    body = parse("forall x . [H^1 a@x]^[1,3]").body
    d = twtl_to_dfa(body, EVENTS, var_order=("x",))
    for word in all_words(sorted(d.alphabet), 4):
        assert d.accepts(word) == satisfies_word(body, ("x",), list(word))


def test_dfa_matches_monitor_random(rng):
    for _ in range(60):
        body = random_inner(rng, int(rng.integers(3)), variables=("u", "v"),
                            max_duration=1, max_window=2)
        d = twtl_to_dfa(body, EVENTS[:2] + [event("b")], var_order=("u", "v"))
        symbols = sorted(d.alphabet)
        for _ in range(40):
            n = int(rng.integers(F.deadline_inner(body) + 2))
            word = [symbols[int(rng.integers(len(symbols)))] for _ in range(n)]
            assert d.accepts(word) == satisfies_word(body, ("u", "v"), word)


def test_dfa_total_and_deterministic():
    body = parse("forall x . H^1 a@x ; H^0 b@x").body
    d = twtl_to_dfa(body, EVENTS, var_order=("x",))
    for state in d.states:
        for symbol in d.alphabet:
            assert (state, symbol) in d.transitions


def test_dfa_rejects_unknown_propositions():
    body = parse("forall x . H^0 zebra@x").body
    with pytest.raises(AlphabetMismatch):
        twtl_to_dfa(body, EVENTS, var_order=("x",))


def test_dfa_rejects_unknown_variables():
    body = parse("forall x . H^0 a@x").body
    with pytest.raises(ValueError):
        twtl_to_dfa(body, EVENTS, var_order=("y",))


def test_step_rejects_foreign_symbol():
    body = parse("forall x . H^0 a@x").body
    d = twtl_to_dfa(body, EVENTS, var_order=("x",))
    with pytest.raises(AlphabetMismatch):
        d.accepts([(event("zebra"),)])


def test_quantifier_eliminate_keeps_tuple_width():
    ast = parse("forall u . forall v . H^0 a@u & H^0 b@v")
    d = quantifier_eliminate(ast, EVENTS)
    assert d.width == 2
    word = [(event("a"), event("b"))]
    assert d.accepts(word)
    assert not d.accepts([(event("a"), event("a"))])


# ------------------------------------------------------- NFA and subset


def _sample_nfa(rng, n_states=6, symbols=("x", "y")):
    transitions = {}
    for s in range(n_states):
        for sym in symbols:
            dsts = [t for t in range(n_states) if rng.random() < 0.3]
            if dsts:
                transitions[(s, sym)] = set(dsts)
    accepting = {s for s in range(n_states) if rng.random() < 0.3}
    return Nfa(range(n_states), 0, symbols, transitions, accepting)


def test_determinize_preserves_language(rng):
    for _ in range(10):
        n = _sample_nfa(rng)
        d = determinize(n)
        symbols = sorted(n.alphabet)
        for _ in range(1000):
            word = [symbols[int(rng.integers(2))] for _ in range(int(rng.integers(8)))]
            assert d.accepts(word) == n.accepts(word)


def test_complement_involution_and_semantics(rng):
    body = parse("forall x . [H^0 a@x]^[0,2]").body
    d = twtl_to_dfa(body, EVENTS, var_order=("x",))
    c = complement(d)
    cc = complement(c)
    for word in all_words(sorted(d.alphabet), 3):
        assert c.accepts(word) == (not d.accepts(word))
        assert cc.accepts(word) == d.accepts(word)


def test_projection_soundness_and_completeness():
    body = parse("forall u . forall v . H^0 a@u & H^0 b@v").body
    d = twtl_to_dfa(body, EVENTS, var_order=("u", "v"))
    proj = project_existential(d, 1)  # project away v
    assert proj.width == 1
    dp = determinize(proj)
    events = sorted({sym[0] for sym in d.alphabet}, key=sorted)
    for word in all_words([(e,) for e in events], 3):
        accepted = dp.accepts(word)
        # witness search: some extension of the projected coordinate
        witness = any(
            d.accepts([(w[0], e) for w, e in zip(word, ext)])
            for ext in product(events, repeat=len(word))
        )
        assert accepted == witness


def test_projection_width_errors():
    body = parse("forall x . H^0 a@x").body
    d = twtl_to_dfa(body, EVENTS, var_order=("x",))
    with pytest.raises(WidthError):
        project_existential(d, 0)
    body2 = parse("forall u . forall v . H^0 a@u & H^0 a@v").body
    d2 = twtl_to_dfa(body2, EVENTS, var_order=("u", "v"))
    with pytest.raises(WidthError):
        project_existential(d2, 2)


# ------------------------------------------------------- Kripke product


def _diamond_kripke():
    #   0 -> 1 -> 3,  0 -> 2 -> 3,  3 -> 3
    labels = {0: (event("i"),), 1: (event("a"),), 2: (event("b"),),
              3: (event("g"),)}
    transitions = {(0, 1, 1), (0, 1, 2), (1, 1, 3), (2, 1, 3), (3, 1, 3)}
    return KripkeStructure(range(4), {0}, transitions, labels)


def test_kripke_product_tracks_runs():
    body = parse("forall x . [H^0 a@x]^[0,3]").body
    events = [event(), event("i"), event("a"), event("b"), event("g")]
    d = twtl_to_dfa(body, events, var_order=("x",))
    k = _diamond_kripke()
    prod = kripke_product(d, k)
    # run 0 -> 1 -> 3 reads labels i, a: contains an `a` within the window
    assert prod.run([1, 3]) in prod.accepting
    # run 0 -> 2 -> 3 -> 3 -> 3 reads i, b, g, g: never an `a`
    assert prod.run([2, 3, 3, 3]) not in prod.accepting
    # non-edges fall into the trap and stay there
    assert prod.run([3, 3]) == "trap"
    assert prod.run([3, 3, 1]) == "trap"


def test_kripke_product_requires_known_labels():
    body = parse("forall x . H^0 a@x").body
    d = twtl_to_dfa(body, [event(), event("a")], var_order=("x",))
    with pytest.raises(LabelMismatch):
        kripke_product(d, _diamond_kripke())


def test_kripke_validation():
    with pytest.raises(ValueError):
        KripkeStructure(range(2), {0}, {(0, 0, 1)}, {0: "a", 1: "b"})  # duration
    with pytest.raises(ValueError):
        KripkeStructure(range(2), {0}, {(0, 1, 1)}, {0: "a", 1: "b"})  # 1 blocked


# ------------------------------------------------------- text dump


def test_automaton_to_text_round_shape():
    body = parse("forall x . H^0 a@x").body
    d = twtl_to_dfa(body, [event(), event("a")], var_order=("x",))
    text = automaton_to_text(d)
    lines = text.strip().split("\n")
    assert lines[0].startswith("initial ")
    assert lines[1].startswith("accepting ")
    assert len(lines) == 2 + len(d.states) * len(d.alphabet)
    assert text == automaton_to_text(d)  # deterministic
