"""Random ARFF documents for roundtrip checks, seeded and dependency-free."""

from __future__ import annotations

import random

from hypothesis import strategies as st

from omlclient.arff import ArffDocument, Attribute

# names that exercise quoting: spaces, commas, quotes, braces, escapes, '%', '?'
AWKWARD = ["my col", "a,b", "it's", 'say "hi"', "{x}", "back\\slash", "50%", "?", "tab\there", "line\nbreak", "", "ünï"]
PLAIN = ["a", "b", "class", "x1", "Y_2", "val-3", "k.4"]
ALPHABET = "ab ,'\"{}%?\\\t\nzé"


def _text(rng: random.Random, max_len: int = 6) -> str:
    if rng.random() < 0.3:
        return rng.choice(AWKWARD + PLAIN)
    return "".join(rng.choice(ALPHABET) for _ in range(rng.randint(0, max_len)))


def _number(rng: random.Random) -> float:
    pick = rng.random()
    if pick < 0.3:
        return float(rng.randint(-1000, 1000))
    if pick < 0.5:
        return rng.choice([0.1, -0.0, 1e-300, 1.7976931348623157e308, 2.5e15, 123456789012345.0, 5e-324])
    return rng.uniform(-1e6, 1e6) * 10 ** rng.randint(-8, 8)


def random_document(rng: random.Random) -> ArffDocument:
    n_attrs = rng.randint(1, 8)
    names: list[str] = []
    attrs = []
    for _ in range(n_attrs):
        name = _text(rng) or "n"
        while name in names:
            name += "_"
        names.append(name)
        kind = rng.choice(["numeric", "nominal", "string", "date"])
        if kind == "nominal":
            values: list[str] = []
            for _ in range(rng.randint(1, 4)):
                v = _text(rng, 4)
                if v not in values:
                    values.append(v)
            attrs.append(Attribute(name, kind, tuple(values)))
        elif kind == "date":
            attrs.append(Attribute(name, kind, date_format=rng.choice([None, "yyyy-MM-dd", "yyyy-MM-dd'T'HH:mm"])))
        else:
            attrs.append(Attribute(name, kind))
    rows = []
    for _ in range(rng.randint(0, 50)):
        row = []
        for a in attrs:
            if rng.random() < 0.15:
                row.append(None)
            elif a.kind == "numeric":
                row.append(0.0 if rng.random() < 0.3 else _number(rng))
            elif a.kind == "nominal":
                row.append(rng.choice(a.nominal_values))
            else:
                row.append(_text(rng))
        rows.append(tuple(row))
    return ArffDocument(_text(rng) or "r", tuple(attrs), tuple(rows), sparse=rng.random() < 0.4)


documents = st.builds(lambda seed: random_document(random.Random(seed)), st.integers(0, 2**32))
