"""JSON game and policy files.

Numbers may be written as JSON numbers, decimal strings or exact rationals
``"p/q"``. On output a value is written as ``"p/q"`` when that rational
reproduces the float exactly, and as a plain JSON number otherwise; either way
parsing the output gives back the same floats.

Game file::

    {"players": 3, "actions": [2, 2, 1], "states": 3,
     "horizon": {"finite": 2} | {"discounted": 0.9},
     "rho": [1, 0, 0],
     "layers": [[{"controller": 0 | {"two_controller": [0, 1]},
                  "edges": [{"from": 0, "to": 2, "payoff": [["1/20"], [0]]}, ...],
                  "transition": [[...], ...]}, ...], ...]}

Policy file::

    {"kind": "product", "stationary": false, "factors": [[[[...]]], ...]}
    {"kind": "correlated", "stationary": false, "probs": [...]}
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from pmg.game import Discounted, Finite, MarkovGame, StateInteraction, validate
from pmg.policy import CorrelatedPolicy, Policy, ProductPolicy
from pmg.valuation import ValueTable

MAX_DENOMINATOR = 10**6


class GameFileError(ValueError):
    pass


def _fail(path: str, msg: str):
    raise GameFileError(f"{path}: {msg}")


def parse_number(x: Any, path: str) -> float:
    if isinstance(x, bool):
        _fail(path, f"expected a number, got {x!r}")
    if isinstance(x, (int, float)):
        return float(x)
    if isinstance(x, str):
        try:
            return float(Fraction(x.strip()))
        except (ValueError, ZeroDivisionError):
            _fail(path, f"cannot read {x!r} as a number")
    _fail(path, f"expected a number, got {type(x).__name__}")


def format_number(x: float) -> int | float | str:
    x = float(x)
    if x.is_integer():
        return int(x)
    fr = Fraction(x).limit_denominator(MAX_DENOMINATOR)
    if float(fr) == x:
        return f"{fr.numerator}/{fr.denominator}"
    return x


def _array(x: Any, path: str, ndim: int) -> np.ndarray:
    """Nested lists of numbers of exactly ``ndim`` levels, rectangular."""
    if ndim == 0:
        return np.array(parse_number(x, path))
    if not isinstance(x, list):
        _fail(path, f"expected a list, got {type(x).__name__}")
    if not x:
        _fail(path, "empty list")
    parts = [_array(v, f"{path}[{i}]", ndim - 1) for i, v in enumerate(x)]
    shape = parts[0].shape
    for i, p in enumerate(parts):
        if p.shape != shape:
            _fail(f"{path}[{i}]", f"shape {p.shape} differs from {shape}")
    return np.stack(parts)


def _to_lists(a: np.ndarray):
    if a.ndim == 0:
        return format_number(a)
    return [_to_lists(v) for v in a]


def _get(doc: dict, key: str, path: str):
    if not isinstance(doc, dict):
        _fail(path, f"expected an object, got {type(doc).__name__}")
    if key not in doc:
        _fail(path, f"missing key {key!r}")
    return doc[key]


def _int(x: Any, path: str, low: int = 0) -> int:
    if isinstance(x, bool) or not isinstance(x, int) or x < low:
        _fail(path, f"expected an integer >= {low}, got {x!r}")
    return x


def game_from_dict(doc: dict, check: bool = True) -> MarkovGame:
    """Build a game, raising ``GameFileError`` with a JSON path on any problem.

    With ``check`` the game must also pass ``validate``.
    """
    n = _int(_get(doc, "players", "$"), "$.players", 1)
    actions = _get(doc, "actions", "$")
    if not isinstance(actions, list) or len(actions) != n:
        _fail("$.actions", f"expected a list of {n} action counts")
    counts = tuple(_int(a, f"$.actions[{i}]", 1) for i, a in enumerate(actions))
    S = _int(_get(doc, "states", "$"), "$.states", 1)
    hz = _get(doc, "horizon", "$")
    if isinstance(hz, dict) and set(hz) == {"finite"}:
        horizon = Finite(_int(hz["finite"], "$.horizon.finite", 1))
    elif isinstance(hz, dict) and set(hz) == {"discounted"}:
        g = parse_number(hz["discounted"], "$.horizon.discounted")
        if not 0.0 < g < 1.0:
            _fail("$.horizon.discounted", f"discount must lie in (0, 1), got {g}")
        horizon = Discounted(g)
    else:
        _fail("$.horizon", 'expected {"finite": H} or {"discounted": gamma}')
    rho = _array(_get(doc, "rho", "$"), "$.rho", 1)
    if rho.shape != (S,):
        _fail("$.rho", f"expected {S} entries, got {rho.shape[0]}")

    raw_layers = _get(doc, "layers", "$")
    want = horizon.steps if isinstance(horizon, Finite) else 1
    if not isinstance(raw_layers, list) or len(raw_layers) != want:
        _fail("$.layers", f"expected a list of {want} layers")
    layers = []
    for h, raw_layer in enumerate(raw_layers):
        lp = f"$.layers[{h}]"
        if not isinstance(raw_layer, list) or len(raw_layer) != S:
            _fail(lp, f"expected a list of {S} states")
        layer = []
        for s, raw in enumerate(raw_layer):
            sp = f"{lp}[{s}]"
            ctrl = _get(raw, "controller", sp)
            if isinstance(ctrl, dict):
                pair = _get(ctrl, "two_controller", f"{sp}.controller")
                if not isinstance(pair, list) or len(pair) != 2:
                    _fail(f"{sp}.controller.two_controller", "expected two player indices")
                controllers = tuple(_int(c, f"{sp}.controller.two_controller[{i}]") for i, c in enumerate(pair))
            else:
                controllers = (_int(ctrl, f"{sp}.controller"),)
            for c in controllers:
                if c >= n:
                    _fail(f"{sp}.controller", f"player {c} does not exist")
            edges = {}
            raw_edges = _get(raw, "edges", sp)
            if not isinstance(raw_edges, list):
                _fail(f"{sp}.edges", "expected a list")
            for e, edge in enumerate(raw_edges):
                ep = f"{sp}.edges[{e}]"
                k = _int(_get(edge, "from", ep), f"{ep}.from")
                j = _int(_get(edge, "to", ep), f"{ep}.to")
                if k >= n or j >= n or k == j:
                    _fail(ep, f"bad edge ({k}, {j})")
                if (k, j) in edges:
                    _fail(ep, f"duplicate edge ({k}, {j})")
                m = _array(_get(edge, "payoff", ep), f"{ep}.payoff", 2)
                if m.shape != (counts[k], counts[j]):
                    _fail(f"{ep}.payoff", f"shape {m.shape}, expected {(counts[k], counts[j])}")
                edges[(k, j)] = m
            trans = _array(_get(raw, "transition", sp), f"{sp}.transition", len(controllers) + 1)
            expected = tuple(counts[c] for c in controllers) + (S,)
            if trans.shape != expected:
                _fail(f"{sp}.transition", f"shape {trans.shape}, expected {expected}")
            try:
                layer.append(StateInteraction(edges, controllers, trans))
            except ValueError as err:
                _fail(sp, str(err))
        layers.append(tuple(layer))
    try:
        game = MarkovGame(counts, tuple(layers), rho, horizon)
    except ValueError as err:
        _fail("$", str(err))
    if check:
        problems = validate(game)
        if problems:
            v = problems[0]
            more = f" (and {len(problems) - 1} more)" if len(problems) > 1 else ""
            _fail(f"$.{v.where}", f"{v.kind}: {v.detail}{more}")
    return game


def game_to_dict(game: MarkovGame) -> dict:
    if isinstance(game.horizon, Finite):
        hz = {"finite": game.horizon.steps}
    else:
        hz = {"discounted": format_number(game.horizon.gamma)}
    layers = []
    for layer in game.layers:
        states = []
        for st in layer:
            if len(st.controllers) > 2:
                raise ValueError("the file format supports at most two controllers per state")
            ctrl = st.controllers[0] if len(st.controllers) == 1 else {"two_controller": list(st.controllers)}
            edges = [{"from": k, "to": j, "payoff": _to_lists(m)} for (k, j), m in st.edges.items()]
            states.append({"controller": ctrl, "edges": edges, "transition": _to_lists(st.transition)})
        layers.append(states)
    return {
        "players": game.n,
        "actions": list(game.action_counts),
        "states": game.num_states,
        "horizon": hz,
        "rho": _to_lists(game.rho),
        "layers": layers,
    }


def policy_from_dict(doc: dict) -> Policy:
    kind = _get(doc, "kind", "$")
    stationary = bool(doc.get("stationary", False))
    try:
        if kind == "product":
            raw = _get(doc, "factors", "$")
            if not isinstance(raw, list) or not raw:
                _fail("$.factors", "expected a non-empty list of per-player factors")
            return ProductPolicy(tuple(_array(f, f"$.factors[{k}]", 3) for k, f in enumerate(raw)), stationary)
        if kind == "correlated":
            probs = np.asarray(_nested(_get(doc, "probs", "$"), "$.probs"))
            return CorrelatedPolicy(probs, stationary)
    except GameFileError:
        raise
    except ValueError as err:
        _fail("$", str(err))
    _fail("$.kind", f"expected 'product' or 'correlated', got {kind!r}")


def _nested(x: Any, path: str):
    if isinstance(x, list):
        return [_nested(v, f"{path}[{i}]") for i, v in enumerate(x)]
    return parse_number(x, path)


def policy_to_dict(policy: Policy) -> dict:
    if isinstance(policy, ProductPolicy):
        return {"kind": "product", "stationary": policy.stationary, "factors": [_to_lists(f) for f in policy.factors]}
    return {"kind": "correlated", "stationary": policy.stationary, "probs": _to_lists(policy.probs)}


def values_from_dict(doc: dict) -> ValueTable:
    return ValueTable(_array(_get(doc, "values", "$"), "$.values", 3))


def values_to_dict(values: ValueTable) -> dict:
    return {"values": _to_lists(values.values)}


def _read(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise GameFileError(f"{path}: invalid JSON ({err})") from err


def load_game(path: str | Path, check: bool = True) -> MarkovGame:
    return game_from_dict(_read(path), check)


def load_policy(path: str | Path) -> Policy:
    return policy_from_dict(_read(path))


def load_values(path: str | Path) -> ValueTable:
    return values_from_dict(_read(path))


def dump(doc: dict, path: str | Path | None = None) -> str:
    text = json.dumps(doc, indent=2)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text
