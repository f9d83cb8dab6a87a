"""JSON spec files.

Layout (schema version 1)::

    {
      "version": 1,
      "game": {"n_players", "n_stages", "n_categories", "prizes", "epsilons",
               "weights", "cost": {"type": "linear", "betas"} |
                                  {"type": "dynamic", "alphas", "offsets", "priced"?}},
      "constraints": [{"ineq": {"A", "b"}, "eq": {"A", "b"}}, ...],
      "blotto": {"budgets", "prizes", "betas", "epsilons"},
      "rhg": {"players": [...], "market": {"prizes", "epsilons", "alphas", "offsets"},
              "horizon"}
    }

Every section is optional but at least one must be present.  Matrices are
nested row-major lists.  Prizes and costs are in profit units, allocations
and epsilons in participation units (vehicles in the case study).  An RHG
player is either explicit ``{"A", "B", "G", "H", "d", "y0", "p_y", "p_u"}``
or ``{"battery": {"fleet", "shares"?, "discharge"?, "charge_cap"?}}``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .blotto import BlottoSpec
from .errors import InvalidSpecError, SpecificationError
from .game import DynamicPriceCost, GameSpec, LinearCost, PlayerConstraints
from .rhg import RhgMarket, RhgPlayerSpec, battery_player

SCHEMA_VERSION = 1


@dataclass
class LoadedSpec:
    game: Optional[GameSpec] = None
    blotto: Optional[BlottoSpec] = None
    rhg_players: Optional[list] = None
    rhg_market: Optional[RhgMarket] = None
    rhg_horizon: Optional[int] = None
    raw: Optional[dict] = None


def _require(d, key, where):
    if key not in d:
        raise SpecificationError(f"{where}: missing field '{key}'")
    return d[key]


def _constraints_from(entry, dim, where):
    ineq = entry.get("ineq") or {}
    eq = entry.get("eq") or {}
    return PlayerConstraints(dim, ineq.get("A"), ineq.get("b"), eq.get("A"), eq.get("b"))


def game_from_dict(d: dict, constraints: list) -> GameSpec:
    n = int(_require(d, "n_players", "game"))
    k = int(_require(d, "n_stages", "game"))
    m = int(_require(d, "n_categories", "game"))
    weights = np.asarray(_require(d, "weights", "game"), dtype=float)
    if weights.ndim != 1:
        raise InvalidSpecError("game.weights must be a single vector shared by all players")
    cost = _require(d, "cost", "game")
    kind = cost.get("type")
    if kind == "linear":
        model = LinearCost(_require(cost, "betas", "game.cost"))
    elif kind == "dynamic":
        model = DynamicPriceCost(_require(cost, "alphas", "game.cost"),
                                 _require(cost, "offsets", "game.cost"), cost.get("priced"))
    else:
        raise SpecificationError(f"game.cost.type must be 'linear' or 'dynamic', got {kind!r}")
    if len(constraints) != n:
        raise SpecificationError(f"expected {n} constraint entries, got {len(constraints)}")
    cons = [_constraints_from(c, k * m, f"constraints[{i}]") for i, c in enumerate(constraints)]
    return GameSpec(n, k, m, _require(d, "prizes", "game"), _require(d, "epsilons", "game"),
                    weights, model, cons)


def game_to_dict(spec: GameSpec) -> dict:
    cost = spec.cost_model
    if isinstance(cost, LinearCost):
        c = {"type": "linear", "betas": cost.betas.tolist()}
    else:
        c = {"type": "dynamic", "alphas": cost.alphas.tolist(),
             "offsets": cost.offsets.tolist(), "priced": cost.priced.tolist()}
    return {
        "version": SCHEMA_VERSION,
        "game": {"n_players": spec.n_players, "n_stages": spec.n_stages,
                 "n_categories": spec.n_categories,
                 "prizes": spec.stage_prizes.tolist(),
                 "epsilons": spec.fictitious_participations.tolist(),
                 "weights": spec.participation_weights.tolist(), "cost": c},
        "constraints": [{"ineq": {"A": p.ineq_matrix.tolist(), "b": p.ineq_rhs.tolist()},
                         "eq": {"A": p.eq_matrix.tolist(), "b": p.eq_rhs.tolist()}}
                        for p in spec.constraints],
    }


def blotto_from_dict(d: dict, theta: float = 1.0, epsilon: Optional[float] = None) -> BlottoSpec:
    """Blotto section; ``theta`` scales the unit costs, ``epsilon`` overrides all eps."""
    prizes = np.asarray(_require(d, "prizes", "blotto"), dtype=float)
    eps = d.get("epsilons", 1.0) if epsilon is None else epsilon
    eps = np.broadcast_to(np.asarray(eps, dtype=float), prizes.shape)
    return BlottoSpec(_require(d, "budgets", "blotto"), prizes,
                      theta * np.asarray(_require(d, "betas", "blotto"), dtype=float), eps)


def blotto_to_dict(spec: BlottoSpec) -> dict:
    return {"budgets": spec.budgets.tolist(), "prizes": spec.prizes.tolist(),
            "betas": spec.unit_costs.tolist(), "epsilons": spec.fictitious.tolist()}


def rhg_player_from_dict(d: dict, n_steps: int) -> RhgPlayerSpec:
    if "battery" in d:
        b = d["battery"]
        kwargs = {key: b[key] for key in ("shares", "discharge", "charge_cap") if key in b}
        return battery_player(float(_require(b, "fleet", "battery")), n_steps=n_steps, **kwargs)
    return RhgPlayerSpec(**{key: _require(d, key, "rhg player")
                            for key in ("A", "B", "G", "H", "d", "y0", "p_y", "p_u")})


def market_from_dict(d: dict) -> RhgMarket:
    prizes = _require(d, "prizes", "rhg.market")
    offsets = d.get("offsets")
    if offsets is None:
        raise SpecificationError("rhg.market: missing field 'offsets'")
    return RhgMarket(prizes, _require(d, "epsilons", "rhg.market"),
                     _require(d, "alphas", "rhg.market"), offsets)


def market_to_dict(m: RhgMarket) -> dict:
    return {"prizes": m.prizes.tolist(), "epsilons": m.epsilons.tolist(),
            "alphas": m.alphas.tolist(), "offsets": m.offsets.tolist()}


def parse_spec(doc: dict, theta: float = 1.0, epsilon: Optional[float] = None) -> LoadedSpec:
    if not isinstance(doc, dict):
        raise SpecificationError("spec must be a JSON object")
    version = doc.get("version")
    if version != SCHEMA_VERSION:
        raise SpecificationError(f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})")
    out = LoadedSpec(raw=doc)
    if "blotto" in doc:
        out.blotto = blotto_from_dict(doc["blotto"], theta, epsilon)
    if "game" in doc:
        out.game = game_from_dict(doc["game"], doc.get("constraints", []))
    elif out.blotto is not None:
        out.game = out.blotto.to_game_spec()
    if "rhg" in doc:
        r = doc["rhg"]
        out.rhg_market = market_from_dict(_require(r, "market", "rhg"))
        out.rhg_players = [rhg_player_from_dict(p, out.rhg_market.n_steps)
                           for p in _require(r, "players", "rhg")]
        out.rhg_horizon = int(r.get("horizon", out.rhg_market.n_steps))
    if out.game is None and out.rhg_players is None:
        raise SpecificationError("spec needs at least one of 'game', 'blotto' or 'rhg'")
    return out


def load_spec(path, theta: float = 1.0, epsilon: Optional[float] = None) -> LoadedSpec:
    """Read and validate a spec file.  I/O problems surface as ``OSError``."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecificationError(f"{path}: invalid JSON ({exc})") from exc
    return parse_spec(doc, theta, epsilon)


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
