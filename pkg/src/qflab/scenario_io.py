"""Scenario files (JSON) and contribution tables (CSV).

Validation is fail-closed: unknown keys anywhere in a scenario file are
rejected, so typos cannot silently change a run.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ScenarioFormatError
from .mechanisms import (
    Contribution,
    ContributionProfile,
    DeficitMode,
    MechanismConfig,
    Variant,
)
from .preferences import Citizen, Family, ValueFunction
from .equilibrium import Scenario

_TOP_KEYS = {"mechanism", "goods", "citizens", "budget", "round"}
_MECH_KEYS = {"variant", "alpha", "beta", "scale", "allow_negative",
              "include_private_channel", "deficit_mode"}
_CITIZEN_KEYS = {"id", "lambda", "values"}
_VALUE_KEYS = {"family", "params"}
_ROUND_KEYS = {"window_end", "seed", "delay", "assurance", "agents"}
_AGENT_KEYS = {"policy", "shares"}
_FAMILY_PARAMS = {
    Family.SQRT: {"a"},
    Family.LOG: {"a"},
    Family.ISOELASTIC: {"a", "rho"},
    Family.SSHAPED: {"a", "k", "m"},
}


@dataclass(frozen=True)
class AgentSpec:
    policy: str
    shares: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class RoundSpec:
    window_end: int
    seed: int
    delay: float = 0
    assurance: dict[str, float] = field(default_factory=dict)
    agents: dict[str, AgentSpec] = field(default_factory=dict)


def _reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioFormatError(
            f"{where}: unknown keys {sorted(unknown)} (allowed: {sorted(allowed)})")


def _number(obj, where: str) -> float:
    if not isinstance(obj, (int, float)) or isinstance(obj, bool):
        raise ScenarioFormatError(f"{where}: expected a number, got {obj!r}")
    return float(obj)


def _parse_value_function(spec, where: str) -> ValueFunction:
    if not isinstance(spec, dict):
        raise ScenarioFormatError(f"{where}: expected an object, got {spec!r}")
    _reject_unknown(spec, _VALUE_KEYS, where)
    try:
        family = Family(str(spec.get("family", "")).upper())
    except ValueError:
        raise ScenarioFormatError(
            f"{where}: family must be one of {[f.value for f in Family]}, "
            f"got {spec.get('family')!r}") from None
    params = spec.get("params")
    if not isinstance(params, dict):
        raise ScenarioFormatError(f"{where}: params must be an object")
    _reject_unknown(params, _FAMILY_PARAMS[family], f"{where}.params")
    kwargs = {k: _number(v, f"{where}.params.{k}") for k, v in params.items()}
    try:
        if family is Family.SQRT:
            return ValueFunction.sqrt(kwargs["a"])
        if family is Family.LOG:
            return ValueFunction.log(kwargs["a"])
        if family is Family.ISOELASTIC:
            return ValueFunction.isoelastic(kwargs["a"], kwargs["rho"])
        return ValueFunction.sshaped(kwargs["a"], kwargs["k"], kwargs["m"])
    except KeyError as e:
        raise ScenarioFormatError(f"{where}: missing param {e}") from None
    except ValueError as e:
        raise ScenarioFormatError(f"{where}: {e}") from None


def _parse_mechanism(spec, where: str) -> MechanismConfig:
    if not isinstance(spec, dict):
        raise ScenarioFormatError(f"{where}: expected an object")
    _reject_unknown(spec, _MECH_KEYS, where)
    try:
        variant = Variant(str(spec.get("variant", "")).upper())
    except ValueError:
        raise ScenarioFormatError(
            f"{where}: variant must be one of {[v.value for v in Variant]}, "
            f"got {spec.get('variant')!r}") from None
    mode = spec.get("deficit_mode", "IGNORE")
    try:
        deficit_mode = DeficitMode(str(mode).upper())
    except ValueError:
        raise ScenarioFormatError(
            f"{where}: deficit_mode must be IGNORE or SHADOW_PRICES") from None
    kwargs = {}
    for key in ("alpha", "beta", "scale"):
        if key in spec:
            kwargs[key] = _number(spec[key], f"{where}.{key}")
    allow_negative = spec.get("allow_negative",
                              variant is Variant.PM_QF)
    if not isinstance(allow_negative, bool):
        raise ScenarioFormatError(f"{where}.allow_negative: expected a boolean")
    include_private = spec.get("include_private_channel", False)
    if not isinstance(include_private, bool):
        raise ScenarioFormatError(f"{where}.include_private_channel: expected a boolean")
    try:
        return MechanismConfig(
            variant=variant, allow_negative=allow_negative,
            include_private_channel=include_private, deficit_mode=deficit_mode,
            **kwargs)
    except ValueError as e:
        raise ScenarioFormatError(f"{where}: {e}") from None


def _parse_round(spec, goods: list[str], citizen_ids: set[str]) -> RoundSpec:
    _reject_unknown(spec, _ROUND_KEYS, "round")
    if "window_end" not in spec or not isinstance(spec["window_end"], int) \
            or spec["window_end"] < 1:
        raise ScenarioFormatError("round.window_end: expected a positive integer")
    if "seed" not in spec or not isinstance(spec["seed"], int) \
            or isinstance(spec["seed"], bool):
        raise ScenarioFormatError(
            "round.seed: a seed is required (reproducibility contract)")
    delay = spec.get("delay", 0)
    if delay is not None and (not isinstance(delay, (int, float)) or delay < 0):
        raise ScenarioFormatError("round.delay: expected a nonnegative number")
    assurance = {}
    for g, t in (spec.get("assurance") or {}).items():
        if g not in goods:
            raise ScenarioFormatError(f"round.assurance: unknown good {g!r}")
        assurance[g] = _number(t, f"round.assurance.{g}")
    agents = {}
    for cid, aspec in (spec.get("agents") or {}).items():
        if cid not in citizen_ids:
            raise ScenarioFormatError(f"round.agents: unknown citizen {cid!r}")
        if not isinstance(aspec, dict):
            raise ScenarioFormatError(f"round.agents.{cid}: expected an object")
        _reject_unknown(aspec, _AGENT_KEYS, f"round.agents.{cid}")
        policy = aspec.get("policy")
        if policy not in ("myopic_br", "threshold_pledger"):
            raise ScenarioFormatError(
                f"round.agents.{cid}: policy must be myopic_br or "
                f"threshold_pledger, got {policy!r}")
        shares = {g: _number(x, f"round.agents.{cid}.shares.{g}")
                  for g, x in (aspec.get("shares") or {}).items()}
        for g in shares:
            if g not in goods:
                raise ScenarioFormatError(
                    f"round.agents.{cid}.shares: unknown good {g!r}")
        agents[cid] = AgentSpec(policy=policy, shares=shares)
    return RoundSpec(window_end=spec["window_end"], seed=spec["seed"],
                     delay=float(delay), assurance=assurance, agents=agents)


def parse_scenario(source) -> tuple[Scenario, RoundSpec | None]:
    """Parse a scenario from a dict, a JSON string, or a file path."""
    if isinstance(source, dict):
        data = source
    else:
        text = Path(source).read_text() if not str(source).lstrip().startswith("{") \
            else str(source)
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ScenarioFormatError(f"invalid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ScenarioFormatError("scenario must be a JSON object")
    _reject_unknown(data, _TOP_KEYS, "scenario")
    for key in ("mechanism", "goods", "citizens"):
        if key not in data:
            raise ScenarioFormatError(f"scenario: missing required key {key!r}")
    mechanism = _parse_mechanism(data["mechanism"], "mechanism")
    goods = data["goods"]
    if not isinstance(goods, list) or not goods \
            or not all(isinstance(g, str) for g in goods):
        raise ScenarioFormatError("goods: expected a nonempty list of ids")
    if len(set(goods)) != len(goods):
        raise ScenarioFormatError("goods: duplicate ids")
    citizens = []
    raw_citizens = data["citizens"]
    if not isinstance(raw_citizens, list) or not raw_citizens:
        raise ScenarioFormatError("citizens: expected a nonempty list")
    for i, c in enumerate(raw_citizens):
        where = f"citizens[{i}]"
        if not isinstance(c, dict):
            raise ScenarioFormatError(f"{where}: expected an object")
        _reject_unknown(c, _CITIZEN_KEYS, where)
        cid = c.get("id")
        if not isinstance(cid, str) or not cid:
            raise ScenarioFormatError(f"{where}: id must be a nonempty string")
        lam = _number(c.get("lambda", 0), f"{where}.lambda")
        values = {}
        for g, vspec in (c.get("values") or {}).items():
            if g not in goods:
                raise ScenarioFormatError(f"{where}.values: unknown good {g!r}")
            values[g] = _parse_value_function(vspec, f"{where}.values.{g}")
        try:
            citizens.append(Citizen(id=cid, values=values, lam=lam))
        except ValueError as e:
            raise ScenarioFormatError(f"{where}: {e}") from None
    budget = None
    if "budget" in data and data["budget"] is not None:
        budget = _number(data["budget"], "budget")
    try:
        scenario = Scenario(citizens=citizens, goods=list(goods),
                            mechanism=mechanism, budget=budget)
    except ValueError as e:
        raise ScenarioFormatError(str(e)) from None
    round_spec = None
    if "round" in data and data["round"] is not None:
        if not isinstance(data["round"], dict):
            raise ScenarioFormatError("round: expected an object")
        round_spec = _parse_round(data["round"], list(goods), {c.id for c in citizens})
    return scenario, round_spec


_SIGNS = {"+1": 1, "1": 1, "+": 1, "": 1, "-1": -1, "-": -1}


def parse_contributions_csv(source) -> list[ContributionProfile]:
    """Read a contributions table (citizen_id, good_id, amount[, sign]).

    Errors carry the 1-based line number of the offending row.
    """
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        text = Path(source).read_text()
    else:
        text = str(source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ScenarioFormatError("contributions file is empty") from None
    header = [h.strip() for h in header]
    required = ["citizen_id", "good_id", "amount"]
    for col in required:
        if col not in header:
            raise ScenarioFormatError(
                f"line 1: missing required column {col!r} (header: {header})")
    idx = {col: header.index(col) for col in header}
    has_sign = "sign" in idx
    per_good: dict[str, list[Contribution]] = {}
    order: list[str] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(required):
            raise ScenarioFormatError(f"line {lineno}: expected at least "
                                      f"{len(required)} fields, got {len(row)}")
        cid = row[idx["citizen_id"]].strip()
        gid = row[idx["good_id"]].strip()
        if not cid or not gid:
            raise ScenarioFormatError(f"line {lineno}: empty citizen_id or good_id")
        try:
            amount = float(row[idx["amount"]])
        except ValueError:
            raise ScenarioFormatError(
                f"line {lineno}: amount {row[idx['amount']]!r} is not a number"
            ) from None
        sign = 1
        if has_sign and len(row) > idx["sign"]:
            raw = row[idx["sign"]].strip()
            if raw not in _SIGNS:
                raise ScenarioFormatError(
                    f"line {lineno}: sign must be one of +1/-1/+/-, got {raw!r}")
            sign = _SIGNS[raw]
        try:
            contribution = Contribution(cid, amount, sign)
        except ValueError as e:
            raise ScenarioFormatError(f"line {lineno}: {e}") from None
        if gid not in per_good:
            per_good[gid] = []
            order.append(gid)
        per_good[gid].append(contribution)
    profiles = []
    for gid in order:
        try:
            profiles.append(ContributionProfile(gid, tuple(per_good[gid])))
        except ValueError as e:
            raise ScenarioFormatError(f"good {gid!r}: {e}") from None
    return profiles


def contributions_to_csv(profiles, digits: int = 12) -> str:
    """Write profiles as a contributions table with `digits` significant digits."""
    buf = io.StringIO()
    buf.write("citizen_id,good_id,amount,sign\n")
    for p in profiles:
        for e in p.entries:
            buf.write(f"{e.citizen_id},{p.good_id},{e.amount:.{digits}g},"
                      f"{'+1' if e.sign > 0 else '-1'}\n")
    return buf.getvalue()
