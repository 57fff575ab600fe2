"""Mutual-invasibility tests for two competing seasonal species.

The invasion index of species ``i`` against resident ``j`` is the time
average of ``beta_i(t) * (1 - u_j(t))`` over one period, where ``u_j`` is the
resident's periodic equilibrium curve.  Species ``i`` invades when the index
beats its season-averaged death rate.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

from scipy.integrate import quad

from .lattice import SeasonalParams
from .meanfield import EquilibriumCurve, equilibrium_curve, single_species_survives

__all__ = [
    "InvasionReport",
    "PairResult",
    "Corollary3Report",
    "WORKED_EXAMPLE",
    "worked_example_params",
    "invasion_index",
    "quadrature_invasion_index",
    "theorem1_check",
    "corollary3_check",
]

QUAD_TOL = 1e-8


def worked_example_params() -> SeasonalParams:
    """Species 1: fast grower confined to season 1; species 2: slow, better competitor."""
    return SeasonalParams(
        S=2,
        D=1.0,
        beta=[(10000.0, 0.0), (5.2, 1.0)],
        delta=[(6000.0, 100.0), (2.0, 2.0)],
    )


WORKED_EXAMPLE = {
    "resident_integral": 0.366066,
    "invasion_1_lower": 3169.0,
    "death_1_mean": 3050.0,
    "invasion_2_lower": 2.058,
    "death_2_mean": 2.0,
}


def _check_pair(params: SeasonalParams, i: int, j: int) -> None:
    for s in (i, j):
        if not 1 <= s <= params.S:
            raise IndexError(f"species {s} out of range 1..{params.S}")
    if i == j:
        raise ValueError("invader and resident must differ")


def _index_from_curve(params: SeasonalParams, i: int, curve: EquilibriumCurve) -> float:
    D = params.D
    total = params.b(i, 1) * (D - curve.season_integral(1)) + params.b(i, 2) * (D - curve.season_integral(2))
    return total / (2.0 * D)


def quadrature_invasion_index(params: SeasonalParams, i: int, curve: EquilibriumCurve) -> float:
    """Same index by adaptive quadrature of the curve itself."""
    D = params.D
    total = 0.0
    for s, flow, p in ((1, curve.flow1, curve.p1), (2, curve.flow2, curve.p2)):
        b = params.b(i, s)
        if b == 0:
            continue
        val, _ = quad(lambda t: 1.0 - flow(p, t), 0.0, D, points=curve.breakpoints(s) or None,
                      epsabs=1e-13, epsrel=1e-13, limit=500)
        total += b * val
    return total / (2.0 * D)


def invasion_index(params: SeasonalParams, i: int, j: int, verify: bool = True) -> float:
    """Invasion index of species ``i`` against the equilibrium curve of ``j``.

    A resident that cannot persist alone contributes the zero curve.  With
    ``verify`` the closed form is checked against quadrature and a
    disagreement beyond 1e-8 raises.
    """
    _check_pair(params, i, j)
    curve = equilibrium_curve(params, j)
    value = _index_from_curve(params, i, curve)
    if verify:
        ref = quadrature_invasion_index(params, i, curve)
        if abs(ref - value) > QUAD_TOL * max(1.0, abs(value)):
            raise ArithmeticError(f"invasion index closed form {value!r} disagrees with quadrature {ref!r}")
    return value


@dataclass
class PairResult:
    invader: int
    resident: int
    index: float
    threshold: float
    margin: float
    verdict: bool
    resident_degenerate: bool
    resident_p1: float
    resident_p2: float


@dataclass
class InvasionReport:
    pairs: list
    verdict: bool
    degenerate: bool
    corollary3: "Corollary3Report | None" = None

    def as_dict(self) -> dict:
        out = {"theorem1_verdict": self.verdict, "degenerate_resident": self.degenerate}
        for p in self.pairs:
            tag = f"invader{p.invader}_resident{p.resident}"
            out[f"{tag}.index"] = p.index
            out[f"{tag}.threshold"] = p.threshold
            out[f"{tag}.margin"] = p.margin
            out[f"{tag}.verdict"] = p.verdict
            out[f"{tag}.resident_degenerate"] = p.resident_degenerate
            out[f"{tag}.resident_p1"] = p.resident_p1
            out[f"{tag}.resident_p2"] = p.resident_p2
        if self.corollary3 is not None:
            for k, v in asdict(self.corollary3).items():
                out[f"corollary3.{k}"] = v
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.as_dict().items())

    def to_csv_row(self) -> dict:
        return {k: _fmt(v) for k, v in self.as_dict().items()}

    def to_csv(self) -> str:
        row = self.to_csv_row()
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        w.writeheader()
        w.writerow(row)
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".12g")
    if v is None:
        return "na"
    return str(v)


def theorem1_check(params: SeasonalParams, verify: bool = True) -> InvasionReport:
    """Both invasion directions for a two-species system."""
    if params.S != 2:
        raise ValueError(f"the mutual invasibility test needs exactly 2 species, got {params.S}")
    pairs = []
    for i, j in ((1, 2), (2, 1)):
        curve = equilibrium_curve(params, j)
        idx = invasion_index(params, i, j, verify=verify)
        thr = params.mean_death(i)
        pairs.append(
            PairResult(
                invader=i,
                resident=j,
                index=idx,
                threshold=thr,
                margin=idx - thr,
                verdict=idx > thr,
                resident_degenerate=not single_species_survives(params, j),
                resident_p1=curve.p1,
                resident_p2=curve.p2,
            )
        )
    degenerate = any(p.resident_degenerate for p in pairs)
    return InvasionReport(pairs=pairs, verdict=all(p.verdict for p in pairs), degenerate=degenerate)


@dataclass
class Corollary3Report:
    applicable: bool
    lhs_1: float | None = None
    lhs_2: float | None = None
    threshold_1: float | None = None
    threshold_2: float | None = None
    verdict: bool | None = None
    theorem1_verdict: bool | None = None
    implication_holds: bool | None = None
    reason: str = ""


def corollary3_check(params: SeasonalParams, theorem: InvasionReport | None = None) -> Corollary3Report:
    """Explicit sufficient condition from season-start densities alone.

    Needs species 1 to prefer season 1 and species 2 to prefer season 2;
    otherwise the report is marked not applicable.
    """
    if params.S != 2:
        raise ValueError(f"needs exactly 2 species, got {params.S}")
    if not (params.b(1, 1) > params.b(1, 2) and params.b(2, 2) > params.b(2, 1)):
        return Corollary3Report(applicable=False, reason="needs beta11 > beta12 and beta22 > beta21")
    c1 = equilibrium_curve(params, 1)
    c2 = equilibrium_curve(params, 2)
    p11, p12 = c1.p1, c1.p2
    p21, p22 = c2.p1, c2.p2
    lhs1 = 0.5 * (params.b(1, 1) * (1 - (p21 + p22) / 2) + params.b(1, 2) * (1 - p21))
    lhs2 = 0.5 * (params.b(2, 1) * (1 - p12) + params.b(2, 2) * (1 - (p11 + p12) / 2))
    thr1, thr2 = params.mean_death(1), params.mean_death(2)
    verdict = lhs1 > thr1 and lhs2 > thr2
    theorem = theorem1_check(params) if theorem is None else theorem
    return Corollary3Report(
        applicable=True,
        lhs_1=lhs1,
        lhs_2=lhs2,
        threshold_1=thr1,
        threshold_2=thr2,
        verdict=verdict,
        theorem1_verdict=theorem.verdict,
        implication_holds=(not verdict) or theorem.verdict,
    )
