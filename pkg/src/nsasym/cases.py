"""Detection of the algebraic limit relations satisfied by a steady branch.

Scenario identifiers are ``<family>:<case>``:

* ``limit``        general limit v (B(v,v) = 0 always; cases ii, iii-a/b/c)
* ``zero-limit``   v = 0 (cases i-1, i-2, ii, ii-1a, ii-1b, ii-2a, ii-2b)
* ``stokes-limit`` v = A^{-1} g with a nontrivial expansion (cases i..vi)
* ``perturbed``    forces g_n -> g with a nontrivial expansion (iii, iv, v, v-1..v-5)

Every case carries the identity it asserts, and the report lists the
coefficient-norm residual of each identity evaluated on the data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from nsasym.bilinear import bilinear_B, bilinear_Bs
from nsasym.field import SpectralField, inner_product, stokes_apply
from nsasym.order import (GT, LT, SIM, UNDECIDED, ComparePolicy, SigmaSequence, SigmaTable,
                          build_sigma_table, sigma_label, totalize)

ZERO_REL_TOL = 1e-6
CHI_ZERO_TOL = 1e-10

S0, S00 = sigma_label(0), sigma_label(0, 0)
S1, S2 = sigma_label(1), sigma_label(2)
S01, S02 = sigma_label(0, 1), sigma_label(0, 2)
S11, S12 = sigma_label(1, 1), sigma_label(1, 2)
BETA1 = "beta1"


class CaseError(ValueError):
    pass


@dataclass
class CaseReport:
    scenario: str
    relation: str = ""
    lambda_estimates: dict[str, float] = field(default_factory=dict)
    chi: SigmaSequence | None = None
    chi_class: str | None = None
    identity_residuals: dict[str, float] = field(default_factory=dict)
    evidence: dict[str, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    blocking: tuple[str, str] | None = None
    policy: dict = field(default_factory=dict)

    @property
    def family(self) -> str:
        return self.scenario.split(":", 1)[0]

    @property
    def case(self) -> str:
        return self.scenario.split(":", 1)[-1]

    def to_text(self) -> str:
        lines = [f"scenario = {self.scenario}"]
        if self.relation:
            lines.append(f"relation = {self.relation}")
        if self.blocking:
            lines.append(f"blocking_pair = {self.blocking[0]} vs {self.blocking[1]}")
        for k, v in self.lambda_estimates.items():
            lines.append(f"lambda.{k} = {v:.10g}")
        if self.chi_class:
            lines.append(f"chi_class = {self.chi_class}")
        for k, v in self.identity_residuals.items():
            lines.append(f"residual[{k}] = {v:.6e}")
        for k, v in self.evidence.items():
            lines.append(f"evidence[{k}] = {v:.10g}")
        for k, v in self.policy.items():
            lines.append(f"policy.{k} = {v}")
        for n in self.notes:
            lines.append(f"note = {n}")
        return "\n".join(lines) + "\n"


# -- helpers ---------------------------------------------------------------------------

def _rel(table: SigmaTable, a: str, b: str) -> str:
    if a not in table or b not in table:
        return UNDECIDED
    return table.relation(a, b)


def _limit(table: SigmaTable, a: str, b: str) -> float:
    """Estimate of lim a_n / b_n: lambda for ~, 0 for a < b, inf for a > b."""
    r = _rel(table, a, b)
    if r == SIM:
        return table.verdict(a, b).lam
    if r == LT:
        return 0.0
    if r == GT:
        return math.inf
    return math.nan


def _zero(f: SpectralField, scale: float) -> bool:
    return f.znorm() <= ZERO_REL_TOL * max(scale, 1e-300)


def _indeterminate(report: CaseReport, a: str, b: str) -> CaseReport:
    report.scenario = f"{report.family}:indeterminate"
    report.blocking = (a, b)
    report.notes.append(f"verdict between {a} and {b} is undecided")
    return report


def _resolve_inputs(source, exp, table, alphas, k_max, policy):
    g = getattr(source, "g", source)
    if not isinstance(g, SpectralField):
        raise CaseError("first argument must be a ContinuationRun or the force field g")
    if alphas is None and getattr(exp, "alphas", None) is None and hasattr(source, "alphas"):
        alphas = source.alphas
    if table is None:
        table = build_sigma_table(exp, alphas, k_max, policy=policy)
    return g, table


def _chi_totalize(table: SigmaTable, chi: np.ndarray, members: list[str]):
    """Sign-split chi and decide |chi| against ``members`` on the majority class."""
    seqs = [table.get(m) for m in members if m in table]
    res = totalize(seqs, table.alphas, signed=chi, policy=table.policy, zero_tol=CHI_ZERO_TOL)
    return res


# -- fixed force ---------------------------------------------------------------------------

def classify_case(source, exp, table: SigmaTable | None = None, alphas=None, k_max: int = 2,
                  policy: ComparePolicy | None = None) -> CaseReport:
    """Select the limit relation supported by the data of a steady branch.

    ``source`` is a ContinuationRun (its force is used) or the force g itself.
    ``exp`` is the expansion of the branch and ``table`` its sigma table (built
    with ``k_max`` when omitted).
    """
    g, table = _resolve_inputs(source, exp, table, alphas, k_max, policy)
    v = exp.v
    ws = list(exp.directions)
    gz = g.znorm()
    report = CaseReport("limit:indeterminate", policy=table.policy.as_dict())
    report.identity_residuals["B(v,v)"] = bilinear_B(v, v).znorm()
    avg = (stokes_apply(v) - g).znorm()
    report.evidence["|v|_Z"] = v.znorm()
    report.evidence["|Av-g|_Z"] = avg
    report.evidence["|g|_Z"] = gz
    if table.notes:
        report.notes.extend(table.notes)

    if _zero(v, gz):
        return _zero_limit(report, g, ws, table)
    if exp.depth == 0:
        report.scenario = "limit:ii"
        report.relation = "Av = g"
        report.identity_residuals["Av-g"] = avg
        return report
    if avg <= ZERO_REL_TOL * gz:
        return _stokes_limit(report, g, v, ws, table)

    w1 = ws[0]
    r = _rel(table, S0, S01)
    if r == GT:
        report.scenario = "limit:iii-a"
        report.relation = "Av = g"
        report.identity_residuals["Av-g"] = avg
        report.notes.append("sigma0 dominates sigma0,1 but |Av-g| is not small: the data "
                            "contradict this case")
    elif r == LT:
        report.scenario = "limit:iii-b"
        report.relation = "Bs(v, w1) = 0"
        report.identity_residuals["Bs(v,w1)"] = bilinear_Bs(v, w1).znorm()
    elif r == SIM:
        lam = _limit(table, S01, S0)
        report.scenario = "limit:iii-c"
        report.relation = "Av + lambda Bs(v, w1) = g"
        report.lambda_estimates["lambda"] = lam
        report.identity_residuals["Av+lambda*Bs(v,w1)-g"] = (
            stokes_apply(v) + lam * bilinear_Bs(v, w1) - g).znorm()
    else:
        return _indeterminate(report, S0, S01)
    return report


def _zero_limit(report: CaseReport, g, ws, table) -> CaseReport:
    report.scenario = "zero-limit:indeterminate"
    if not ws:
        report.notes.append("trivial expansion with zero limit: g must vanish")
        report.scenario = "zero-limit:trivial"
        report.identity_residuals["g"] = g.znorm()
        return report
    w1 = ws[0]
    w2 = ws[1] if len(ws) > 1 else None
    r = _rel(table, S11, S0)
    if r == GT:
        report.identity_residuals["B(w1,w1)"] = bilinear_B(w1, w1).znorm()
        if w2 is None:
            report.scenario = "zero-limit:i"
            report.relation = "B(w1, w1) = 0"
            report.notes.append("second direction unavailable; sub-case not resolved")
            return report
        r2 = _rel(table, S12, S0)
        if r2 == GT:
            report.scenario = "zero-limit:i-1"
            report.relation = "B(w1, w1) = 0, Bs(w1, w2) = 0"
            report.identity_residuals["Bs(w1,w2)"] = bilinear_Bs(w1, w2).znorm()
        elif r2 == SIM:
            lam = _limit(table, S12, S0)
            report.scenario = "zero-limit:i-2"
            report.relation = "B(w1, w1) = 0, lambda Bs(w1, w2) = g, <g, w1> = 0"
            report.lambda_estimates["lambda"] = lam
            report.identity_residuals["lambda*Bs(w1,w2)-g"] = (lam * bilinear_Bs(w1, w2) - g).znorm()
            report.identity_residuals["<g,w1>"] = abs(inner_product(g, w1))
        else:
            return _indeterminate(report, S12, S0)
        return report
    if r != SIM:
        if r == LT:
            report.notes.append("sigma1,1 below sigma0 is excluded for a zero limit")
        return _indeterminate(report, S11, S0)

    lam_star = _limit(table, S11, S0)
    report.lambda_estimates["lambda_star"] = lam_star
    report.identity_residuals["lambda_star*B(w1,w1)-g"] = (lam_star * bilinear_B(w1, w1) - g).znorm()
    a = table.alphas
    chi = 1.0 - a * table.get(S1).values ** 2 / lam_star
    report.scenario = "zero-limit:ii"
    report.relation = "lambda_star B(w1, w1) = g"
    if w2 is None:
        report.notes.append("second direction unavailable; sub-case not resolved")
        return report

    tot = _chi_totalize(table, chi, [S1, S0, S02, S12])
    report.chi_class = tot.sign_class
    t = tot.table
    if tot.sign_class != "S1":
        report.chi = t.get("chi")
    if tot.diagnostic:
        report.notes.append(tot.diagnostic)
    sgn = -1.0 if tot.sign_class == "S3" else 1.0
    gh = lambda x, y: _rel(t, x, y)  # noqa: E731
    chi_zero = tot.sign_class == "S1"
    g_w2 = inner_product(g, w2)
    v1 = w1.vnorm() ** 2

    r02 = _rel(table, S02, S0)
    if r02 == SIM:
        if not chi_zero and gh(S1, "chi") == SIM:
            l1 = sgn * _limit(t, S1, "chi")
            l2 = sgn * _limit(t, S12, "chi")
            report.scenario = "zero-limit:ii-1a"
            report.relation = "lambda1 A w1 + lambda2 Bs(w1, w2) = g"
            report.lambda_estimates.update(lambda1=l1, lambda2=l2)
            report.identity_residuals["lambda1*Aw1+lambda2*Bs(w1,w2)-g"] = (
                l1 * stokes_apply(w1) + l2 * bilinear_Bs(w1, w2) - g).znorm()
            report.identity_residuals["lambda_star*lambda1*|w1|_V^2-lambda2*<g,w2>"] = abs(
                lam_star * l1 * v1 - l2 * g_w2)
        elif chi_zero or gh(S1, "chi") == GT:
            l2 = _limit(table, S02, S0)
            report.scenario = "zero-limit:ii-1b"
            report.relation = "A w1 + lambda2 Bs(w1, w2) = 0"
            report.lambda_estimates["lambda2"] = l2
            report.identity_residuals["Aw1+lambda2*Bs(w1,w2)"] = (
                stokes_apply(w1) + l2 * bilinear_Bs(w1, w2)).znorm()
            report.identity_residuals["lambda_star*|w1|_V^2-lambda2*<g,w2>"] = abs(lam_star * v1 - l2 * g_w2)
        else:
            return _indeterminate(report, S1, "chi")
    elif r02 == GT:
        if not chi_zero and gh(S12, "chi") == SIM:
            l2 = sgn * _limit(t, S12, "chi")
            report.scenario = "zero-limit:ii-2a"
            report.relation = "lambda2 Bs(w1, w2) = g"
            report.lambda_estimates["lambda2"] = l2
            report.identity_residuals["lambda2*Bs(w1,w2)-g"] = (l2 * bilinear_Bs(w1, w2) - g).znorm()
        elif chi_zero or gh(S12, "chi") == GT:
            report.scenario = "zero-limit:ii-2b"
            report.relation = "Bs(w1, w2) = 0"
            report.identity_residuals["Bs(w1,w2)"] = bilinear_Bs(w1, w2).znorm()
        else:
            return _indeterminate(report, S12, "chi")
        report.identity_residuals["<g,w2>"] = abs(g_w2)
        report.identity_residuals["<B(w2,w2),w1>"] = abs(inner_product(bilinear_B(w2, w2), w1))
    else:
        return _indeterminate(report, S02, S0)
    return report


def _stokes_limit(report: CaseReport, g, v, ws, table) -> CaseReport:
    w1 = ws[0]
    report.identity_residuals["Bs(v,w1)"] = bilinear_Bs(v, w1).znorm()
    report.scenario = "stokes-limit:indeterminate"
    report.relation = "Bs(v, w1) = 0"
    if len(ws) < 2:
        report.notes.append("second direction unavailable; sub-case not resolved")
        return report
    w2 = ws[1]
    trio = [S1, S02, S11]
    for i, a in enumerate(trio):
        for b in trio[i + 1:]:
            if _rel(table, a, b) == UNDECIDED:
                return _indeterminate(report, a, b)
    top = [s for s in trio if all(_rel(table, s, o) in (GT, SIM) for o in trio)]
    top_set = set(top)
    Aw1 = stokes_apply(w1)
    if top_set == {S1} or top_set == {S1, S11}:
        report.scenario = "stokes-limit:i"
        report.relation = "impossible ordering (forces w1 = 0)"
        report.notes.append("ordering excluded by theory; data or policy inconsistent")
    elif top_set == {S02}:
        report.scenario = "stokes-limit:ii"
        report.relation = "Bs(v, w1) = 0, Bs(v, w2) = 0"
        report.identity_residuals["Bs(v,w2)"] = bilinear_Bs(v, w2).znorm()
    elif top_set == {S11}:
        report.scenario = "stokes-limit:iii"
        report.relation = "Bs(v, w1) = 0, B(w1, w1) = 0"
        report.identity_residuals["B(w1,w1)"] = bilinear_B(w1, w1).znorm()
    elif top_set == {S1, S02}:
        lam = _limit(table, S02, S1)
        report.scenario = "stokes-limit:iv"
        report.relation = "A w1 + lambda Bs(v, w2) = 0"
        report.lambda_estimates["lambda"] = lam
        report.identity_residuals["Aw1+lambda*Bs(v,w2)"] = (Aw1 + lam * bilinear_Bs(v, w2)).znorm()
    elif top_set == {S02, S11}:
        lam = _limit(table, S11, S02)
        report.scenario = "stokes-limit:v"
        report.relation = "Bs(v, w2) + lambda B(w1, w1) = 0"
        report.lambda_estimates["lambda"] = lam
        report.identity_residuals["Bs(v,w2)+lambda*B(w1,w1)"] = (
            bilinear_Bs(v, w2) + lam * bilinear_B(w1, w1)).znorm()
    elif top_set == set(trio):
        l1, l2 = _limit(table, S02, S1), _limit(table, S11, S1)
        report.scenario = "stokes-limit:vi"
        report.relation = "A w1 + lambda1 Bs(v, w2) + lambda2 B(w1, w1) = 0"
        report.lambda_estimates.update(lambda1=l1, lambda2=l2)
        report.identity_residuals["Aw1+lambda1*Bs(v,w2)+lambda2*B(w1,w1)"] = (
            Aw1 + l1 * bilinear_Bs(v, w2) + l2 * bilinear_B(w1, w1)).znorm()
    return report


# -- varying force -------------------------------------------------------------------------

def classify_perturbed_case(exp_v, exp_g, table: SigmaTable | None = None, alphas=None,
                            k_max: int = 2, policy: ComparePolicy | None = None) -> CaseReport:
    """Limit relations for steady states under forces g_n -> g.

    ``exp_v`` and ``exp_g`` are the expansions of v_n and g_n on the same
    index set; the table gains beta1 = H_{1,n} from ``exp_g``.
    """
    if exp_g.depth == 0:
        raise CaseError("exp_g trivial; use classify_case")
    if table is None:
        table = build_sigma_table(exp_v, alphas, k_max, force_exp=exp_g, policy=policy)
    g = exp_g.v
    v = exp_v.v
    ws = list(exp_v.directions)
    h1 = exp_g.directions[0]
    report = CaseReport("perturbed:indeterminate", policy=table.policy.as_dict())
    report.identity_residuals["B(v,v)"] = bilinear_B(v, v).znorm()
    report.evidence["|v|_Z"] = v.znorm()
    report.evidence["|Av-g|_Z"] = (stokes_apply(v) - g).znorm()
    if table.notes:
        report.notes.extend(table.notes)
    if not ws:
        report.notes.append("expansion of v_n is trivial, which the theory excludes")
        return report
    w1 = ws[0]
    w2 = ws[1] if len(ws) > 1 else None
    if BETA1 not in table:
        raise CaseError("table lacks beta1; build it with the force expansion")
    Av, Aw1 = stokes_apply(v), stokes_apply(w1)
    r = _rel(table, S01, S0)
    if r == GT:
        report.scenario = "perturbed:iii"
        report.relation = "Bs(v, w1) = 0"
        report.identity_residuals["Bs(v,w1)"] = bilinear_Bs(v, w1).znorm()
        report.lambda_estimates["lambda1"] = _limit(table, BETA1, S01)
        return report
    if r == LT:
        l1 = _limit(table, BETA1, S01)
        report.scenario = "perturbed:iv"
        report.relation = "Av = g, Bs(v, w1) = lambda1 h1"
        report.lambda_estimates["lambda1"] = l1
        if not math.isfinite(l1):
            report.notes.append("H1 dominates alpha*Gamma1, which the theory excludes")
            return report
        report.identity_residuals["Av-g"] = (Av - g).znorm()
        report.identity_residuals["Bs(v,w1)-lambda1*h1"] = (bilinear_Bs(v, w1) - l1 * h1).znorm()
        return report
    if r != SIM:
        return _indeterminate(report, S01, S0)

    l2 = _limit(table, S01, S0)
    report.scenario = "perturbed:v"
    report.relation = "Av - g + lambda2 Bs(v, w1) = 0"
    report.lambda_estimates["lambda2"] = l2
    report.identity_residuals["Av-g+lambda2*Bs(v,w1)"] = (Av - g + l2 * bilinear_Bs(v, w1)).znorm()
    report.notes.append("chi is centred on lambda2 = lim alpha*Gamma1")
    chi = table.alphas * table.get(S1).values - l2
    tot = _chi_totalize(table, chi, [S1, BETA1, S02, S0])
    t = tot.table
    report.chi_class = tot.sign_class
    if tot.diagnostic:
        report.notes.append(tot.diagnostic)
    chi_zero = tot.sign_class == "S1"
    if not chi_zero:
        report.chi = t.get("chi")
    sgn = -1.0 if tot.sign_class == "S3" else 1.0

    def above_chi(x):  # x dominates |chi| (or chi vanishes)
        return chi_zero or _rel(t, x, "chi") == GT

    B11 = bilinear_B(w1, w1)
    Bv1 = bilinear_Bs(v, w1)
    Bv2 = bilinear_Bs(v, w2) if w2 is not None else None
    if (w2 is not None and _rel(t, S02, S1) == GT and _rel(t, S02, BETA1) == GT and above_chi(S02)):
        report.scenario = "perturbed:v-3"
        report.relation += "; Bs(v, w2) = 0"
        report.identity_residuals["Bs(v,w2)"] = Bv2.znorm()
    elif _rel(t, S1, BETA1) == GT and above_chi(S1):
        report.scenario = "perturbed:v-1"
        if w2 is None:
            report.notes.append("second direction unavailable; identity not evaluated")
            return report
        l3 = _limit(t, S1, S02)
        report.relation += "; lambda3 (A w1 + lambda2 B(w1, w1)) + Bs(v, w2) = 0"
        report.lambda_estimates["lambda3"] = l3
        report.identity_residuals["lambda3*(Aw1+lambda2*B(w1,w1))+Bs(v,w2)"] = (
            l3 * (Aw1 + l2 * B11) + Bv2).znorm()
    elif _rel(t, BETA1, S1) == GT and above_chi(BETA1):
        report.scenario = "perturbed:v-2"
        if w2 is None:
            report.notes.append("second direction unavailable; identity not evaluated")
            return report
        l4 = _limit(t, BETA1, S02)
        report.relation += "; Bs(v, w2) = lambda4 h1"
        report.lambda_estimates["lambda4"] = l4
        report.identity_residuals["Bs(v,w2)-lambda4*h1"] = (Bv2 - l4 * h1).znorm()
    elif not chi_zero and _rel(t, "chi", S1) == GT and _rel(t, "chi", BETA1) == GT:
        report.scenario = "perturbed:v-4"
        if w2 is None:
            report.relation += "; Bs(v, w1) = 0, Av = g"
            report.identity_residuals["Bs(v,w1)"] = Bv1.znorm()
            report.identity_residuals["Av-g"] = (Av - g).znorm()
        elif _rel(t, "chi", S02) in (GT, SIM):
            l5 = sgn * _limit(t, S02, "chi")
            report.relation += "; Bs(v, w1) + lambda5 Bs(v, w2) = 0"
            report.lambda_estimates["lambda5"] = l5
            report.identity_residuals["Bs(v,w1)+lambda5*Bs(v,w2)"] = (Bv1 + l5 * Bv2).znorm()
    elif (not chi_zero and _rel(t, S1, BETA1) == SIM and _rel(t, S1, "chi") == SIM):
        l6 = sgn * _limit(t, "chi", S1)
        l7 = _limit(t, BETA1, S1)
        report.scenario = "perturbed:v-5"
        report.lambda_estimates.update(lambda6=l6, lambda7=l7)
        lhs = Aw1 + l6 * Bv1 + l2 * B11
        if w2 is not None and _rel(t, S1, S02) in (GT, SIM):
            l8 = _limit(t, S02, S1)
            report.lambda_estimates["lambda8"] = l8
            lhs = lhs + l8 * Bv2
            report.relation += "; A w1 + lambda6 Bs(v, w1) + lambda2 B(w1, w1) + lambda8 Bs(v, w2) = lambda7 h1"
        else:
            report.relation += "; A w1 + lambda6 Bs(v, w1) + lambda2 B(w1, w1) = lambda7 h1"
        report.identity_residuals["order-one balance"] = (lhs - l7 * h1).znorm()
    else:
        report.notes.append("no refined sub-case applies on the available verdicts")
    return report
