"""Asymptotic ordering of positive sequences on finite data.

Two sequences xi, eta are compared through the ratio r_n = xi_n / eta_n.
A least-squares line of log r_n against log alpha_n over a trend window
decides the verdict: a clear positive slope means xi dominates (r -> inf),
a clear negative slope the reverse, and a flat, tight ratio means xi ~ eta
with lambda the geometric mean of r over the window.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

GT, SIM, LT, UNDECIDED = ">", "~", "<", "?"
_FLIP = {GT: LT, LT: GT, SIM: SIM, UNDECIDED: UNDECIDED}


class OrderError(ValueError):
    pass


# -- labels ----------------------------------------------------------------------

def sigma_label(j: int | None, k: int | None = None) -> str:
    """'sigma0', 'sigma2' (one index) or 'sigma0,1', 'sigma1,2' (two)."""
    return f"sigma{j}" if k is None else f"sigma{j},{k}"


def parse_label(label: str) -> tuple[str, tuple[int, ...]]:
    """('sigma', (k,)) / ('sigma', (j, k)) / ('beta', (k,)) / (other, ())."""
    for head in ("sigma", "beta"):
        if label.startswith(head):
            rest = label[len(head):]
            try:
                return head, tuple(int(x) for x in rest.split(","))
            except ValueError:
                break
    return label, ()


# -- sequences and verdicts ------------------------------------------------------

@dataclass(frozen=True)
class SigmaSequence:
    label: str
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise OrderError(f"{self.label}: values must be one-dimensional")
        if not np.all(vals > 0) or not np.all(np.isfinite(vals)):
            raise OrderError(f"{self.label}: values must be finite and strictly positive")
        object.__setattr__(self, "values", vals)

    def take(self, mask_or_index) -> "SigmaSequence":
        return SigmaSequence(self.label, self.values[mask_or_index])

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ComparePolicy:
    """Finite-data thresholds for deciding asymptotic order.

    ``window`` is the fraction of the log-abscissa range kept, centred;
    ``tail_fraction`` of the last indices is dropped first.
    """

    window: float = 0.7
    tail_fraction: float = 0.05
    slope_threshold: float = 0.1
    plateau_tol: float = 0.2
    min_points: int = 8
    lambda_estimator: str = "geometric"   # or 'tail': geometric mean of the last window quarter

    def __post_init__(self):
        if not 0 < self.window <= 1:
            raise ValueError("window must lie in (0, 1]")
        if self.lambda_estimator not in ("geometric", "tail"):
            raise ValueError(f"unknown lambda estimator {self.lambda_estimator!r}")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Verdict:
    relation: str
    slope: float = float("nan")
    dispersion: float = float("nan")
    lam: float | None = None
    n_points: int = 0

    def flipped(self) -> "Verdict":
        lam = None if self.lam is None else 1.0 / self.lam
        return Verdict(_FLIP[self.relation], -self.slope, self.dispersion, lam, self.n_points)

    @property
    def decided(self) -> bool:
        return self.relation != UNDECIDED


def trend_window(abscissa: np.ndarray, policy: ComparePolicy) -> np.ndarray:
    """Boolean mask of the trend window over log(abscissa)."""
    x = np.log(np.asarray(abscissa, dtype=float))
    n = len(x)
    keep = np.zeros(n, dtype=bool)
    stop = n - int(math.ceil(policy.tail_fraction * n)) if n else 0
    keep[:max(stop, 0)] = True
    if not keep.any():
        return keep
    lo, hi = x[keep].min(), x[keep].max()
    margin = 0.5 * (1 - policy.window) * (hi - lo)
    return keep & (x >= lo + margin - 1e-12) & (x <= hi - margin + 1e-12)


def compare(xi: SigmaSequence, eta: SigmaSequence, policy: ComparePolicy | None = None,
            alphas: np.ndarray | None = None) -> Verdict:
    """Verdict for xi against eta; the abscissa is alphas (default: 1, 2, ...)."""
    policy = policy or ComparePolicy()
    if len(xi) != len(eta):
        raise OrderError("sequences are not index-aligned")
    n = len(xi)
    absc = np.arange(1, n + 1, dtype=float) if alphas is None else np.asarray(alphas, dtype=float)
    if len(absc) != n:
        raise OrderError("alphas not aligned with the sequences")
    m = trend_window(absc, policy)
    npts = int(m.sum())
    if npts < policy.min_points:
        return Verdict(UNDECIDED, n_points=npts)
    x = np.log(absc[m])
    lr = np.log(xi.values[m]) - np.log(eta.values[m])
    if np.ptp(x) == 0:
        return Verdict(UNDECIDED, n_points=npts)
    slope = float(np.polyfit(x, lr, 1)[0])
    r = np.exp(lr)
    disp = float(np.std(r) / np.mean(r))
    if slope > policy.slope_threshold:
        return Verdict(GT, slope, disp, None, npts)
    if slope < -policy.slope_threshold:
        return Verdict(LT, slope, disp, None, npts)
    if disp <= policy.plateau_tol:
        if policy.lambda_estimator == "tail":
            q = max(npts // 4, 1)
            lam = float(np.exp(np.mean(lr[-q:])))
        else:
            lam = float(np.exp(np.mean(lr)))
        return Verdict(SIM, slope, disp, lam, npts)
    return Verdict(UNDECIDED, slope, disp, None, npts)


# -- tables -------------------------------------------------------------------------

@dataclass
class SigmaTable:
    sequences: list[SigmaSequence]
    alphas: np.ndarray | None
    indices: np.ndarray
    policy: ComparePolicy
    verdicts: dict[tuple[int, int], Verdict] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        labels = [s.label for s in self.sequences]
        if len(set(labels)) != len(labels):
            raise OrderError("duplicate sequence labels")
        n = len(self.indices)
        for s in self.sequences:
            if len(s) != n:
                raise OrderError(f"{s.label} is not aligned with the table indices")
        if not self.verdicts:
            self.recompute()

    def recompute(self) -> None:
        self.verdicts = {}
        for i in range(len(self.sequences)):
            self.verdicts[(i, i)] = Verdict(SIM, 0.0, 0.0, 1.0, len(self.indices))
            for j in range(i + 1, len(self.sequences)):
                v = compare(self.sequences[i], self.sequences[j], self.policy, self.alphas)
                self.verdicts[(i, j)] = v
                self.verdicts[(j, i)] = v.flipped()

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.sequences]

    def position(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no sequence {label!r} in table") from None

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def get(self, label: str) -> SigmaSequence:
        return self.sequences[self.position(label)]

    def verdict(self, a: str, b: str) -> Verdict:
        return self.verdicts[(self.position(a), self.position(b))]

    def relation(self, a: str, b: str) -> str:
        return self.verdict(a, b).relation

    def undecided_pairs(self) -> list[tuple[str, str]]:
        return [(self.sequences[i].label, self.sequences[j].label)
                for (i, j), v in self.verdicts.items() if i < j and not v.decided]

    @property
    def decided(self) -> bool:
        return not self.undecided_pairs()

    def subset(self, mask) -> "SigmaTable":
        mask = np.asarray(mask)
        return SigmaTable([s.take(mask) for s in self.sequences],
                          None if self.alphas is None else self.alphas[mask],
                          self.indices[mask], self.policy, notes=list(self.notes))

    def with_sequence(self, seq: SigmaSequence) -> "SigmaTable":
        return SigmaTable(self.sequences + [seq], self.alphas, self.indices, self.policy,
                          notes=list(self.notes))


def build_sigma_table(exp, alphas: np.ndarray | None = None, k_max: int = 2,
                      force_exp=None, policy: ComparePolicy | None = None) -> SigmaTable:
    """Assemble sigma0, sigma_k, sigma0,0, sigma0,k, sigma_j,k (j <= k <= k_max).

    ``exp`` provides Gamma(k) on its retained indices; ``alphas`` defaults to
    the expansion's own.  With ``force_exp`` the force levels beta_k = H_{k,n}
    are added, read at the same indices.
    """
    policy = policy or ComparePolicy()
    notes = []
    idx = np.asarray(getattr(exp, "retained_indices", getattr(exp, "positions", None)))
    if alphas is None:
        a = np.asarray(exp.retained_alphas() if hasattr(exp, "retained_alphas") else exp.alphas, dtype=float)
    else:
        a = np.asarray(alphas, dtype=float)
        if len(a) != len(idx):
            a = a[idx]
    if k_max > exp.depth:
        notes.append(f"k_max={k_max} exceeds expansion depth {exp.depth}; truncated")
        k_max = exp.depth
    G = [exp.Gamma(k) for k in range(k_max + 1)]
    seqs = [SigmaSequence(sigma_label(0), np.ones(len(idx))),
            SigmaSequence(sigma_label(0, 0), a)]
    for k in range(1, k_max + 1):
        seqs.append(SigmaSequence(sigma_label(k), G[k]))
        seqs.append(SigmaSequence(sigma_label(0, k), a * G[k]))
    for j in range(1, k_max + 1):
        for k in range(j, k_max + 1):
            seqs.append(SigmaSequence(sigma_label(j, k), a * G[j] * G[k]))
    if force_exp is not None:
        for k in range(1, force_exp.depth + 1):
            lv = force_exp.levels[k - 1]
            lookup = {int(i): r for r, i in enumerate(lv.indices)}
            if all(int(p) in lookup for p in idx):
                seqs.append(SigmaSequence(f"beta{k}", lv.Gamma[[lookup[int(p)] for p in idx]]))
            else:
                notes.append(f"beta{k} not available on all table indices; omitted")
    return SigmaTable(seqs, a, idx, policy, notes=notes)


# -- consistency checks --------------------------------------------------------------

def transitivity_violations(table: SigmaTable) -> list[str]:
    """Decided triples whose verdicts are inconsistent."""
    out = []
    n = len(table.sequences)
    rank = {GT: 1, SIM: 0, LT: -1}
    for a in range(n):
        for b in range(n):
            for c in range(n):
                if len({a, b, c}) < 3:
                    continue
                ab, bc, ac = (table.verdicts[(a, b)].relation, table.verdicts[(b, c)].relation,
                              table.verdicts[(a, c)].relation)
                if UNDECIDED in (ab, bc, ac):
                    continue
                x, y, z = rank[ab], rank[bc], rank[ac]
                bad = ((x >= 0 and y >= 0 and z < max(x, y))
                       or (x == 0 and y == 0 and z != 0))
                if bad:
                    l = table.labels
                    out.append(f"{l[a]} {ab} {l[b]} {bc} {l[c]} but {l[a]} {ac} {l[c]}")
    return out


def structural_violations(table: SigmaTable) -> list[str]:
    """Decided verdicts contradicting the fixed directions of the sigma array."""
    expected: list[tuple[str, str]] = []
    labels = set(table.labels)
    top = sigma_label(0, 0)
    for l in labels:
        if l != top and parse_label(l)[0] == "sigma":
            expected.append((top, l))
    k = 0
    while sigma_label(k) in labels and sigma_label(k + 1) in labels:
        expected.append((sigma_label(k), sigma_label(k + 1)))
        k += 1
    for l in labels:
        head, ix = parse_label(l)
        if head == "sigma" and len(ix) == 2:
            nxt = sigma_label(ix[0], ix[1] + 1)
            if nxt in labels:
                expected.append((l, nxt))
    out = []
    for a, b in expected:
        r = table.relation(a, b)
        if r not in (GT, UNDECIDED):
            out.append(f"expected {a} > {b}, found {r}")
    return out


# -- totalization -----------------------------------------------------------------------

@dataclass
class TotalizeResult:
    indices: np.ndarray              # positions (into the input arrays) retained
    table: SigmaTable
    sign_class: str | None = None    # S1 | S2 | S3 for a signed array
    diagnostic: str = ""


def sign_split(chi: np.ndarray, zero_tol: float = 0.0) -> dict[str, np.ndarray]:
    chi = np.asarray(chi, dtype=float)
    return {"S1": np.abs(chi) <= zero_tol, "S2": chi > zero_tol, "S3": chi < -zero_tol}


def totalize(sequences: Sequence[SigmaSequence], alphas: np.ndarray | None = None,
             signed: np.ndarray | None = None, policy: ComparePolicy | None = None,
             floor: int | None = None, chunk: float = 0.1, signed_label: str = "chi",
             zero_tol: float = 0.0) -> TotalizeResult:
    """Drop head indices until every pair of sequences is decided.

    With ``signed`` given, indices are first split into S1 (zero), S2
    (positive) and S3 (negative); the majority class is kept and, unless it
    is S1, |signed| joins the table under ``signed_label``.
    """
    policy = policy or ComparePolicy()
    sequences = list(sequences)
    if len(sequences) + (signed is not None) < 2:
        raise OrderError("totalize needs at least two sequences")
    n = len(sequences[0]) if sequences else len(signed)
    base = np.arange(n)
    sign_class = None
    if signed is not None:
        signed = np.asarray(signed, dtype=float)
        classes = sign_split(signed, zero_tol)
        sign_class = max(("S2", "S3", "S1"), key=lambda c: int(classes[c].sum()))
        base = base[classes[sign_class]]
        sequences = [s.take(base) for s in sequences]
        if sign_class != "S1":
            sequences.append(SigmaSequence(signed_label, np.abs(signed[base])))
    a = None if alphas is None else np.asarray(alphas, dtype=float)[base]
    floor = max(policy.min_points * 2, len(base) // 4) if floor is None else floor

    start = 0
    while True:
        mask = np.zeros(len(base), dtype=bool)
        mask[start:] = True
        table = SigmaTable([s.take(mask) for s in sequences], None if a is None else a[mask],
                           base[mask], policy)
        if table.decided:
            return TotalizeResult(base[mask], table, sign_class)
        step = max(1, int(chunk * (len(base) - start)))
        if len(base) - start - step < floor:
            pairs = ", ".join(f"({x}, {y})" for x, y in table.undecided_pairs())
            return TotalizeResult(base[mask], table, sign_class,
                                  f"floor of {floor} indices reached with undecided pairs {pairs}")
        start += step


# -- ordinals ---------------------------------------------------------------------------------

@dataclass
class BoundCheck:
    name: str
    ok: bool
    detail: str


@dataclass
class OrderReport:
    classes: list[list[str]]          # sorted from largest order
    ordinals: dict[str, int]
    checks: list[BoundCheck]
    annotations: dict[str, str]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def chain(self) -> str:
        return " > ".join(" ~ ".join(c) for c in self.classes)


def ordinal_assign(table: SigmaTable) -> OrderReport:
    if not table.decided:
        raise OrderError("totalize first: table has undecided verdicts "
                         + ", ".join(f"({a}, {b})" for a, b in table.undecided_pairs()))
    n = len(table.sequences)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for (i, j), v in table.verdicts.items():
        if v.relation == SIM:
            parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    reps = list(groups)
    # a class's ordinal is one more than the number of classes above it
    above = {r: sum(1 for s in reps if s != r and table.verdicts[(s, r)].relation == GT) for r in reps}
    ordered = sorted(reps, key=lambda r: (above[r], min(groups[r])))
    classes, ordinals = [], {}
    for r in ordered:
        members = [table.sequences[i].label for i in sorted(groups[r])]
        classes.append(members)
        for m in members:
            ordinals[m] = above[r] + 1

    checks: list[BoundCheck] = []
    annotations: dict[str, str] = {}
    for label, o in ordinals.items():
        head, ix = parse_label(label)
        if head != "sigma":
            continue
        if ix == (0, 0):
            checks.append(BoundCheck(f"ord({label}) = 1", o == 1, f"ord={o}"))
        elif len(ix) == 2 and ix[0] == 0:
            k = ix[1]
            ub = k * (k + 3) // 2 + 1
            checks.append(BoundCheck(f"{k} < ord({label}) <= {ub}", k < o <= ub, f"ord={o}"))
        elif len(ix) == 2:
            j, k = ix
            checks.append(BoundCheck(f"{k + j} < ord({label})", k + j < o, f"ord={o}"))
            annotations[label] = f"ord({label}) <= omega*{2 * j} + {(k - j) * (k - j + 1) // 2}"
        elif len(ix) == 1:
            k = ix[0]
            checks.append(BoundCheck(f"{k + 1} < ord({label})", k + 1 < o, f"ord={o}"))
            annotations[label] = f"ord({label}) <= omega^2 + {k}"
    checks.append(BoundCheck("equivalence classes finite", True,
                             f"largest class has {max(len(c) for c in classes)} members"))
    return OrderReport(classes, ordinals, checks, annotations)
