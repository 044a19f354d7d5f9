"""Minkowski four-wave interaction machinery.

Covers the rho-parametrized null covector construction, the formal
parametrix Q0 on plane-wave products, closed-form interaction asymptotics
with exact integer exponent bookkeeping, polarization factors, the
dominance ordering over the term catalog, the indicator coefficient, the
kappa determinant, and a brute-force oscillatory-integral oracle.

Everything lives in the standard Minkowski chart, eta = diag(-1,1,1,1).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from math import lgamma

import numpy as np
from scipy.integrate import quad

ETA = np.diag([-1.0, 1.0, 1.0, 1.0])

# hierarchy size order: rho_4 < rho_2 < rho_3 < rho_1
SIZE_RANK = {1: 3, 3: 2, 2: 1, 4: 0}   # larger rank = larger rho


class ParametrixUndefinedError(ValueError):
    """Q0 applied across a vanishing pairing g(b, b')."""


class ConstraintViolation(ValueError):
    """Inadmissible derivative-order vector; message names the inequality."""


def hierarchy_larger(j, k):
    """The index with the larger rho under the configured hierarchy."""
    return j if SIZE_RANK[j] > SIZE_RANK[k] else k


# ----------------------------------------------------------------------
# covector sets


class NullCovectorSet:
    """b^(5) = (1,1,0,0) and four nearby null covectors b^(j)(rho_j).

    b^(j) = (1, 1 - rho^2/2, beta, rho^3) with beta chosen so b is null
    exactly; the O(rho^3) correction of the construction is realized by
    beta = sqrt(rho^2 - rho^4/4 - rho^6).
    """

    def __init__(self, rhos):
        rhos = np.asarray(rhos, dtype=float)
        if rhos.shape != (4,):
            raise ValueError("need four rho parameters")
        if np.any(rhos <= 0) or np.any(rhos >= 0.5):
            raise ValueError("rho parameters must lie in (0, 1/2)")
        rad = rhos**2 - 0.25 * rhos**4 - rhos**6
        if np.any(rad <= 0):
            raise ValueError("negative radicand; rho too large")
        beta = np.sqrt(rad)
        self.rhos = rhos
        b = np.zeros((5, 4))
        for j in range(4):
            b[j] = (1.0, 1.0 - 0.5 * rhos[j] ** 2, beta[j], rhos[j] ** 3)
        b[4] = (1.0, 1.0, 0.0, 0.0)
        self.b = b
        # pairings omega_kj = eta(b_k, b_j), 1-based indices 1..5
        self.omega = np.einsum("ka,ab,jb->kj", b, ETA, b)

    def covector(self, j):
        """1-based access, b^(5) is the reference direction."""
        return self.b[j - 1]

    def pairing(self, k, j):
        return float(self.omega[k - 1, j - 1])


def build_covectors(rho1, rho2=None, rho3=None, rho4=None):
    if rho2 is None:
        return NullCovectorSet(np.asarray(rho1, dtype=float))
    return NullCovectorSet(np.array([rho1, rho2, rho3, rho4]))


def hierarchy_rhos(rho1, N=2):
    """rho vector obeying rho3 = rho1^N, rho2 = rho3^N, rho4 = rho2^N."""
    rho3 = rho1**N
    rho2 = rho3**N
    rho4 = rho2**N
    return np.array([rho1, rho2, rho3, rho4])


# ----------------------------------------------------------------------
# plane-wave terms and the formal parametrix


@dataclass(frozen=True)
class PlaneWaveTerm:
    """c * prod_j (b^(i_j) . x)_+^{a_j} * [e^{i tau b^(5) . x}].

    ``factors`` maps covector index (1-based) to the Heaviside-power
    exponent; exponents stay symbolic (exact).  ``tau_power`` tracks
    explicit powers of tau in the coefficient.
    """

    coefficient: complex
    factors: tuple          # ((index, exponent), ...) sorted by index
    modulated: bool = False
    tau_power: int = 0

    def __post_init__(self):
        idx = [i for i, _ in self.factors]
        if len(set(idx)) != len(idx):
            raise ValueError("two factors share a covector index")
        object.__setattr__(self, "factors",
                           tuple(sorted(self.factors)))

    def exponent_of(self, index):
        for i, a in self.factors:
            if i == index:
                return a
        return None


def plane_wave(index, a, coefficient=1.0, modulated=False):
    return PlaneWaveTerm(complex(coefficient), ((index, a),), modulated)


def product(t1: PlaneWaveTerm, t2: PlaneWaveTerm):
    if t1.modulated and t2.modulated:
        raise ValueError("cannot multiply two modulated terms")
    return PlaneWaveTerm(t1.coefficient * t2.coefficient,
                         t1.factors + t2.factors,
                         t1.modulated or t2.modulated,
                         t1.tau_power + t2.tau_power)


def q0_apply(term: PlaneWaveTerm, covectors: NullCovectorSet):
    """The formal parametrix on a two-factor term (or one factor with
    modulation): exponents go up by one and the coefficient divides by
    2 (a1+1)(a2+1) g(b, b'), or by 2 i (a+1) g(b, b5) tau in the modulated
    branch.  Checked symbolically against the wave operator."""
    if term.modulated and len(term.factors) == 1:
        (j, a), = term.factors
        w = covectors.pairing(j, 5)
        if abs(w) < 1e-12:
            raise ParametrixUndefinedError(
                f"g(b{j}, b5) = {w:.2e} vanishes")
        coeff = term.coefficient / (2j * (a + 1) * w)
        return PlaneWaveTerm(coeff, ((j, a + 1),), True, term.tau_power - 1)
    if len(term.factors) != 2 or term.modulated:
        raise ValueError("Q0 needs exactly two Heaviside factors "
                         "or one factor with modulation")
    (j1, a1), (j2, a2) = term.factors
    w = covectors.pairing(j1, j2)
    if abs(w) < 1e-12:
        raise ParametrixUndefinedError(
            f"g(b{j1}, b{j2}) = {w:.2e} vanishes")
    coeff = term.coefficient / (2.0 * (a1 + 1) * (a2 + 1) * w)
    return PlaneWaveTerm(coeff, ((j1, a1 + 1), (j2, a2 + 1)), False,
                         term.tau_power)


def wave_operator(term: PlaneWaveTerm, covectors: NullCovectorSet):
    """Symbolic d'Alembertian of a Q0-admissible term.

    For null covectors only the cross terms survive:
    box(u^{a,b}) = 2 a b g(b,b') u^{a-1,b-1}; the modulated branch brings
    down 2 i tau a g(b,b5).
    """
    if term.modulated and len(term.factors) == 1:
        (j, a), = term.factors
        w = covectors.pairing(j, 5)
        coeff = term.coefficient * 2j * a * w
        return PlaneWaveTerm(coeff, ((j, a - 1),), True, term.tau_power + 1)
    if len(term.factors) != 2 or term.modulated:
        raise ValueError("symbolic box implemented for Q0-admissible terms")
    (j1, a1), (j2, a2) = term.factors
    w = covectors.pairing(j1, j2)
    coeff = term.coefficient * 2.0 * a1 * a2 * w
    return PlaneWaveTerm(coeff, ((j1, a1 - 1), (j2, a2 - 1)), False,
                         term.tau_power)


def terms_equal(t1: PlaneWaveTerm, t2: PlaneWaveTerm, rtol=1e-12):
    return (t1.factors == t2.factors and t1.modulated == t2.modulated
            and t1.tau_power == t2.tau_power
            and abs(t1.coefficient - t2.coefficient)
            <= rtol * max(abs(t1.coefficient), abs(t2.coefficient), 1e-300))


# ----------------------------------------------------------------------
# asymptotic monomials and the catalog


@dataclass(frozen=True)
class AsymptoticMonomial:
    """coefficient * tau^{tau_exp} * prod_j rho_j^{rho_exps[j]}.

    Exponents are exact integers; the coefficient splits into an exact
    rational part and a polarization scalar.
    """

    rational: Fraction
    polarization: float
    tau_exp: int
    rho_exps: tuple   # 4 ints, ordered (rho_1, rho_2, rho_3, rho_4)
    label: str = ""

    def coefficient(self):
        return float(self.rational) * self.polarization

    def collapsed_exponent(self, N):
        """Single rho_1 exponent m = N^3 n4 + N^2 n2 + N n3 + n1 (exact)."""
        n1, n2, n3, n4 = self.rho_exps
        return N**3 * n4 + N**2 * n2 + N * n3 + n1


def dominance_compare(m1: AsymptoticMonomial, m2: AsymptoticMonomial, N=100):
    """Exact ordering of two monomials under the rho hierarchy.

    Returns "dominates" when m1 is asymptotically larger than m2 as
    tau -> infinity and then rho_1 -> 0 with rho_4 = rho_2^N, rho_2 =
    rho_3^N, rho_3 = rho_1^N; "weaker" for the reverse; "equal" when the
    exponent data coincide (zero-coefficient monomials never dominate).
    """
    if not isinstance(N, int) or N < 2:
        raise ValueError("hierarchy exponent N must be an integer >= 2")
    if m1.coefficient() == 0.0 and m2.coefficient() != 0.0:
        return "weaker"
    if m2.coefficient() == 0.0 and m1.coefficient() != 0.0:
        return "dominates"
    if m1.tau_exp != m2.tau_exp:
        return "dominates" if m1.tau_exp > m2.tau_exp else "weaker"
    c1 = m1.collapsed_exponent(N)
    c2 = m2.collapsed_exponent(N)
    if c1 == c2:
        return "equal"
    return "dominates" if c1 < c2 else "weaker"


@dataclass(frozen=True)
class CatalogFamily:
    family: str       # "T" or "Tt"
    K1: int
    K2: int
    tau_const: int
    inc: tuple        # 4 ints
    omega_rules: tuple

    @property
    def name(self):
        s1 = "Q" if self.K1 else "I"
        s2 = "Q" if self.K2 else "I"
        return f"{self.family}.{s1}{s2}"

    def check_k(self, k):
        k1, k2, k3, k4 = k
        if min(k) < 0:
            raise ConstraintViolation("k_j >= 0 violated")
        if sum(k) > 2 * self.K1 + 2 * self.K2 + 2:
            raise ConstraintViolation(
                f"k1+k2+k3+k4 <= 2K1+2K2+2 violated for {self.name}")
        if k3 + k4 > 2 * self.K2 + 2:
            raise ConstraintViolation(
                f"k3+k4 <= 2K2+2 violated for {self.name}")
        if self.family == "T" and k4 > 2:
            raise ConstraintViolation(f"k4 <= 2 violated for {self.name}")
        if self.family == "Tt" and k1 + k2 > 2 * self.K1 + 2:
            raise ConstraintViolation(
                f"k1+k2 <= 2K1+2 violated for {self.name}")

    def admissible(self, k):
        try:
            self.check_k(k)
            return True
        except ConstraintViolation:
            return False


def load_catalog():
    """Parse the reviewed fixture file of displayed family computations."""
    text = resources.files("lorentzlab").joinpath(
        "interaction_catalog.txt").read_text()
    fams = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        fam, k1, k2, tau_c = parts[0], int(parts[1]), int(parts[2]), int(parts[3])
        inc = tuple(int(v) for v in parts[4:8])
        omega = tuple(r for r in parts[8].split(",") if r != "-")
        fams.append(CatalogFamily(fam, k1, k2, tau_c, inc, omega))
    return fams


CATALOG = load_catalog()
IDENTITY = (1, 2, 3, 4)
SIGMA0 = (2, 1, 3, 4)


def closed_form_monomial(a, k, family: CatalogFamily, sigma=IDENTITY,
                         polarization=1.0, label=""):
    """Exact exponent monomial of one catalog term.

    Slot j carries rho_{sigma(j)}^{-2(a - k_j + inc_j + 1)}; each omega
    rule subtracts 2 more from the hierarchy-larger index of its pair; the
    tau exponent follows the paper normalization -(tau_const + 4a - |k|).
    """
    family.check_k(k)
    n = {1: 0, 2: 0, 3: 0, 4: 0}
    for slot in range(4):
        n[sigma[slot]] -= 2 * (a - k[slot] + family.inc[slot] + 1)
    for rule in family.omega_rules:
        if rule == "45":
            n[sigma[3]] -= 2
        elif rule == "12":
            n[hierarchy_larger(sigma[0], sigma[1])] -= 2
        elif rule == "34":
            n[hierarchy_larger(sigma[2], sigma[3])] -= 2
        else:
            raise ValueError(f"unknown omega rule {rule!r}")
    tau_exp = -(family.tau_const + 4 * a - sum(k))
    return AsymptoticMonomial(Fraction(1), float(polarization), tau_exp,
                              (n[1], n[2], n[3], n[4]),
                              label or f"{family.name} s={sigma} k={k}")


def closed_form_T(a, k, rhos, polarization, family_name, sigma=IDENTITY):
    """Catalog monomial by family name, e.g. ``("T", "QQ")`` or "T.QQ"."""
    fam = _family_by_name(family_name)
    return closed_form_monomial(a, tuple(k), fam, tuple(sigma), polarization)


def _family_by_name(name):
    if isinstance(name, tuple):
        name = f"{name[0]}.{name[1]}"
    name = name.replace("tilde", "t")
    for fam in CATALOG:
        if fam.name == name:
            return fam
    raise KeyError(f"unknown family {name!r}; have {[f.name for f in CATALOG]}")


# ----------------------------------------------------------------------
# polarizations


def chosen_polarizations(covectors: NullCovectorSet):
    """v^(r) = b^(r) (x) b^(r) for r = 2, 3, 4 (harmonicity-exact)."""
    return {r: np.outer(covectors.covector(r), covectors.covector(r))
            for r in (2, 3, 4)}


def pairing_D(v5, v1):
    """D = eta_nj eta_mk v5^{nm} v1^{jk} = tr(v5 eta v1 eta)."""
    return float(np.trace(np.asarray(v5) @ ETA @ np.asarray(v1) @ ETA))


def _contract_vbb(v, b):
    """v^{ns} b_n b_s with indices raised by eta."""
    bu = ETA @ np.asarray(b)
    return float(bu @ np.asarray(v) @ bu)


def polarization_factor_beta1(vs, covectors: NullCovectorSet):
    """P_beta1 = (v4 b1 b1)(v3 b1 b1)(v2 b1 b1) D and the D pairing.

    ``vs`` maps indices 1..5 to symmetric matrices (lower indices).
    """
    b1 = covectors.covector(1)
    pref = 1.0
    for r in (4, 3, 2):
        pref *= _contract_vbb(vs[r], b1)
    D = pairing_D(vs[5], vs[1])
    return pref * D, D


# ----------------------------------------------------------------------
# the exhaustive dominance catalog


def beta1_monomial(a, rational=Fraction(1), D=1.0):
    """The leading monomial: T.QQ, sigma = id, k = (6,0,0,0) with the
    forced chosen-polarization suppression rho_1^{12}."""
    fam = _family_by_name("T.QQ")
    base = closed_form_monomial(a, (6, 0, 0, 0), fam, IDENTITY,
                                polarization=D, label="beta1")
    n1, n2, n3, n4 = base.rho_exps
    return replace(base, rho_exps=(n1 + 12, n2, n3, n4), rational=rational)


def t_chain_structures(sigma):
    """Operator-chain decompositions of the nested T-type term.

    The term nests A[u_{s4}, Q0(A[u_{s3}, Q0(A[u_{s2}, u_{s1}])])]; each
    operator slot s in (2, 3, 4) either differentiates its own wave and
    hands its polarization indices onward (transferring the free-index
    carrier, contracting the pulled covectors against the previous
    carrier) or differentiates an enclosed slot t < s (contracting its own
    polarization against that wave's covector).  Every displayed beta term
    of the proof is one of these chains.

    Yields ``(k, suppression, carrier)`` with the chosen-polarization
    suppression exponents per rho index.
    """
    results = []

    def advance(slot, k, suppr, carrier):
        if slot == 5:
            results.append((tuple(k), dict(suppr), carrier))
            return
        wave = sigma[slot - 1]
        # self form: derivatives on the own wave, contract the carrier
        k1 = list(k)
        k1[slot - 1] += 2
        s1 = dict(suppr)
        s1[hierarchy_larger(carrier, wave)] += 4
        advance(slot + 1, k1, s1, wave)
        # enclosed form: derivatives on a lower slot's wave
        for t in range(1, slot):
            k2 = list(k)
            k2[t - 1] += 2
            s2 = dict(suppr)
            s2[hierarchy_larger(wave, sigma[t - 1])] += 4
            advance(slot + 1, k2, s2, carrier)

    advance(2, [0, 0, 0, 0], {1: 0, 2: 0, 3: 0, 4: 0}, sigma[0])
    return results


def enumerate_catalog_monomials(a):
    """All (family, sigma, k) monomials with exact exponents.

    Tau-tied T.QQ rows (|k| = 6) are enumerated through the structural
    operator chains, which force the chosen-polarization suppression; all
    other rows carry zero suppression, a conservative strength upper bound
    that is already dominated on the tau or leading rho exponents.
    Yields ``(monomial, meta)`` pairs.
    """
    from itertools import permutations, product as iproduct
    out = []
    for fam in CATALOG:
        kmax = 2 * fam.K1 + 2 * fam.K2 + 2
        kvecs = [k for k in iproduct(range(kmax + 1), repeat=4)
                 if sum(k) <= kmax and fam.admissible(k)]
        for sigma in permutations((1, 2, 3, 4)):
            if fam.name == "T.QQ":
                for k, suppr, carrier in t_chain_structures(sigma):
                    if not fam.admissible(k):
                        continue
                    base = closed_form_monomial(a, k, fam, sigma)
                    n = tuple(base.rho_exps[i - 1] + suppr[i]
                              for i in (1, 2, 3, 4))
                    mono = replace(base, rho_exps=n,
                                   label=f"{fam.name} s={sigma} k={k} chain")
                    out.append((mono, {"family": fam.name, "sigma": sigma,
                                       "k": k, "chain": True,
                                       "carrier": carrier}))
            for k in kvecs:
                if fam.name == "T.QQ" and sum(k) == kmax:
                    continue  # tau-tied rows handled by the chains above
                mono = closed_form_monomial(a, k, fam, sigma)
                out.append((mono, {"family": fam.name, "sigma": sigma,
                                   "k": k, "chain": False}))
    return out


def dominance_report(a=6, N=100):
    """Exhaustive exact check of the dominance proposition.

    Returns ``(leaders, violations)``: leaders are the catalog rows whose
    monomial ties the beta1 monomial (expected: exactly the identity and
    the (2,1,3,4)-swap concentrated rows), violations are rows that
    strictly dominate it (expected empty).
    """
    lead = beta1_monomial(a)
    leaders, violations = [], []
    for mono, meta in enumerate_catalog_monomials(a):
        rel = dominance_compare(mono, lead, N)
        if rel == "equal":
            leaders.append(meta)
        elif rel == "dominates":
            violations.append(meta)
    return leaders, violations


# ----------------------------------------------------------------------
# indicator coefficient and kappa determinant


@dataclass
class IndicatorResult:
    value: float
    dominant_labels: list
    next_order: float = 0.0


def _structural_factor(a, covectors: NullCovectorSet):
    """Positive structural magnitude of the beta1 term at the given rhos.

    det(A) |omega_45 omega_12|^{-1} prod_j Gamma(n_j + 1) |p_j|^{-(n_j+1)}
    for the exponents n = (a-5, a+1, a, a+1) of the k = (6,0,0,0) integral;
    unit complex phases are dropped (irrelevant for rank and sign checks).
    """
    k = (6, 0, 0, 0)
    n = [a - k[0] + 1, a - k[1] + 1, a - k[2], a - k[3] + 1]
    det_a = abs(np.linalg.det(np.array([covectors.covector(j)
                                        for j in (1, 2, 3, 4)])))
    log_val = np.log(det_a)
    log_val -= np.log(abs(covectors.pairing(4, 5)))
    log_val -= np.log(abs(covectors.pairing(1, 2)))
    for j, nj in enumerate(n, start=1):
        p = abs(covectors.pairing(j, 5))
        log_val += lgamma(nj + 1) - (nj + 1) * np.log(p)
    return log_val  # log scale; values span hundreds of orders of magnitude


def next_order_gap(a=6, N=100):
    """Collapsed-exponent gap between beta1 and the strongest other row."""
    lead = beta1_monomial(a)
    best = None
    for mono, meta in enumerate_catalog_monomials(a):
        if dominance_compare(mono, lead, N) == "equal":
            continue
        if mono.tau_exp != lead.tau_exp:
            continue
        m = mono.collapsed_exponent(N)
        if best is None or m < best:
            best = m
    return best - lead.collapsed_exponent(N)


def indicator_G(vs, covectors: NullCovectorSet, a=6, N=100):
    """Leading coefficient of the four-wave indicator.

    The sum of the two dominant catalog terms (the identity term and its
    (2,1)-swap, which are equal), proportional to the beta1 polarization
    factor with a nonzero structural constant.  The structural magnitude
    is common to all kappa-matrix entries and cancels in every rank and
    sign check, so the value field carries 2 P_beta1; the log-scale
    structural factor is available via ``structural_log_magnitude``.

    When the D pairing vanishes the leading coefficient is zero and
    ``next_order`` reports the rho_1 suppression ratio of the strongest
    sub-dominant catalog row.
    """
    P, D = polarization_factor_beta1(vs, covectors)
    value = 2.0 * P
    next_order = 0.0
    if value == 0.0:
        gap = next_order_gap(a, N)
        next_order = float(covectors.rhos[0]) ** max(gap, 0)
    return IndicatorResult(value=value,
                           dominant_labels=["T.QQ id k=(6,0,0,0)",
                                            "T.QQ (2,1,3,4) k=(0,6,0,0)"],
                           next_order=next_order)


def structural_log_magnitude(a, covectors: NullCovectorSet):
    """Alias of the beta1 structural factor on log scale."""
    return _structural_factor(a, covectors)


def harmonicity_space_basis(b):
    """Basis of the 6-dim space of symmetric v with the symbol harmonicity
    condition at covector b (flat chart)."""
    from .symbols import NullCovectorFrame, constraint_space_basis
    from .metrics import minkowski
    frame = NullCovectorFrame(np.zeros(4), np.asarray(b, dtype=float), ETA)
    basis = constraint_space_basis(frame, "harmonicity", L=0)
    from .symbols import vec_to_sym
    return [vec_to_sym(basis[:10, i]) for i in range(6)]


def dual_basis_for(v1_basis):
    """V^(5) with B(v5_p, v1_q) = delta_pq under B(v, w) = tr(v eta w eta)."""
    gram = np.array([[pairing_D(v, w) for w in v1_basis] for v in v1_basis])
    inv = np.linalg.inv(gram)
    out = []
    for p in range(len(v1_basis)):
        out.append(sum(inv[p, q] * v1_basis[q] for q in range(len(v1_basis))))
    return out


def kappa_determinant(covectors: NullCovectorSet, vs234, v1_basis=None,
                      v5_basis=None, a=6, N=100, normalize_rows=True):
    """det of the 6x6 indicator matrix over basis pairs (v1_p, v5_q).

    With the chosen polarizations the matrix is proportional to
    [B(v5_q, v1_p)]_{pq}; row normalization removes the common structural
    magnitude.  Returns ``(kappa, matrix)``.
    """
    if v1_basis is None:
        v1_basis = harmonicity_space_basis(covectors.covector(1))
    if v5_basis is None:
        v5_basis = dual_basis_for(v1_basis)
    n = len(v1_basis)
    mat = np.empty((n, n))
    for p in range(n):
        for q in range(n):
            vs = dict(vs234)
            vs[1] = v1_basis[p]
            vs[5] = v5_basis[q]
            mat[p, q] = indicator_G(vs, covectors, a, N).value
    if normalize_rows:
        norms = np.linalg.norm(mat, axis=1)
        norms[norms == 0] = 1.0
        mat = mat / norms[:, None]
    return float(np.linalg.det(mat)), mat


# ----------------------------------------------------------------------
# oscillatory-integral oracle


def _axis_exponents(a, k, fam: CatalogFamily):
    """Integrand powers per y-axis: a - k_j + inc_j."""
    return [a - k[j] + fam.inc[j] for j in range(4)]


def _prefactor(a, k, fam: CatalogFamily, cov: NullCovectorSet, tau):
    """Q0 coefficients accumulated by the parametrix applications."""
    val = complex(1.0)
    if fam.K1:
        val /= 2.0 * (a - k[0] + 1) * (a - k[1] + 1) * cov.pairing(1, 2)
    if fam.K2:
        if fam.family == "T":
            val /= 2j * (a - k[3] + 1) * cov.pairing(4, 5) * tau
        else:
            val /= 2.0 * (a - k[2] + 1) * (a - k[3] + 1) * cov.pairing(3, 4)
    return val


def oscillatory_integral_oracle(a, k, rhos, tau, family="T.QQ", sigma_cut=1.0,
                                include_prefactor=True):
    """Brute-force value of a catalog interaction integral.

    The y-coordinate integrand prod_j y_j^{a - k_j + inc_j} e^{i tau p . y}
    (p_j = omega_{j5}) with a product Gaussian cutoff
    exp(-y^2 / (2 sigma_cut^2)) factorizes into four 1D adaptive
    quadratures; ``include_prefactor`` multiplies det(A) and the Q0
    coefficients of the family.
    """
    fam = _family_by_name(family)
    fam.check_k(tuple(k))
    cov = NullCovectorSet(np.asarray(rhos, dtype=float))
    n = _axis_exponents(a, k, fam)
    upper = 10.0 * sigma_cut
    val = complex(1.0)
    for j in range(4):
        w = tau * cov.pairing(j + 1, 5)

        def f(y, nj=n[j]):
            return y**nj * np.exp(-0.5 * (y / sigma_cut) ** 2)

        scale, _ = quad(f, 0.0, upper, limit=200)
        re, re_err = quad(f, 0.0, upper, weight="cos", wvar=w,
                          limit=800, epsabs=1e-13)
        im, im_err = quad(f, 0.0, upper, weight="sin", wvar=w,
                          limit=800, epsabs=1e-13)
        if max(re_err, im_err) > 1e-5 * max(scale, 1e-300):
            raise RuntimeError("quadrature failed to converge")
        val *= re + 1j * im
    det_a = np.linalg.det(np.array([cov.covector(j) for j in (1, 2, 3, 4)]))
    val *= det_a
    if include_prefactor:
        val *= _prefactor(a, k, fam, cov, tau)
    return val


def _axis_closed_form(n, w, sigma_cut, max_terms=12):
    """Endpoint (Watson) series of int_0^inf y^n e^{iwy} e^{-y^2/2s^2} dy.

    Expanding the Gaussian at the endpoint gives
    sum_m (-1/(2 s^2))^m / m! * Gamma(n + 2m + 1) / (-iw)^{n + 2m + 1};
    the series is summed to optimal truncation (terms must decrease).
    """
    total = complex(0.0)
    prev = np.inf
    c = 1.0
    for m in range(max_terms):
        term = c * np.exp(lgamma(n + 2 * m + 1)) / (-1j * w) ** (n + 2 * m + 1)
        if abs(term) >= prev:
            break
        total += term
        prev = abs(term)
        c *= -1.0 / (2 * sigma_cut**2) / (m + 1)
    return total


def closed_form_value(a, k, rhos, tau, family="T.QQ", sigma_cut=1.0,
                      include_prefactor=True):
    """Endpoint-asymptotics closed form of the oracle integral.

    Leading per-axis behavior Gamma(n_j + 1) / (-i tau p_j)^{n_j + 1}; the
    tau slope with the prefactor is -(4a - |k| + 8) for the T.QQ family
    (equivalently the catalog exponent -(12 + 4a - |k|) plus the fixed
    +4 normalization the paper convention absorbs into the wave symbols).
    """
    fam = _family_by_name(family)
    fam.check_k(tuple(k))
    cov = NullCovectorSet(np.asarray(rhos, dtype=float))
    n = _axis_exponents(a, k, fam)
    val = complex(1.0)
    for j in range(4):
        w = tau * cov.pairing(j + 1, 5)
        val *= _axis_closed_form(n[j], w, sigma_cut)
    det_a = np.linalg.det(np.array([cov.covector(j) for j in (1, 2, 3, 4)]))
    val *= det_a
    if include_prefactor:
        val *= _prefactor(a, k, fam, cov, tau)
    return val


def closed_form_tau_exponent(a, k, family="T.QQ"):
    """Integer tau slope of the closed form including the prefactor."""
    fam = _family_by_name(family)
    n = _axis_exponents(a, k, fam)
    slope = -(sum(n) + 4)
    if fam.K2 and fam.family == "T":
        slope -= 1
    return slope
