"""Randomized property battery with serializable, replayable instances.

Every property has a generator (random stream -> JSON-ready instance) and
a checker (instance -> ``(lhs, rhs)``); a case passes when
``lhs >= rhs - slack``. Instances are rebuilt through the validating
constructors, so a corrupted replay file fails before any property runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import bounds as bd
from .. import random_chains as rc
from ..errors import ConfigError
from ..kernel import (
    BALANCE_TOL,
    INEQUALITY_SLACK,
    ExactKernel,
    Partition,
    balance_residual,
    compose,
    dirichlet_form,
    metropolis_hastings,
    power_kernel,
    project,
    restrict,
    spectral_gap,
    sqrt_kernel,
)
from ..simulate import make_rng
from ..tempering import (
    TemperatureLadder,
    product_kernel,
    swapping_chain,
    temper,
)


def _k(d) -> ExactKernel:
    return ExactKernel.from_dict(d)


def _size(rng, lo=4, hi=12) -> int:
    return int(rng.integers(lo, hi + 1))


# -- kernel-level properties -------------------------------------------------


def gen_restriction(rng):
    n = _size(rng, 3, 12)
    k = rc.random_reversible_chain(n, rng)
    A = np.flatnonzero(rng.random(n) < 0.5)
    if A.size == 0:
        A = np.array([int(rng.integers(n))])
    return {"P": k.to_dict(), "A": A.tolist()}


def check_restriction(inst):
    r = restrict(_k(inst["P"]), inst["A"])
    g = spectral_gap(r)
    # well-defined, reversible gap in [0, 2]
    return BALANCE_TOL - balance_residual(r) + min(0.0, g) + min(0.0, 2.0 - g), 0.0


def gen_projection(rng):
    n = _size(rng)
    J = int(rng.integers(1, min(4, n) + 1))
    return {"P": rc.random_reversible_chain(n, rng).to_dict(),
            "labels": rc.random_partition(n, J, rng).block_of.tolist()}


def check_projection(inst):
    pbar = project(_k(inst["P"]), Partition(inst["labels"]))
    rows = np.abs(pbar.dense().sum(axis=1) - 1.0).max()
    return BALANCE_TOL - balance_residual(pbar) - rows, 0.0


def gen_power(rng, power=None):
    n = _size(rng)
    return {"P": rc.random_reversible_chain(n, rng).to_dict(),
            "power": int(power or rng.integers(2, 5))}


def check_power(inst):
    P, n = _k(inst["P"]), inst["power"]
    return spectral_gap(P), spectral_gap(power_kernel(P, n)) / n


def gen_sandwich_product(rng):
    n = _size(rng)
    pi = rc.random_density(n, rng)
    return {"P": rc.random_nonneg_definite_chain(n, rng, pi).to_dict(),
            "Q": rc.random_reversible_chain(n, rng, pi).to_dict()}


def check_sandwich_product(inst):
    P, Q = _k(inst["P"]), _k(inst["Q"])
    return spectral_gap(compose(Q, P, Q)), spectral_gap(P)


def gen_thinning(rng):
    P = rc.random_reversible_chain(_size(rng), rng)
    return {"P": P.to_dict(), "Q": rc.thinned_chain(P, rng).to_dict()}


def check_thinning(inst):
    P, Q = _k(inst["P"]), _k(inst["Q"])
    off_p, off_q = P.dense().copy(), Q.dense().copy()
    np.fill_diagonal(off_p, 0.0)
    np.fill_diagonal(off_q, 0.0)
    if np.any(off_q > off_p + 1e-15):
        return -1.0, 0.0
    return spectral_gap(P), spectral_gap(Q)


def gen_square_root(rng):
    n = _size(rng)
    pi = rc.random_density(n, rng)
    J = int(rng.integers(2, min(4, n) + 1))
    return {"P": rc.random_nonneg_definite_chain(n, rng, pi).to_dict(),
            "Q": rc.random_reversible_chain(n, rng, pi).to_dict(),
            "labels": rc.random_partition(n, J, rng).block_of.tolist()}


def check_square_root(inst):
    P, Q, part = _k(inst["P"]), _k(inst["Q"]), Partition(inst["labels"])
    root = sqrt_kernel(P)
    lhs = spectral_gap(compose(root, Q, root))
    rhs = spectral_gap(project(P, part)) * min(spectral_gap(restrict(Q, A)) for A in part.blocks())
    return lhs, rhs


def gen_comparison(rng):
    P, Q, paths = rc.random_comparison_instance(_size(rng, 3, 10), rng)
    return {"P": P.to_dict(), "Q": Q.to_dict(),
            "paths": [[x, y, list(p)] for (x, y), p in paths.paths.items()],
            "f": rng.standard_normal((100, P.n)).tolist()}


def check_comparison(inst):
    P, Q = _k(inst["P"]), _k(inst["Q"])
    paths = bd.PathSet({(x, y): tuple(p) for x, y, p in inst["paths"]})
    c = bd.path_comparison_constant(P, Q, paths)
    worst = np.inf
    for f in inst["f"]:
        worst = min(worst, c * dirichlet_form(P, f) - dirichlet_form(Q, f))
    return worst, 0.0


def gen_decomposition(rng):
    n = _size(rng, 4, 20)
    J = int(rng.integers(2, min(4, n) + 1))
    return {"P": rc.random_nonneg_definite_chain(n, rng).to_dict(),
            "labels": rc.random_partition(n, J, rng).block_of.tolist()}


def check_decomposition(inst):
    P = _k(inst["P"])
    lower, upper = bd.decomposition_bounds(P, Partition(inst["labels"]))
    g = spectral_gap(P)
    return min(g - lower, upper - g), 0.0


def gen_product(rng):
    K = int(rng.integers(1, 4))
    comps = [rc.random_reversible_chain(int(rng.integers(2, 6)), rng) for _ in range(K)]
    return {"components": [c.to_dict() for c in comps],
            "weights": rng.dirichlet(np.ones(K)).tolist()}


def check_product(inst):
    comps = [_k(d) for d in inst["components"]]
    b = np.asarray(inst["weights"])
    b = b / b.sum()
    exact = spectral_gap(product_kernel(comps, b))
    formula = min(bk * spectral_gap(c) for bk, c in zip(b, comps))
    # equality; reported as a one-sided margin against a 1e-10 band
    return 1e-10 - abs(exact - formula), 0.0


# -- tempering properties ------------------------------------------------------


def gen_tempered(rng, n_range=(3, 6), N_range=(1, 3)):
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    N = int(rng.integers(N_range[0], N_range[1] + 1))
    target = rc.random_density(n, rng, floor=0.2)
    betas = np.append(np.sort(rng.uniform(0.05, 0.95, size=N)), 1.0)
    S = rng.random((n, n))
    S = S + S.T
    S /= S.sum(axis=1).max()
    np.fill_diagonal(S, 0.0)
    np.fill_diagonal(S, 1.0 - S.sum(axis=1))
    J = int(rng.integers(2, min(3, n) + 1))
    return {"target": target.tolist(), "betas": betas.tolist(), "proposal": S.tolist(),
            "labels": rc.random_partition(n, J, rng).block_of.tolist()}


def _tempered(inst):
    levels = temper(np.asarray(inst["target"]), TemperatureLadder(inst["betas"]))
    part = Partition(inst["labels"])
    return levels, part


def check_swap_floor(inst):
    levels, part = _tempered(inst)
    d2 = bd.overlap_delta(levels, part) ** 2
    worst = min(bd.swap_acceptance_marginal(levels, part, k, i, j)
                for k in range(levels.N) for i in range(part.J) for j in range(part.J))
    return worst, d2


def check_overlap_order(inst):
    levels, part = _tempered(inst)
    return bd.madras_randall_overlap(levels), bd.overlap_delta(levels, part)


def check_gamma(inst):
    levels, part = _tempered(inst)
    g = bd.gamma(levels, part)
    m = bd.block_masses(levels, part)
    worst = min(float(np.min(m[k] - g * m[l]))
                for k in range(levels.N + 1) for l in range(k + 1, levels.N + 1))
    return (worst if levels.N else 0.0), 0.0


def _signature_setup(inst):
    levels, part = _tempered(inst)
    S = np.asarray(inst["proposal"])
    comps = [metropolis_hastings(S, levels[k]) for k in range(levels.N + 1)]
    P = swapping_chain(levels, comps)
    sig, _ = bd.signature_partition(part, levels.N)
    return levels, part, comps, P, sig


def gen_signature(rng):
    return gen_tempered(rng, n_range=(3, 4), N_range=(1, 2))


def check_signature_decomposition(inst):
    _, _, _, P, sig = _signature_setup(inst)
    r = bd.signature_decomposition_check(P, sig)
    return r.lhs, r.rhs


def check_signature_restriction(inst):
    _, part, comps, P, sig = _signature_setup(inst)
    r = bd.signature_restriction_check(P, sig, comps, part)
    return r.lhs, r.rhs


@dataclass(frozen=True)
class Property:
    name: str
    generate: Callable
    check: Callable
    slack: float = INEQUALITY_SLACK


PROPERTIES = [
    Property("restriction_reversible", gen_restriction, check_restriction, 0.0),
    Property("projection_reversible", gen_projection, check_projection, 0.0),
    Property("power_gap", gen_power, check_power),
    Property("sandwich_product_gap", gen_sandwich_product, check_sandwich_product),
    Property("thinning_monotone", gen_thinning, check_thinning),
    Property("square_root_decomposition", gen_square_root, check_square_root),
    Property("path_comparison", gen_comparison, check_comparison),
    Property("decomposition_sandwich", gen_decomposition, check_decomposition),
    Property("product_chain_gap", gen_product, check_product, 0.0),
    Property("swap_acceptance_floor", gen_tempered, check_swap_floor),
    Property("overlap_order", gen_tempered, check_overlap_order),
    Property("gamma_mass_decay", gen_tempered, check_gamma),
    Property("signature_decomposition", gen_signature, check_signature_decomposition),
    Property("signature_restriction", gen_signature, check_signature_restriction),
]
BY_NAME = {p.name: p for p in PROPERTIES}


@dataclass
class PropertyResult:
    name: str
    cases: int = 0
    failures: int = 0
    worst_slack: float = np.inf
    first_failure: dict | None = None

    @property
    def passed(self) -> bool:
        return self.failures == 0


@dataclass
class VerifyReport:
    seed: int
    results: list[PropertyResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)


def evaluate(prop: Property, inst: dict) -> tuple[bool, float]:
    lhs, rhs = prop.check(inst)
    margin = float(lhs - rhs)
    return margin >= -prop.slack, margin


def run_battery(seed: int, cases: int = 100, names=None) -> VerifyReport:
    report = VerifyReport(seed)
    for i, prop in enumerate(PROPERTIES):
        if names is not None and prop.name not in names:
            continue
        rng = make_rng(seed, i)
        res = PropertyResult(prop.name)
        for case in range(cases):
            inst = prop.generate(rng)
            ok, margin = evaluate(prop, inst)
            res.cases += 1
            res.worst_slack = min(res.worst_slack, margin)
            if not ok:
                res.failures += 1
                if res.first_failure is None:
                    res.first_failure = replay_document(prop.name, seed, case, inst)
        report.results.append(res)
    return report


def replay_document(name: str, seed: int, case: int, inst: dict) -> dict:
    return {"property": name, "seed": seed, "case": case, "instance": inst}


def load_replay(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("property") not in BY_NAME or "instance" not in doc:
        raise ConfigError("replay file needs a known 'property' and an 'instance'")
    return doc


def replay(doc: dict) -> PropertyResult:
    prop = BY_NAME[doc["property"]]
    ok, margin = evaluate(prop, doc["instance"])
    return PropertyResult(prop.name, 1, 0 if ok else 1, margin,
                          None if ok else doc)
