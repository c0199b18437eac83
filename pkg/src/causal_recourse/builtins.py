"""Bundled example models.

``insurance`` is the car-insurance story: whether the owner drives the car
causes the target, while the latent driver defensiveness confounds the
target with the minivan indicator. ``fig2`` is the eight-feature stability
example. Numeric weights and noise scales are fixtures of this package.
"""

from __future__ import annotations

from .graph import CausalGraph
from .scm import Noise, Scm, ScmError, StructuralEquation

FIG2_EDGES = (
    ("X2", "X1"), ("X2", "Y"), ("X3", "X4"), ("X4", "Y"), ("X5", "Y"),
    ("Y", "X6"), ("X7", "X6"), ("X8", "X6"), ("X8", "X5"),
)
FIG2_FEATURES = tuple(f"X{i}" for i in range(1, 9))

INSURANCE_EDGES = (
    ("carowner", "Y"), ("defensiveness", "Y"), ("defensiveness", "minivan"),
)


def insurance(reduced: bool = False) -> Scm:
    """Car-insurance model; ``reduced`` drops the minivan and target noise.

    In the reduced variant minivan is an exact proxy for defensiveness, so a
    linear model on (carowner, minivan) predicts the target without error.
    """
    g = CausalGraph(
        nodes=("carowner", "defensiveness", "minivan", "Y"),
        edges=INSURANCE_EDGES,
        target="Y",
        observed={"carowner", "minivan"},
        actionable={"carowner", "minivan"},
    )
    small = Noise("none") if reduced else Noise("gaussian", variance=0.25)
    eqs = [
        StructuralEquation("carowner", {}, 0.0, Noise("uniform", low=0.0, high=1.0), threshold=0.5),
        StructuralEquation("defensiveness", {}, 0.0, Noise("gaussian", variance=1.0)),
        StructuralEquation("minivan", {"defensiveness": 1.2}, 0.0, small),
        StructuralEquation("Y", {"carowner": 1.0, "defensiveness": 1.5}, 0.0, small),
    ]
    return Scm(g, eqs, name="insurance_reduced" if reduced else "insurance")


def fig2(target_noise: bool = True, unobserved=()) -> Scm:
    """Unit-weight linear-Gaussian model on the eight-feature graph.

    ``target_noise=False`` makes the target a deterministic function of its
    parents; ``unobserved`` hides features (the right panel hides X2, X8).
    """
    observed = set(FIG2_FEATURES) - set(unobserved)
    g = CausalGraph(
        nodes=FIG2_FEATURES + ("Y",),
        edges=FIG2_EDGES,
        target="Y",
        observed=observed,
        actionable=observed,
    )
    eqs = []
    for v in g.nodes:
        noise = Noise("gaussian", variance=1.0)
        if v == "Y" and not target_noise:
            noise = Noise("none")
        eqs.append(StructuralEquation(v, {p: 1.0 for p in g.parents(v)}, 0.0, noise))
    name = "fig2" if target_noise else "fig2_exact"
    if unobserved:
        name += "_partial"
    return Scm(g, eqs, name=name)


_VARIANTS = {
    "insurance": lambda: insurance(),
    "insurance_reduced": lambda: insurance(reduced=True),
    "fig2": lambda: fig2(),
    "fig2_exact": lambda: fig2(target_noise=False),
    "fig2_partial": lambda: fig2(unobserved=("X2", "X8")),
}


def builtin_examples() -> dict[str, Scm]:
    """The canonical bundled models, by name."""
    return {"insurance": insurance(), "fig2": fig2()}


def builtin_names() -> list[str]:
    return list(_VARIANTS)


def get_builtin(name: str) -> Scm:
    try:
        return _VARIANTS[name]()
    except KeyError:
        raise ScmError(f"unknown builtin model {name!r}; choose from {builtin_names()}") from None
