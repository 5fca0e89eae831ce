"""Random point/tangent draws for manifold tests.

Tangent draws stay inside the injectivity radius and "near" points avoid
the cut locus, so chart roundtrips are well defined at full precision.
"""
import numpy as np

from manikf.manifolds import Compound, Euclidean, SO3, Sphere2
from manikf.so3 import so3_exp


def random_point(man, rng, near=None):
    """A random valid point; with ``near``, one at a safe chart distance."""
    if isinstance(man, Euclidean):
        return rng.standard_normal(man.dim)
    if isinstance(man, SO3):
        if near is None:
            return so3_exp(np.pi * rng.uniform(-1, 1, 3)).reshape(9)
        return man.boxplus(near, _ball(rng, 3, 2.5))
    if isinstance(man, Sphere2):
        if near is None:
            v = rng.standard_normal(3)
            return man.radius * v / np.linalg.norm(v)
        return man.boxplus(near, _ball(rng, 2, 2.5))
    if isinstance(man, Compound):
        if near is None:
            return np.concatenate([random_point(p, rng) for p in man.parts])
        return np.concatenate(
            [
                random_point(p, rng, near=near[sl])
                for p, sl in zip(man.parts, man.rep_slices)
            ]
        )
    raise TypeError(f"no sampler for {type(man).__name__}")


def random_tangent(man, rng):
    """A chart vector inside the injectivity radius of every part."""
    if isinstance(man, Euclidean):
        return rng.standard_normal(man.dim)
    if isinstance(man, (SO3, Sphere2)):
        return _ball(rng, man.dim, 2.5)
    if isinstance(man, Compound):
        return np.concatenate([random_tangent(p, rng) for p in man.parts])
    raise TypeError(f"no sampler for {type(man).__name__}")


def _ball(rng, dim, radius):
    v = rng.standard_normal(dim)
    return rng.uniform(0.0, radius) * v / np.linalg.norm(v)
