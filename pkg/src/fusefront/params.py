"""Helpers shared by the learnable parameter containers."""

import dataclasses

import numpy as np


def fan_in_uniform(rng, shape, fan_in):
    """Uniform on ``[-s, s]`` with ``s = 1/sqrt(fan_in)``."""
    s = 1.0 / np.sqrt(fan_in)
    return rng.uniform(shape, -s, s)


def named_arrays(params):
    """Ordered ``{field name: array}`` for every array field that is set."""
    return {
        f.name: getattr(params, f.name)
        for f in dataclasses.fields(params)
        if isinstance(getattr(params, f.name), np.ndarray)
    }


def replace_arrays(params, arrays):
    return dataclasses.replace(params, **arrays)


def copy_params(params):
    return replace_arrays(params, {k: v.copy() for k, v in named_arrays(params).items()})


def flat2d(x):
    """Collapse leading batch axes: ``(..., n) -> (-1, n)``."""
    return x.reshape(-1, x.shape[-1])


def xtg(x, g):
    """``sum over batch and time of x[..., t, :]^T g[..., t, :]``."""
    return flat2d(x).T @ flat2d(g)


def colsum(g):
    return flat2d(g).sum(axis=0)
