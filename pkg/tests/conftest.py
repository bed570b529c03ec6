import json

import numpy as np
import pytest

from rkdg_lab import DGFunction, Mesh1D, SmoothFunction


@pytest.fixture
def write_config(tmp_path):
    """Dump a study description to a JSON file and return its path."""

    def _write(doc, name="study.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture
def tiny_advection_config():
    """A fast spatial study used by harness and CLI tests. Returns a fresh
    dict each time so tests can mutate it freely."""

    def _make(**overrides):
        doc = {
            "schema": "rkdg-lab-config/1",
            "name": "tiny-advection",
            "study": "spatial",
            "solution": "advection_sin",
            "scheme": {"family": "ldg", "degree": 1},
            "grid": {"levels": [8, 12, 16]},
            "time": {"integrator": "ssp3", "t_final": 0.25, "cfl_fraction": 0.9},
        }
        doc.update(overrides)
        return doc

    return _make


def random_dg(mesh, degree, rng):
    coeffs = rng.standard_normal((mesh.n_cells, degree + 1))
    return DGFunction(mesh, degree, coeffs)


def sine_smooth(order=6):
    """sin(x) bundled with as many exact derivatives as requested."""
    cycle = [np.sin, np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x)]
    return SmoothFunction(tuple(cycle[i % 4] for i in range(order + 1)))


def mixed_smooth(order=6):
    """sin(x) + 0.4 cos(2x), with exact derivatives."""

    def nth(i):
        def f(x, i=i):
            s = [np.sin, np.cos, lambda y: -np.sin(y), lambda y: -np.cos(y)]
            return s[i % 4](x) + 0.4 * (2.0 ** i) * s[(i + 1) % 4](2.0 * x)

        return f

    return SmoothFunction(tuple(nth(i) for i in range(order + 1)))
