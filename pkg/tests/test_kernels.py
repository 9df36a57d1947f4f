"""Backend equivalence tests for the compiled kernels."""

import os
import subprocess
import sys

import numpy as np
import pytest

from morleyfem import _kernels
from morleyfem._kernels import _pykernels

try:
    from morleyfem._kernels import _ckernels
except ImportError:
    _ckernels = None

needs_compiled = pytest.mark.skipif(_ckernels is None,
                                    reason="compiled extension not built")


def random_csr(rng, n, density=0.15, spd_shift=False):
    dense = rng.standard_normal((n, n))
    dense[rng.random((n, n)) > density] = 0.0
    if spd_shift:
        dense = dense + dense.T
        dense[np.arange(n), np.arange(n)] = np.abs(dense).sum(axis=1) + 1.0
    else:
        # Gauss-Seidel needs an explicit nonzero diagonal
        dense[np.arange(n), np.arange(n)] = 1.0 + np.abs(
            dense[np.arange(n), np.arange(n)])
    indptr = [0]
    indices, data = [], []
    for row in dense:
        cols = np.nonzero(row)[0]
        indices.extend(cols)
        data.extend(row[cols])
        indptr.append(len(indices))
    return (np.asarray(indptr, dtype=np.int64),
            np.asarray(indices, dtype=np.int64),
            np.asarray(data, dtype=np.float64),
            dense)


@needs_compiled
def test_matvec_matches_pure_and_dense():
    rng = np.random.default_rng(7)
    for n in (1, 5, 40, 173):
        indptr, indices, data, dense = random_csr(rng, n)
        x = rng.standard_normal(n)
        out_c = _ckernels.csr_matvec(indptr, indices, data, x, np.empty(n))
        out_py = _pykernels.csr_matvec(indptr, indices, data, x, np.empty(n))
        assert np.allclose(out_c, dense @ x, atol=1e-12)
        assert np.array_equal(out_c, out_py) or np.allclose(out_c, out_py,
                                                            atol=1e-14)


@needs_compiled
def test_matvec_empty_rows():
    indptr = np.array([0, 0, 1, 1], dtype=np.int64)
    indices = np.array([2], dtype=np.int64)
    data = np.array([3.0])
    x = np.array([1.0, 2.0, 4.0])
    for impl in (_ckernels, _pykernels):
        out = impl.csr_matvec(indptr, indices, data, x, np.empty(3))
        assert np.array_equal(out, [0.0, 12.0, 0.0])


@needs_compiled
@pytest.mark.parametrize("sweep", ["gauss_seidel_forward", "gauss_seidel_backward"])
def test_gauss_seidel_backends_identical(sweep):
    rng = np.random.default_rng(11)
    for n in (3, 17, 64):
        indptr, indices, data, dense = random_csr(rng, n, spd_shift=True)
        b = rng.standard_normal(n)
        x0 = rng.standard_normal(n)
        x_c = x0.copy()
        x_py = x0.copy()
        getattr(_ckernels, sweep)(indptr, indices, data, b, x_c)
        getattr(_pykernels, sweep)(indptr, indices, data, b, x_py)
        # summation order differs, so only rounding-level deviations allowed
        scale = np.abs(x_py).max()
        assert np.abs(x_c - x_py).max() <= 1e-13 * scale


@needs_compiled
def test_gauss_seidel_converges_on_spd():
    rng = np.random.default_rng(3)
    indptr, indices, data, dense = random_csr(rng, 30, spd_shift=True)
    x_exact = rng.standard_normal(30)
    b = dense @ x_exact
    for impl in (_ckernels, _pykernels):
        x = np.zeros(30)
        for _ in range(200):
            impl.gauss_seidel_forward(indptr, indices, data, b, x)
            impl.gauss_seidel_backward(indptr, indices, data, b, x)
        assert np.linalg.norm(x - x_exact) < 1e-10 * np.linalg.norm(x_exact)


def _backend_in_subprocess(extra_env):
    env = dict(os.environ, **extra_env)
    proc = subprocess.run(
        [sys.executable, "-c", "from morleyfem import _kernels; print(_kernels.BACKEND)"],
        capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    return proc.stdout.strip()


def test_env_var_selects_pure_backend():
    assert _backend_in_subprocess({"MORLEYFEM_PURE_PYTHON": "1"}) == "python"


@needs_compiled
def test_default_backend_is_compiled():
    env = {k: v for k, v in os.environ.items() if k != "MORLEYFEM_PURE_PYTHON"}
    proc = subprocess.run(
        [sys.executable, "-c", "from morleyfem import _kernels; print(_kernels.BACKEND)"],
        capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip() == "compiled"


def test_package_exports_active_backend():
    assert _kernels.BACKEND in ("compiled", "python")
    assert _kernels.csr_matvec is not None


def test_solver_result_backend_independent():
    # a full solve through the public API must not depend on the backend
    script = (
        "import numpy as np\n"
        "from morleyfem.mesh import uniform_unit_square\n"
        "from morleyfem.methods import solve\n"
        "from morleyfem.analysis import example1\n"
        "mesh = uniform_unit_square(8)\n"
        "res = solve(mesh, 1e-2, example1(1e-2).forcing, method='direct')\n"
        "print(repr(float(np.linalg.norm(res.u.raw()))))\n"
    )
    norms = {}
    for name, env in (("python", {"MORLEYFEM_PURE_PYTHON": "1"}),
                      ("default", {})):
        proc = subprocess.run([sys.executable, "-c", script],
                              capture_output=True, text=True,
                              env=dict(os.environ, **env))
        assert proc.returncode == 0, proc.stderr
        norms[name] = float(proc.stdout.strip())
    assert norms["python"] == pytest.approx(norms["default"], rel=1e-12)
