"""Kernel lane selection and bitwise pure/compiled agreement."""

import os
import subprocess
import sys

import numpy as np
import pytest

from cutagg import kernels
from cutagg.kernels import pure


def test_compiled_lane_built_and_selected():
    # the build must produce the extension; import selects it by default
    assert kernels.HAVE_COMPILED
    assert kernels.active.NAME == "compiled"
    assert kernels.get_lane("pure") is pure
    with pytest.raises(ValueError):
        kernels.get_lane("fancy")


def test_classify_semantics():
    vals = np.array([
        [-1.0, -2.0, -0.5],   # pure A
        [1.0, 0.5, 2.0],      # pure B
        [-1.0, 1.0, 0.5],     # mixed
        [0.0, 0.0, 0.0],      # zero is non-negative: B
        [-1e-300, 0.0, 0.0],  # tiny negative still counts
    ])
    got = pure.classify(vals)
    assert got.tolist() == [0, 1, 2, 1, 2]


def test_negatives_counts():
    vals = np.array([[-1.0, 0.0, 1.0], [-1.0, -1.0, -1.0], [0.0, 2.0, 3.0]])
    assert pure.negatives(vals).tolist() == [1, 3, 0]


def test_accumulate_pure_only_code_zero():
    out = np.zeros(4, dtype=np.int64)
    codes = np.array([0, 1, 2, 0], dtype=np.int8)
    pos = np.array([0, 1, 2, 0])
    pure.accumulate_pure(codes, pos, 5, out)
    assert out.tolist() == [10, 0, 0, 0]


def test_accumulate_counts_repeats():
    out = np.zeros(3, dtype=np.int64)
    pure.accumulate_counts(np.array([1, 1, 2]), np.array([3, 4, 5]), out)
    assert out.tolist() == [0, 7, 5]


@pytest.mark.skipif(not kernels.HAVE_COMPILED, reason="no compiled lane")
def test_lanes_agree_bitwise():
    comp = kernels.get_lane("compiled")
    rng = np.random.default_rng(7)
    for _ in range(25):
        n = int(rng.integers(1, 200))
        s = int(rng.integers(1, 30))
        vals = rng.normal(size=(n, s))
        vals[rng.random(size=vals.shape) < 0.05] = 0.0  # exercise the sign boundary
        assert np.array_equal(pure.classify(vals), comp.classify(vals))
        assert np.array_equal(pure.negatives(vals), comp.negatives(vals))

        codes = pure.classify(vals)
        pos = rng.integers(0, 50, size=n)
        a = np.zeros(50, dtype=np.int64)
        b = np.zeros(50, dtype=np.int64)
        amount = int(rng.integers(1, 1000))
        pure.accumulate_pure(codes, pos, amount, a)
        comp.accumulate_pure(codes, pos, amount, b)
        assert np.array_equal(a, b)

        counts = rng.integers(0, 9, size=n)
        a[:] = 0
        b[:] = 0
        pure.accumulate_counts(pos, counts, a)
        comp.accumulate_counts(pos, counts, b)
        assert np.array_equal(a, b)


@pytest.mark.skipif(not kernels.HAVE_COMPILED, reason="no compiled lane")
def test_env_override_forces_pure_lane():
    env = dict(os.environ, CUTAGG_PURE_KERNELS="1")
    out = subprocess.run(
        [sys.executable, "-c",
         "from cutagg import kernels; print(kernels.active.NAME, kernels.HAVE_COMPILED)"],
        capture_output=True, text=True, env=env, check=True)
    assert out.stdout.split() == ["pure", "False"]


@pytest.mark.skipif(not kernels.HAVE_COMPILED, reason="no compiled lane")
def test_mesh_fractions_identical_across_lanes(tmp_path):
    """Whole-mesh fractions are bitwise lane-independent (integer counting)."""
    script = (
        "import numpy as np\n"
        "from cutagg import build_grid, build_cutcell_mesh, QuadratureRule\n"
        "from cutagg.geometry import sphere\n"
        "g = build_grid(2, 12, (-0.5, -0.5), (1.0, 1.0))\n"
        "m = build_cutcell_mesh(g, sphere(2, (0.03, -0.11), 0.31), 0.0, QuadratureRule(max_depth=4))\n"
        "np.save(OUT, m.frac_a)\n"
    )
    paths = {}
    for lane, env_val in (("compiled", ""), ("pure", "1")):
        p = tmp_path / f"{lane}.npy"
        env = dict(os.environ)
        env.pop("CUTAGG_PURE_KERNELS", None)
        if env_val:
            env["CUTAGG_PURE_KERNELS"] = env_val
        code = f"OUT = {str(p)!r}\n" + script
        subprocess.run([sys.executable, "-c", code], check=True, env=env)
        paths[lane] = p
    a = np.load(paths["compiled"])
    b = np.load(paths["pure"])
    assert a.tobytes() == b.tobytes()
