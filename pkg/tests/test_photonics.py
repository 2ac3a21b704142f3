import numpy as np
import pytest
from scipy.integrate import trapezoid

from astralora.numlin import RngStream
from astralora.photonics import (KINDS, ConfigurationError, MaterializeRefused, MeshLayout,
                                 MonarchShape, make_layer, materialize, mesh_forward, mesh_unitary,
                                 monarch_forward, mrr_func, mrr_zero_mean_band, mzi_block, slm_matrix)

SIZES = [(4, 4), (8, 4), (4, 16)]


def random_layer(kind, d_inp, d_out, seed=0):
    layer = make_layer(kind, d_inp, d_out)
    layer.init_params(RngStream(seed, "bb-init"))
    return layer


# ------------------------------------------------------------------ oracles


def monarch_dense(shape, th_r, th_l):
    """Explicit block-diagonal R, permutation P, block-diagonal L."""
    r = np.zeros((shape.b_r * shape.n_r_out, shape.d_inp), dtype=complex)
    for i in range(shape.b_r):
        r[i * shape.n_r_out:(i + 1) * shape.n_r_out, i * shape.n_r_inp:(i + 1) * shape.n_r_inp] = \
            np.exp(1j * th_r[i]) / np.sqrt(shape.n_r_inp)
    n = r.shape[0]
    p = np.zeros((n, n))
    for i in range(shape.b_r):           # row-major (i, l) -> column-major (l, i)
        for l in range(shape.n_r_out):
            p[l * shape.b_r + i, i * shape.n_r_out + l] = 1.0
    lm = np.zeros((shape.d_out, n), dtype=complex)
    for l in range(shape.b_l):
        lm[l * shape.n_l_out:(l + 1) * shape.n_l_out, l * shape.n_l_inp:(l + 1) * shape.n_l_inp] = \
            np.exp(1j * th_l[l]) / np.sqrt(shape.n_l_inp)
    return (lm @ p @ r).real


def mesh_dense(n, w, variant):
    """Product of N x N embedded blocks, one at a time, then output phases."""
    t = np.eye(n, dtype=complex)
    k = 0
    for layer in range(n):
        for top in range(layer % 2, n - 1, 2):
            e = np.eye(n, dtype=complex)
            e[top:top + 2, top:top + 2] = mzi_block(w[2 * k], w[2 * k + 1], variant)
            t = e @ t
            k += 1
    return np.diag(np.exp(1j * w[2 * k:])) @ t


# -------------------------------------------------------------------- maps


class TestMrr:
    def test_resonance_values(self):
        # plug-in: sqrt(0.01 / 0.0784) = 0.1 / 0.28 -> -2/7; at pi (1.7 / 1.72) -> 42/43
        assert mrr_func(0.0) == pytest.approx(-2 / 7, abs=1e-14)
        assert mrr_func(np.pi) == pytest.approx(42 / 43, abs=1e-14)
        assert mrr_func(0.0) == pytest.approx(-0.28571, abs=1e-5)

    def test_even_and_periodic(self, rng):
        w = rng.uniform(-10, 10, 100)
        np.testing.assert_allclose(mrr_func(w), mrr_func(-w), atol=1e-14)
        np.testing.assert_allclose(mrr_func(w), mrr_func(w + 2 * np.pi), atol=1e-12)

    def test_range_dense_grid(self):
        f = mrr_func(np.linspace(-np.pi, np.pi, 10**4))
        assert f.min() >= -1 and f.max() <= 1

    def test_single_element_forward(self):
        layer = make_layer("mrr", 1, 1)
        layer.set_params([0.0])
        assert layer.forward(np.array([1.0]))[0] == pytest.approx(-2 / 7)

    def test_zero_mean_band(self):
        b = mrr_zero_mean_band()
        w = np.linspace(-b, b, 200001)
        assert abs(trapezoid(mrr_func(w), w) / (2 * b)) < 1e-8


class TestSlm:
    def test_zero_phase(self):
        layer = make_layer("slm", 4, 3)
        layer.set_params(np.zeros(12))
        np.testing.assert_allclose(layer.forward(np.eye(4)[0]), [0.5, 0.5, 0.5])

    def test_quarter_wave_is_zero(self):
        assert np.allclose(slm_matrix(np.full(12, np.pi / 2), 3, 4), 0.0, atol=1e-16)

    def test_matches_dense_and_bound(self, rng):
        layer = random_layer("slm", 6, 5)
        a = slm_matrix(layer.params, 5, 6)
        x = rng.normal(size=6)
        np.testing.assert_allclose(layer.forward(x), a @ x, atol=1e-12)
        np.testing.assert_allclose(materialize(layer), a, atol=1e-12)
        assert np.all(np.abs(a) <= 1 / np.sqrt(6) + 1e-15)


class TestMonarch:
    @pytest.mark.parametrize("d_inp,d_out", [(4, 4), (16, 16), (8, 32), (32, 8), (2, 2)])
    def test_against_explicit_factors(self, d_inp, d_out, rng):
        shape = MonarchShape.from_dims(d_inp, d_out)
        th_r, th_l = shape.split(rng.uniform(-np.pi, np.pi, shape.n_params))
        a = monarch_dense(shape, th_r, th_l)
        x = rng.normal(size=(3, d_inp))
        np.testing.assert_allclose(monarch_forward(shape, th_r, th_l, x), x @ a.T, atol=1e-12)
        layer = make_layer("monarch", d_inp, d_out)
        layer.set_params(np.concatenate([th_r.ravel(), th_l.ravel()]))
        np.testing.assert_allclose(materialize(layer), a, atol=1e-12)

    def test_zero_phases_4x4(self):
        shape = MonarchShape.from_dims(4, 4)
        th_r, th_l = shape.split(np.zeros(shape.n_params))
        x = np.eye(4)[0]
        np.testing.assert_allclose(monarch_forward(shape, th_r, th_l, x),
                                   monarch_dense(shape, th_r, th_l) @ x, atol=1e-15)

    def test_param_count_16(self):
        shape = MonarchShape.from_dims(16, 16)
        assert (shape.b_r, shape.n_r_inp) == (4, 4)
        assert shape.n_params == 128

    def test_shape_invariants(self):
        for d_inp in (2, 4, 8, 16, 32, 64):
            for d_out in (2, 4, 8, 16, 32, 64):
                s = MonarchShape.from_dims(d_inp, d_out)
                assert s.d_inp == d_inp and s.d_out == d_out
                assert s.n_r_out == s.b_l and s.n_l_inp == s.b_r

    @pytest.mark.parametrize("d", [3, 12, 48])
    def test_non_power_of_two(self, d):
        with pytest.raises(ConfigurationError):
            make_layer("monarch", d, 4)


class TestMesh:
    def test_mzi_block_plug_in(self):
        np.testing.assert_allclose(mzi_block(np.pi, 0.0), 1j * np.diag([1.0, -1.0]), atol=1e-15)

    def test_mzi3_block_plug_in(self):
        np.testing.assert_allclose(mzi_block(0.0, 0.0, "mzi3"),
                                   np.array([[-1, 1j], [1j, -1]]) / np.sqrt(2), atol=1e-15)

    @pytest.mark.parametrize("variant", ["mzi", "mzi3"])
    def test_block_unitary(self, variant, rng):
        th, ph = rng.uniform(-7, 7, 50), rng.uniform(-7, 7, 50)
        b = mzi_block(th, ph, variant)
        eye = np.broadcast_to(np.eye(2), b.shape)
        np.testing.assert_allclose(b @ np.conj(np.swapaxes(b, -1, -2)), eye, atol=1e-12)
        np.testing.assert_allclose(np.abs(np.linalg.det(b)), 1.0, atol=1e-12)

    @pytest.mark.parametrize("variant", ["mzi", "mzi3"])
    @pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 16])
    def test_unitary_and_count(self, variant, n, rng):
        layout = MeshLayout.for_modes(n)
        assert layout.n_blocks == n * (n - 1) // 2
        assert layout.n_params == n * n
        w = rng.uniform(-np.pi, np.pi, layout.n_params)
        t = mesh_unitary(layout, w, variant)
        assert np.linalg.norm(t @ t.conj().T - np.eye(n)) <= 1e-10
        np.testing.assert_allclose(t, mesh_dense(n, w, variant), atol=1e-12)

    def test_two_modes_single_block(self, rng):
        w = rng.uniform(-3, 3, 4)
        t = mesh_unitary(MeshLayout.for_modes(2), w)
        np.testing.assert_allclose(t, np.diag(np.exp(1j * w[2:])) @ mzi_block(w[0], w[1]), atol=1e-14)

    def test_zero_angles(self):
        n = 6
        w = np.zeros(n * n)
        np.testing.assert_allclose(mesh_unitary(MeshLayout.for_modes(n), w), mesh_dense(n, w, "mzi"),
                                   atol=1e-12)

    def test_square_norm_preserved(self, rng):
        layout = MeshLayout.for_modes(5)
        w = rng.uniform(-3, 3, 25)
        x = rng.normal(size=5)
        assert np.linalg.norm(mesh_unitary(layout, w) @ x) == pytest.approx(np.linalg.norm(x))

    @pytest.mark.parametrize("variant", ["mzi", "mzi3"])
    @pytest.mark.parametrize("d_inp,d_out", [(3, 5), (6, 2), (4, 4)])
    def test_padding_and_readout(self, variant, d_inp, d_out, rng):
        n = max(d_inp, d_out)
        layout = MeshLayout.for_modes(n)
        w = rng.uniform(-3, 3, n * n)
        x = rng.normal(size=d_inp)
        expect = (mesh_dense(n, w, variant) @ np.pad(x, (0, n - d_inp)))[:d_out].real
        np.testing.assert_allclose(mesh_forward(layout, w, x, d_out, variant), expect, atol=1e-12)
        layer = make_layer(variant, d_inp, d_out)
        layer.set_params(w)
        np.testing.assert_allclose(layer.forward(x), expect, atol=1e-12)

    def test_real_readout_contractive(self):
        layer = random_layer("mzi", 8, 8, seed=3)
        assert np.linalg.norm(materialize(layer), 2) <= 1 + 1e-12


# ---------------------------------------------------------------- oracle API


def expected_d_bb(kind, d_inp, d_out):
    if kind in ("matvec", "mrr", "slm"):
        return d_inp * d_out
    if kind == "monarch":
        return MonarchShape.from_dims(d_inp, d_out).n_params
    return max(d_inp, d_out) ** 2


@pytest.mark.parametrize("kind", KINDS)
class TestLayerContract:
    def test_linearity(self, kind, rng):
        for d_inp, d_out in SIZES:
            layer = random_layer(kind, d_inp, d_out)
            x, z = rng.normal(size=(2, d_inp))
            a, b = rng.normal(size=2)
            lhs = layer.forward(a * x + b * z)
            rhs = a * layer.forward(x) + b * layer.forward(z)
            assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(1.0, np.linalg.norm(lhs))

    def test_query_counts(self, kind, rng):
        layer = random_layer(kind, 4, 8)
        layer.forward(rng.normal(size=4))
        assert layer.query_count == 1
        layer.forward(rng.normal(size=(5, 4)))
        assert layer.query_count == 6
        materialize(layer)
        assert layer.query_count == 10
        layer.forward_at(np.tile(layer.params, (3, 1)), rng.normal(size=(2, 4)))
        assert layer.query_count == 16

    def test_d_bb_formula(self, kind):
        dims = [2, 4, 8, 16, 32, 64] if kind == "monarch" else list(range(2, 65, 7))
        for d in dims:
            layer = make_layer(kind, d, dims[0])
            assert layer.d_bb == expected_d_bb(kind, d, dims[0])
            assert layer.params.shape == (layer.d_bb,)

    def test_forward_at_matches_forward(self, kind, rng):
        layer = random_layer(kind, 4, 4)
        ws = layer.params + 0.1 * rng.normal(size=(3, layer.d_bb))
        xs = rng.normal(size=(2, 4))
        out = layer.forward_at(ws, xs)
        for i in range(3):
            np.testing.assert_allclose(out[i], layer.forward(xs, w=ws[i]), atol=1e-12)

    def test_dimension_mismatch(self, kind):
        layer = random_layer(kind, 4, 4)
        with pytest.raises(ValueError):
            layer.forward(np.ones(5))
        with pytest.raises(ValueError):
            layer.set_params(np.ones(layer.d_bb + 1))


def test_materialize_matvec_is_reshape(rng):
    layer = random_layer("matvec", 5, 3)
    assert np.array_equal(materialize(layer), layer.params.reshape(3, 5))


def test_materialize_guard():
    layer = make_layer("matvec", 8, 2)
    with pytest.raises(MaterializeRefused):
        materialize(layer, limit=4)
    assert layer.query_count == 0


def test_matvec_identity():
    layer = make_layer("matvec", 2, 2)
    layer.set_params(np.eye(2).ravel())
    np.testing.assert_array_equal(layer.forward(np.array([3.0, 4.0])), [3.0, 4.0])


def test_unknown_kind_and_constants():
    with pytest.raises(ConfigurationError):
        make_layer("laser", 2, 2)
    with pytest.raises(ConfigurationError):
        make_layer("slm", 2, 2, a=0.5)
    with pytest.raises(ConfigurationError):
        make_layer("mrr", 2, 2, a=1.5)


def test_rejects_non_finite_params():
    layer = make_layer("matvec", 2, 2)
    with pytest.raises(ValueError):
        layer.set_params([0.0, np.nan, 0.0, 0.0])
