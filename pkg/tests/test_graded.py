import numpy as np
import pytest
from numpy.testing import assert_allclose

from helpers import dense_contract, dense_svd_spectrum, reconstruct_split
from kmps.graded import (EXACT, IN, OUT, BlockTensor, GradedSpace,
                         TruncationPolicy, add, adjoint, allowed_keys, contract,
                         from_dense, fuse, qr_split, random_tensor, scale,
                         svd_truncate, to_dense, transpose, vdot)


def space(d, sign=OUT):
    return GradedSpace.make(d, sign)


class TestGradedSpace:
    def test_sorted_distinct(self):
        s = space({3: 1, -3: 2, 0: 1})
        assert s.charges == (-3, 0, 3)
        assert s.dim == 4
        with pytest.raises(ValueError):
            GradedSpace(((0, 1), (0, 2)))
        with pytest.raises(ValueError):
            GradedSpace(((0, 0),))

    def test_flip(self):
        s = space({1: 2})
        assert s.flipped().sign == IN
        assert s.flipped().flipped() == s


class TestFuse:
    def test_neutral(self):
        assert fuse(space({0: 1}), space({0: 1})) == space({0: 1})

    def test_pair_sums(self):
        got = fuse(space({0: 1, -3: 1}), space({0: 1, 3: 1}))
        # oracle: enumerate the pair sums explicitly
        acc = {}
        for qa, da in [(0, 1), (-3, 1)]:
            for qb, db in [(0, 1), (3, 1)]:
                acc[qa + qb] = acc.get(qa + qb, 0) + da * db
        assert got == GradedSpace.make(acc)
        assert got == space({-3: 1, 0: 2, 3: 1})

    def test_strip_degeneracy(self):
        s = space({-3: 1, 0: 2, 3: 1})
        got = fuse(s, s, strip_degeneracy=True)
        assert all(d == 1 for _, d in got.sectors)
        assert got.charges == (-6, -3, 0, 3, 6)

    def test_direction_mismatch(self):
        with pytest.raises(ValueError):
            fuse(space({0: 1}), space({0: 1}, IN))


def random_pair(rng):
    a = space({-1: 2, 0: 3, 1: 2})
    b = space({-1: 1, 0: 2, 2: 1})
    t1 = random_tensor((a, b, a.flipped()), rng)
    t2 = random_tensor((a, b.flipped(), a.flipped()), rng)
    return t1, t2


class TestContract:
    def test_identity_contraction(self, rng):
        s = space({-1: 2, 0: 3, 2: 1})
        t = random_tensor((s, space({0: 1, 1: 1}), s.flipped()), rng)
        eye = BlockTensor((s, s.flipped()))
        for q, d in s.sectors:
            eye.set_block((q, q), np.eye(d, dtype=complex))
        got = contract(eye, t, [(1, 0)])
        assert got.spaces == t.spaces
        for key, blk in t.blocks.items():
            assert_allclose(got.blocks[key], blk, atol=1e-14)

    def test_single_block_is_matrix_product(self, rng):
        s1 = space({2: 3})
        s2 = space({2: 4}, IN)
        a = BlockTensor((s1, s2))
        b = BlockTensor((s2.flipped(), s1.flipped()))
        ma = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
        mb = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        a.set_block((2, 2), ma)
        b.set_block((2, 2), mb)
        got = contract(a, b, [(1, 0)])
        assert_allclose(got.blocks[(2, 2)], ma @ mb, atol=1e-13)

    def test_direction_error(self, rng):
        t1, t2 = random_pair(rng)
        with pytest.raises(ValueError):
            contract(t1, t2, [(0, 0)])   # same direction

    def test_dense_equivalence(self, rng):
        t1, t2 = random_pair(rng)
        got = to_dense(contract(t1, t2, [(1, 1), (2, 0)]))
        ref = dense_contract(t1, t2, [(1, 1), (2, 0)])
        assert_allclose(got, ref, atol=1e-12 * np.abs(ref).max())

    def test_associativity(self, rng):
        s = space({-1: 2, 0: 2, 1: 2})
        for _ in range(3):
            a = random_tensor((s, s.flipped()), rng)
            b = random_tensor((s, s.flipped()), rng)
            c = random_tensor((s, s.flipped()), rng)
            ab_c = contract(contract(a, b, [(1, 0)]), c, [(1, 0)])
            a_bc = contract(a, contract(b, c, [(1, 0)]), [(1, 0)])
            ref = to_dense(ab_c)
            assert_allclose(to_dense(a_bc), ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())

    def test_flux_conservation(self, rng):
        t1, t2 = random_pair(rng)
        out = contract(t1, t2, [(1, 1), (2, 0)])
        out.validate()


class TestAdjoint:
    def test_real_diagonal(self):
        s = space({0: 2, 1: 1})
        t = BlockTensor((s, s.flipped()))
        t.set_block((0, 0), np.diag([1.0, 2.0]).astype(complex))
        t.set_block((1, 1), np.array([[3.0 + 0j]]))
        adj = adjoint(t)
        assert adj.spaces == (s.flipped(), s)
        for key, blk in t.blocks.items():
            assert_allclose(adj.blocks[key], blk)

    def test_antilinear(self, rng):
        t1, _ = random_pair(rng)
        c = 0.3 - 1.7j
        left = adjoint(scale(t1, c))
        right = scale(adjoint(t1), np.conj(c))
        for key in t1.blocks:
            assert_allclose(left.blocks[key], right.blocks[key], atol=1e-14)

    def test_involution(self, rng):
        t1, _ = random_pair(rng)
        back = adjoint(adjoint(t1))
        assert back.spaces == t1.spaces
        for key, blk in t1.blocks.items():
            assert_allclose(back.blocks[key], blk)

    def test_norm_squared_via_adjoint(self, rng):
        t1, _ = random_pair(rng)
        full = contract(adjoint(t1), t1, [(0, 0), (1, 1), (2, 2)])
        val = full.blocks[()].item()
        dense = to_dense(t1)
        assert_allclose(val, np.vdot(dense, dense), rtol=1e-12)


class TestSvdTruncate:
    def test_rank_one_no_discard(self, rng):
        s = space({0: 3, 1: 2})
        u = random_tensor((s,), rng)
        v = random_tensor((s.flipped(),), rng)
        t = BlockTensor((s, s.flipped()))
        for (qu,), bu in u.blocks.items():
            for (qv,), bv in v.blocks.items():
                if qu == qv:
                    t.set_block((qu, qv), np.outer(bu, bv))
        # rank-1 within each sector; harsh policy still discards nothing real
        _, _, _, disc = svd_truncate(t, (0,), TruncationPolicy(eps=0.0, chi_max=2))
        assert disc < 1e-12

    def test_exact_reconstruction(self, rng):
        t1, _ = random_pair(rng)
        u, s, v, disc = svd_truncate(t1, (0, 1), EXACT)
        assert disc < 1e-12
        rec = reconstruct_split(u, s, v)
        ref = to_dense(t1)
        assert np.linalg.norm(to_dense(rec) - ref) / np.linalg.norm(ref) < 1e-12

    def test_truncated_weight_matches_dense_svd(self, rng):
        t1, _ = random_pair(rng)
        lam = dense_svd_spectrum(t1, (0, 1))
        u, s, v, disc = svd_truncate(t1, (0, 1), TruncationPolicy(eps=0.0, chi_max=1))
        ref = np.sqrt(np.sum(np.sort(lam)[:-1] ** 2))
        assert_allclose(disc, ref, rtol=1e-10)

    def test_eps_budget(self, rng):
        t1, _ = random_pair(rng)
        nrm = t1.norm()
        for eps_rel in (1e-1, 1e-3):
            _, _, _, disc = svd_truncate(t1, (0, 1),
                                         TruncationPolicy(eps=eps_rel * nrm))
            assert disc <= eps_rel * nrm + 1e-14

    def test_empty_error(self):
        t = BlockTensor((space({0: 1}), space({0: 1}, IN)))
        with pytest.raises(ValueError):
            svd_truncate(t, (0,), EXACT)

    def test_split_flux(self, rng):
        t1, _ = random_pair(rng)
        u, s, v, _ = svd_truncate(t1, (0, 2), EXACT)
        u.validate()
        s.validate()
        v.validate()


class TestQrSplit:
    def test_left_isometry(self, rng):
        t1, _ = random_pair(rng)
        q, r = qr_split(t1, (0, 1), side="left")
        qdq = contract(adjoint(q), q, [(0, 0), (1, 1)])
        for (a, b), blk in qdq.blocks.items():
            assert a == b
            assert_allclose(blk, np.eye(blk.shape[0]), atol=1e-12)
        rec = contract(q, r, [(2, 0)])
        assert_allclose(to_dense(rec), to_dense(t1), atol=1e-12)

    def test_right_isometry(self, rng):
        t1, _ = random_pair(rng)
        r, q = qr_split(t1, (0,), side="right")
        qq = contract(q, adjoint(q), [(1, 1), (2, 2)])
        for (a, b), blk in qq.blocks.items():
            assert a == b
            assert_allclose(blk, np.eye(blk.shape[0]), atol=1e-12)
        rec = contract(r, q, [(1, 0)])
        assert_allclose(to_dense(rec), to_dense(t1), atol=1e-12)


class TestVectorOps:
    def test_add_vdot_dense(self, rng):
        t1, _ = random_pair(rng)
        t2 = random_tensor(t1.spaces, rng)
        s = add(t1, t2, 0.5, -2j)
        assert_allclose(to_dense(s), 0.5 * to_dense(t1) - 2j * to_dense(t2), atol=1e-13)
        assert_allclose(vdot(t1, t2), np.vdot(to_dense(t1), to_dense(t2)), rtol=1e-12)

    def test_from_dense_roundtrip(self, rng):
        t1, _ = random_pair(rng)
        back = from_dense(to_dense(t1), t1.spaces)
        for key, blk in t1.blocks.items():
            assert_allclose(back.blocks[key], blk)

    def test_transpose_dense(self, rng):
        t1, _ = random_pair(rng)
        perm = (2, 0, 1)
        assert_allclose(to_dense(transpose(t1, perm)),
                        np.transpose(to_dense(t1), perm))
