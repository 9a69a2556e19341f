import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from kmps import ed
from kmps.hamiltonian import SchwingerParams, SineGordonParams, assemble_hamiltonian
from kmps.layout import ModeLayout, ModelKind


class TestEnumerate:
    def test_minimal_ms_sector(self):
        lay = ModeLayout(ModelKind.MASSIVE_SCHWINGER, 1, 1, 1, 10.0)
        par = SchwingerParams(fermion_mass=0.1, length_L=10.0)
        basis = ed.enumerate_basis(lay, par, sector_P=0)
        # n(-1) = n(+1) constrained equal, times two zero-mode levels
        assert len(basis) == 4

    def test_sector_partition(self, sg_tiny):
        layout, params = sg_tiny
        full = ed.enumerate_basis(layout, params)
        count = 0
        for q in np.unique(full.charges):
            count += len(ed.enumerate_basis(layout, params, sector_P=int(q)))
        assert count == len(full) == layout.total_dim

    def test_cap(self, sg_small):
        layout, params = sg_small
        with pytest.raises(ValueError):
            ed.enumerate_basis(layout, params, cap=10)

    def test_empty_sector(self, sg_tiny):
        layout, params = sg_tiny
        with pytest.raises(ValueError):
            ed.enumerate_basis(layout, params, sector_P=999)


class TestDenseH:
    def test_free_is_diagonal(self, sg_small):
        layout, _ = sg_small
        params = SineGordonParams(delta_dim=0.25, length_L=15.0, soliton_mass=1e-12)
        # tiny soliton mass still couples; use the mS model at m=0 for exact freedom
        lay = ModeLayout(ModelKind.MASSIVE_SCHWINGER, 2, 2, 1, 9.0)
        par = SchwingerParams(fermion_mass=0.0, length_L=9.0)
        basis = ed.enumerate_basis(lay, par)
        h = ed.build_dense_h(basis, par)
        assert np.abs(h - np.diag(basis.energies)).max() < 1e-14

    def test_vacuum_shift_element(self, sg_small):
        layout, params = sg_small
        basis = ed.enumerate_basis(layout, params)
        h = ed.build_dense_h(basis, params)
        vac = [0] * layout.n_sites
        vac[layout.site(0)] = layout.n_zm
        up = list(vac)
        up[layout.site(0)] = layout.n_zm + 1
        i, j = basis.index[tuple(up)], basis.index[tuple(vac)]
        # vacuum-to-(l=1) element: lambda * (-L/2) * product of G00 = 1
        assert_allclose(h[i, j], params.coupling * (-0.5) * params.length_L,
                        rtol=1e-13)

    def test_block_diagonal(self, sg_small):
        layout, params = sg_small
        basis = ed.enumerate_basis(layout, params)
        h = ed.build_dense_h(basis, params)
        mism = np.not_equal.outer(basis.charges, basis.charges)
        assert np.abs(h[mism]).max() == 0.0

    def test_theta_phase_enters(self):
        lay = ModeLayout(ModelKind.MASSIVE_SCHWINGER, 1, 1, 1, 10.0)
        a = SchwingerParams(fermion_mass=0.2, length_L=10.0, theta=0.0)
        b = SchwingerParams(fermion_mass=0.2, length_L=10.0, theta=1.1)
        ba = ed.enumerate_basis(lay, a)
        ha = ed.build_dense_h(ba, a)
        hb = ed.build_dense_h(ba, b)
        assert np.abs(ha - hb).max() > 1e-3
        assert np.abs(hb - hb.conj().T).max() < 1e-14


class TestSpectrum:
    def test_free_spectrum_sorted(self):
        lay = ModeLayout(ModelKind.MASSIVE_SCHWINGER, 2, 2, 2, 9.0)
        par = SchwingerParams(fermion_mass=0.0, length_L=9.0)
        basis = ed.enumerate_basis(lay, par)
        h = ed.build_dense_h(basis, par)
        vals, vecs = ed.dense_spectrum(h, 5)
        assert_allclose(vals, np.sort(basis.energies)[:5], atol=1e-13)

    def test_single_state(self):
        h = np.array([[2.5]], dtype=complex)
        vals, _ = ed.dense_spectrum(h, 1)
        assert vals[0] == 2.5

    def test_ground_energy_monotone_in_basis_size(self):
        # enlarging the occupation cutoffs can only lower the ground energy
        par = SchwingerParams(fermion_mass=0.5, length_L=8.0, theta=math.pi)
        energies = []
        for n_max, n_zm in [(1, 1), (2, 2), (3, 3)]:
            lay = ModeLayout(ModelKind.MASSIVE_SCHWINGER, 2, n_max, n_zm, 8.0)
            basis = ed.enumerate_basis(lay, par, sector_P=0)
            vals, _ = ed.dense_spectrum(ed.build_dense_h(basis, par), 1)
            energies.append(vals[0])
        assert energies[1] <= energies[0] + 1e-12
        assert energies[2] <= energies[1] + 1e-12


class TestCentralTheorem:
    """MPO dense expansion equals the independent series oracle."""

    @pytest.mark.parametrize("fixture", ["sg_small", "ms_small"])
    def test_mpo_equals_ed(self, fixture, request):
        layout, params = request.getfixturevalue(fixture)
        basis = ed.enumerate_basis(layout, params)
        hd = ed.build_dense_h(basis, params)
        hm = ed.mpo_dense_full(assemble_hamiltonian(layout, params), basis)
        assert np.abs(hm - hd).max() < 1e-12 * np.abs(hd).max()

    def test_sector_restricted_conversion(self, ms_small):
        layout, params = ms_small
        h = assemble_hamiltonian(layout, params)
        mats, states = ed.mpo_dense_matrix(h, sector_P=0)
        basis0 = ed.enumerate_basis(layout, params, sector_P=0)
        hd0 = ed.build_dense_h(basis0, params)
        ids = [basis0.index[s] for s in states[0]]
        assert np.abs(mats[0] - hd0[np.ix_(ids, ids)]).max() < 1e-12 * np.abs(hd0).max()
