import numpy as np
import pytest
from numpy.testing import assert_allclose

from kmps import ed
from kmps.dmrg import (DmrgSettings, excited_state, global_subspace_expansion,
                       ground_state)
from kmps.graded import TruncationPolicy
from kmps.hamiltonian import SchwingerParams, assemble_hamiltonian, free_mpo
from kmps.mps import (mps_dense_vector, overlap, product_state_mps,
                      random_sector_mps, vacuum_mps)

TIGHT = DmrgSettings(policy=TruncationPolicy(eps=1e-12, chi_max=256),
                     energy_tol=1e-11, max_sweeps=30)


def prepared_start(h, layout, sector, rng, chi0=4):
    psi = random_sector_mps(layout, sector, chi0, rng)
    return global_subspace_expansion(h, psi)


class TestGroundState:
    def test_free_vacuum(self, sg_small, rng):
        layout, params = sg_small
        h0 = free_mpo(layout, params)
        e, gs, rep = ground_state(h0, prepared_start(h0, layout, 0, rng), TIGHT)
        assert abs(e) < 1e-10
        assert rep.converged

    @pytest.mark.parametrize("fixture", ["sg_small", "ms_small"])
    def test_matches_ed(self, fixture, request, rng):
        layout, params = request.getfixturevalue(fixture)
        h = assemble_hamiltonian(layout, params)
        basis0 = ed.enumerate_basis(layout, params, sector_P=0)
        vals, _ = ed.dense_spectrum(ed.build_dense_h(basis0, params), 2)
        e, gs, rep = ground_state(h, prepared_start(h, layout, 0, rng), TIGHT)
        assert abs(e - vals[0]) < 1e-8
        assert rep.variance < 1e-8

    def test_variational_bound(self, sg_small, rng):
        layout, params = sg_small
        h = assemble_hamiltonian(layout, params)
        basis0 = ed.enumerate_basis(layout, params, sector_P=0)
        vals, _ = ed.dense_spectrum(ed.build_dense_h(basis0, params), 1)
        loose = DmrgSettings(policy=TruncationPolicy(eps=1e-4, chi_max=8),
                             energy_tol=1e-9, max_sweeps=6)
        e, _, _ = ground_state(h, prepared_start(h, layout, 0, rng), loose)
        assert e >= vals[0] - 1e-9

    def test_monotone_sweeps(self, ms_small, rng):
        layout, params = ms_small
        h = assemble_hamiltonian(layout, params)
        _, _, rep = ground_state(h, prepared_start(h, layout, 0, rng), TIGHT)
        es = rep.energies
        assert all(es[i + 1] <= es[i] + 1e-10 for i in range(len(es) - 1))

    def test_sector_purity(self, ms_small, rng):
        layout, params = ms_small
        h = assemble_hamiltonian(layout, params)
        basis = ed.enumerate_basis(layout, params)
        e, gs, _ = ground_state(h, prepared_start(h, layout, 0, rng), TIGHT)
        vec = mps_dense_vector(gs, basis)
        assert np.abs(vec[basis.charges != 0]).max() == 0.0

    def test_charged_sector(self, ms_small, rng):
        layout, params = ms_small
        h = assemble_hamiltonian(layout, params)
        basis1 = ed.enumerate_basis(layout, params, sector_P=1)
        vals, _ = ed.dense_spectrum(ed.build_dense_h(basis1, params), 1)
        e, gs, _ = ground_state(h, prepared_start(h, layout, 1, rng), TIGHT)
        assert abs(e - vals[0]) < 1e-8
        assert gs.sector == 1


class TestExcitedState:
    def test_free_first_excitation(self, ms_small, rng):
        layout, _ = ms_small
        params = SchwingerParams(fermion_mass=0.0, length_L=8.0)
        h = assemble_hamiltonian(layout, params)
        e0, gs, _ = ground_state(h, prepared_start(h, layout, 0, rng), TIGHT)
        # seed containing the true basin: single boson at the zero mode
        levels = [0] * layout.n_sites
        levels[layout.site(0)] = 1
        e1, ex, _ = excited_state(h, [gs], product_state_mps(layout, levels), TIGHT)
        assert_allclose(e1 - e0, params.boson_mass, atol=1e-9)

    @pytest.mark.parametrize("fixture", ["sg_small", "ms_small"])
    def test_matches_ed_second_level(self, fixture, request, rng):
        layout, params = request.getfixturevalue(fixture)
        h = assemble_hamiltonian(layout, params)
        basis0 = ed.enumerate_basis(layout, params, sector_P=0)
        vals, _ = ed.dense_spectrum(ed.build_dense_h(basis0, params), 2)
        e0, gs, _ = ground_state(h, prepared_start(h, layout, 0, rng), TIGHT)
        e1, ex, rep = excited_state(h, [gs], prepared_start(h, layout, 0, rng), TIGHT)
        assert abs(e1 - vals[1]) < 1e-7
        assert abs(overlap(gs, ex)) < 1e-8
        assert e1 >= e0

    def test_second_excited(self, ms_small, rng):
        layout, params = ms_small
        h = assemble_hamiltonian(layout, params)
        basis0 = ed.enumerate_basis(layout, params, sector_P=0)
        vals, _ = ed.dense_spectrum(ed.build_dense_h(basis0, params), 3)
        e0, gs, _ = ground_state(h, prepared_start(h, layout, 0, rng), TIGHT)
        e1, ex1, _ = excited_state(h, [gs], prepared_start(h, layout, 0, rng), TIGHT)
        e2, ex2, _ = excited_state(h, [gs, ex1], prepared_start(h, layout, 0, rng),
                                   TIGHT)
        assert abs(e2 - vals[2]) < 1e-6
        assert abs(overlap(ex2, ex1)) < 1e-7

    def test_other_sector_needs_no_projection(self, ms_small, rng):
        layout, params = ms_small
        h = assemble_hamiltonian(layout, params)
        basis2 = ed.enumerate_basis(layout, params, sector_P=2)
        vals, _ = ed.dense_spectrum(ed.build_dense_h(basis2, params), 1)
        e, gs, _ = ground_state(h, prepared_start(h, layout, 2, rng), TIGHT)
        assert abs(e - vals[0]) < 1e-8


class TestSubspaceExpansion:
    def test_sector_growth(self, ms_small):
        layout, params = ms_small
        h = assemble_hamiltonian(layout, params)
        vac = vacuum_mps(layout)
        expanded = global_subspace_expansion(h, vac)
        for b in range(layout.n_sites - 1):
            before = set(vac.bond_sectors(b))
            after = set(expanded.bond_sectors(b))
            assert before <= after
        # the interaction transfers momentum, so interior bonds must grow
        grew = [set(vac.bond_sectors(b)) < set(expanded.bond_sectors(b))
                for b in range(layout.n_sites - 1)]
        assert any(grew)

    def test_idempotent_sector_sets(self, ms_small):
        layout, params = ms_small
        h = assemble_hamiltonian(layout, params)
        once = global_subspace_expansion(h, vacuum_mps(layout))
        twice = global_subspace_expansion(h, once)
        # after saturation a second application adds no new charge values
        for b in range(layout.n_sites - 1):
            s1 = set(once.bond_sectors(b))
            s2 = set(twice.bond_sectors(b))
            assert s1 <= s2
        grew = sum(len(set(twice.bond_sectors(b)) - set(once.bond_sectors(b)))
                   for b in range(layout.n_sites - 1))
        # allow at most marginal growth from second-order transfers
        assert grew <= 4

    def test_expansion_unlocks_product_start(self, ms_small, rng):
        layout, params = ms_small
        h = assemble_hamiltonian(layout, params)
        basis0 = ed.enumerate_basis(layout, params, sector_P=0)
        vals, _ = ed.dense_spectrum(ed.build_dense_h(basis0, params), 1)
        # expanded start reaches the ED ground energy
        start = global_subspace_expansion(h, vacuum_mps(layout))
        e_exp, _, _ = ground_state(h, start, TIGHT)
        assert abs(e_exp - vals[0]) < 1e-8
        # the bare product start may stall above it; record both outcomes
        e_bare, _, _ = ground_state(h, vacuum_mps(layout), TIGHT)
        assert e_bare >= e_exp - 1e-10

    def test_norm_one(self, ms_small):
        layout, params = ms_small
        h = assemble_hamiltonian(layout, params)
        from kmps.mps import norm
        out = global_subspace_expansion(h, vacuum_mps(layout))
        assert_allclose(norm(out), 1.0, rtol=1e-12)
