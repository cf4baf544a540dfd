#!/usr/bin/env python3
"""Material law, saddle blocks, projection and local postprocessing."""

import numpy as np
import pytest

from curvedhz.assembly import (MaterialLaw, assemble_system, boundary_edge_slots, hdiv_gram, l2_project,
                               mass_gram, mesh_dependent_grams, mesh_dependent_norms, postprocess_displacement)
from curvedhz.curving import build_curved_mesh, build_exact_map
from curvedhz.errors import AssemblyError
from curvedhz.quadrature import triangle_rule
from curvedhz.spaces import (build_displacement_space, build_stress_space, displacement_values,
                             interpolate_stress)


def straight_setup(mesh, k=3):
    cm = build_curved_mesh(mesh, None, 1)
    return cm, build_exact_map(cm, None), build_stress_space(cm, k), build_displacement_space(cm, k)


def test_material_law_inverse(rng):
    law = MaterialLaw(2.0, 0.7)
    eps = rng.standard_normal((10, 2, 2))
    eps = 0.5 * (eps + np.swapaxes(eps, 1, 2))
    assert np.allclose(law.apply_A(law.apply_C(eps)), eps, atol=1e-13)


def test_compliance_matrix_matches_apply_A(rng):
    law = MaterialLaw(1.0, 1.0)
    a, b = rng.standard_normal(3), rng.standard_normal(3)

    def tensor(c):
        return np.array([[c[0], c[1]], [c[1], c[2]]])

    direct = np.sum(law.apply_A(tensor(a)) * tensor(b))
    assert a @ law.compliance_matrix @ b == pytest.approx(direct, abs=1e-13)


def test_material_law_guard():
    with pytest.raises(AssemblyError):
        MaterialLaw(0.0, 1.0)


def test_blocks(square4):
    cm, exact, stress, disp = straight_setup(square4)
    system = assemble_system(cm, exact, stress, disp, MaterialLaw(), None, None)
    A = system.A_block.toarray()
    assert A.shape == (stress.n_dofs, stress.n_dofs)
    assert system.B_block.shape == (disp.n_dofs, stress.n_dofs)
    assert np.allclose(A, A.T, atol=1e-13)
    assert np.min(np.linalg.eigvalsh(A)) > 0
    assert not system.rhs().any()


def test_mismatched_exact_map(square, square4):
    cm, _, stress, disp = straight_setup(square4)
    other = build_curved_mesh(square, None, 1)
    with pytest.raises(AssemblyError):
        assemble_system(cm, build_exact_map(other, None), stress, disp, MaterialLaw(), None, None)


def test_divergence_block_annihilates_constants(square4):
    cm, exact, stress, disp = straight_setup(square4)
    system = assemble_system(cm, exact, stress, disp, MaterialLaw(), None, None)
    const = interpolate_stress(stress, lambda x: np.broadcast_to(np.eye(2), (len(x), 2, 2)))
    assert np.allclose(system.B_block @ const, 0.0, atol=1e-12)


def test_boundary_slots(disk, circle):
    cm = build_curved_mesh(disk, circle, 2)
    slots = boundary_edge_slots(cm)
    assert len(slots) == len(disk.boundary_edges)
    # rotated boundary triangles put the curved edge first
    assert all(i == 0 for _, i in slots)


def test_l2_project_reproduces_polynomials(square4):
    cm, _, _, disp = straight_setup(square4)

    def field(x):
        return np.column_stack([x[:, 0] ** 2 - x[:, 1], x[:, 0] * x[:, 1] + 1.0])

    coeffs = l2_project(disp, cm, field)
    pts = triangle_rule(4).points
    for t in range(cm.n_triangles):
        x = cm.maps[t].evaluate(pts)[0]
        assert np.allclose(displacement_values(disp, coeffs, t, pts), field(x), atol=1e-12)


def test_postprocess_recovers_quadratic_displacement(square4):
    cm, _, stress, disp = straight_setup(square4)
    star = build_displacement_space(cm, 3, star=True)
    law = MaterialLaw(1.0, 1.0)

    def u(x):
        return np.column_stack([x[:, 0] ** 2 + x[:, 1], x[:, 0] * x[:, 1] - 0.5 * x[:, 1] ** 2])

    def sigma(x):
        eps = np.zeros((len(x), 2, 2))
        eps[:, 0, 0] = 2 * x[:, 0]
        eps[:, 0, 1] = eps[:, 1, 0] = 0.5 * (1.0 + x[:, 1])
        eps[:, 1, 1] = x[:, 0] - x[:, 1]
        return law.apply_C(eps)

    sig = interpolate_stress(stress, sigma)
    uh = l2_project(disp, cm, u)
    ustar = postprocess_displacement(sig, uh, stress, disp, star, law)
    pts = triangle_rule(5).points
    for t in range(cm.n_triangles):
        x = cm.maps[t].evaluate(pts)[0]
        assert np.allclose(displacement_values(star, ustar, t, pts), u(x), atol=1e-10)


def test_grams_positive(curved_disk):
    cm, _ = curved_disk
    stress = build_stress_space(cm, 3)
    disp = build_displacement_space(cm, 3)
    X = hdiv_gram(stress).toarray()
    M = mass_gram(disp).toarray()
    assert np.allclose(X, X.T, atol=1e-12)
    assert np.min(np.linalg.eigvalsh(X)) > 0
    assert np.min(np.linalg.eigvalsh(M)) > 0
    Xh, Mh = mesh_dependent_grams(stress, disp)
    assert Xh.shape == X.shape and Mh.shape == M.shape
    assert np.min(np.linalg.eigvalsh(Mh.toarray())) > 0


def test_mesh_dependent_norms(square4, rng):
    cm, _, stress, disp = straight_setup(square4)
    c = rng.standard_normal(stress.n_dofs)
    assert mesh_dependent_norms(2 * c, stress, disp) == pytest.approx(2 * mesh_dependent_norms(c, stress, disp))
    ones = np.zeros(disp.n_dofs)
    assert mesh_dependent_norms(ones, stress, disp, kind="displacement") == 0.0
    with pytest.raises(AssemblyError):
        mesh_dependent_norms(c, stress, disp, kind="energy")
    with pytest.raises(AssemblyError):
        mesh_dependent_norms(c[:-1], stress, disp)
