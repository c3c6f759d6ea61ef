"""End-to-end acceptance checks for the full pipeline.

Each test covers one acceptance criterion and prints a single PASS/FAIL
line; the expensive artifacts (paper-scale RVE, Monte Carlo density fit,
fully trained material net) come from session fixtures so they are built
once and shared.
"""

import json
import warnings

import numpy as np
import pytest

from latticeopt import cli, densmap, fe_core, optimizer, pann
from latticeopt.beam_rve import BeamMaterial, hill_energy_gap, homogenize
from latticeopt.densmap import SigmoidFit, aspect_from_density, estimate_density
from latticeopt.fe_core import make_grid
from latticeopt.isotropy import project_isotropic, relative_anisotropy
from latticeopt.optimizer import DesignField, OptConfig, SensitivityField
from latticeopt.pann import CholeskyPair, cholesky_matrix, init_net


def report(num, label, ok):
    print(f"ACCEPTANCE {num} ({label}): {'PASS' if ok else 'FAIL'}")
    assert ok


def small_adjoint_problem():
    grid = make_grid((4, 4), (1.0, 1.0))
    pin = grid.nearest_node([0.0, 0.0])
    grid.fix_dof(pin, 0)
    grid.fix_dof(pin, 1)
    grid.fix_dof(grid.nearest_node([0.0, 1.0]), 0)
    grid.add_point_load([1.0, 0.5], 1, -1.0)
    net = init_net(seed=4, hidden=8)
    net.mu = np.array([0.15, 200.0, 0.3])
    net.sigma = np.array([0.2, 200.0, 0.2])
    net.fit = SigmoidFit(0.11882, 0.91991, 0.05956)
    rng = np.random.default_rng(0)
    n = grid.n_elements
    fld = DesignField(
        gamma=rng.uniform(0.3, 0.9, n),
        kappa=rng.uniform(0.12, 0.22, n),
        roles=np.ones(n, dtype=int),
        rho_min=0.1,
        rho_max=0.25,
    )
    return grid, net, fld


def compliance_of(grid, net, gamma, kappa, p=3.0):
    Cpen = optimizer.penalized_tensor(gamma, kappa, net, 210.0, 0.3, p=p, dim=2)
    return fe_core.compliance(fe_core.assemble_and_solve(grid, Cpen))


def test_acceptance_1_adjoint_sensitivities():
    # adjoint dc/dgamma and dc/dkappa against central finite differences
    # with a full re-solve per probe, 1e-3 relative, every element
    grid, net, fld = small_adjoint_problem()
    p = 3.0
    Cstar, dCdk = optimizer.element_tensors(fld.kappa, net, 210.0, 0.3, dim=2)
    Cpen = fld.gamma[:, None, None] ** p * Cstar
    sys = fe_core.assemble_and_solve(grid, Cpen)
    sens = optimizer.sensitivities(grid, sys.u, fld, Cstar, dCdk, p)
    h = 1e-6
    ok = True
    for e in range(grid.n_elements):
        for arr, adj in ((fld.gamma, sens.alpha_gamma), (fld.kappa, sens.alpha_kappa)):
            orig = arr[e]
            arr[e] = orig + h
            cp = compliance_of(grid, net, fld.gamma, fld.kappa, p)
            arr[e] = orig - h
            cm = compliance_of(grid, net, fld.gamma, fld.kappa, p)
            arr[e] = orig
            fd = (cp - cm) / (2.0 * h)
            # alpha is the descent magnitude: alpha_e = -dc/dx_e
            ok = ok and abs(-adj[e] - fd) <= 1e-3 * max(abs(fd), 1e-12)
    report(1, "adjoint sensitivities vs finite differences", ok)


def test_acceptance_2_cholesky_algebra():
    # closed-form dependent entries vs numerical factorization, PD with the
    # exact isotropic pattern, and C11 = C12 + 2 C44
    rng = np.random.default_rng(1)
    ok = True
    for _ in range(100):
        g44 = rng.uniform(0.1, 3.0)
        g11 = 2.0 / np.sqrt(3.0) * g44 + rng.uniform(0.05, 3.0)
        G = cholesky_matrix(CholeskyPair(g11, g44))
        C = G @ G.T
        Cref = pann._assemble_iso(g11**2, g11**2 - 2.0 * g44**2, g44**2)
        ok = ok and np.allclose(G, np.linalg.cholesky(Cref), atol=1e-10 * g11**2)
        ok = ok and np.linalg.eigvalsh(C).min() > 0.0
        ok = ok and abs(C[0, 0] - C[0, 1] - 2.0 * C[3, 3]) < 1e-12 * C[0, 0]
        pattern = Cref != 0.0
        ok = ok and np.all(np.abs(C[~pattern]) < 1e-12 * C[0, 0])
    report(2, "Cholesky head algebra", ok)


def test_acceptance_3_isotropic_projection():
    rng = np.random.default_rng(2)
    ok = True
    # identity-matrix case
    Pi = project_isotropic(np.eye(6))
    ok = ok and np.allclose(np.diag(Pi)[:3], 1.4, atol=1e-12)
    ok = ok and np.allclose(Pi[0, 1], -0.2, atol=1e-12)
    ok = ok and np.allclose(np.diag(Pi)[3:], 0.8, atol=1e-12)
    for _ in range(20):
        A = rng.normal(size=(6, 6))
        C = A + A.T
        P = project_isotropic(C)
        ok = ok and np.allclose(project_isotropic(P), P, atol=1e-12)
        ok = ok and relative_anisotropy(P) < 1e-12
        D = rng.normal(size=(6, 6))
        D = D + D.T
        lin = project_isotropic(2.0 * C + 3.0 * D)
        ok = ok and np.allclose(lin, 2.0 * P + 3.0 * project_isotropic(D), atol=1e-12)
    report(3, "isotropic projection", ok)


def test_acceptance_4_homogenization_physics(paper_rve):
    mat = BeamMaterial(E=210.0, nu=0.3, d=0.01 * paper_rve.strut_length)
    ok = True
    for Ebar in (np.diag([1.0, 0.0, 0.0]), np.full((3, 3), 0.5)):
        ok = ok and hill_energy_gap(paper_rve, mat, Ebar) < 1e-6
    C1 = homogenize(paper_rve, mat)
    C2 = homogenize(paper_rve, BeamMaterial(E=420.0, nu=0.3, d=mat.d))
    ok = ok and np.allclose(C2, 2.0 * C1, rtol=1e-10, atol=0)
    Ca = homogenize(paper_rve, mat, eps_star=0.5)
    Cb = homogenize(paper_rve, mat, eps_star=2.0)
    ok = ok and np.allclose(Ca, Cb, rtol=1e-10)
    ok = ok and paper_rve.cell_count >= 2000
    ok = ok and relative_anisotropy(C1) <= 0.06
    report(4, "homogenization physics", ok)


def test_acceptance_5_density_map(rve_fit):
    from latticeopt.beam_rve import RveModel

    # single interior strut against the analytic capsule volume
    strut = RveModel(
        size=4.0, strut_length=1.0,
        nodes=np.array([[1.5, 2.0, 2.0], [2.5, 2.0, 2.0]]),
        struts=np.array([[0, 1]]), weights=np.ones(1),
        pairs=np.zeros((0, 2), dtype=int), n_base=2, seed=0, cell_count=1,
        max_length_deviation=0.0,
    )
    a = 0.3
    r = 0.5 * a
    exact = (np.pi * r**2 * 1.0 + 4.0 / 3.0 * np.pi * r**3) / 4.0**3
    mc = estimate_density(strut, a, seed=0).kappa
    ok = abs(mc - exact) / exact < 0.02
    ok = ok and rve_fit.rms_residual <= 0.01
    a0, _ = aspect_from_density(rve_fit, 0.0)
    ok = ok and a0 == 0.0
    h = 1e-6
    for k in (0.1, 0.3, 0.5):
        _, da = aspect_from_density(rve_fit, k)
        ap, _ = aspect_from_density(rve_fit, k + h)
        am, _ = aspect_from_density(rve_fit, k - h)
        ok = ok and abs(da - (ap - am) / (2 * h)) < 1e-8 * max(1.0, abs(da))
    report(5, "density map", ok)


def test_acceptance_6_material_net_training(trained):
    net, hist = trained
    ok = hist["val"][-1] <= 1e-2
    # architecture constraint over 1e4 random probes
    rng = np.random.default_rng(3)
    p = np.column_stack(
        [
            rng.uniform(0.02, 0.3, 10_000),
            rng.uniform(50.0, 400.0, 10_000),
            rng.uniform(0.2, 0.45, 10_000),
        ]
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g11, g44 = pann.forward(net, p)
    ok = ok and np.all(g44 > 0.0) and np.all(g11 >= 2.0 / np.sqrt(3.0) * g44)
    # backprop against finite differences on a tiny net
    tiny = init_net(seed=2, hidden=4)
    x = rng.normal(size=(6, 3))
    t = rng.uniform(0.5, 2.0, size=(6, 2))
    t[:, 0] += 2.0 / np.sqrt(3.0) * t[:, 1]
    _, grads = pann.loss_and_gradients(tiny, x, t)
    h = 1e-6
    for k in range(len(tiny.weights)):
        flat = tiny.weights[k].ravel()
        for idx in rng.choice(flat.size, size=min(4, flat.size), replace=False):
            orig = flat[idx]
            flat[idx] = orig + h
            lp, _ = pann.loss_and_gradients(tiny, x, t)
            flat[idx] = orig - h
            lm, _ = pann.loss_and_gradients(tiny, x, t)
            flat[idx] = orig
            fd = (lp - lm) / (2 * h)
            ok = ok and abs(grads[k].ravel()[idx] - fd) <= 1e-5 * max(1.0, abs(fd))
    report(6, "material net training", ok)


def test_acceptance_7_mbb_end_to_end(trained_net):
    config = {"preset": "mbb"}
    grid, fld, spec = cli.build_preset_problem(config)
    opt_cfg = OptConfig(
        V_frac=spec["V_frac"], r_min=spec["r_min"], p=spec["p"],
        move=spec["move"], eta=spec["eta"], eps=spec["eps"], N=spec["N"],
        max_iter=spec["max_iter"],
    )
    trace = optimizer.run(
        grid, fld, trained_net, opt_cfg, spec["E"], spec["nu"],
        record_snapshots=False,
    )
    base = DesignField.uniform(
        grid.n_elements, 1.0, opt_cfg.V_frac, fld.rho_min, fld.rho_max
    )
    c_base = compliance_of_field(grid, trained_net, base, spec)
    c_final = trace.compliance[-1]
    improvement = (c_base - c_final) / c_base
    design = fld.roles == 1
    g = trace.field.gamma[design]
    frac01 = np.mean((g > 0.99) | (g < 0.01))
    ok = trace.converged and trace.iterations <= 100
    ok = ok and improvement >= 0.25
    ok = ok and abs(trace.volume[-1] - opt_cfg.V_frac) <= 1e-3
    ok = ok and frac01 >= 0.90
    report(7, "MBB end to end", ok)


def compliance_of_field(grid, net, fld, spec):
    Cb, _ = optimizer.element_tensors(
        fld.kappa, net, spec["E"], spec["nu"], grid.dimension
    )
    Cb = fld.gamma[:, None, None] ** spec["p"] * Cb
    return fe_core.compliance(fe_core.assemble_and_solve(grid, Cb))


def test_acceptance_8_cantilever_reduced(trained_net):
    config = {"preset": "cantilever"}
    grid, fld, spec = cli.build_preset_problem(config)
    opt_cfg = OptConfig(
        V_frac=spec["V_frac"], r_min=spec["r_min"], p=spec["p"],
        move=spec["move"], eta=spec["eta"], eps=spec["eps"], N=spec["N"],
        max_iter=45,
    )
    trace = optimizer.run(
        grid, fld, trained_net, opt_cfg, spec["E"], spec["nu"],
        record_snapshots=False,
    )
    vols = np.asarray(trace.volume)
    active = np.flatnonzero(vols <= opt_cfg.V_frac + 1e-3)
    ok = len(active) > 0 and active[0] + 1 <= 15
    base = DesignField.uniform(
        grid.n_elements, 1.0, opt_cfg.V_frac, fld.rho_min, fld.rho_max
    )
    c_base = compliance_of_field(grid, trained_net, base, spec)
    improvement = (c_base - trace.compliance[-1]) / c_base
    ok = ok and improvement >= 0.40
    report(8, "cantilever reduced scale", ok)


def test_acceptance_9_determinism(tmp_path, trained_net, dataset):
    # two identical reduced training runs and two identical optimization
    # runs must produce bitwise-identical output files
    ds_path = tmp_path / "dataset.csv"
    ds_path.write_text(dataset.to_csv())
    fit_path = tmp_path / "fit.json"
    fit_path.write_text(json.dumps(trained_net.fit.to_dict()))
    # identical configs, including output paths: the config hash stamped
    # into every artifact covers them
    out = tmp_path / "net_out.json"
    loss = tmp_path / "loss.csv"
    nets = []
    for _ in range(2):
        rc = cli.main(
            [
                "train", "--dataset", str(ds_path), "--epochs", "2000",
                "--fit-file", str(fit_path), "--out", str(out),
                "--loss-out", str(loss),
            ]
        )
        assert rc == 0
        nets.append((out.read_bytes(), loss.read_bytes()))
    ok = nets[0] == nets[1]

    net_path = tmp_path / "net.json"
    net_path.write_text(trained_net.to_json())
    out_dir = tmp_path / "opt"
    outputs = []
    for _ in range(2):
        rc = cli.main(
            [
                "optimize", "--preset", "mbb", "--net", str(net_path),
                "--max-iter", "15", "--out-dir", str(out_dir),
            ]
        )
        assert rc == 0
        outputs.append(
            (
                (out_dir / "convergence.csv").read_bytes(),
                (out_dir / "summary.json").read_bytes(),
            )
        )
    ok = ok and outputs[0] == outputs[1]
    report(9, "determinism", ok)
