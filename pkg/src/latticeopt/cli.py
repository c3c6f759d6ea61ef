"""Command-line front end for the lattice optimization pipeline.

Subcommands: homogenize | fit-density | train | optimize | validate.
Configuration comes from an optional JSON document plus flag overrides;
every output artifact carries the sha256 hash of the resolved config so
runs are traceable.  LATTICEOPT_THREADS caps BLAS/OpenMP parallelism.

Heavy imports happen inside main() so the thread cap can be applied to
the numerical backends before they start their thread pools.
"""

import argparse
import hashlib
import json
import os
import sys

__all__ = ["main", "PRESETS"]

CONFIG_VERSION = 1


def _apply_thread_cap():
    cap = os.environ.get("LATTICEOPT_THREADS")
    if not cap:
        return
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(var, cap)


# experiment presets; geometry, loads and optimizer parameters in one place
PRESETS = {
    "mbb": {
        "dim": 2,
        "nel": [200, 100],
        "lengths": [2.0, 1.0],
        "E": 210.0,
        "nu": 0.3,
        "rho_min": 0.1,
        "rho_max": 0.25,
        "V_frac": 0.15,
        "p": 3.0,
        "r_min": 0.06,
        "move": 0.05,
        "eta": 0.5,
        "eps": 1e-4,
        "N": 5,
        "max_iter": 100,
        "gamma0": 1.0,
        "kappa0": 0.15,
    },
    "cantilever": {
        "dim": 3,
        "nel": [32, 16, 16],
        "lengths": [2.0, 1.0, 1.0],
        "E": 210.0,
        "nu": 0.3,
        "rho_min": 0.05,
        "rho_max": 0.4,
        "V_frac": 0.1,
        "p": 3.0,
        "r_min": 0.1,
        "move": 0.05,
        "eta": 0.5,
        "eps": 1e-4,
        "N": 5,
        "max_iter": 100,
        "gamma0": 1.0,
        "kappa0": 0.4,
    },
}


def config_hash(config):
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_config(args, defaults):
    """Resolve the run config: defaults <- JSON file <- CLI overrides."""
    config = dict(defaults)
    config["config_version"] = CONFIG_VERSION
    if getattr(args, "config", None):
        with open(args.config) as fh:
            doc = json.load(fh)
        if doc.get("config_version", CONFIG_VERSION) != CONFIG_VERSION:
            raise SystemExit("unsupported config version")
        config.update(doc)
    for key, val in vars(args).items():
        if key in ("config", "func", "command") or val is None:
            continue
        config[key] = val
    return config


def build_preset_problem(config):
    """GridModel + DesignField for a named preset."""
    import numpy as np

    from . import fe_core, optimizer

    preset = config["preset"]
    spec = PRESETS[preset]
    grid = fe_core.make_grid(tuple(spec["nel"]), tuple(spec["lengths"]))
    if preset == "mbb":
        # simply supported: pin one bottom corner, roller under the other,
        # unit point load at bottom center
        lx = spec["lengths"][0]
        pin = grid.nearest_node((0.0, 0.0))
        grid.fix_dof(pin, 0)
        grid.fix_dof(pin, 1)
        grid.fix_dof(grid.nearest_node((lx, 0.0)), 1)
        grid.add_point_load((0.5 * lx, 0.0), 1, -1.0)
    else:
        # cantilever: clamp the x=0 face, downward traction over a centered
        # 0.15 x 0.15 patch of the far face shared equally by its nodes
        lx, ly, lz = spec["lengths"]
        mask = grid.nodes[:, 0] == 0.0
        for n in np.flatnonzero(mask):
            for d in range(3):
                grid.fix_dof(n, d)
        far = grid.nodes[:, 0] == lx
        half = 0.075
        patch = (
            far
            & (np.abs(grid.nodes[:, 1] - 0.5 * ly) <= half)
            & (np.abs(grid.nodes[:, 2] - 0.5 * lz) <= half)
        )
        nodes = np.flatnonzero(patch)
        for n in nodes:
            grid.f[3 * n + 2] = -1.0 / len(nodes)
    n = grid.n_elements
    fld = optimizer.DesignField.uniform(
        n, spec["gamma0"], spec["kappa0"], spec["rho_min"], spec["rho_max"]
    )
    return grid, fld, spec


def read_voxel_mask(path):
    """Voxel-mask problem file: sizes, edge length, then role codes.

    Header: 'nx ny nz' then 'edge' on the next line; role codes follow,
    whitespace-separated in x-fastest order (0 excluded, 1 design,
    2 frozen-solid).
    """
    import numpy as np

    with open(path) as fh:
        tokens = fh.read().split()
    nx, ny, nz = (int(t) for t in tokens[:3])
    edge = float(tokens[3])
    roles = np.array([int(t) for t in tokens[4:]], dtype=int)
    if len(roles) != nx * ny * nz:
        raise ValueError(
            f"voxel mask holds {len(roles)} codes, expected {nx * ny * nz}"
        )
    if not np.all(np.isin(roles, (0, 1, 2))):
        raise ValueError("voxel role codes must be 0, 1 or 2")
    return (nx, ny, nz), edge, roles


def write_vtk(path, grid, fields, header=""):
    """Legacy ASCII VTK structured-points file with per-cell scalars."""
    nel = grid.nel + (1,) * (3 - len(grid.nel))
    dx = grid.dx + (grid.dx[-1],) * (3 - len(grid.dx))
    lines = [
        "# vtk DataFile Version 3.0",
        f"latticeopt fields {header}".strip(),
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nel[0] + 1} {nel[1] + 1} {nel[2] + 1}",
        "ORIGIN 0 0 0",
        f"SPACING {dx[0]!r} {dx[1]!r} {dx[2]!r}",
        f"CELL_DATA {grid.n_elements}",
    ]
    for name, values in fields.items():
        lines.append(f"SCALARS {name} float 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(repr(float(v)) for v in values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_csv(path, header_cols, rows, tag):
    with open(path, "w") as fh:
        fh.write(f"# config {tag}\n")
        fh.write(",".join(header_cols) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
            fh.write("\n")


def cmd_homogenize(args):
    import numpy as np

    from .beam_rve import BeamMaterial, generate_rve, homogenize
    from .isotropy import effective_moduli, project_isotropic, relative_anisotropy

    config = load_config(
        args,
        {
            "command": "homogenize",
            "seed": 0,
            "cells": 2845,
            "a_grid": [0.01, 0.05, 0.1, 0.2, 0.3],
            "E": 210.0,
            "nu": 0.3,
            "out": "homogenize.csv",
        },
    )
    tag = config_hash(config)
    rve = generate_rve(config["seed"], config["cells"])
    rows = []
    for a in config["a_grid"]:
        mat = BeamMaterial(E=config["E"], nu=config["nu"], d=a * rve.strut_length)
        C = homogenize(rve, mat)
        Ciso = project_isotropic(C)
        E_eff, nu_eff = effective_moduli(Ciso)
        row = [a, config["E"], config["nu"]]
        row += [C[i, j] for i in range(6) for j in range(i, 6)]
        row += [relative_anisotropy(C), E_eff, nu_eff]
        rows.append(row)
    cols = ["a", "E", "nu"]
    cols += [f"C{i + 1}{j + 1}" for i in range(6) for j in range(i, 6)]
    cols += ["delta_iso", "E_eff", "nu_eff"]
    _write_csv(config["out"], cols, rows, tag)
    print(f"wrote {config['out']} (config {tag})")
    return 0


def cmd_fit_density(args):
    import numpy as np

    from . import densmap
    from .beam_rve import generate_rve

    config = load_config(
        args,
        {
            "command": "fit-density",
            "seed": 0,
            "cells": 2845,
            "a_grid": [0.02, 0.05, 0.08, 0.12, 0.16, 0.2, 0.25, 0.3, 0.36, 0.42],
            "mc_seed": 0,
            "out": "sigmoid_fit.json",
            "samples_out": "density_samples.csv",
        },
    )
    tag = config_hash(config)
    rve = generate_rve(config["seed"], config["cells"])
    samples = [
        densmap.estimate_density(rve, a, seed=config["mc_seed"])
        for a in config["a_grid"]
    ]
    fit = densmap.fit_sigmoid(samples)
    _write_csv(
        config["samples_out"],
        ["a", "kappa", "points", "seed"],
        [[s.a, s.kappa, s.points, s.seed] for s in samples],
        tag,
    )
    doc = fit.to_dict()
    doc["config"] = tag
    with open(config["out"], "w") as fh:
        json.dump(doc, fh, indent=1)
    print(
        f"wrote {config['out']} (rms {fit.rms_residual:.5f}, config {tag})"
    )
    return 0


def cmd_train(args):
    import numpy as np

    from . import densmap, pann
    from .beam_rve import generate_rve

    config = load_config(
        args,
        {
            "command": "train",
            "seed": 0,
            "cells": 2845,
            "init_seed": 0,
            "split_seed": 0,
            "epochs": 250_000,
            "lr": 1e-3,
            "dataset": None,
            "fit_file": None,
            "out": "materialnet.json",
            "loss_out": "loss.csv",
            "dataset_out": None,
        },
    )
    tag = config_hash(config)
    if config["dataset"]:
        with open(config["dataset"]) as fh:
            ts = pann.TrainingSet.from_csv(fh.read(), split_seed=config["split_seed"])
    else:
        rve = generate_rve(config["seed"], config["cells"])
        ts = pann.generate_dataset(rve, split_seed=config["split_seed"])
    if config["dataset_out"]:
        with open(config["dataset_out"], "w") as fh:
            fh.write(ts.to_csv())
    net = pann.init_net(config["init_seed"])
    if config["fit_file"]:
        with open(config["fit_file"]) as fh:
            net.fit = densmap.SigmoidFit.from_dict(json.load(fh))
    net, hist = pann.train(net, ts, epochs=config["epochs"], lr=config["lr"])
    _write_csv(
        config["loss_out"],
        ["epoch", "train_mse", "val_mse"],
        list(zip(hist["epoch"], hist["train"], hist["val"])),
        tag,
    )
    with open(config["out"], "w") as fh:
        fh.write(net.to_json())
    print(
        f"wrote {config['out']} (final val MSE {hist['val'][-1]:.2e}, config {tag})"
    )
    return 0


def cmd_optimize(args):
    import numpy as np

    from . import densmap, fe_core, optimizer, pann

    config = load_config(
        args,
        {
            "command": "optimize",
            "preset": "mbb",
            "net": "materialnet.json",
            "fit_file": None,
            "voxel_mask": None,
            "out_dir": ".",
            "max_iter": None,
        },
    )
    tag = config_hash(config)
    with open(config["net"]) as fh:
        net = pann.MaterialNet.from_json(fh.read())
    if config["fit_file"]:
        with open(config["fit_file"]) as fh:
            net.fit = densmap.SigmoidFit.from_dict(json.load(fh))
    if net.fit is None:
        raise SystemExit("material net carries no density fit; pass --fit-file")

    if config["voxel_mask"]:
        (nx, ny, nz), edge, roles = read_voxel_mask(config["voxel_mask"])
        spec = dict(PRESETS["cantilever"])
        spec.update({k: config[k] for k in config if k in spec})
        grid = fe_core.make_grid(
            (nx, ny, nz), (nx * edge, ny * edge, nz * edge)
        )
        fld = optimizer.DesignField.uniform(
            grid.n_elements,
            spec["gamma0"],
            spec["kappa0"],
            spec["rho_min"],
            spec["rho_max"],
            roles=roles,
        )
        loads = config.get("loads", [])
        for node, dof, value in loads:
            grid.f[grid.dimension * int(node) + int(dof)] += float(value)
        for node, dof in config.get("supports", []):
            grid.fix_dof(int(node), int(dof))
    else:
        grid, fld, spec = build_preset_problem(config)
    if config["max_iter"]:
        spec = dict(spec, max_iter=int(config["max_iter"]))

    opt_cfg = optimizer.OptConfig(
        V_frac=spec["V_frac"],
        r_min=spec["r_min"],
        p=spec["p"],
        move=spec["move"],
        eta=spec["eta"],
        eps=spec["eps"],
        N=spec["N"],
        max_iter=spec["max_iter"],
    )
    E, nu = spec["E"], spec["nu"]
    trace = optimizer.run(grid, fld, net, opt_cfg, E, nu)

    # uniform feasible baseline gamma = 1, kappa = V_frac
    base = optimizer.DesignField.uniform(
        grid.n_elements,
        1.0,
        min(max(opt_cfg.V_frac, fld.rho_min), fld.rho_max),
        fld.rho_min,
        fld.rho_max,
        roles=fld.roles,
    )
    Cb, _ = optimizer.element_tensors(base.kappa, net, E, nu, grid.dimension)
    Cb = base.gamma[:, None, None] ** opt_cfg.p * Cb
    c_base = fe_core.compliance(fe_core.assemble_and_solve(grid, Cb))
    c_final = trace.compliance[-1]

    out = config["out_dir"]
    os.makedirs(out, exist_ok=True)
    _write_csv(
        os.path.join(out, "convergence.csv"),
        ["iter", "compliance", "volume", "lam"],
        [
            [i + 1, c, v, lam]
            for i, (c, v, lam) in enumerate(
                zip(trace.compliance, trace.volume, trace.lam)
            )
        ],
        tag,
    )
    rho = trace.field.rho
    write_vtk(
        os.path.join(out, "fields.vtk"),
        grid,
        {"gamma": trace.field.gamma, "kappa": trace.field.kappa, "rho": rho},
        header=tag,
    )
    frac01 = float(
        np.mean(
            (trace.field.gamma[fld.roles == 1] > 0.99)
            | (trace.field.gamma[fld.roles == 1] < 0.01)
        )
    )
    summary = {
        "config": tag,
        "iterations": trace.iterations,
        "converged": trace.converged,
        "compliance": c_final,
        "baseline_compliance": c_base,
        "improvement": (c_base - c_final) / c_base,
        "volume_fraction": trace.volume[-1],
        "volume_target": opt_cfg.V_frac,
        "gamma_01_fraction": frac01,
        "void_threshold": fld.rho_min,
        "void_fraction": float(np.mean(rho < fld.rho_min)),
    }
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    print(
        f"optimize: {trace.iterations} iters, compliance {c_final:.6g} "
        f"({100 * summary['improvement']:.1f}% below baseline, config {tag})"
    )
    return 0


def cmd_validate(args):
    """Fast invariant sweep over a small RVE, the net file, and projections."""
    import numpy as np

    from . import densmap, pann
    from .beam_rve import BeamMaterial, generate_rve, hill_energy_gap, homogenize
    from .isotropy import project_isotropic, relative_anisotropy

    config = load_config(
        args,
        {"command": "validate", "seed": 0, "cells": 300, "net": None},
    )
    tag = config_hash(config)
    failures = []

    rve = generate_rve(config["seed"], config["cells"])
    try:
        rve.validate()
    except Exception as err:  # noqa: BLE001 - report, don't crash
        failures.append(f"rve: {err}")
    mat = BeamMaterial(E=100.0, nu=0.3, d=0.05 * rve.strut_length)
    gaps = [
        hill_energy_gap(rve, mat, Eb)
        for Eb in (np.diag([1.0, 0.0, 0.0]), np.full((3, 3), 0.5))
    ]
    if max(gaps) > 1e-6:
        failures.append(f"hill gap {max(gaps):.2e}")
    C = homogenize(rve, mat)
    if relative_anisotropy(project_isotropic(C)) > 1e-12:
        failures.append("projection not isotropic")

    if config["net"]:
        with open(config["net"]) as fh:
            net = pann.MaterialNet.from_json(fh.read())
        rng = np.random.default_rng(0)
        p = np.column_stack(
            [
                rng.uniform(0.02, 0.3, 200),
                rng.uniform(50.0, 400.0, 200),
                rng.uniform(0.2, 0.45, 200),
            ]
        )
        import warnings as _w

        with _w.catch_warnings():
            _w.simplefilter("ignore")
            g11, g44 = pann.forward(net, p)
        if not np.all(g11 > (2.0 / np.sqrt(3.0)) * g44):
            failures.append("cholesky constraint violated")

    for f in failures:
        print(f"FAIL {f}")
    print(f"validate: {'ok' if not failures else 'failed'} (config {tag})")
    return 1 if failures else 0


def main(argv=None):
    _apply_thread_cap()
    parser = argparse.ArgumentParser(
        prog="latticeopt",
        description="functionally graded lattice topology optimization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, flags):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        for flag, kwargs in flags.items():
            p.add_argument(flag, **kwargs)
        p.set_defaults(func=func)

    add(
        "homogenize",
        cmd_homogenize,
        {
            "--seed": {"type": int},
            "--cells": {"type": int},
            "--E": {"type": float},
            "--nu": {"type": float},
            "--out": {},
        },
    )
    add(
        "fit-density",
        cmd_fit_density,
        {
            "--seed": {"type": int},
            "--cells": {"type": int},
            "--mc-seed": {"type": int, "dest": "mc_seed"},
            "--out": {},
            "--samples-out": {"dest": "samples_out"},
        },
    )
    add(
        "train",
        cmd_train,
        {
            "--seed": {"type": int},
            "--cells": {"type": int},
            "--epochs": {"type": int},
            "--lr": {"type": float},
            "--dataset": {},
            "--dataset-out": {"dest": "dataset_out"},
            "--fit-file": {"dest": "fit_file"},
            "--out": {},
            "--loss-out": {"dest": "loss_out"},
        },
    )
    add(
        "optimize",
        cmd_optimize,
        {
            "--preset": {"choices": sorted(PRESETS)},
            "--net": {},
            "--fit-file": {"dest": "fit_file"},
            "--voxel-mask": {"dest": "voxel_mask"},
            "--out-dir": {"dest": "out_dir"},
            "--max-iter": {"type": int, "dest": "max_iter"},
        },
    )
    add(
        "validate",
        cmd_validate,
        {
            "--seed": {"type": int},
            "--cells": {"type": int},
            "--net": {},
        },
    )

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
