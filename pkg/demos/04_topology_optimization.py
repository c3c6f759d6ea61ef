"""Compliance minimization of a lattice-filled beam with two design fields.

Each finite element carries a macroscopic presence variable gamma and a
microscopic lattice density kappa.  The material net supplies the
effective stiffness C*(a(kappa)) and its kappa-derivative, gamma enters
through the usual power-law penalization, and an optimality-criteria
update moves both fields under one shared volume multiplier.

This demo runs a coarsened version of the simply supported beam problem
so it finishes in well under a minute; scale nel up (and move the epoch
budget of the quick net below) for production-quality designs.
"""

import numpy as np

from latticeopt import fe_core, optimizer, pann
from latticeopt.beam_rve import generate_rve
from latticeopt.densmap import estimate_density, fit_sigmoid

# material model: quick dataset + short training on a small RVE
rve = generate_rve(seed=3, target_cells=1000)
samples = [estimate_density(rve, a, seed=0) for a in
           (0.02, 0.06, 0.1, 0.16, 0.22, 0.3, 0.38, 0.46)]
fit = fit_sigmoid(samples)
ts = pann.generate_dataset(
    rve,
    a_values=np.linspace(0.02, 0.30, 8),
    E_values=np.linspace(50.0, 400.0, 4),
    nu_values=np.linspace(0.20, 0.45, 3),
)
net, hist = pann.train(pann.init_net(seed=0), ts, epochs=60_000)
net.fit = fit
print(f"material net ready (val MSE {hist['val'][-1]:.3g})")

# half-beam style problem: pin one bottom corner, roller under the other,
# unit load at bottom center
grid = fe_core.make_grid((60, 30), (2.0, 1.0))
pin = grid.nearest_node([0.0, 0.0])
grid.fix_dof(pin, 0)
grid.fix_dof(pin, 1)
grid.fix_dof(grid.nearest_node([2.0, 0.0]), 1)
grid.add_point_load([1.0, 0.0], 1, -1.0)

fld = optimizer.DesignField.uniform(
    grid.n_elements, gamma=1.0, kappa=0.15, rho_min=0.1, rho_max=0.25
)
cfg = optimizer.OptConfig(
    V_frac=0.15, r_min=0.06, p=3.0, move=0.05, eta=0.5, eps=1e-4, max_iter=60
)
trace = optimizer.run(grid, fld, net, cfg, E=210.0, nu=0.3,
                      record_snapshots=False)
print(f"{trace.iterations} iterations, converged={trace.converged}")
print(f"compliance {trace.compliance[0]:.4f} -> {trace.compliance[-1]:.4f}, "
      f"volume fraction {trace.volume[-1]:.4f} (target {cfg.V_frac})")

g = trace.field.gamma
print(f"gamma at bounds: {np.mean((g > 0.99) | (g < 0.01)):.1%}")

# crude ASCII rendering of the presence field (top row first)
art = np.flipud(g.reshape(30, 60))
chars = np.array(list(" .:#"))
print("\n".join("".join(row) for row in
                chars[np.clip((art * 4).astype(int), 0, 3)]))
