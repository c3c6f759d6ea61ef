"""Train the constrained material network on homogenization data.

The network maps (a, E, nu) to the two free Cholesky components of the
isotropic effective stiffness.  Its output head enforces
G11 > (2/sqrt 3) G44 for any weights, so every predicted stiffness GG^T
is positive definite by construction.  A reduced grid and epoch budget
keep this demo around a minute; drop the overrides for the full run.
"""

import numpy as np

from latticeopt import pann
from latticeopt.beam_rve import generate_rve
from latticeopt.isotropy import effective_moduli, project_isotropic

rve = generate_rve(seed=3, target_cells=1000)
ts = pann.generate_dataset(
    rve,
    a_values=np.linspace(0.02, 0.30, 8),
    E_values=np.linspace(50.0, 400.0, 4),
    nu_values=np.linspace(0.20, 0.45, 3),
)
print(f"dataset: {len(ts.p)} records "
      f"({len(ts.train_idx)} train / {len(ts.val_idx)} val)")

net, hist = pann.train(pann.init_net(seed=0), ts, epochs=60_000)
print(f"MSE: {hist['train'][0]:.3g} -> {hist['train'][-1]:.3g} "
      f"(val {hist['val'][-1]:.3g}) after {hist['epoch'][-1] + 1} epochs")

# the physics constraint holds even for an untrained net
raw = pann.init_net(seed=99)
pair = pann.forward(raw, np.array([0.1, 200.0, 0.3]))
print(f"\nuntrained net still admissible: G11={pair.G11:.3f} > "
      f"(2/sqrt3) G44={2 / np.sqrt(3) * pair.G44:.3f}")

# predicted stiffness at an off-grid triple
C = pann.stiffness_from_params(net, np.array([0.13, 163.0, 0.31]))
E_eff, nu_eff = effective_moduli(C)
print(f"predicted at (0.13, 163, 0.31): E*={E_eff:.4f} nu*={nu_eff:.4f} "
      f"eigmin={np.linalg.eigvalsh(C).min():.2e}")
