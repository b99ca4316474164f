"""Pilot: exp3 ritz (criterion 5 shape) and exp2 both methods (criterion 6 shape)."""
import time

import numpy as np

from sgnet.fields import field_model, make_spectral_field
from sgnet.metrics import (
    coupled_evaluator,
    fem_evaluator,
    midpoint_grid,
    net_evaluator,
    rel_h1_error,
)
from sgnet.net import BranchSpec, MultiBranchNet, enforcer_for
from sgnet.reference import Mesh1D, Mesh2D, sga_fem_coupled
from sgnet.solver import SobolStream, TrainConfig, ritz_risk, train
from sgnet.spectral import PolyFamily, galerkin_tensor, total_degree_basis

# ---- exp3: N=2, P=2, ritz ----
basis = total_degree_basis(2, 2, PolyFamily.HERMITE)
model = field_model("exp3", 2)
field = make_spectral_field(model, basis)
G = galerkin_tensor(basis)
spec = BranchSpec(1, (30, 30, 30, 30), ("swish",) * 4 + ("linear",))
net = MultiBranchNet(spec, n_branches=basis.size, seed=1)
cfg = TrainConfig(
    batch_size=256, steps_per_epoch=50, max_epochs=400, lr0=2e-3,
    lr_decay=0.97, lr_decay_steps=200, patience=400, risk_threshold=None,
    validation_samples=2000, validation_interval=50,
)
t0 = time.perf_counter()
res = train(net, "ritz", field, G, cfg)
dt = time.perf_counter() - t0
print(f"exp3 ritz: {res.epochs} epochs in {dt:.0f}s, final risk {res.final_risk:.6e}")

mesh = Mesh1D(512)
sol = sga_fem_coupled(mesh, field, G)
grid = midpoint_grid(mesh)
rep = rel_h1_error(
    coupled_evaluator(sol, basis, grid), net_evaluator(net, basis, grid), grid, model,
    n_mc=4000, seed=1,
)
dense = SobolStream(1, skip=1).next(20000)
energy, _ = ritz_risk(dense, net, field, G, with_grad=False)
print(f"exp3: rel vs coupled {rep.rel_error:.4f}; net energy {energy:.6f} vs fem {sol.energy:.6f} "
      f"(rel gap {abs(energy - sol.energy)/abs(sol.energy):.4f})")

# ---- exp2: N=2, P=1, both ----
n_vars = 2
basis2 = total_degree_basis(n_vars, 1, PolyFamily.LEGENDRE)
model2 = field_model("exp2", n_vars)
field2 = make_spectral_field(model2, basis2)
G2 = galerkin_tensor(basis2)
mesh2 = Mesh2D(48)
grid2 = midpoint_grid(mesh2)
t0 = time.perf_counter()
ref2 = fem_evaluator(model2, mesh2, grid2)
u, du = ref2(np.zeros((2, n_vars)))
print(f"exp2 fem 2 solves: {time.perf_counter()-t0:.2f}s")

spec2 = BranchSpec(2, (24, 24, 24, 24), ("swish",) * 4 + ("linear",))
for kind, epochs in (("strong", 200), ("ritz", 200)):
    net2 = MultiBranchNet(spec2, n_branches=basis2.size, enforcer=enforcer_for(2), seed=1)
    cfg2 = TrainConfig(
        batch_size=256, steps_per_epoch=50, max_epochs=epochs, lr0=2e-3,
        lr_decay=0.97, lr_decay_steps=200, patience=epochs, risk_threshold=None,
        validation_samples=1000, validation_interval=50,
    )
    t0 = time.perf_counter()
    res2 = train(net2, kind, field2, G2, cfg2)
    dt = time.perf_counter() - t0
    t0 = time.perf_counter()
    rep2 = rel_h1_error(
        ref2, net_evaluator(net2, basis2, grid2), grid2, model2, n_mc=400, seed=1
    )
    dt_metric = time.perf_counter() - t0
    print(f"exp2 {kind}: {res2.epochs} epochs in {dt:.0f}s ({dt/res2.epochs*1000:.0f} ms/epoch), "
          f"risk {res2.final_risk:.3e}; rel {rep2.rel_error:.4f} (metric {dt_metric:.0f}s)")
