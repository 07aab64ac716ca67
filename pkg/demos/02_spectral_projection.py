"""Band-agnostic projection: arbitrary band counts in and out of one latent space.

Run: python3 demos/02_spectral_projection.py
"""

import numpy as np

from bridgepan import MiTConfig, SpectralProjector, load_balance_loss, project, unproject
from bridgepan.tensor import Tensor, matmul

proj = SpectralProjector(MiTConfig(), seed=0)
rng = np.random.default_rng(0)

for bands in (4, 7, 8, 10):
    x = Tensor(rng.uniform(0, 1, (16, 16, bands)).astype(np.float32))
    mt, rs = proj.mapping(x)
    z = project(x, mt)
    back = unproject(z, mt)
    err = np.max(np.abs(back.data - x.data))
    gram = np.linalg.norm(matmul(mt.T, mt.T_star).data - np.eye(bands))
    print(
        f"{bands:2d} bands -> latent {z.shape}: round-trip max err {err:.2e}, "
        f"|T.T* - I|_F {gram:.2e}, experts {mt.selected_experts}"
    )

print("\nLoad balance penalty: 1/L at uniform routing, 1 at full collapse")
from bridgepan import RouterState

l = 16
uniform = RouterState(Tensor(np.full(l, 1 / l)), np.full(l, 1 / l))
onehot = np.zeros(l)
onehot[3] = 1.0
collapsed = RouterState(Tensor(onehot), onehot)
print("uniform:", load_balance_loss(uniform).item(),
      " collapsed:", load_balance_loss(collapsed).item())
