"""NumPy fallback for the compiled RK4 kernel (same signature and results)."""

import numpy as np


def rk4_switched(mats, seg_graph, seg_steps, x0, h, stride, guard):
    mats = np.ascontiguousarray(mats, dtype=float)
    x = np.array(x0, dtype=float)
    total = int(np.sum(seg_steps))
    n_rec = total // stride + 1 + (1 if total % stride else 0)
    states = np.empty((n_rec, x.size))
    rec_steps = np.empty(n_rec, dtype=np.int64)
    states[0] = x
    rec_steps[0] = 0
    r, step = 1, 0
    hh, h6 = 0.5 * h, h / 6.0
    for k, nsteps in zip(seg_graph, seg_steps):
        M = mats[k]
        for _ in range(int(nsteps)):
            k1 = M @ x
            k2 = M @ (x + hh * k1)
            k3 = M @ (x + hh * k2)
            k4 = M @ (x + h * k3)
            x = x + h6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            step += 1
            if not np.all(np.abs(x) <= guard):
                return states[:r], rec_steps[:r], step
            if step % stride == 0 or step == total:
                states[r] = x
                rec_steps[r] = step
                r += 1
    return states[:r], rec_steps[:r], -1
