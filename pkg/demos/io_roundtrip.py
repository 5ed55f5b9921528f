"""
File formats: clouds, transforms, cascade weights
=================================================

Round-trips every format the library reads and writes. The same
operations are available from the command line (`cascadereg synth`,
`cascadereg register`); this shows the library calls.
"""

import tempfile
from pathlib import Path

import numpy as np

from cascadereg import (
    SynthConfig,
    init_random,
    load_weights,
    make_base_shape,
    read_cloud,
    read_transform,
    save_weights,
    synth_pair,
    write_cloud,
    write_transform,
)

tmp = Path(tempfile.mkdtemp())

# Point clouds: .xyz is three floats per line, .ply is the ascii
# polygon format. Extension picks the parser; normals survive both.
base = make_base_shape("helix", 256, seed=4)
src, ref, t_gt = synth_pair(SynthConfig(n_points=128, seed=4), base)

for ext in ("xyz", "ply"):
    p = tmp / f"src.{ext}"
    write_cloud(src, p)
    back = read_cloud(p)
    err = np.abs(back.points - src.points).max()
    print(f"{ext}: {len(back)} points back, max coordinate error {err:.1e}")

# Rigid transforms: 12 decimals, row-major rotation then translation.
tp = tmp / "gt.txt"
write_transform(t_gt, tp)
t_back = read_transform(tp)
print(f"transform: rotation error {np.abs(t_back.rotation - t_gt.rotation).max():.1e}, "
      f"translation error {np.abs(t_back.translation - t_gt.translation).max():.1e}")

# Cascade weights: a versioned text container holding the two encoder
# layers plus one fused (A', B, bias) block per later iteration.
# Round-trip is bit-exact, so a saved model replays identically.
w = init_random(seed=7, l_iters=5)
wp = tmp / "weights.ntw"
save_weights(w, wp)
w_back = load_weights(wp)
same = all(
    np.array_equal(a.weight, b.weight) and np.array_equal(a.bias, b.bias)
    for a, b in zip(w.iter0.layers, w_back.iter0.layers)
) and all(
    np.array_equal(p.a_prime, q.a_prime)
    and np.array_equal(p.b, q.b)
    and np.array_equal(p.bias, q.bias)
    for p, q in zip(w.qmlps, w_back.qmlps)
)
print(f"weights: bit-identical after round trip: {same}")
print(f"\nfiles written under {tmp}")
