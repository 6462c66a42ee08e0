"""Shared oracles for the test suite."""

import numpy as np

from hedonia import nn


def random_small_net(rng, max_conv=3):
    """A random image net with 1..max_conv convs, one pool and two dense layers."""
    side = int(rng.choice([4, 6, 8]))
    c = int(rng.integers(1, 4))
    layers, shape = [], (side, side, c)
    n_conv = int(rng.integers(1, max_conv + 1))
    pool_at = int(rng.integers(0, n_conv))
    for i in range(n_conv):
        c_out = int(rng.integers(1, 4))
        layers += [nn.Conv3x3(shape[2], c_out, rng), nn.ReLU()]
        shape = (shape[0], shape[1], c_out)
        if i == pool_at:
            layers.append(nn.MaxPool2x2())
            shape = (shape[0] // 2, shape[1] // 2, c_out)
    hidden = int(rng.integers(2, 6))
    flat = shape[0] * shape[1] * shape[2]
    layers += [nn.Flatten(), nn.Dense(flat, hidden, rng), nn.ReLU(), nn.Dense(hidden, 1, rng)]
    net = nn.Sequential(layers, (side, side, c), "gradcheck")
    for layer in net.layers:  # non-zero biases so ReLU kinks are not hit at exactly 0
        if "b" in layer.params:
            layer.params["b"][:] = rng.normal(0, 0.1, size=layer.params["b"].shape)
    return net


def gradient_check(net, x, rng, h=1e-5):
    """Max elementwise relative error of analytic vs central-difference gradients.

    The scalar objective is ``sum(output * R)`` for a fixed random ``R``, so
    the analytic side is one backward pass with ``output_grad = R``.
    """
    trace = nn.forward(net, x)
    probe = rng.normal(size=trace.output.shape)
    dx, grads = nn.backward(net, trace, probe)

    def objective():
        return float(np.sum(nn.forward(net, x).output * probe))

    def rel(a, n):
        return abs(a - n) / max(abs(a), abs(n), 1e-8)

    worst = 0.0
    params = net.parameters()
    for name, w in params.items():
        flat = w.reshape(-1)
        g = grads[name].reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = objective()
            flat[i] = old - h
            down = objective()
            flat[i] = old
            worst = max(worst, rel(g[i], (up - down) / (2 * h)))
    xf = x.reshape(-1)
    dxf = dx.reshape(-1)
    for i in rng.choice(xf.size, size=min(20, xf.size), replace=False):
        old = xf[i]
        xf[i] = old + h
        up = objective()
        xf[i] = old - h
        down = objective()
        xf[i] = old
        worst = max(worst, rel(dxf[i], (up - down) / (2 * h)))
    return worst


def winding_number(point, poly):
    """Independent inside test: winding number of a closed polygon around ``point``."""
    px, py = point
    wn = 0
    n = len(poly)
    for i in range(n):
        (x1, y1), (x2, y2) = poly[i], poly[(i + 1) % n]
        cross = (x2 - x1) * (py - y1) - (px - x1) * (y2 - y1)
        if y1 <= py < y2 and cross > 0:
            wn += 1
        elif y2 <= py < y1 and cross < 0:
            wn -= 1
    return wn


def random_star_polygon(rng, center, r_min, r_max, n_vertices=None):
    """Simple polygon: vertices at sorted random angles around ``center``."""
    n = n_vertices or int(rng.integers(5, 12))
    angles = np.sort(rng.uniform(0, 2 * np.pi, size=n))
    radii = rng.uniform(r_min, r_max, size=n)
    return [(center[0] + r * np.cos(a), center[1] + r * np.sin(a)) for a, r in zip(angles, radii)]


def r2_percent(y, pred):
    y, pred = np.asarray(y), np.asarray(pred)
    return 100.0 * (1.0 - np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2))
