import numpy as np
import pytest

from gmcn.graph import SparseAdjacency, normalize_adjacency


def random_graph(rng, n, p=0.4, weighted=False):
    """Erdos-Renyi style symmetric graph as a SparseAdjacency."""
    upper = np.triu(rng.random((n, n)) < p, k=1)
    w = rng.uniform(0.2, 2.0, size=(n, n)) if weighted else np.ones((n, n))
    dense = np.where(upper, w, 0.0)
    dense = dense + dense.T
    return SparseAdjacency.from_matrix(dense)


def ring(n):
    return SparseAdjacency.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def two_cliques(size=4):
    """Two cliques of ``size`` nodes joined by a single bridge edge."""
    edges = []
    for base in (0, size):
        edges += [(base + i, base + j) for i in range(size) for j in range(i + 1, size)]
    edges.append((size - 1, size))
    return SparseAdjacency.from_edges(2 * size, edges)


def central_diff(f, x, h=1e-5, dtype=np.float64):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=dtype)
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        x.flat[i] = old + h
        fp = f(x)
        x.flat[i] = old - h
        fm = f(x)
        x.flat[i] = old
        g.flat[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b, floor=1e-8):
    """Entrywise |a - b| / max(|a|, |b|, floor), reduced by max."""
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cycle3():
    return SparseAdjacency.from_edges(3, [(0, 1), (1, 2), (2, 0)])


@pytest.fixture
def cycle3_hat(cycle3):
    return normalize_adjacency(cycle3)


def reference_loss(x, thetas, operators, alpha, t_steps, labels, train, dtype=np.longdouble):
    """Dense re-implementation of a frozen-mask GmCN's training loss.

    ``operators[i]`` holds the K frozen ``M * A_hat`` matrices of layer i.
    Everything runs in ``dtype``; extended precision keeps the rounding
    noise of finite differences far below the gradients being checked.
    """
    z = np.asarray(x, dtype=dtype)
    alpha = dtype(alpha)
    last = len(thetas) - 1
    for i, (theta, ops) in enumerate(zip(thetas, operators)):
        h = z
        u = h
        for op in ops:
            b = np.asarray(op.toarray(), dtype=dtype)
            for _ in range(t_steps):
                u = alpha * (b @ u) + (1 - alpha) * h
        z = u @ np.asarray(theta, dtype=dtype)
        if i < last:
            z = np.maximum(z, 0)
    logits = z[train]
    top = logits.max(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(np.exp(logits - top).sum(axis=1))
    return np.mean(lse - logits[np.arange(len(train)), labels[train]])


def two_layer_gradient_errors(seed=0, n=8, d=5, hidden=4, classes=3, gamma=0.001, step=1e-5):
    """Relative errors of a 2-layer GmCN's analytic gradients against central differences.

    Masks come from one real forward pass and are then frozen. The
    differences are taken on :func:`reference_loss` in extended precision.
    Returns ``(errors, densities)`` where ``errors`` maps "theta_1",
    "theta_2" and "features" to the worst entry.
    """
    from gmcn.dense import softmax_cross_entropy
    from gmcn.mask import MaskSolverConfig
    from gmcn.propagation import PropagationConfig
    from gmcn.training import ModelSpec, Network

    rng = np.random.default_rng(seed)
    a_hat = normalize_adjacency(random_graph(rng, n, 0.5))
    h = rng.normal(size=(n, d))
    labels = rng.integers(0, classes, size=n)
    train = np.arange(0, n, 2)
    cfg = PropagationConfig(mask_cfg=MaskSolverConfig(gamma=gamma))
    spec = ModelSpec(kind="gmc", hidden=(hidden,), propagation=cfg)
    net = Network.initialize(spec, a_hat, d, classes, seed)
    logits, caches = net.forward(h)
    loss, d_logits = softmax_cross_entropy(logits, labels, train)
    grads = net.backward(caches, d_logits)
    d_h = _input_gradient(net, caches, d_logits)
    ops = [c.tape.operators for c in caches]
    thetas = [p.theta for p in net.params]

    def ref(x=h, ts=thetas):
        return reference_loss(x, ts, ops, cfg.alpha, cfg.agg_iters, labels, train)

    # the oracle must describe the same function before its derivatives mean anything
    assert abs(float(ref()) - loss) < 1e-13, (float(ref()), loss)
    errors = {}
    for i in range(len(thetas)):
        def f(t, i=i):
            return ref(ts=[t if j == i else thetas[j] for j in range(len(thetas))])

        fd = central_diff(f, thetas[i], step, dtype=np.longdouble)
        errors[f"theta_{i + 1}"] = rel_error(grads[i], fd.astype(np.float64))
    fd = central_diff(lambda x: ref(x=x), h, step, dtype=np.longdouble)
    errors["features"] = rel_error(d_h, fd.astype(np.float64))
    return errors, net.mask_density(caches)


def _input_gradient(net, caches, d_logits):
    from gmcn.dense import relu_grad
    from gmcn.propagation import propagate_backward

    g = d_logits
    last = len(net.params) - 1
    for i in range(last, -1, -1):
        d_z = g if i == last else g * relu_grad(caches[i].z)
        g = propagate_backward(caches[i].tape, d_z @ net.params[i].theta.T)
    return g
