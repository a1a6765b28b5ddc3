"""Graph builders shared by the test modules."""

from graphite.graph import Graph, generate, is_connected


def connected_er(n, seed, p=0.5):
    """First connected Erdos-Renyi draw at or after ``seed``."""
    s = seed
    while True:
        g = generate("erdos_renyi", n, seed=s, p=p)
        if is_connected(g):
            return g
        s += 7919


def cycle(n):
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def reference_vgae_loss(p, a_norm, x, targets, noise, pos_weight=1.0):
    """Plain numpy VGAE negative ELBO: GCN trunk, Gaussian heads, inner-product decoder.

    ``p`` maps enc{i}.W/.b, enc_mu.*, enc_logsigma.* to arrays; ``x=None``
    means identity features. Written without the autodiff engine.
    """
    import numpy as np

    h = np.eye(a_norm.shape[0]) if x is None else x
    i = 0
    while f"enc{i}.W" in p:
        h = np.maximum(a_norm @ (h @ p[f"enc{i}.W"]) + p[f"enc{i}.b"], 0.0)
        i += 1
    mu = a_norm @ (h @ p["enc_mu.W"]) + p["enc_mu.b"]
    ls = np.clip(a_norm @ (h @ p["enc_logsigma.W"]) + p["enc_logsigma.b"], -10.0, 10.0)
    z = mu + np.exp(ls) * noise
    logits = z @ z.T
    log_p = -np.logaddexp(0.0, -logits)
    log_not_p = -np.logaddexp(0.0, logits)
    recon = -(pos_weight * targets * log_p + (1 - targets) * log_not_p).sum()
    kl = 0.5 * (mu ** 2 + np.exp(2 * ls) - 2 * ls - 1).sum()
    return recon + kl
