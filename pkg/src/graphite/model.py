"""Graphite encoder/decoder, VAE and AE objectives, and the GAE/VGAE special case.

Shapes: one graph is ``n x n`` / ``n x d``; a batch of equally padded graphs
is ``B x n x n`` / ``B x n x d`` and every function below works on either.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from . import tensor as T
from .gnn import ACTIVATIONS, propagate
from .tensor import ShapeError, Tensor

logger = logging.getLogger(__name__)

MODEL_KINDS = ("graphite_vae", "graphite_ae", "vgae", "gae")
LOG_SIGMA_BOUNDS = (-10.0, 10.0)


@dataclass
class ModelConfig:
    kind: str = "graphite_vae"
    input_dim: int = 0  # m, or n for identity features
    encoder_hidden: tuple = (32, 32)
    latent_dim: int = 16  # k
    decoder_hidden: tuple = (32,)
    out_dim: int = 16  # k*
    rounds: int = 1  # R
    skip_lambda: float = 0.5
    skip_mode: str = "convex"
    norm_mode: str = "row"  # how Z is normalized inside A_hat: "row" or "frobenius"
    normalize_intermediate: bool = True  # degree-normalize A_hat before propagating
    decoder_activation: str = "relu"
    decoder_features: bool = True  # feed [Z | X] (X omitted when absent)
    feature_dim: int = 0  # columns of X reaching the decoder
    pre_decoder: tuple = ()  # hidden widths of a dense net applied to Z before decoding
    observation: str = "bernoulli"
    gaussian_scale: float = 1.0
    diag_target: bool = True
    self_loops: bool = False

    def __post_init__(self):
        self.encoder_hidden = tuple(self.encoder_hidden)
        self.decoder_hidden = tuple(self.decoder_hidden)
        self.pre_decoder = tuple(self.pre_decoder)
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind in ("vgae", "gae"):
            self.rounds = 0
        if self.skip_mode not in ("convex", "incremental"):
            raise ValueError(f"unknown skip mode {self.skip_mode!r}")
        if self.skip_mode == "convex" and not 0.0 <= self.skip_lambda <= 1.0:
            raise ValueError("convex skip needs lambda in [0, 1]")
        if self.norm_mode not in ("row", "frobenius"):
            raise ValueError(f"unknown norm mode {self.norm_mode!r}")
        if self.observation not in ("bernoulli", "gaussian"):
            raise ValueError(f"unknown observation model {self.observation!r}")
        if self.rounds > 1 and self.out_dim != self.latent_dim:
            raise ValueError("multiple refinement rounds need out_dim == latent_dim")

    @property
    def variational(self) -> bool:
        return self.kind in ("graphite_vae", "vgae")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class LatentPosterior:
    mu: Tensor
    log_sigma: Tensor | None = None

    @property
    def sigma(self) -> Tensor:
        if self.log_sigma is None:
            raise ValueError("deterministic posterior has no sigma")
        return T.exp(self.log_sigma)


@dataclass
class GraphiteModel:
    config: ModelConfig
    params: dict = field(default_factory=dict)

    @classmethod
    def create(cls, config: ModelConfig, seed=None) -> "GraphiteModel":
        rng = np.random.default_rng(seed)
        c = config
        p: dict[str, Tensor] = {}

        def dense(name, fan_in, fan_out):
            p[f"{name}.W"] = T.glorot_uniform(fan_in, fan_out, rng, name=f"{name}.W")
            p[f"{name}.b"] = Tensor(np.zeros((1, fan_out)), requires_grad=True, name=f"{name}.b")

        d = c.input_dim
        for i, h in enumerate(c.encoder_hidden):
            dense(f"enc{i}", d, h)
            d = h
        dense("enc_mu", d, c.latent_dim)
        if c.variational:
            dense("enc_logsigma", d, c.latent_dim)
        d = c.latent_dim
        for i, h in enumerate(c.pre_decoder):
            dense(f"pre{i}", d, h)
            d = h
        if c.pre_decoder:
            dense(f"pre{len(c.pre_decoder)}", d, c.latent_dim)
        if c.rounds > 0:
            d = c.latent_dim
            widths = list(c.decoder_hidden) + [c.out_dim]
            for i, h in enumerate(widths):
                dense(f"dec{i}", d, h)
                if i == 0 and c.decoder_features and c.feature_dim:
                    # [Z | X] W split as Z W + X Wx so X can stay sparse
                    p["dec0.Wx"] = T.glorot_uniform(c.feature_dim, h, rng, name="dec0.Wx")
                d = h
        return cls(config, p)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def layer(self, name):
        return self.params[f"{name}.W"], self.params[f"{name}.b"]

    def decoder_layers(self):
        c = self.config
        acts = [c.decoder_activation] * len(c.decoder_hidden) + ["identity"]
        return [(self.layer(f"dec{i}"), a) for i, a in enumerate(acts)]


# ------------------------------------------------------------- encoder


def encode(model: GraphiteModel, a_norm, x=None) -> LatentPosterior:
    """(mu, log sigma) from a GCN trunk and two GCN heads."""
    c = model.config
    h = None
    for i in range(len(c.encoder_hidden)):
        w, b = model.layer(f"enc{i}")
        h = _encoder_layer(a_norm, x if h is None else h, w, b, "relu")
    src = x if h is None else h
    mu = _encoder_layer(a_norm, src, *model.layer("enc_mu"), "identity")
    log_sigma = None
    if c.variational:
        ls = _encoder_layer(a_norm, src, *model.layer("enc_logsigma"), "identity")
        log_sigma = T.clip(ls, *LOG_SIGMA_BOUNDS)
    return LatentPosterior(mu, log_sigma)


def _encoder_layer(a_norm, h, w, b, activation):
    """eta(b + A~ H W); ``h=None`` stands for identity features."""
    if h is None:
        if a_norm.shape[-1] != w.shape[0]:
            raise ShapeError("encode", T.as_tensor(np.zeros(a_norm.shape[-2:])), w,
                             detail="identity features need input_dim == n")
        hw = w  # A~ I W = A~ W
    else:
        if h.shape[-1] != w.shape[0]:
            raise ShapeError("encode", T.as_tensor(np.zeros((1, h.shape[-1]))), w)
        hw = _const_matmul(h, w)
    return ACTIVATIONS[activation](T.add(propagate(a_norm, hw), b))


def reparam_sample(post: LatentPosterior, noise) -> Tensor:
    """Z = mu + sigma * noise."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != post.mu.shape:
        raise ShapeError("reparam_sample", post.mu, Tensor(noise.reshape(noise.shape[0], -1) if noise.ndim else noise),
                         detail="noise must match mu")
    if post.log_sigma is None:
        return post.mu
    return T.add(post.mu, T.hadamard(post.sigma, Tensor(noise)))


def kl_standard_normal(post: LatentPosterior, weights=None) -> Tensor:
    """KL(q || N(0, I)) summed over nodes and dims (1x1)."""
    mu, ls = post.mu, post.log_sigma
    sig2 = T.exp(T.scalar_mul(ls, 2.0))
    per = T.sub(T.add(T.hadamard(mu, mu), sig2), T.add(T.scalar_mul(ls, 2.0), 1.0))
    if weights is not None:
        per = T.hadamard(per, Tensor(weights))
    return T.scalar_mul(T.reduce_sum(per), 0.5)


# ------------------------------------------------------------- decoder


def _normalized(z: Tensor, norm_mode: str) -> Tensor:
    return T.l2_normalize(z, axis=-1 if norm_mode == "row" else None)


def intermediate_graph(z, norm_mode: str = "row") -> Tensor:
    """A_hat = N N^T + 1 1^T with N the normalized Z (dense, n x n)."""
    nz = _normalized(T.as_tensor(z), norm_mode)
    return T.add(T.matmul(nz, T.transpose(nz)), 1.0)


def _ones_col(z: Tensor) -> Tensor:
    return Tensor(np.ones(z.shape[:-1] + (1,)))


def _fast(nz: Tensor, h: Tensor) -> Tensor:
    return T.add(T.matmul(nz, T.matmul(T.transpose(nz), h)), T.reduce_sum(h, axis=-2))


def decode_fast(z, h, norm_mode: str = "row") -> Tensor:
    """A_hat H computed as N (N^T H) + 1 (1^T H); A_hat is never formed."""
    z, h = T.as_tensor(z), T.as_tensor(h)
    if z.shape[:-1] != h.shape[:-1]:
        raise ShapeError("decode_fast", z, h, detail="row counts differ")
    return _fast(_normalized(z, norm_mode), h)


def intermediate_propagator(z: Tensor, norm_mode: str = "row", normalize: bool = True):
    """Callable H -> (D^-1/2) A_hat (D^-1/2) H (or A_hat H), linear time in n."""
    nz = _normalized(z, norm_mode)
    if not normalize:
        return lambda h: _fast(nz, h)
    deg = _fast(nz, _ones_col(z))  # row sums of A_hat, >= 1
    s = T.exp(T.scalar_mul(T.log(deg), -0.5))
    return lambda h: T.hadamard(s, _fast(nz, T.hadamard(s, h)))


def refine(model: GraphiteModel, z: Tensor, x=None) -> Tensor:
    """One decoder GNN pass over the intermediate graph built from ``z``.

    The first layer consumes [Z | X]; its weight is stored as two blocks so
    that [Z | X] W = Z W_z + X W_x without forming the concatenation.
    """
    c = model.config
    prop = intermediate_propagator(z, c.norm_mode, c.normalize_intermediate)
    h = z
    for i, ((w, b), act) in enumerate(model.decoder_layers()):
        hw = T.matmul(h, w)
        if i == 0 and x is not None and "dec0.Wx" in model.params:
            hw = T.add(hw, _const_matmul(x, model.params["dec0.Wx"]))
        h = ACTIVATIONS[act](T.add(prop(hw), b))
    return h


def _const_matmul(x, w: Tensor) -> Tensor:
    if sp.issparse(x):
        return T.spmatmul(x, w)
    return T.matmul(T.as_tensor(x), w)


def combine_skip(z: Tensor, z_star, lam: float, mode: str = "convex") -> Tensor:
    """(1-lam) Z + lam Z*, or Z + lam Z*/||Z*||_F.

    ``z_star`` may be a list of successively induced embeddings; in convex mode
    they share the weight ``lam`` equally, in incremental mode the last one is used.
    """
    stars = list(z_star) if isinstance(z_star, (list, tuple)) else [z_star]
    for s in stars:
        if s.shape != z.shape:
            raise ShapeError("combine_skip", z, s)
    if mode == "convex":
        if not 0.0 <= lam <= 1.0:
            raise ValueError("convex skip needs lambda in [0, 1]")
        if lam == 0.0:
            return z
        out = T.scalar_mul(z, 1.0 - lam)
        for s in stars:
            out = T.add(out, T.scalar_mul(s, lam / len(stars)))
        return out
    if mode == "incremental":
        return T.add(z, T.scalar_mul(T.l2_normalize(stars[-1], axis=None), lam))
    raise ValueError(f"unknown skip mode {mode!r}")


def pre_decode(model: GraphiteModel, z: Tensor) -> Tensor:
    c = model.config
    if not c.pre_decoder:
        return z
    h = z
    last = len(c.pre_decoder)
    for i in range(last + 1):
        w, b = model.layer(f"pre{i}")
        h = T.add(T.matmul(h, w), b)
        if i < last:
            h = T.relu(h)
    return h


def decode(model: GraphiteModel, z: Tensor, x=None) -> Tensor:
    """Z -> Z_final: optional dense net, R refinement rounds, skip combination."""
    c = model.config
    z0 = pre_decode(model, z)
    if c.rounds == 0:
        return z0
    stars = []
    cur = z0
    for _ in range(c.rounds):
        cur = refine(model, cur, x)
        stars.append(cur)
    return combine_skip(z0, stars, c.skip_lambda, c.skip_mode)


def edge_logits(z_final: Tensor) -> Tensor:
    return T.matmul(z_final, T.transpose(z_final))


def edge_distribution(z_final, observation: str = "bernoulli") -> np.ndarray:
    """Edge probabilities (bernoulli) or mean weights (gaussian)."""
    g = edge_logits(T.as_tensor(z_final)).data
    return T._sigmoid(g) if observation == "bernoulli" else g


# ---------------------------------------------------------- objectives


def reconstruction_targets(adjacency: np.ndarray, real_nodes=None, diag: bool = True) -> np.ndarray:
    """Adjacency with self-links on the diagonal of real (non-dummy) nodes."""
    t = np.array(adjacency, dtype=np.float64, copy=True)
    if diag:
        n = t.shape[-1]
        k = n if real_nodes is None else real_nodes
        if np.ndim(k) == 0:
            idx = np.arange(int(k))
            t[..., idx, idx] = 1.0
        else:  # per-graph real node counts for a batch
            for bi, kb in enumerate(np.asarray(k)):
                idx = np.arange(int(kb))
                t[bi, idx, idx] = 1.0
    return t


def positive_weight(adjacency: np.ndarray) -> float:
    """(n^2 - |E|) / |E| counting directed entries."""
    a = np.asarray(adjacency)
    pos = float(np.count_nonzero(a))
    total = float(a.shape[-1] * a.shape[-2] * (a.size // (a.shape[-1] * a.shape[-2])))
    return (total - pos) / pos if pos else 1.0


def reconstruction_loss(logits: Tensor, targets, observation: str = "bernoulli", pos_weight: float = 1.0,
                        weights=None, reduction: str = "sum", gaussian_scale: float = 1.0) -> Tensor:
    """Cross-entropy (bernoulli) or squared error (gaussian) over all entries."""
    targets = np.asarray(targets, dtype=np.float64)
    if observation == "bernoulli":
        loss = T.bce_with_logits(logits, targets, pos_weight, weights)
    elif observation == "gaussian":
        diff = T.sub(logits, Tensor(targets))
        sq = T.hadamard(diff, diff)
        if weights is not None:
            sq = T.hadamard(sq, Tensor(weights))
        loss = T.scalar_mul(T.reduce_sum(sq), 0.5 / gaussian_scale ** 2)
    else:
        raise ValueError(f"unknown observation model {observation!r}")
    if reduction == "mean":
        loss = T.scalar_mul(loss, 1.0 / targets.size)
    elif reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    return loss


@dataclass
class Objective:
    loss: Tensor  # value to minimize
    recon: float
    kl: float
    z_final: Tensor
    posterior: LatentPosterior


def objective(model: GraphiteModel, a_norm, targets, x=None, noise=None, *, pos_weight: float = 1.0,
              recon_scale: float = 1.0, kl_scale: float = 1.0, entry_weights=None, subsample=None) -> Objective:
    """Negative ELBO (VAE kinds) or reconstruction loss (AE kinds).

    ``recon_scale``/``kl_scale`` rescale the two terms; both 1 gives the plain
    negative ELBO in nats. ``subsample=(count, rng)`` replaces the dense
    reconstruction term with its Monte Carlo estimate.
    """
    c = model.config
    post = encode(model, a_norm, x)
    if c.variational:
        if noise is None:
            raise ValueError("variational objective needs a noise sample")
        z = reparam_sample(post, noise)
    else:
        z = post.mu
    zf = decode(model, z, x)
    if subsample is not None:
        count, rng = subsample
        recon = mc_subsample_recon(zf, targets, count, rng, pos_weight=pos_weight)
    else:
        recon = reconstruction_loss(edge_logits(zf), targets, c.observation, pos_weight, entry_weights,
                                    gaussian_scale=c.gaussian_scale)
    loss = T.scalar_mul(recon, recon_scale) if recon_scale != 1.0 else recon
    kl_val = 0.0
    if c.variational:
        kl = kl_standard_normal(post)
        kl_val = kl.item()
        loss = T.add(loss, T.scalar_mul(kl, kl_scale) if kl_scale != 1.0 else kl)
    return Objective(loss, recon.item(), kl_val, zf, post)


def elbo(model: GraphiteModel, a_norm, targets, x=None, noise=None, samples: int = 1, rng=None, **kw) -> float:
    """ELBO in nats, averaged over ``samples`` reparameterized draws.

    Passing ``noise`` uses that single draw; otherwise draws come from ``rng``.
    """
    if not model.config.variational:
        raise ValueError("elbo needs a variational model kind")
    with T.no_grad():
        if noise is not None:
            return -objective(model, a_norm, targets, x, noise, **kw).loss.item()
        rng = np.random.default_rng(rng)
        shape = encode(model, a_norm, x).mu.shape
        vals = [-objective(model, a_norm, targets, x, rng.standard_normal(shape), **kw).loss.item()
                for _ in range(samples)]
    return float(np.mean(vals))


def ae_loss(model: GraphiteModel, a_norm, targets, x=None, **kw) -> Tensor:
    if model.config.variational:
        raise ValueError("ae_loss needs graphite_ae or gae")
    return objective(model, a_norm, targets, x, **kw).loss


def log_likelihood_given_z(model: GraphiteModel, z: np.ndarray, targets, x=None, pos_weight: float = 1.0) -> np.ndarray:
    """log p(A | Z, X) for a batch of latent draws ``z`` (B x n x k); no gradient."""
    with T.no_grad():
        zf = decode(model, Tensor(z), x)
        logits = edge_logits(zf).data
    t = np.broadcast_to(np.asarray(targets, dtype=np.float64), logits.shape)
    if model.config.observation == "gaussian":
        s = model.config.gaussian_scale
        per = -0.5 * ((logits - t) / s) ** 2 - 0.5 * np.log(2 * np.pi * s * s)
    else:
        c = 1.0 + (pos_weight - 1.0) * t
        per = -((1.0 - t) * logits + c * (np.logaddexp(0.0, -logits)))
    return per.reshape(per.shape[0], -1).sum(axis=1)


def iw_log_likelihood(model: GraphiteModel, a_norm, targets, x=None, samples: int = 100, rng=None) -> float:
    """Importance-weighted estimate of log p(A | X) with q as proposal."""
    rng = np.random.default_rng(rng)
    with T.no_grad():
        post = encode(model, a_norm, x)
    mu, ls = post.mu.data, post.log_sigma.data
    eps = rng.standard_normal((samples,) + mu.shape)
    z = mu + np.exp(ls) * eps
    ll = log_likelihood_given_z(model, z, targets, x)
    log_prior = -0.5 * (z ** 2 + np.log(2 * np.pi)).reshape(samples, -1).sum(1)
    log_q = (-0.5 * (eps ** 2 + np.log(2 * np.pi)) - ls).reshape(samples, -1).sum(1)
    w = ll + log_prior - log_q
    m = w.max()
    return float(m + np.log(np.mean(np.exp(w - m))))


def mc_subsample_recon(z_final: Tensor, targets, count: int, rng, pos_weight: float = 1.0,
                       stratified: bool = False) -> Tensor:
    """Unbiased estimate of the summed cross-entropy from ``count`` sampled entries.

    Entries are drawn uniformly with replacement and scaled by n^2 / count;
    ``stratified=True`` with ``count`` a multiple of n^2 enumerates every entry
    ``count / n^2`` times instead.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if z_final.data.ndim != 2:
        raise ShapeError("mc_subsample_recon", z_final, detail="single graph only")
    targets = np.asarray(targets, dtype=np.float64)
    n = z_final.shape[0]
    total = n * n
    if stratified and count % total == 0:
        flat = np.tile(np.arange(total), count // total)
    else:
        flat = np.random.default_rng(rng).integers(0, total, size=count)
    rows, cols = flat // n, flat % n
    logits = T.pair_dot(z_final, rows, cols)
    t = targets[rows, cols].reshape(-1, 1)
    loss = T.bce_with_logits(logits, t, pos_weight)
    return T.scalar_mul(loss, total / count)
