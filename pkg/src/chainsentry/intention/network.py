"""Forward pass, losses, and hand-derived gradients for the intention network.

Per timestep the network embeds the (status, action) cluster indices, passes
them through a variational bottleneck (z = mu + exp(sigma) * noise), feeds z
beside the raw features and the status/action prototype vectors into three
LSTMs, converts their hidden states into a non-negative hazard via softplus,
and maintains the survival curve S(t) = exp(-cumulative hazard).  An
attention head over the feature context mixes the two tree-backbone
probabilities with the survival-based prediction; the mixed prediction is
then blended with the previous step's output in proportion to S(t), so a
dead survival curve freezes the prediction.

The training objective sums, over steps weighted by sqrt(t): cross-entropy
on the mixed prediction, the Gaussian-bottleneck regularizer
sum(exp(sigma) - (1 + sigma) + mu^2) plus a reconstruction error, a hinge
surrogate that penalizes prediction sign flips between consecutive steps,
and an earliness term +-S(t) pushing survival down for positives and up for
negatives.  Gradients are computed analytically in reverse; they are checked
against central finite differences in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from .params import BRANCHES, Dims, IntentionConfig

PROB_CLIP = 1e-12


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x):
    return np.logaddexp(0.0, x)


def intention_index_of(z: np.ndarray) -> np.ndarray:
    """Sign pattern of z mapped to a 1-based index.

    Dimension d contributes 2^d when negative; zeros count as positive, so
    the all-positive pattern is index 1 and the all-negative pattern is
    index 2^d_z.
    """
    z = np.asarray(z)
    bits = (z < 0).astype(np.int64)
    weights = 2 ** np.arange(z.shape[-1], dtype=np.int64)
    return 1 + bits @ weights


@dataclass(slots=True)
class SequenceBatch:
    """Per-address aligned sequences over the observation window.

    Backbone probabilities are clipped away from {0, 1} on construction so
    the fused prediction stays strictly inside (0, 1).
    """

    features: np.ndarray      # (B, T, d_f)
    status_vec: np.ndarray    # (B, T, d_f)
    action_vec: np.ndarray    # (B, T, d_f)
    status_idx: np.ndarray    # (B, T) int
    action_idx: np.ndarray    # (B, T) int
    p_status: np.ndarray      # (B, T) backbone prob of class 1
    p_action: np.ndarray      # (B, T)
    labels: np.ndarray        # (B,) int
    addresses: tuple[str, ...] = ()

    def __post_init__(self):
        B, T, _ = self.features.shape
        for name in ("status_vec", "action_vec"):
            if getattr(self, name).shape != self.features.shape:
                raise DataError(f"{name} shape mismatch")
        for name in ("status_idx", "action_idx", "p_status", "p_action"):
            if getattr(self, name).shape != (B, T):
                raise DataError(f"{name} shape mismatch")
        if self.labels.shape != (B,):
            raise DataError("labels shape mismatch")
        self.p_status = np.clip(self.p_status, PROB_CLIP, 1.0 - PROB_CLIP)
        self.p_action = np.clip(self.p_action, PROB_CLIP, 1.0 - PROB_CLIP)

    @property
    def n_addresses(self) -> int:
        return self.features.shape[0]

    @property
    def n_steps(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "SequenceBatch":
        idx = np.asarray(idx)
        return SequenceBatch(
            self.features[idx], self.status_vec[idx], self.action_vec[idx],
            self.status_idx[idx], self.action_idx[idx],
            self.p_status[idx], self.p_action[idx], self.labels[idx],
            tuple(self.addresses[i] for i in idx) if self.addresses else (),
        )


def _lstm_forward(params, br, inp, h_prev, c_prev, d_h):
    pre = inp @ params[f"lstm_{br}_W"].T + h_prev @ params[f"lstm_{br}_U"].T \
        + params[f"lstm_{br}_b"]
    i = _sigmoid(pre[:, :d_h])
    f = _sigmoid(pre[:, d_h:2 * d_h])
    o = _sigmoid(pre[:, 2 * d_h:3 * d_h])
    g = np.tanh(pre[:, 3 * d_h:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return {"inp": inp, "h_prev": h_prev, "c_prev": c_prev, "i": i, "f": f,
            "o": o, "g": g, "c": c, "tc": tc, "h": h}


def _lstm_backward(params, grads, br, cache, gh, gc_in):
    i, f, o, g, tc = cache["i"], cache["f"], cache["o"], cache["g"], cache["tc"]
    gc = gc_in + gh * o * (1.0 - tc * tc)
    go = gh * tc
    gf = gc * cache["c_prev"]
    gi = gc * g
    gg = gc * i
    gc_prev = gc * f
    gpre = np.concatenate(
        [gi * i * (1 - i), gf * f * (1 - f), go * o * (1 - o), gg * (1 - g * g)],
        axis=1,
    )
    grads[f"lstm_{br}_W"] += gpre.T @ cache["inp"]
    grads[f"lstm_{br}_U"] += gpre.T @ cache["h_prev"]
    grads[f"lstm_{br}_b"] += gpre.sum(axis=0)
    ginp = gpre @ params[f"lstm_{br}_W"]
    gh_prev = gpre @ params[f"lstm_{br}_U"]
    return ginp, gh_prev, gc_prev


@dataclass(slots=True)
class ForwardPass:
    steps: list[dict] = field(default_factory=list)
    y: np.ndarray | None = None        # (B, T) fused prediction
    p_hat: np.ndarray | None = None    # (B, T) survival-blended prediction
    survival: np.ndarray | None = None  # (B, T)
    hazard: np.ndarray | None = None   # (B, T)
    alphas: np.ndarray | None = None   # (B, T, 3) order (S, A, I)
    z: np.ndarray | None = None        # (B, T, d_z)
    intention_idx: np.ndarray | None = None  # (B, T)


def forward_pass(params: dict, batch: SequenceBatch, dims: Dims,
                 noise: np.ndarray | None = None) -> ForwardPass:
    """Run the network over all steps; ``noise`` is (T, B, d_z) or None for
    deterministic inference (z = mu)."""
    B, T = batch.n_addresses, batch.n_steps
    d_h, d_z, d_e = dims.d_h, dims.d_z, dims.d_e
    fw = ForwardPass()
    fw.y = np.zeros((B, T))
    fw.p_hat = np.zeros((B, T))
    fw.survival = np.zeros((B, T))
    fw.hazard = np.zeros((B, T))
    fw.alphas = np.zeros((B, T, 3))
    fw.z = np.zeros((B, T, d_z))
    fw.intention_idx = np.zeros((B, T), dtype=np.int64)

    h = {br: np.zeros((B, d_h)) for br in BRANCHES}
    c = {br: np.zeros((B, d_h)) for br in BRANCHES}
    Lam = np.zeros(B)
    p_hat_prev = np.full(B, 0.5)

    for t in range(T):
        step: dict = {}
        sidx = batch.status_idx[:, t]
        aidx = batch.action_idx[:, t]
        se = params["emb_s"][sidx]
        ae = params["emb_a"][aidx]
        u = np.concatenate([se, ae], axis=1)
        enc_pre = u @ params["enc_W"].T + params["enc_b"]
        x = np.tanh(enc_pre)
        mu = x @ params["mu_W"].T + params["mu_b"]
        sg = x @ params["sg_W"].T + params["sg_b"]
        e = noise[t] if noise is not None else np.zeros((B, d_z))
        z = mu + np.exp(sg) * e
        dec_pre = z @ params["dec_W1"].T + params["dec_b1"]
        dh = np.tanh(dec_pre)
        xh = dh @ params["dec_W2"].T + params["dec_b2"]
        iidx = intention_index_of(z)
        if dims.use_idx:
            ie = params["emb_i"][iidx - 1]
            zeff = np.concatenate([z, ie], axis=1)
        else:
            ie = None
            zeff = z

        f_t = batch.features[:, t, :]
        sv = batch.status_vec[:, t, :]
        av = batch.action_vec[:, t, :]
        lstm_in = {
            "f": np.concatenate([zeff, f_t], axis=1),
            "s": np.concatenate([zeff, sv], axis=1),
            "a": np.concatenate([zeff, av], axis=1),
        }
        lstm = {}
        for br in BRANCHES:
            lstm[br] = _lstm_forward(params, br, lstm_in[br], h[br], c[br], d_h)
            h[br] = lstm[br]["h"]
            c[br] = lstm[br]["c"]

        haz_pre = np.stack(
            [lstm[br]["h"] @ params["haz_w"][k] + params["haz_b"][k]
             for k, br in enumerate(BRANCHES)],
            axis=1,
        )  # (B, 3)
        lam = _softplus(haz_pre).sum(axis=1)
        Lam = Lam + lam
        S = np.exp(-Lam)

        att_in = {
            "s": np.concatenate([f_t, sv], axis=1),
            "a": np.concatenate([f_t, av], axis=1),
            "i": np.concatenate([f_t, zeff], axis=1),
        }
        q = {}
        a_scores = np.zeros((B, 3))
        for k, br in enumerate(("s", "a", "i")):
            q[br] = np.tanh(att_in[br] @ params[f"att_w_{br}"].T)
            a_scores[:, k] = q[br] @ params["att_v"]
        a_shift = a_scores - a_scores.max(axis=1, keepdims=True)
        expa = np.exp(a_shift)
        alpha = expa / expa.sum(axis=1, keepdims=True)

        p_i = 1.0 - S
        y = alpha[:, 0] * batch.p_status[:, t] + alpha[:, 1] * batch.p_action[:, t] \
            + alpha[:, 2] * p_i
        p_hat = S * y + (1.0 - S) * p_hat_prev

        step.update(u=u, x=x, mu=mu, sg=sg, e=e, z=z, dh=dh, xh=xh,
                    iidx=iidx, ie=ie, zeff=zeff, lstm=lstm, haz_pre=haz_pre,
                    lam=lam, Lam=Lam.copy(), S=S, att_in=att_in, q=q,
                    alpha=alpha, y=y, sidx=sidx, aidx=aidx)
        fw.steps.append(step)
        fw.y[:, t] = y
        fw.p_hat[:, t] = p_hat
        fw.survival[:, t] = S
        fw.hazard[:, t] = lam
        fw.alphas[:, t] = alpha
        fw.z[:, t] = z
        fw.intention_idx[:, t] = iidx
        p_hat_prev = p_hat

    return fw


def loss_terms(batch: SequenceBatch, fw: ForwardPass, config: IntentionConfig):
    """Per-term sqrt(t)-weighted sums over the batch."""
    B, T = batch.n_addresses, batch.n_steps
    labels = batch.labels.astype(np.float64)
    terms = {"pred": 0.0, "vae_kl": 0.0, "recon": 0.0, "consistency": 0.0,
             "consistency_01": 0.0, "earliness": 0.0}
    for t in range(T):
        w = np.sqrt(t + 1.0)
        step = fw.steps[t]
        y = step["y"]
        terms["pred"] += w * float(np.sum(
            -labels * np.log(y) - (1.0 - labels) * np.log(1.0 - y)
        ))
        mu, sg = step["mu"], step["sg"]
        terms["vae_kl"] += w * float(np.sum(np.exp(sg) - (1.0 + sg) + mu * mu))
        diff = step["xh"] - step["u"]
        terms["recon"] += w * float(np.sum(diff * diff))
        if t > 0:
            v = -(y - 0.5) * (fw.steps[t - 1]["y"] - 0.5)
            terms["consistency"] += w * float(np.sum(np.maximum(v, 0.0)))
            terms["consistency_01"] += w * float(np.sum(v > 0.0))
        s_term = np.where(labels == 1, step["S"], -step["S"])
        terms["earliness"] += w * float(np.sum(s_term))
    terms["total"] = (terms["pred"]
                      + config.gamma_v * (terms["vae_kl"] + config.recon_weight * terms["recon"])
                      + config.gamma_c * terms["consistency"]
                      + config.gamma_e * terms["earliness"])
    return terms


def compute_loss(params: dict, batch: SequenceBatch, dims: Dims,
                 config: IntentionConfig, noise: np.ndarray | None = None):
    fw = forward_pass(params, batch, dims, noise)
    return loss_terms(batch, fw, config), fw


def compute_loss_and_grads(params: dict, batch: SequenceBatch, dims: Dims,
                           config: IntentionConfig,
                           noise: np.ndarray | None = None):
    """Analytic gradients of the total training loss for every parameter."""
    fw = forward_pass(params, batch, dims, noise)
    terms = loss_terms(batch, fw, config)
    B, T = batch.n_addresses, batch.n_steps
    d_h, d_z, d_e = dims.d_h, dims.d_z, dims.d_e
    labels = batch.labels.astype(np.float64)
    sign_e = np.where(labels == 1, 1.0, -1.0)

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    gh_next = {br: np.zeros((B, d_h)) for br in BRANCHES}
    gc_next = {br: np.zeros((B, d_h)) for br in BRANCHES}
    gLam_next = np.zeros(B)
    gy_from_next = np.zeros(B)

    for t in range(T - 1, -1, -1):
        w = np.sqrt(t + 1.0)
        step = fw.steps[t]
        y = step["y"]
        S = step["S"]
        alpha = step["alpha"]

        # -- prediction endpoints --------------------------------------------
        gy = w * (-labels / y + (1.0 - labels) / (1.0 - y)) + gy_from_next
        if t > 0:
            y_prev = fw.steps[t - 1]["y"]
            active = (-(y - 0.5) * (y_prev - 0.5)) > 0.0
            gy += w * config.gamma_c * active * (-(y_prev - 0.5))
            gy_from_next = w * config.gamma_c * active * (-(y - 0.5))
        else:
            gy_from_next = np.zeros(B)

        galpha = np.column_stack([
            gy * batch.p_status[:, t],
            gy * batch.p_action[:, t],
            gy * (1.0 - S),
        ])
        gS = -gy * alpha[:, 2] + w * config.gamma_e * sign_e

        # -- survival chain ---------------------------------------------------
        gLam = gS * (-S) + gLam_next
        glam = gLam
        gLam_next = gLam

        sig_h = _sigmoid(step["haz_pre"])  # (B, 3)
        gh = {br: gh_next[br].copy() for br in BRANCHES}
        for k, br in enumerate(BRANCHES):
            gpre = glam * sig_h[:, k]
            grads["haz_w"][k] += gpre @ step["lstm"][br]["h"]
            grads["haz_b"][k] += gpre.sum()
            gh[br] += gpre[:, None] * params["haz_w"][k][None, :]

        # -- attention ---------------------------------------------------------
        row = (galpha * alpha).sum(axis=1, keepdims=True)
        ga = alpha * (galpha - row)
        gzeff = np.zeros((B, step["zeff"].shape[1]))
        for k, br in enumerate(("s", "a", "i")):
            q = step["q"][br]
            gq = ga[:, k][:, None] * params["att_v"][None, :]
            grads["att_v"] += (q * ga[:, k][:, None]).sum(axis=0)
            gqpre = gq * (1.0 - q * q)
            grads[f"att_w_{br}"] += gqpre.T @ step["att_in"][br]
            gcat = gqpre @ params[f"att_w_{br}"]
            if br == "i":
                gzeff += gcat[:, dims.d_f:]

        # -- LSTMs --------------------------------------------------------------
        for br in BRANCHES:
            ginp, gh_prev, gc_prev = _lstm_backward(
                params, grads, br, step["lstm"][br], gh[br], gc_next[br]
            )
            gzeff += ginp[:, :dims.z_eff]
            gh_next[br] = gh_prev
            gc_next[br] = gc_prev

        # -- bottleneck ----------------------------------------------------------
        gz = gzeff[:, :d_z].copy()
        if dims.use_idx:
            gie = gzeff[:, d_z:]
            np.add.at(grads["emb_i"], step["iidx"] - 1, gie)

        coef_r = w * config.gamma_v * config.recon_weight
        gxh = coef_r * 2.0 * (step["xh"] - step["u"])
        gu = -gxh.copy()  # reconstruction target path
        grads["dec_W2"] += gxh.T @ step["dh"]
        grads["dec_b2"] += gxh.sum(axis=0)
        gdh = gxh @ params["dec_W2"]
        gdec_pre = gdh * (1.0 - step["dh"] ** 2)
        grads["dec_W1"] += gdec_pre.T @ step["z"]
        grads["dec_b1"] += gdec_pre.sum(axis=0)
        gz += gdec_pre @ params["dec_W1"]

        coef_kl = w * config.gamma_v
        gmu = coef_kl * 2.0 * step["mu"] + gz
        gsg = coef_kl * (np.exp(step["sg"]) - 1.0) + gz * np.exp(step["sg"]) * step["e"]

        gx = gmu @ params["mu_W"] + gsg @ params["sg_W"]
        grads["mu_W"] += gmu.T @ step["x"]
        grads["mu_b"] += gmu.sum(axis=0)
        grads["sg_W"] += gsg.T @ step["x"]
        grads["sg_b"] += gsg.sum(axis=0)

        genc_pre = gx * (1.0 - step["x"] ** 2)
        grads["enc_W"] += genc_pre.T @ step["u"]
        grads["enc_b"] += genc_pre.sum(axis=0)
        gu += genc_pre @ params["enc_W"]

        np.add.at(grads["emb_s"], step["sidx"], gu[:, :d_e])
        np.add.at(grads["emb_a"], step["aidx"], gu[:, d_e:])

    return terms, grads, fw


def t_die(survival_row: np.ndarray, death_eps: float) -> int | None:
    """First 1-based step where survival drops to the death threshold."""
    below = np.flatnonzero(survival_row <= death_eps)
    return int(below[0]) + 1 if below.size else None


def motif(fw: ForwardPass, row: int, death_eps: float) -> list[int]:
    """Intention index sequence up to t_die (whole window if never reached)."""
    td = t_die(fw.survival[row], death_eps)
    end = td if td is not None else fw.survival.shape[1]
    return [int(v) for v in fw.intention_idx[row, :end]]
