"""Three-headed control network.

A trunk maps (t, x) to the system state y; a control branch, fed by y both
directly (value skip) and through the trunk's last hidden layer, produces u;
an adjoint branch fed by (y, u) plus the control branch's last hidden layer
produces lam.  Placing the u layers after the y layers (and lam after both)
creates the backpropagation paths every coupled derivative of the optimality
system needs.  The same depths and widths are used for every benchmark.

Internally a batch is carried as one array of shape (width, n_components,
n_points): component 0 is the value, the rest are the requested input
partials.  Stacking lets each layer touch all components with a single
matrix product, and lets the reverse pass accumulate each weight gradient
with one product as well.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    EvaluationError,
    HeadJets,
    JetSpec,
    Var,
    elu_factors,
)

HIDDEN_WIDTH = 100
TRUNK_LAYERS = 5
CONTROL_LAYERS = 3
ADJOINT_LAYERS = 2

PARAMS_FORMAT = "ctrlpinn-params/1"


@dataclass(frozen=True)
class ArchitectureConfig:
    """Per-problem output widths; depth and width never change."""

    spatial_dim: int
    n_y: int = 1
    n_u: int = 1

    def __post_init__(self):
        if self.spatial_dim < 0:
            raise ValueError("spatial_dim must be >= 0")
        if self.n_y < 1 or self.n_u < 1:
            raise ValueError("n_y and n_u must be >= 1")


@dataclass
class Dense:
    w: np.ndarray  # (n_out, n_in)
    b: np.ndarray  # (n_out,)


def layer_dims(config: ArchitectureConfig):
    """(label, n_out, n_in) for every layer in flat parameter order."""
    w = HIDDEN_WIDTH
    dims = [("trunk.0", w, 1 + config.spatial_dim)]
    dims += [(f"trunk.{i}", w, w) for i in range(1, TRUNK_LAYERS)]
    dims += [("y_head", config.n_y, w)]
    dims += [("control.0", w, config.n_y + w)]
    dims += [(f"control.{i}", w, w) for i in range(1, CONTROL_LAYERS)]
    dims += [("u_head", config.n_u, w)]
    dims += [("adjoint.0", w, config.n_y + config.n_u + w)]
    dims += [(f"adjoint.{i}", w, w) for i in range(1, ADJOINT_LAYERS)]
    dims += [("lam_head", config.n_y, w)]
    return dims


@dataclass
class ControlPinnParams:
    """All trainable weights.

    Flat order (used by the optimizer and by checkpoints): trunk hidden
    layers, y head, control hidden layers, u head, adjoint hidden layers,
    lam head; each layer contributes its weight matrix row-major, then its
    bias vector.
    """

    config: ArchitectureConfig
    trunk: list
    y_head: Dense
    control: list
    u_head: Dense
    adjoint: list
    lam_head: Dense

    def layers(self):
        for i, dense in enumerate(self.trunk):
            yield f"trunk.{i}", dense
        yield "y_head", self.y_head
        for i, dense in enumerate(self.control):
            yield f"control.{i}", dense
        yield "u_head", self.u_head
        for i, dense in enumerate(self.adjoint):
            yield f"adjoint.{i}", dense
        yield "lam_head", self.lam_head

    @property
    def num_params(self) -> int:
        return sum(d.w.size + d.b.size for _, d in self.layers())

    def to_flat(self) -> np.ndarray:
        parts = []
        for _, dense in self.layers():
            parts.append(dense.w.ravel())
            parts.append(dense.b)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, config: ArchitectureConfig, flat: np.ndarray) -> "ControlPinnParams":
        flat = np.asarray(flat, dtype=float)
        groups = {"trunk": [], "control": [], "adjoint": []}
        heads = {}
        offset = 0
        for label, n_out, n_in in layer_dims(config):
            w = flat[offset : offset + n_out * n_in].reshape(n_out, n_in)
            offset += n_out * n_in
            b = flat[offset : offset + n_out]
            offset += n_out
            dense = Dense(w.copy(), b.copy())
            branch = label.split(".")[0]
            if branch in groups:
                groups[branch].append(dense)
            else:
                heads[label] = dense
        if offset != flat.size:
            raise ValueError(f"flat vector has {flat.size} entries, expected {offset}")
        return cls(
            config=config,
            trunk=groups["trunk"],
            y_head=heads["y_head"],
            control=groups["control"],
            u_head=heads["u_head"],
            adjoint=groups["adjoint"],
            lam_head=heads["lam_head"],
        )


def init_params(config: ArchitectureConfig, seed: int) -> ControlPinnParams:
    """Glorot-uniform weights, zero biases, from a counter-based stream."""
    rng = np.random.Generator(np.random.Philox(seed))
    flat = []
    for _, n_out, n_in in layer_dims(config):
        limit = np.sqrt(6.0 / (n_in + n_out))
        flat.append(rng.uniform(-limit, limit, size=n_out * n_in))
        flat.append(np.zeros(n_out))
    return ControlPinnParams.from_flat(config, np.concatenate(flat))


# --------------------------------------------------------------------------
# Jet propagation.  A bundle carries, for one stage of the network, the batch
# of values plus whichever input partials the JetSpec requested, each as its
# own (width, n_points) array.  Keeping components separate keeps every
# matrix product at the BLAS sweet spot for these widths.


class _Bundle:
    __slots__ = ("val", "dt", "dx", "dxx")

    def __init__(self, val, dt=None, dx=(), dxx=()):
        self.val = val
        self.dt = dt
        self.dx = list(dx)
        self.dxx = list(dxx)

    def comps(self):
        yield self.val
        if self.dt is not None:
            yield self.dt
        yield from self.dx
        yield from self.dxx


def _identity_factors(z):
    return z, np.ones_like(z), np.zeros_like(z)


_ACTIVATIONS = {"elu": elu_factors, "identity": _identity_factors}


def _input_bundle(t, x, spec: JetSpec):
    n = t.size
    sd = x.shape[1]
    val = np.vstack([t[None, :], x.T]) if sd else t[None, :].copy()
    dt = None
    if spec.time:
        dt = np.zeros((1 + sd, n))
        dt[0] = 1.0
    dx, dxx = [], []
    if spec.space_order >= 1:
        for i in range(sd):
            e = np.zeros((1 + sd, n))
            e[1 + i] = 1.0
            dx.append(e)
    if spec.space_order == 2:
        dxx = [np.zeros((1 + sd, n)) for _ in range(sd)]
    return _Bundle(val, dt, dx, dxx)


def _dense_fwd(dense: Dense, j: _Bundle, label: str) -> _Bundle:
    val = dense.w @ j.val
    val += dense.b[:, None]
    if not np.isfinite(val).all():
        raise EvaluationError(f"non-finite activation in layer {label}", layer=label)
    return _Bundle(
        val,
        dense.w @ j.dt if j.dt is not None else None,
        [dense.w @ d for d in j.dx],
        [dense.w @ d for d in j.dxx],
    )


def _act_fwd(z: _Bundle, factors):
    val, d1, d2 = factors(z.val)
    dxx = []
    for zx, zxx in zip(z.dx, z.dxx):
        out = d1 * zxx
        tmp = zx * zx
        tmp *= d2
        out += tmp
        dxx.append(out)
    return (
        _Bundle(val, d1 * z.dt if z.dt is not None else None, [d1 * d for d in z.dx], dxx),
        d1,
        d2,
    )


def _dense_bwd(dense: Dense, j_in: _Bundle, g_out: _Bundle, grads) -> _Bundle:
    gw, gb = grads
    for g_c, a_c in zip(g_out.comps(), j_in.comps()):
        gw += g_c @ a_c.T
    gb += g_out.val.sum(axis=1)
    wt = dense.w.T
    return _Bundle(
        wt @ g_out.val,
        wt @ g_out.dt if g_out.dt is not None else None,
        [wt @ d for d in g_out.dx],
        [wt @ d for d in g_out.dxx],
    )


def _act_bwd(z: _Bundle, d1, d2, g: _Bundle) -> _Bundle:
    """Pull adjoints back through the activation's jet rules.

    Mutates ``g`` in place (its arrays are owned by the reverse pass).  For
    ELU the third derivative equals the second (e^z on the negative branch,
    0 elsewhere), so d2 serves for both factors below; the identity
    activation has both identically zero.
    """
    gv = g.val
    gv *= d1
    if g.dt is not None:
        tmp = d2 * z.dt
        tmp *= g.dt
        gv += tmp
        g.dt *= d1
    for i in range(len(g.dx)):
        zx = z.dx[i]
        tmp = d2 * zx
        tmp *= g.dx[i]
        gv += tmp
        g.dx[i] *= d1
        if g.dxx:
            gxx = g.dxx[i]
            tmp = zx * zx
            tmp += z.dxx[i]
            tmp *= d2
            tmp *= gxx
            gv += tmp
            tmp = d2 * zx
            tmp *= gxx
            tmp *= 2.0
            g.dx[i] += tmp
            g.dxx[i] *= d1
    return g


def _bundle_iadd_rows(target: _Bundle, source: _Bundle, lo: int, hi: int):
    """target += source[lo:hi] componentwise (in place)."""
    target.val += source.val[lo:hi]
    if target.dt is not None:
        target.dt += source.dt[lo:hi]
    for i in range(len(target.dx)):
        target.dx[i] += source.dx[i][lo:hi]
    for i in range(len(target.dxx)):
        target.dxx[i] += source.dxx[i][lo:hi]
    return target


class NetworkTape:
    """One recorded jet forward pass over a batch of points.

    Head jets are exposed as tape leaves (`Var` objects, one per output
    component and derivative slot); once a scalar loss built from them has
    run ``backward()``, :meth:`parameter_gradient` folds the leaf adjoints
    back through every layer into a flat gradient.  All reductions use a
    fixed order, so results are bitwise reproducible.
    """

    def __init__(self, params: ControlPinnParams, t, x, spec: JetSpec, activation: str = "elu"):
        self.params = params
        self.spec = spec
        factors = _ACTIVATIONS[activation]
        t = np.asarray(t, dtype=float)
        sd = params.config.spatial_dim
        x = np.zeros((t.size, 0)) if sd == 0 else np.asarray(x, dtype=float).reshape(t.size, sd)

        def run_branch(label, denses, bundle):
            records = []
            for i, dense in enumerate(denses):
                z = _dense_fwd(dense, bundle, f"{label}.{i}")
                out, d1, d2 = _act_fwd(z, factors)
                records.append((bundle, z, d1, d2))
                bundle = out
            return records, bundle

        inp = _input_bundle(t, x, spec)
        self._trunk_records, h_trunk = run_branch("trunk", params.trunk, inp)
        self._y_in = h_trunk
        y = _dense_fwd(params.y_head, h_trunk, "y_head")

        self._control_in = _concat([y, h_trunk])
        self._control_records, h_control = run_branch("control", params.control, self._control_in)
        self._u_in = h_control
        u = _dense_fwd(params.u_head, h_control, "u_head")

        self._adjoint_in = _concat([y, u, h_control])
        self._adjoint_records, h_adjoint = run_branch("adjoint", params.adjoint, self._adjoint_in)
        self._lam_in = h_adjoint
        lam = _dense_fwd(params.lam_head, h_adjoint, "lam_head")

        self._bundles = {"y": y, "u": u, "lam": lam}
        self._leaves = {name: self._make_leaves(b) for name, b in self._bundles.items()}

    def _make_leaves(self, bundle: _Bundle) -> HeadJets:
        rows = bundle.val.shape[0]
        return HeadJets(
            value=[Var(bundle.val[j]) for j in range(rows)],
            d_dt=[Var(bundle.dt[j]) for j in range(rows)] if bundle.dt is not None else None,
            d_dx=[[Var(d[j]) for d in bundle.dx] for j in range(rows)] if bundle.dx else None,
            d2_dx2=[[Var(d[j]) for d in bundle.dxx] for j in range(rows)] if bundle.dxx else None,
        )

    def head(self, name: str) -> HeadJets:
        return self._leaves[name]

    def head_bundle(self, name: str) -> _Bundle:
        return self._bundles[name]

    # -- reverse accumulation -------------------------------------------------

    def _leaf_adjoints(self, name: str) -> _Bundle:
        jets = self._leaves[name]
        ref = self._bundles[name]
        n = ref.val.shape[1]

        def stack(vars_):
            return np.vstack([v.grad if v.grad is not None else np.zeros(n) for v in vars_])

        rows = len(jets.value)
        return _Bundle(
            stack(jets.value),
            stack(jets.d_dt) if jets.d_dt is not None else (np.zeros_like(ref.dt) if ref.dt is not None else None),
            [stack([jets.d_dx[j][i] for j in range(rows)]) for i in range(len(ref.dx))]
            if jets.d_dx is not None
            else [np.zeros_like(d) for d in ref.dx],
            [stack([jets.d2_dx2[j][i] for j in range(rows)]) for i in range(len(ref.dxx))]
            if jets.d2_dx2 is not None
            else [np.zeros_like(d) for d in ref.dxx],
        )

    def parameter_gradient(self) -> np.ndarray:
        params = self.params
        config = params.config
        grads = {label: (np.zeros_like(d.w), np.zeros_like(d.b)) for label, d in params.layers()}

        def branch_bwd(label, denses, records, g_out):
            for i in range(len(denses) - 1, -1, -1):
                j_in, z, d1, d2 = records[i]
                g_z = _act_bwd(z, d1, d2, g_out)
                g_out = _dense_bwd(denses[i], j_in, g_z, grads[f"{label}.{i}"])
            return g_out

        g_lam = self._leaf_adjoints("lam")
        g_adj_hidden = _dense_bwd(params.lam_head, self._lam_in, g_lam, grads["lam_head"])
        g_adj_in = branch_bwd("adjoint", params.adjoint, self._adjoint_records, g_adj_hidden)

        n_y, n_u = config.n_y, config.n_u
        g_u = _bundle_iadd_rows(self._leaf_adjoints("u"), g_adj_in, n_y, n_y + n_u)
        g_ctl_hidden = _dense_bwd(params.u_head, self._u_in, g_u, grads["u_head"])
        g_ctl_hidden = _bundle_iadd_rows(g_ctl_hidden, g_adj_in, n_y + n_u, n_y + n_u + HIDDEN_WIDTH)
        g_ctl_in = branch_bwd("control", params.control, self._control_records, g_ctl_hidden)

        g_y = _bundle_iadd_rows(self._leaf_adjoints("y"), g_adj_in, 0, n_y)
        g_y = _bundle_iadd_rows(g_y, g_ctl_in, 0, n_y)
        g_trunk_hidden = _dense_bwd(params.y_head, self._y_in, g_y, grads["y_head"])
        g_trunk_hidden = _bundle_iadd_rows(g_trunk_hidden, g_ctl_in, n_y, n_y + HIDDEN_WIDTH)
        branch_bwd("trunk", params.trunk, self._trunk_records, g_trunk_hidden)

        flat = []
        for label, _ in params.layers():
            gw, gb = grads[label]
            flat.append(gw.ravel())
            flat.append(gb)
        return np.concatenate(flat)


def _concat(bundles) -> _Bundle:
    return _Bundle(
        np.vstack([b.val for b in bundles]),
        np.vstack([b.dt for b in bundles]) if bundles[0].dt is not None else None,
        [np.vstack([b.dx[i] for b in bundles]) for i in range(len(bundles[0].dx))],
        [np.vstack([b.dxx[i] for b in bundles]) for i in range(len(bundles[0].dxx))],
    )


# --------------------------------------------------------------------------
# Plain value evaluation (probes, field export, validators) without tape
# bookkeeping.


def _act_values(z, activation):
    if activation == "identity":
        return z
    pos = z > 0.0
    e = np.exp(np.where(pos, 0.0, z))
    return np.where(pos, z, e - 1.0)


def forward_values(params: ControlPinnParams, t, x=None, activation: str = "elu"):
    """Head values over a batch: arrays of shape (n_y, n), (n_u, n), (n_y, n)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    sd = params.config.spatial_dim
    x = np.zeros((t.size, 0)) if sd == 0 else np.asarray(x, dtype=float).reshape(t.size, sd)
    h = np.vstack([t[None, :], x.T]) if sd else t[None, :].copy()

    def run(label, denses, h):
        for i, dense in enumerate(denses):
            z = dense.w @ h + dense.b[:, None]
            if not np.isfinite(z).all():
                raise EvaluationError(f"non-finite activation in layer {label}.{i}", layer=f"{label}.{i}")
            h = _act_values(z, activation)
        return h

    h = run("trunk", params.trunk, h)
    y = params.y_head.w @ h + params.y_head.b[:, None]
    c = run("control", params.control, np.vstack([y, h]))
    u = params.u_head.w @ c + params.u_head.b[:, None]
    a = run("adjoint", params.adjoint, np.vstack([y, u, c]))
    lam = params.lam_head.w @ a + params.lam_head.b[:, None]
    for name, out in (("y_head", y), ("u_head", u), ("lam_head", lam)):
        if not np.isfinite(out).all():
            raise EvaluationError(f"non-finite output in {name}", layer=name)
    return y, u, lam


def forward(params: ControlPinnParams, t, x=None):
    """(y, u, lam) value vectors at a single space-time point."""
    y, u, lam = forward_values(params, [t], None if x is None else np.asarray(x, dtype=float).reshape(1, -1))
    return y[:, 0], u[:, 0], lam[:, 0]


# --------------------------------------------------------------------------
# Parameter checkpoints: a JSON document with an architecture header and the
# flat weight vector; floats survive the round trip exactly.


def save_params(path, params: ControlPinnParams, extra: dict | None = None):
    doc = {
        "format": PARAMS_FORMAT,
        "architecture": {
            "spatial_dim": params.config.spatial_dim,
            "n_y": params.config.n_y,
            "n_u": params.config.n_u,
        },
        "params": params.to_flat().tolist(),
    }
    if extra is not None:
        doc["extra"] = extra
    with open(path, "w") as fh:
        json.dump(doc, fh, separators=(",", ":"))


def load_params(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != PARAMS_FORMAT:
        raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
    arch = doc["architecture"]
    config = ArchitectureConfig(arch["spatial_dim"], arch["n_y"], arch["n_u"])
    params = ControlPinnParams.from_flat(config, np.asarray(doc["params"], dtype=float))
    return params, doc.get("extra")
