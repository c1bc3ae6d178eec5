"""Exact derivatives of network outputs and of scalar losses built from them.

Two cooperating mechanisms:

* forward jets -- every hidden quantity is carried together with its requested
  input partials (d/dt, d/dx_i, d2/dx_i2) and propagated layer by layer with
  closed-form rules, so output derivatives are exact for the network function
  rather than finite-difference estimates;
* reverse accumulation -- scalar losses assembled from jet components (via the
  small array-valued ``Var`` tape below) are differentiated with respect to
  all network weights by backpropagating adjoints through the recorded jet
  computation.

The input dimension is tiny (<= 3) while the parameter count is ~1e5, so
forward-in-inputs x reverse-in-parameters keeps the total cost at a small
constant multiple of a plain forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EvaluationError(RuntimeError):
    """A network evaluation produced a non-finite value."""

    def __init__(self, message: str, layer: str | None = None):
        super().__init__(message)
        self.layer = layer


# --------------------------------------------------------------------------
# ELU and its derivative family.
#
# ELU is not twice differentiable at z = 0: the second derivative is e^z on
# the negative branch (limit 1) and 0 on the positive one.  We pin the value
# at the kink to the negative-branch limit so jets are continuous from below.
ELU_DD_AT_ZERO = 1.0


def elu(z):
    z = np.asarray(z, dtype=float)
    return np.where(z > 0.0, z, np.exp(np.minimum(z, 0.0)) - 1.0)


def elu_d1(z):
    z = np.asarray(z, dtype=float)
    return np.where(z > 0.0, 1.0, np.exp(np.minimum(z, 0.0)))


def elu_d2(z):
    z = np.asarray(z, dtype=float)
    return np.where(z > 0.0, 0.0, np.exp(np.minimum(z, 0.0)))


# On the negative branch every further derivative is again e^z; on the
# positive branch they vanish.
elu_d3 = elu_d2


def elu_factors(z):
    """(value, d1, d2) of ELU at ``z`` using a single exponential pass."""
    pos = z > 0.0
    e = np.exp(np.minimum(z, 0.0))
    d2 = np.where(pos, 0.0, e)
    d1 = d2 + pos  # adds 1 exactly where the positive branch holds
    e -= 1.0
    value = np.where(pos, z, e)
    return value, d1, d2


# --------------------------------------------------------------------------
# Derivative requests and jet containers.


@dataclass(frozen=True)
class JetSpec:
    """Which input partials a forward pass should carry.

    Only first order in t and up to second (pure) order in each spatial
    coordinate are supported; nothing in the optimality system needs more.
    """

    time: bool = True
    space_order: int = 2

    def __post_init__(self):
        if self.space_order not in (0, 1, 2):
            raise ValueError(f"space_order must be 0, 1 or 2, got {self.space_order}")


FULL_JETS = JetSpec(time=True, space_order=2)
VALUES_ONLY = JetSpec(time=False, space_order=0)


@dataclass
class Jet:
    """Value of one output head at a point together with its input partials.

    ``d_dx`` and ``d2_dx2`` have exactly ``spatial_dim`` columns (zero columns
    for pure ODE problems); unrequested slots are ``None``.
    """

    value: np.ndarray
    d_dt: np.ndarray | None
    d_dx: np.ndarray | None
    d2_dx2: np.ndarray | None


@dataclass
class HeadJets:
    """Batched per-component jet bundle for one output head.

    Entries are ``Var`` tape leaves during training, or plain arrays when a
    closed-form oracle stands in for the network.  Indexing convention:
    ``value[j]`` is component j over the batch, ``d_dx[j][i]`` its first
    partial along spatial coordinate i.
    """

    value: list
    d_dt: list | None = None
    d_dx: list | None = None
    d2_dx2: list | None = None


# --------------------------------------------------------------------------
# A minimal reverse-mode tape over numpy arrays, used to assemble residuals
# and the scalar loss from jet components.  Constants (targets, coefficients)
# participate as plain arrays or floats.


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, (g, s) in enumerate(zip(grad.shape, shape)):
        if s == 1 and g != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _accumulate(var, grad):
    grad = _unbroadcast(np.asarray(grad, dtype=float), var.value.shape)
    var.grad = grad if var.grad is None else var.grad + grad


def _coerce(x):
    if isinstance(x, Var):
        return x.value, x
    return np.asarray(x, dtype=float), None


class Var:
    """Array-valued node of the loss tape."""

    __slots__ = ("value", "grad", "_parents", "_backward")
    # Keep numpy from consuming Var operands elementwise so that
    # ndarray <op> Var falls back to our reflected operators.
    __array_ufunc__ = None

    def __init__(self, value, parents=(), backward=None):
        self.value = value if isinstance(value, np.ndarray) else np.asarray(value, dtype=float)
        self.grad = None
        self._parents = parents
        self._backward = backward

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        ov, o = _coerce(other)

        def backward(g, a=self, b=o):
            _accumulate(a, g)
            if b is not None:
                _accumulate(b, g)

        return Var(self.value + ov, (self,) + ((o,) if o is not None else ()), backward)

    __radd__ = __add__

    def __sub__(self, other):
        ov, o = _coerce(other)

        def backward(g, a=self, b=o):
            _accumulate(a, g)
            if b is not None:
                _accumulate(b, -g)

        return Var(self.value - ov, (self,) + ((o,) if o is not None else ()), backward)

    def __rsub__(self, other):
        ov, _ = _coerce(other)

        def backward(g, a=self):
            _accumulate(a, -g)

        return Var(ov - self.value, (self,), backward)

    def __mul__(self, other):
        ov, o = _coerce(other)

        def backward(g, a=self, b=o, av=self.value, bv=ov):
            _accumulate(a, g * bv)
            if b is not None:
                _accumulate(b, g * av)

        return Var(self.value * ov, (self,) + ((o,) if o is not None else ()), backward)

    __rmul__ = __mul__

    def __neg__(self):
        def backward(g, a=self):
            _accumulate(a, -g)

        return Var(-self.value, (self,), backward)

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise TypeError("Var division is only supported by constants")
        return self * (1.0 / other)

    def __pow__(self, exponent):
        p = float(exponent)

        def backward(g, a=self, pw=p):
            _accumulate(a, g * pw * a.value ** (pw - 1.0))

        return Var(self.value**p, (self,), backward)

    def mean(self):
        n = self.value.size

        def backward(g, a=self, count=n):
            _accumulate(a, np.full(a.value.shape, float(g) / count))

        return Var(self.value.mean(), (self,), backward)

    def sum(self):
        def backward(g, a=self):
            _accumulate(a, np.full(a.value.shape, float(g)))

        return Var(self.value.sum(), (self,), backward)

    # -- reverse pass -------------------------------------------------------

    def backward(self):
        """Seed d(self)/d(self) = 1 and push adjoints to every leaf."""
        self.grad = np.ones_like(self.value)
        for node in reversed(_topo_order(self)):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _topo_order(root):
    order = []
    visited = {id(root)}
    stack = [(root, iter(root._parents))]
    while stack:
        node, parents = stack[-1]
        advanced = False
        for parent in parents:
            if id(parent) not in visited:
                visited.add(id(parent))
                stack.append((parent, iter(parent._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order  # children strictly before their consumers


class FlatParams:
    """Gradient source exposing the flat parameter vector as a tape leaf.

    Lets a loss depend on the raw weights directly (e.g. a quadratic penalty)
    through the same ``loss_gradient`` entry point as jet-based losses.
    """

    def __init__(self, params):
        self.var = Var(params.to_flat())

    def parameter_gradient(self):
        if self.var.grad is None:
            return np.zeros_like(self.var.value)
        return self.var.grad


# --------------------------------------------------------------------------
# Public operations.


def jet_eval(params, point, spec: JetSpec = FULL_JETS):
    """Exact jets of the three output heads at one space-time point.

    ``point`` is ``(t, x)`` with ``x`` an iterable of spatial coordinates, or
    a bare float ``t`` for problems without space.  Returns a dict with keys
    ``"y"``, ``"u"``, ``"lam"``.
    """
    from . import network  # runtime import: network builds on this module

    if isinstance(point, tuple):
        t, x = point
    else:
        t, x = point, None
    sd = params.config.spatial_dim
    t_arr = np.asarray([float(t)])
    if sd == 0:
        x_arr = np.zeros((1, 0))
    else:
        x_arr = np.asarray(x, dtype=float).reshape(1, sd)
    tape = network.NetworkTape(params, t_arr, x_arr, spec)
    jets = {}
    for name in ("y", "u", "lam"):
        bundle = tape.head_bundle(name)
        value = bundle.val[:, 0].copy()
        d_dt = bundle.dt[:, 0].copy() if bundle.dt is not None else None
        d_dx = None
        d2_dx2 = None
        if spec.space_order >= 1:
            d_dx = np.stack([d[:, 0] for d in bundle.dx], axis=1) if bundle.dx else np.zeros((value.size, 0))
        if spec.space_order == 2:
            d2_dx2 = np.stack([d[:, 0] for d in bundle.dxx], axis=1) if bundle.dxx else np.zeros((value.size, 0))
        jets[name] = Jet(value=value, d_dt=d_dt, d_dx=d_dx, d2_dx2=d2_dx2)
    return jets


def loss_gradient(params, evaluator):
    """Evaluate a scalar loss and its gradient w.r.t. every parameter.

    ``evaluator(params)`` must return ``(total, sources)`` where ``total`` is
    a scalar ``Var`` (or plain float for constant losses) and ``sources`` are
    the gradient sources it was built from (``NetworkTape`` or ``FlatParams``
    instances).  The gradient of a parameter that does not influence the loss
    is exactly zero.
    """
    total, sources = evaluator(params)
    value = float(total.value) if isinstance(total, Var) else float(total)
    if not np.isfinite(value):
        raise EvaluationError(f"non-finite loss value {value!r}")
    gradient = np.zeros(params.num_params)
    if isinstance(total, Var):
        total.backward()
        for source in sources:
            gradient += source.parameter_gradient()
    return value, gradient
