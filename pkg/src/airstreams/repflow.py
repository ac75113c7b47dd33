"""Differentiable variational optical flow.

The layer runs a fixed number of primal-dual TV-L1 iterations built purely
from tape primitives, so the smoothing/data/step parameters and the two
3-tap derivative kernels all receive gradients from downstream losses.

Per consecutive frame pair (single scale, no warping):
    rho   = Ix*u1 + Iy*u2 + It                       (linearized residual)
    v     = u + soft-threshold step on rho, bounded by lambda*theta*|grad I|^2
    u     = v + theta * div(p)                       (primal update)
    p     = (p + (tau/theta) grad u) / (1 + (tau/theta) |grad u|)   (dual)

The dual normalization keeps |p| <= 1 per pixel, and identical frames give
exactly zero flow because u and p start at zero and every update preserves
zero when It == 0.
"""

import numpy as np

from . import ops
from .errors import ConfigurationError, InputError, NumericError
from .tensor import Tensor

GRAD_EPS = 1e-8       # added to |grad I|^2 in the threshold denominator
NORM_EPS = 1e-12      # inside sqrt of |grad u| so backward stays finite

DEFAULT_KERNEL = (-0.5, 0.0, 0.5)


class FlowParams:
    """Learnable knobs of the variational iteration.

    tau/theta <= 0.25 is required at construction (primal-dual stability);
    the normalized dual update keeps the scheme bounded regardless of how
    the values move during training.
    """

    SCALARS = ("theta", "lambda_data", "tau")

    def __init__(
        self,
        theta=0.3,
        lambda_data=15.0,
        tau=0.075,
        n_iterations=10,
        kernel=DEFAULT_KERNEL,
        learnable=True,
        dtype=np.float32,
    ):
        if theta <= 0 or lambda_data <= 0 or tau <= 0:
            raise ConfigurationError("flow parameters must be positive")
        if n_iterations < 1:
            raise ConfigurationError("n_iterations must be >= 1")
        if tau / theta > 0.25 + 1e-12:
            raise ConfigurationError(
                f"tau/theta = {tau / theta:.4f} exceeds the stability bound 0.25"
            )
        if isinstance(learnable, bool):
            flags = {name: learnable for name in (*self.SCALARS, "kernels")}
        else:
            flags = {name: name in learnable for name in (*self.SCALARS, "kernels")}
        self.n_iterations = int(n_iterations)
        self.dtype = dtype
        self.theta = Tensor(np.asarray(theta, dtype=dtype), requires_grad=flags["theta"], name="flow/theta")
        self.lambda_data = Tensor(
            np.asarray(lambda_data, dtype=dtype), requires_grad=flags["lambda_data"], name="flow/lambda"
        )
        self.tau = Tensor(np.asarray(tau, dtype=dtype), requires_grad=flags["tau"], name="flow/tau")
        k = np.asarray(kernel, dtype=dtype).reshape(1, 3)
        self.grad_kernel_x = Tensor(k.copy(), requires_grad=flags["kernels"], name="flow/kernel_x")
        self.grad_kernel_y = Tensor(k.copy(), requires_grad=flags["kernels"], name="flow/kernel_y")

    def parameters(self):
        named = {
            "flow/theta": self.theta,
            "flow/lambda": self.lambda_data,
            "flow/tau": self.tau,
            "flow/kernel_x": self.grad_kernel_x,
            "flow/kernel_y": self.grad_kernel_y,
        }
        return {name: t for name, t in named.items() if t.requires_grad}

    def all_tensors(self):
        return {
            "flow/theta": self.theta,
            "flow/lambda": self.lambda_data,
            "flow/tau": self.tau,
            "flow/kernel_x": self.grad_kernel_x,
            "flow/kernel_y": self.grad_kernel_y,
        }

    def clamp_positive(self, floor=1e-4):
        """Project the scalar parameters back to > 0 after an SGD step."""
        for t in (self.theta, self.lambda_data, self.tau):
            np.maximum(t.data, floor, out=t.data)


class FlowField:
    """Estimated flow for consecutive pairs: u is [T-1, 2, H, W]."""

    def __init__(self, u):
        self.u = u

    @property
    def shape(self):
        return self.u.shape


def spatial_gradient(image, kernel, kernel_y=None):
    """(d/dx, d/dy) maps of [F, C, H, W] via depthwise 3-tap convolutions.

    With the default antisymmetric kernel this is the centered difference;
    both axes use `kernel` unless a separate vertical kernel is given.
    """
    if kernel_y is None:
        kernel_y = kernel
    dx = ops.directional_conv3(image, kernel, "x")
    dy = ops.directional_conv3(image, kernel_y, "y")
    return dx, dy


def divergence(p, kernel=None, kernel_y=None):
    """div p = dx(p1) + dy(p2) for p: [F, 2, H, W], adjoint to spatial_gradient.

    The stencil is the negated transpose of the gradient stencil, so
    <grad u, p> = -<u, div p> up to boundary terms; for the default
    antisymmetric kernel it coincides with applying the kernel itself.
    """
    if kernel is None:
        kernel = Tensor(np.asarray(DEFAULT_KERNEL, dtype=p.dtype).reshape(1, 3))
    if kernel_y is None:
        kernel_y = kernel
    if p.ndim != 4 or p.shape[1] != 2:
        raise ConfigurationError("divergence expects [F, 2, H, W]")
    p1 = ops.take_slice(p, 1, 0, 1)
    p2 = ops.take_slice(p, 1, 1, 2)
    return _divergence_components(p1, p2, ops.flip3(kernel), ops.flip3(kernel_y))


def _divergence_components(p1, p2, flipped_x, flipped_y):
    """-(adjoint of the gradient) applied to the dual pair (p1, p2)."""
    return ops.negative(
        ops.add(
            ops.directional_conv3(p1, flipped_x, "x"),
            ops.directional_conv3(p2, flipped_y, "y"),
        )
    )


def flow_pairs(i0, i1, params, diagnostics=None):
    """TV-L1 flow for a batch of frame pairs: i0, i1 are [P, 1, H, W].

    Returns [P, 2, H, W] with channels (horizontal, vertical) displacement
    in pixels. Both flow components travel through the iteration as the
    channels of one stacked tensor, so every update is a single vectorized
    op. When `diagnostics` is a dict it receives per-iteration max dual
    magnitudes under key "dual_max".
    """
    if i0.ndim != 4 or i0.shape[1] != 1 or i0.shape != i1.shape:
        raise InputError("flow_pairs expects matching [P, 1, H, W] frame batches")
    kx, ky = params.grad_kernel_x, params.grad_kernel_y
    flip_x, flip_y = ops.flip3(kx), ops.flip3(ky)
    dx, dy = spatial_gradient(i1, kx, ky)
    ig = ops.concat_channels([dx, dy])                     # [P, 2, H, W]
    it = ops.subtract(i1, i0)
    grad_mag2 = ops.add_scalar(
        ops.add(ops.square(dx), ops.square(dy)), GRAD_EPS
    )
    mag2_2 = _repeat2(grad_mag2)
    lam_theta = ops.multiply(params.lambda_data, params.theta)
    sigma = ops.divide(params.tau, params.theta)

    P, _, H, W = i0.shape
    dtype = i0.dtype
    u = Tensor(np.zeros((P, 2, H, W), dtype=dtype))        # (u1, u2)
    px = Tensor(np.zeros((P, 2, H, W), dtype=dtype))       # x-derivative duals
    py = Tensor(np.zeros((P, 2, H, W), dtype=dtype))       # y-derivative duals

    for iteration in range(params.n_iterations):
        # residual of the linearized data term, broadcast to both components
        rho = ops.add(ops.scale_by_scalar(ops.channel_mean(ops.multiply(ig, u)), 2.0), it)
        rho2 = _repeat2(rho)
        bound = ops.scale_by_scalar(mag2_2, lam_theta)
        lo = rho2.data < -bound.data
        hi = rho2.data > bound.data
        saturated = ops.scale_by_scalar(ig, lam_theta)
        clipped = ops.negative(ops.divide(ops.multiply(rho2, ig), mag2_2))
        step = ops.where(lo, saturated, ops.where(hi, ops.negative(saturated), clipped))
        v = ops.add(u, step)

        div = _divergence_components(px, py, flip_x, flip_y)
        u = ops.add(v, ops.scale_by_scalar(div, params.theta))
        if not np.isfinite(u.data).all():
            raise NumericError(f"non-finite flow values at iteration {iteration}")

        gx = ops.directional_conv3(u, kx, "x")
        gy = ops.directional_conv3(u, ky, "y")
        norm = ops.sqrt(ops.add_scalar(ops.add(ops.square(gx), ops.square(gy)), NORM_EPS))
        den = ops.add_scalar(ops.scale_by_scalar(norm, sigma), 1.0)
        px = ops.divide(ops.add(px, ops.scale_by_scalar(gx, sigma)), den)
        py = ops.divide(ops.add(py, ops.scale_by_scalar(gy, sigma)), den)
        if diagnostics is not None:
            mags = np.sqrt(px.data**2 + py.data**2)
            diagnostics.setdefault("dual_max", []).append(float(mags.max()))

    return u


def _repeat2(x):
    """Duplicate a singleton channel so [P, 1, H, W] aligns with [P, 2, H, W]."""
    return ops.concat_channels([x, x])


def compute_flow(frames, params, diagnostics=None):
    """Flow field for a clip: frames [T, C, H, W] -> FlowField [T-1, 2, H, W].

    Multi-channel frames are reduced by an unweighted channel mean first.
    """
    if frames.ndim != 4:
        raise InputError("compute_flow expects [T, C, H, W] frames")
    T = frames.shape[0]
    if T < 2:
        raise InputError("compute_flow needs at least two frames")
    gray = frames if frames.shape[1] == 1 else ops.channel_mean(frames)
    i0 = ops.take_slice(gray, 0, 0, T - 1)
    i1 = ops.take_slice(gray, 0, 1, T)
    return FlowField(flow_pairs(i0, i1, params, diagnostics=diagnostics))
