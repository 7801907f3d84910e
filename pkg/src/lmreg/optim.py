"""Box-constrained first-order and quasi-Newton minimizers for small dense problems.

Both minimizers project every iterate onto ``[lower, upper]`` (clip after the
step). They share one calling convention::

    result = minimizer.minimize(fun_and_grad, x0, lower, upper)

where ``fun_and_grad(x)`` returns ``(loss, gradient)``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import RegistrationDivergedError

logger = logging.getLogger(__name__)


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    nit: int
    converged: bool
    trace: list = field(default_factory=list)


def _check_finite(loss, iteration):
    if not np.isfinite(loss):
        raise RegistrationDivergedError(iteration)


class Adam:
    """Adam with bias correction and projection onto box bounds.

    Stops after ``max_iter`` steps, once ``|loss_k - loss_{k-1}| < tol``, or
    as soon as the loss itself is below ``tol`` (an exact fit).
    The returned point is the best iterate seen (``x0`` included), so the
    reported loss never exceeds the initial one.
    """

    def __init__(self, lr=1e-3, max_iter=100, tol=1e-10, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.max_iter = max_iter
        self.tol = tol
        self.betas = betas
        self.eps = eps

    def minimize(self, fun_and_grad, x0, lower, upper):
        b1, b2 = self.betas
        x = np.clip(np.array(x0, dtype=np.float64), lower, upper)
        loss, grad = fun_and_grad(x)
        _check_finite(loss, 0)
        best_x, best_loss = x.copy(), loss
        m = np.zeros_like(x)
        v = np.zeros_like(x)
        trace = []
        converged = False
        for k in range(1, self.max_iter + 1):
            if loss < self.tol:
                converged = True
                break
            m = b1 * m + (1 - b1) * grad
            v = b2 * v + (1 - b2) * grad**2
            m_hat = m / (1 - b1**k)
            v_hat = v / (1 - b2**k)
            x = np.clip(x - self.lr * m_hat / (np.sqrt(v_hat) + self.eps), lower, upper)
            new_loss, grad = fun_and_grad(x)
            _check_finite(new_loss, k)
            trace.append(float(new_loss))
            if new_loss < best_loss:
                best_x, best_loss = x.copy(), new_loss
            if abs(new_loss - loss) < self.tol:
                converged = True
                loss = new_loss
                break
            loss = new_loss
        return OptimizeResult(best_x, float(best_loss), len(trace), converged, trace)


class LBFGS:
    """Limited-memory BFGS (two-loop recursion) with a projected Armijo line search.

    ``lr`` is the trial step length along the quasi-Newton direction; on the
    first iteration (empty history) the direction is the gradient scaled to
    unit infinity norm. Curvature pairs with ``s.y <= 0`` are skipped.

    Converged once the loss is below ``tol`` or has changed by less than
    ``tol`` on ``patience`` consecutive iterations; a single short step in a
    narrow valley is not enough.
    """

    def __init__(self, lr=1.0, max_iter=100, tol=1e-10, history_size=10,
                 c1=1e-4, shrink=0.5, max_backtracks=40, patience=5):
        self.lr = lr
        self.max_iter = max_iter
        self.tol = tol
        self.history_size = history_size
        self.c1 = c1
        self.shrink = shrink
        self.max_backtracks = max_backtracks
        self.patience = patience

    def _direction(self, grad, s_hist, y_hist):
        q = grad.copy()
        alphas = []
        for s, y in zip(reversed(s_hist), reversed(y_hist)):
            rho = 1.0 / np.dot(y, s)
            a = rho * np.dot(s, q)
            alphas.append((rho, a))
            q -= a * y
        if s_hist:
            s, y = s_hist[-1], y_hist[-1]
            q *= np.dot(s, y) / np.dot(y, y)
        else:
            q /= max(np.max(np.abs(q)), np.finfo(float).tiny)
        for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
            b = rho * np.dot(y, q)
            q += s * (a - b)
        return -q

    def _line_search(self, fun_and_grad, x, loss, grad, direction, lower, upper, iteration):
        step = self.lr
        for _ in range(self.max_backtracks):
            x_new = np.clip(x + step * direction, lower, upper)
            delta = x_new - x
            if not np.any(delta):
                return None
            new_loss, new_grad = fun_and_grad(x_new)
            if np.isfinite(new_loss) and new_loss <= loss + self.c1 * np.dot(grad, delta):
                return x_new, new_loss, new_grad
            step *= self.shrink
        return None

    def minimize(self, fun_and_grad, x0, lower, upper):
        x = np.clip(np.array(x0, dtype=np.float64), lower, upper)
        loss, grad = fun_and_grad(x)
        _check_finite(loss, 0)
        s_hist, y_hist = [], []
        trace = []
        converged = False
        stalled = 0
        for k in range(1, self.max_iter + 1):
            if loss < self.tol:
                converged = True
                break
            direction = self._direction(grad, s_hist, y_hist)
            if np.dot(direction, grad) >= 0:
                s_hist.clear()
                y_hist.clear()
                direction = self._direction(grad, s_hist, y_hist)
            found = self._line_search(fun_and_grad, x, loss, grad, direction, lower, upper, k)
            if found is None and s_hist:
                s_hist.clear()
                y_hist.clear()
                direction = self._direction(grad, s_hist, y_hist)
                found = self._line_search(fun_and_grad, x, loss, grad, direction, lower, upper, k)
            if found is None:
                # no projected descent step exists at this precision
                trace.append(float(loss))
                converged = True
                break
            x_new, new_loss, new_grad = found
            _check_finite(new_loss, k)
            trace.append(float(new_loss))
            s, y = x_new - x, new_grad - grad
            if np.dot(s, y) > 1e-12 * np.dot(y, y):
                s_hist.append(s)
                y_hist.append(y)
                if len(s_hist) > self.history_size:
                    s_hist.pop(0)
                    y_hist.pop(0)
            stalled = stalled + 1 if abs(loss - new_loss) < self.tol else 0
            x, loss, grad = x_new, new_loss, new_grad
            if stalled >= self.patience:
                converged = True
                break
        logger.debug("lbfgs stopped after %d iterations, loss %.3e", len(trace), loss)
        return OptimizeResult(x, float(loss), len(trace), converged, trace)
