import numpy as np
import pytest

from obo_bench.core import SmoothnessConstants
from obo_bench.geometry import unconstrained
from obo_bench.problems import NEGLIGIBLE, Capabilities, ProblemInstance, ZERO_VARIATION


class GeneralQuadratic(ProblemInstance):
    """g_t = 1/2 y^T H y - y^T (B x + e_t), f_t = 1/2 ||y - c_t||^2 + a^T x.

    Dense SPD H and a coupling matrix B, for solver oracles that diagonal
    families cannot exercise.
    """

    family = "general_quadratic"

    def __init__(self, H, B, a, E, C, x_set=None):
        self.H = np.asarray(H, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.a = np.asarray(a, dtype=float)
        self.E = np.atleast_2d(np.asarray(E, dtype=float))
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        ev = np.linalg.eigvalsh(self.H)
        d_y, d_x = self.B.shape
        consts = SmoothnessConstants(l_f0=10.0, l_f1=1.0, l_g1=float(ev.max()), l_g2=NEGLIGIBLE,
                                     mu_g=float(ev.min()), d_diam=1.0)
        super().__init__(d_x, d_y, len(self.E), x_set or unconstrained(d_x), consts,
                         Capabilities(True, True, True), ref_radius=1.0)

    def f(self, t, x, y):
        self.check_round(t)
        r = y - self.C[t - 1]
        return 0.5 * float(r @ r) + float(self.a @ x)

    def g(self, t, x, y):
        self.check_round(t)
        return 0.5 * float(y @ self.H @ y) - float(y @ (self.B @ x + self.E[t - 1]))

    def grad_x_f(self, t, x, y):
        self.check_round(t)
        return self.a.copy()

    def grad_y_f(self, t, x, y):
        self.check_round(t)
        return y - self.C[t - 1]

    def grad_y_g(self, t, x, y):
        self.check_round(t)
        return self.H @ y - self.B @ x - self.E[t - 1]

    def grad_x_g(self, t, x, y):
        self.check_round(t)
        return -self.B.T @ y

    def hvp_yy_g(self, t, x, y, v):
        self.check_round(t)
        return self.H @ v

    def jvp_xy_g(self, t, x, y, v):
        self.check_round(t)
        return -self.B.T @ v

    def inner_opt(self, t, x):
        self.check_round(t)
        return np.linalg.solve(self.H, self.B @ x + self.E[t - 1])

    def true_hypergrad(self, t, x):
        y = self.inner_opt(t, x)
        return self.a + self.B.T @ np.linalg.solve(self.H, y - self.C[t - 1])

    def variation_increments(self, t, x=None, y=None):
        return ZERO_VARIATION

    def window_inner_opt(self, ts, ws, x):
        w = np.asarray(ws)
        e = (w @ self.E[np.asarray(ts) - 1]) / w.sum()
        return np.linalg.solve(self.H, self.B @ x + e)

    def window_true_hypergrad(self, ts, ws, w_norm, x):
        w = np.asarray(ws)
        y = self.window_inner_opt(ts, ws, x)
        c = (w @ self.C[np.asarray(ts) - 1]) / w.sum()
        return (w.sum() / w_norm) * (self.a + self.B.T @ np.linalg.solve(self.H, y - c))


def random_general_quadratic(rng, d_x=3, d_y=4, T=5, mu=0.5, L=3.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d_y, d_y)))
    ev = np.linspace(mu, L, d_y)
    H = Q @ np.diag(ev) @ Q.T
    H = 0.5 * (H + H.T)
    return GeneralQuadratic(H, rng.standard_normal((d_y, d_x)), rng.standard_normal(d_x),
                            rng.standard_normal((T, d_y)), rng.standard_normal((T, d_y)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
