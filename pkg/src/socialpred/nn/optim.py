import numpy as np


class AmsGrad:
    """Adam with a running maximum of the second-moment estimate.

    Update per parameter (bias-corrected as in the common PyTorch variant)::

        m     = b1 m + (1 - b1) g
        v     = b2 v + (1 - b2) g^2
        v_max = max(v_max, v)
        p    -= lr / (1 - b1^t) * m / (sqrt(v_max / (1 - b2^t)) + eps)
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.v_max: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> None:
        """Update ``params`` in place."""
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name in sorted(params):
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
                self.v_max[name] = np.zeros_like(g)
            m, v, vmax = self.m[name], self.v[name], self.v_max[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            np.maximum(vmax, v, out=vmax)
            denom = np.sqrt(vmax) / np.sqrt(bc2) + self.eps
            params[name] -= (self.lr / bc1) * m / denom

    def state_dict(self) -> dict:
        out = {"t": self.t, "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}
        for key in ("m", "v", "v_max"):
            out[key] = {k: a.copy() for k, a in getattr(self, key).items()}
        return out

    @classmethod
    def from_state_dict(cls, d: dict) -> "AmsGrad":
        opt = cls(d["lr"], d["beta1"], d["beta2"], d["eps"])
        opt.t = int(d["t"])
        for key in ("m", "v", "v_max"):
            setattr(opt, key, {k: np.array(a) for k, a in d[key].items()})
        return opt
