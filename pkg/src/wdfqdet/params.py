"""Named parameter registry with order-independent deterministic init."""
import hashlib

import numpy as np

from .errors import ArgumentError, RegistryError

SCHEMES = ("fan-scaled-uniform", "zeros", "ones")


def _fans(shape):
    if len(shape) == 1:
        return shape[0], shape[0]
    if len(shape) == 2:
        return shape[0], shape[1]
    receptive = int(np.prod(shape[2:]))
    return shape[1] * receptive, shape[0] * receptive


def _key(seed, name):
    digest = hashlib.blake2b(f"{seed}\x00{name}".encode(), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def init_param(name, shape, scheme="fan-scaled-uniform", seed=0):
    """Initialise one tensor as a pure function of (seed, name, shape)."""
    shape = tuple(int(s) for s in shape)
    if not shape or any(s <= 0 for s in shape):
        raise ArgumentError(f"parameter {name!r} needs a nonempty positive shape, got {shape}")
    if scheme == "zeros":
        return np.zeros(shape)
    if scheme == "ones":
        return np.ones(shape)
    if scheme != "fan-scaled-uniform":
        raise ArgumentError(f"unknown init scheme {scheme!r}")
    fan_in, fan_out = _fans(shape)
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    # Philox is counter-based: element i is a function of (key, i) only
    gen = np.random.Generator(np.random.Philox(key=_key(seed, name)))
    return gen.uniform(-bound, bound, size=shape)


class ParamStore:
    def __init__(self, seed=0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.tensors = {}

    def add(self, name, shape, scheme="fan-scaled-uniform"):
        if name in self.tensors:
            raise RegistryError(f"duplicate parameter name {name!r}")
        self.tensors[name] = init_param(name, shape, scheme, self.seed)
        return self.tensors[name]

    def __getitem__(self, name):
        return self.tensors[name]

    def __setitem__(self, name, value):
        if name not in self.tensors:
            raise RegistryError(f"unknown parameter {name!r}")
        self.tensors[name] = np.asarray(value, dtype=np.float64)

    def __contains__(self, name):
        return name in self.tensors

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def names(self, prefix=""):
        return [n for n in self.tensors if n.startswith(prefix)]

    def copy(self):
        other = ParamStore(self.seed)
        other.tensors = {k: v.copy() for k, v in self.tensors.items()}
        return other

    def count(self):
        return sum(v.size for v in self.tensors.values())
