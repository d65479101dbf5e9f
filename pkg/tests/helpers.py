import numpy as np

_TERMS = ["x1", "x2", "x3", "x1*x2", "x1*x3", "x2*x3", "x3^2", "x1^2", "sin(x1)", "cos(x2)", "sin(x3)",
          "exp(x1)*x3", "cosh(x3)", "x1*x2*x3"]


def random_component(rng: np.random.Generator, terms: int = 3) -> str:
    """Random smooth expression: a short sum of monomials and elementary functions."""
    picks = rng.choice(len(_TERMS), size=terms, replace=False)
    return " + ".join(f"({rng.uniform(-1, 1):.6f})*{_TERMS[i]}" for i in picks)


def random_physical_field(rng: np.random.Generator) -> tuple[str, str, str]:
    return tuple(random_component(rng) for _ in range(3))


def pixel_constant_kl(values, Lx: float = 1.0, Ly: float = 1.0, u3=None):
    """Crack-free-bookkeeping KL state with ``ubar`` constant on each pixel of ``values`` (shape ``(nx, ny, 2)``).

    Pieces meet along pixel lines; no planar cracks are declared, so only
    pixelwise quantities (debonding, delamination) are meaningful.
    """
    from filmlimit.model import KLDisplacement, KLPiece

    values = np.asarray(values, dtype=float)
    nx, ny = values.shape[:2]
    hx, hy = Lx / nx, Ly / ny
    pieces = []
    for i in range(nx):
        for j in range(ny):
            u3ij = "0" if u3 is None else repr(float(u3[i, j]))
            pieces.append(KLPiece((i * hx, (i + 1) * hx, j * hy, (j + 1) * hy),
                                  (repr(float(values[i, j, 0])), repr(float(values[i, j, 1]))), u3ij))
    return KLDisplacement(tuple(pieces), Lx=Lx, Ly=Ly)
