"""Plain-text file formats: dense CSV matrices, edge lists, result folders."""
import json
import os

import numpy as np

from .errors import IndexOutOfRange, ParseError


def save_matrix(path, a):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    np.savetxt(path, a, delimiter=",", fmt="%.17g")


def save_vector(path, v):
    np.savetxt(path, np.asarray(v, dtype=float).reshape(-1, 1), delimiter=",", fmt="%.17g")


def load_matrix(path):
    """Dense comma-separated matrix; a single row or column still loads as 2-D."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")
    try:
        a = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as err:
        raise ParseError(f"{path}: {err}", path=path) from None
    return a


def load_edge_list(path, d):
    """Symmetric 0/1 adjacency from ``i j`` lines (0-based).

    Blank lines and ``#`` comments are skipped; extra columns (e.g. weights)
    are ignored. Repeated edges, in either orientation, are idempotent.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")
    x = np.zeros((d, d))
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.replace(",", " ").split()
            if len(parts) < 2:
                raise ParseError(f"{path}:{lineno}: expected 'i j'", path, lineno)
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer node index", path, lineno) from None
            if not (0 <= i < d and 0 <= j < d):
                raise IndexOutOfRange(f"{path}:{lineno}: node index outside [0, {d})")
            if i == j:
                raise ParseError(f"{path}:{lineno}: self-loop {i}", path, lineno)
            x[i, j] = x[j, i] = 1.0
    return x


def load_network(path, d=None, tol=1e-12):
    """Square symmetric network from a ``.csv`` matrix or, given ``d``, an edge list."""
    if d is not None and not path.endswith(".csv"):
        return load_edge_list(path, d)
    x = load_matrix(path)
    if x.shape[0] != x.shape[1]:
        raise ParseError(f"{path}: matrix is {x.shape[0]}x{x.shape[1]}, not square", path=path)
    if np.max(np.abs(x - x.T), initial=0.0) > tol:
        raise ParseError(f"{path}: matrix is not symmetric", path=path)
    return x


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as err:
            raise ParseError(f"{path}: {err}", path=path, line=err.lineno) from None


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


def write_estimate(folder, est):
    """theta/pi/p/h_hat CSVs, ``diagnostics.json`` (clamp counters) and ``timings.json``."""
    os.makedirs(folder, exist_ok=True)
    save_vector(os.path.join(folder, "theta.csv"), est.params.theta)
    save_matrix(os.path.join(folder, "pi.csv"), est.params.pi)
    save_matrix(os.path.join(folder, "p.csv"), est.params.p_mat)
    save_matrix(os.path.join(folder, "h_hat.csv"), est.h_hat)
    diag = {k: v for k, v in est.diagnostics.items() if k != "timings"}
    diag.update(b1=est.b1, eigenvalues=est.eig.values)
    write_json(os.path.join(folder, "diagnostics.json"), _jsonable(diag))
    write_json(os.path.join(folder, "timings.json"), _jsonable(est.diagnostics.get("timings", {})))


def write_basis(folder, basis):
    os.makedirs(folder, exist_ok=True)
    save_matrix(os.path.join(folder, "shared.csv"), basis.shared)
    if basis.private.shape[1]:
        save_matrix(os.path.join(folder, "private.csv"), basis.private)
    else:
        open(os.path.join(folder, "private.csv"), "w").close()


def write_trace(path, selected, trace):
    write_json(path, _jsonable({"selected": list(selected or ()), "iterations": trace}))


def write_config(path, cfg):
    """Flat ``key=value`` lines, sorted by key; ``None`` values are omitted."""
    with open(path, "w") as fh:
        for k in sorted(cfg):
            if cfg[k] is not None:
                fh.write(f"{k}={cfg[k]}\n")


def read_config(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ParseError(f"{path}:{lineno}: expected key=value", path, lineno)
            k, v = body.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out
